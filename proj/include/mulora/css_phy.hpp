#pragma once

// Chirp spread spectrum physical layer: waveform generation, dechirping and
// per-bin energy computation.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace mulora {

using cplx = std::complex<double>;
using ComplexVec = std::vector<cplx>;

struct SpreadingConfig {
    int sf = 7;
    double bandwidth_hz = 125e3;

    // Alphabet size, also the number of samples per symbol.
    std::size_t M() const { return std::size_t{1} << sf; }

    // Throws DomainError unless 5 <= sf <= 12 and bandwidth_hz > 0.
    void validate() const;
};

struct ChirpFrame {
    ComplexVec samples;
    int gateway_id = 0;
    int antenna_id = 0;
};

// Samples received in one symbol slot, indexed [gateway][antenna][n].
using ArraySamples = std::vector<std::vector<ComplexVec>>;

// r(l, k): total power over the antenna array of gateway l in bin k.
// upsilon[k] = (1/N_t) * sum_l r(l, k).
class BinPowerTensor {
public:
    BinPowerTensor() = default;
    BinPowerTensor(std::size_t n_gateways, std::size_t n_antennas, std::size_t M);

    std::size_t n_gateways() const { return n_gateways_; }
    std::size_t n_antennas() const { return n_antennas_; }
    std::size_t M() const { return M_; }

    double r(std::size_t gw, std::size_t k) const { return r_[gw * M_ + k]; }
    double& r(std::size_t gw, std::size_t k) { return r_[gw * M_ + k]; }
    std::span<const double> gateway(std::size_t gw) const {
        return {r_.data() + gw * M_, M_};
    }
    std::span<const double> upsilon() const { return upsilon_; }

    // Recomputes upsilon from r; call after filling r directly.
    void fuse();

private:
    std::size_t n_gateways_ = 0;
    std::size_t n_antennas_ = 0;
    std::size_t M_ = 0;
    std::vector<double> r_;
    std::vector<double> upsilon_;
};

// x_m[n] = exp{j2pi((n+m)^2/(2M) - (n+m)/2)}, n = 0..M-1.
ComplexVec generate_chirp(const SpreadingConfig& cfg, int m);

// z[n] = y[n] * conj(x_0[n]).
ComplexVec dechirp(std::span<const cplx> frame, const SpreadingConfig& cfg);
ComplexVec dechirp(const ChirpFrame& frame, const SpreadingConfig& cfg);

// Unitary M-point DFT: Z[k] = M^{-1/2} sum_n z[n] exp(-j2pi nk/M).
ComplexVec unitary_dft(std::span<const cplx> z);

// Takes dechirped samples for every gateway and antenna.
BinPowerTensor bin_powers(const ArraySamples& dechirped, const SpreadingConfig& cfg);

// Dechirp + DFT + power accumulation in one pass over raw received samples.
BinPowerTensor received_bin_powers(const ArraySamples& received, const SpreadingConfig& cfg);

}  // namespace mulora
