#include "mulora/css_phy.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include <fftw3.h>

#include "mulora/errors.hpp"

namespace mulora {

namespace {

// Phase of the base chirp at integer argument j, reduced to [0, 1) cycles:
// j^2/(2M) - j/2 = j(j - M)/(2M). The numerator is an exact integer.
double chirp_phase_cycles(std::int64_t j, std::int64_t M) {
    const std::int64_t two_m = 2 * M;
    std::int64_t num = (j * (j - M)) % two_m;
    if (num < 0) num += two_m;
    return static_cast<double>(num) / static_cast<double>(two_m);
}

cplx unit_phasor(double cycles) {
    const double a = 2.0 * std::numbers::pi * cycles;
    return {std::cos(a), std::sin(a)};
}

// FFTW planning is not thread-safe; execution with new-array is.
class PlanCache {
public:
    fftw_plan get(std::size_t M) {
        std::lock_guard lock(mutex_);
        auto it = plans_.find(M);
        if (it != plans_.end()) return it->second.get();
        std::vector<fftw_complex> scratch_in(M), scratch_out(M);
        fftw_plan p = fftw_plan_dft_1d(static_cast<int>(M), scratch_in.data(), scratch_out.data(),
                                       FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (p == nullptr) throw NumericError("FFTW failed to create a plan of size " + std::to_string(M));
        auto [pos, _] = plans_.emplace(M, PlanPtr(p));
        return pos->second.get();
    }

private:
    struct PlanDeleter {
        void operator()(fftw_plan p) const { fftw_destroy_plan(p); }
    };
    using PlanPtr = std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDeleter>;

    std::mutex mutex_;
    std::map<std::size_t, PlanPtr> plans_;
};

PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

void check_frame_length(std::size_t got, std::size_t M) {
    if (got != M)
        throw DomainError("frame has " + std::to_string(got) + " samples, expected " + std::to_string(M));
}

}  // namespace

void SpreadingConfig::validate() const {
    if (sf < 5 || sf > 12) throw DomainError("spreading factor must be in [5, 12], got " + std::to_string(sf));
    if (!(bandwidth_hz > 0.0)) throw DomainError("bandwidth must be positive");
}

BinPowerTensor::BinPowerTensor(std::size_t n_gateways, std::size_t n_antennas, std::size_t M)
    : n_gateways_(n_gateways), n_antennas_(n_antennas), M_(M), r_(n_gateways * M, 0.0), upsilon_(M, 0.0) {}

void BinPowerTensor::fuse() {
    const double scale = n_antennas_ > 0 ? 1.0 / static_cast<double>(n_antennas_) : 0.0;
    for (std::size_t k = 0; k < M_; ++k) {
        double s = 0.0;
        for (std::size_t l = 0; l < n_gateways_; ++l) s += r_[l * M_ + k];
        upsilon_[k] = scale * s;
    }
}

ComplexVec generate_chirp(const SpreadingConfig& cfg, int m) {
    cfg.validate();
    const auto M = static_cast<std::int64_t>(cfg.M());
    if (m < 0 || m >= M)
        throw DomainError("symbol index " + std::to_string(m) + " outside [0, " + std::to_string(M) + ")");
    ComplexVec x(static_cast<std::size_t>(M));
    for (std::int64_t n = 0; n < M; ++n) x[static_cast<std::size_t>(n)] = unit_phasor(chirp_phase_cycles(n + m, M));
    return x;
}

ComplexVec dechirp(std::span<const cplx> frame, const SpreadingConfig& cfg) {
    cfg.validate();
    const auto M = static_cast<std::int64_t>(cfg.M());
    check_frame_length(frame.size(), cfg.M());
    ComplexVec z(frame.size());
    for (std::int64_t n = 0; n < M; ++n) {
        const auto i = static_cast<std::size_t>(n);
        z[i] = frame[i] * std::conj(unit_phasor(chirp_phase_cycles(n, M)));
    }
    return z;
}

ComplexVec dechirp(const ChirpFrame& frame, const SpreadingConfig& cfg) {
    return dechirp(std::span<const cplx>(frame.samples), cfg);
}

ComplexVec unitary_dft(std::span<const cplx> z) {
    const std::size_t M = z.size();
    if (M == 0) return {};
    ComplexVec in(z.begin(), z.end());
    ComplexVec out(M);
    fftw_execute_dft(plan_cache().get(M), reinterpret_cast<fftw_complex*>(in.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
    const double scale = 1.0 / std::sqrt(static_cast<double>(M));
    for (auto& v : out) v *= scale;
    return out;
}

BinPowerTensor bin_powers(const ArraySamples& dechirped, const SpreadingConfig& cfg) {
    cfg.validate();
    const std::size_t M = cfg.M();
    const std::size_t L = dechirped.size();
    if (L == 0) throw DomainError("no gateways in input");
    const std::size_t Nt = dechirped.front().size();
    if (Nt == 0) throw DomainError("no antennas in input");

    BinPowerTensor out(L, Nt, M);
    for (std::size_t l = 0; l < L; ++l) {
        if (dechirped[l].size() != Nt) throw DomainError("inconsistent antenna count across gateways");
        for (const auto& z : dechirped[l]) {
            check_frame_length(z.size(), M);
            const ComplexVec Z = unitary_dft(z);
            for (std::size_t k = 0; k < M; ++k) out.r(l, k) += std::norm(Z[k]);
        }
    }
    out.fuse();
    return out;
}

BinPowerTensor received_bin_powers(const ArraySamples& received, const SpreadingConfig& cfg) {
    cfg.validate();
    const std::size_t M = cfg.M();
    const std::size_t L = received.size();
    if (L == 0) throw DomainError("no gateways in input");
    const std::size_t Nt = received.front().size();
    if (Nt == 0) throw DomainError("no antennas in input");

    const ComplexVec base_conj = [&] {
        ComplexVec b = generate_chirp(cfg, 0);
        for (auto& v : b) v = std::conj(v);
        return b;
    }();
    fftw_plan plan = plan_cache().get(M);
    const double scale = 1.0 / static_cast<double>(M);  // |M^{-1/2}|^2

    BinPowerTensor out(L, Nt, M);
    ComplexVec z(M), Z(M);
    for (std::size_t l = 0; l < L; ++l) {
        if (received[l].size() != Nt) throw DomainError("inconsistent antenna count across gateways");
        for (const auto& y : received[l]) {
            check_frame_length(y.size(), M);
            for (std::size_t n = 0; n < M; ++n) z[n] = y[n] * base_conj[n];
            fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(z.data()),
                             reinterpret_cast<fftw_complex*>(Z.data()));
            for (std::size_t k = 0; k < M; ++k) out.r(l, k) += scale * std::norm(Z[k]);
        }
    }
    out.fuse();
    return out;
}

}  // namespace mulora
