#pragma once

// Network geometry, large/small-scale fading and received-signal synthesis.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mulora/css_phy.hpp"

namespace mulora {

struct Point2 {
    double x = 0.0;  // km
    double y = 0.0;  // km
};

struct Point3 {
    double x = 0.0;  // km
    double y = 0.0;  // km
    double z = 0.0;  // km (gateway height converted from meters)
};

struct TopologyParams {
    int n_gateways = 3;
    int n_devices = 3;
    double ed_radius_km = 4.0;
    double gw_radius_km = 2.0;
    double gw_height_m = 70.0;
    double min_ed_gw_distance_m = 50.0;   // planar
    double min_ed_ed_distance_m = 500.0;  // planar
    double shadowing_std_db = 7.8;
    double bandwidth_hz = 125e3;
    double noise_figure_db = 6.0;
    int max_attempts = 100000;

    void validate() const;
};

struct NetworkTopology {
    std::vector<Point3> gw_positions;
    std::vector<Point2> ed_positions;
    Eigen::MatrixXd beta;  // L x N_u, linear large-scale gains
    double sigma2 = 0.0;   // mW per complex sample
    TopologyParams params;

    std::size_t n_gateways() const { return static_cast<std::size_t>(beta.rows()); }
    std::size_t n_devices() const { return static_cast<std::size_t>(beta.cols()); }

    // Fixture constructor: no geometry, just gains and noise.
    static NetworkTopology from_beta(Eigen::MatrixXd beta, double sigma2);

    // Throws DomainError when beta has non-positive/non-finite entries or sigma2 < 0.
    void validate() const;
};

// h(l, g) is the N_t-vector of channel gains from device g to gateway l.
class ChannelRealization {
public:
    ChannelRealization() = default;
    ChannelRealization(std::size_t n_gateways, std::size_t n_devices, std::size_t n_antennas);

    std::size_t n_gateways() const { return L_; }
    std::size_t n_devices() const { return U_; }
    std::size_t n_antennas() const { return Nt_; }

    std::span<cplx> h(std::size_t gw, std::size_t dev) { return {h_.data() + offset(gw, dev), Nt_}; }
    std::span<const cplx> h(std::size_t gw, std::size_t dev) const { return {h_.data() + offset(gw, dev), Nt_}; }

private:
    std::size_t offset(std::size_t gw, std::size_t dev) const { return (gw * U_ + dev) * Nt_; }

    std::size_t L_ = 0, U_ = 0, Nt_ = 0;
    std::vector<cplx> h_;
};

double path_loss_db(double distance_km, double shadowing_db);
double db_to_linear(double db);
double linear_to_db(double lin);

// Thermal noise power for a receiver, in mW (-174 dBm/Hz floor).
double noise_power(double bandwidth_hz, double noise_figure_db);

NetworkTopology generate_topology(const TopologyParams& params, std::uint64_t seed);

ChannelRealization sample_channels(const NetworkTopology& topology, std::size_t n_antennas, std::uint64_t seed);

// y_l[n] = sum_g h_{g,l} sqrt(p_g) x_{m_g}[n] + w_l[n], w ~ CN(0, sigma2).
ArraySamples synthesize_received(const NetworkTopology& topology, const ChannelRealization& channels,
                                 std::span<const double> powers, std::span<const int> symbols,
                                 const SpreadingConfig& cfg, std::uint64_t seed);

// Structured-text (JSON) persistence of a topology.
void write_topology(std::ostream& os, const NetworkTopology& topology);
NetworkTopology read_topology(std::istream& is);

}  // namespace mulora
