#include "mulora/channel.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>

#include <json.hpp>

#include "mulora/errors.hpp"
#include "mulora/rng.hpp"

namespace mulora {

using nlohmann::json;

void TopologyParams::validate() const {
    if (n_gateways < 1) throw DomainError("n_gateways must be >= 1");
    if (n_devices < 1) throw DomainError("n_devices must be >= 1");
    if (!(ed_radius_km > 0.0)) throw DomainError("ed_radius_km must be positive");
    if (!(gw_radius_km >= 0.0)) throw DomainError("gw_radius_km must be non-negative");
    if (!(gw_height_m >= 0.0)) throw DomainError("gw_height_m must be non-negative");
    if (!(min_ed_gw_distance_m >= 0.0) || !(min_ed_ed_distance_m >= 0.0))
        throw DomainError("minimum distances must be non-negative");
    if (!(shadowing_std_db >= 0.0)) throw DomainError("shadowing_std_db must be non-negative");
    if (!(bandwidth_hz > 0.0)) throw DomainError("bandwidth_hz must be positive");
    if (max_attempts < 1) throw DomainError("max_attempts must be >= 1");
}

NetworkTopology NetworkTopology::from_beta(Eigen::MatrixXd beta, double sigma2) {
    NetworkTopology t;
    t.params.n_gateways = static_cast<int>(beta.rows());
    t.params.n_devices = static_cast<int>(beta.cols());
    t.beta = std::move(beta);
    t.sigma2 = sigma2;
    return t;
}

void NetworkTopology::validate() const {
    if (beta.rows() < 1 || beta.cols() < 1) throw DomainError("topology needs at least one gateway and device");
    for (Eigen::Index i = 0; i < beta.size(); ++i) {
        const double b = beta.data()[i];
        if (!(b > 0.0) || !std::isfinite(b)) throw DomainError("beta entries must be positive and finite");
    }
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw DomainError("sigma2 must be non-negative");
}

ChannelRealization::ChannelRealization(std::size_t n_gateways, std::size_t n_devices, std::size_t n_antennas)
    : L_(n_gateways), U_(n_devices), Nt_(n_antennas), h_(n_gateways * n_devices * n_antennas) {}

double path_loss_db(double distance_km, double shadowing_db) {
    if (!(distance_km > 0.0)) throw DomainError("distance must be positive");
    return 128.95 + 23.2 * std::log10(distance_km) + shadowing_db;
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

double noise_power(double bandwidth_hz, double noise_figure_db) {
    if (!(bandwidth_hz > 0.0)) throw DomainError("bandwidth must be positive");
    const double dbm = -174.0 + 10.0 * std::log10(bandwidth_hz) + noise_figure_db;
    return db_to_linear(dbm);
}

NetworkTopology generate_topology(const TopologyParams& params, std::uint64_t seed) {
    params.validate();
    const auto L = static_cast<std::size_t>(params.n_gateways);
    const auto U = static_cast<std::size_t>(params.n_devices);

    NetworkTopology t;
    t.params = params;
    t.sigma2 = noise_power(params.bandwidth_hz, params.noise_figure_db);

    const double height_km = params.gw_height_m / 1000.0;
    for (std::size_t l = 0; l < L; ++l) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(l) / static_cast<double>(L);
        t.gw_positions.push_back({params.gw_radius_km * std::cos(a), params.gw_radius_km * std::sin(a), height_km});
    }

    Rng rng(stream_seed(seed, Stream::topology));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double min_gw = params.min_ed_gw_distance_m / 1000.0;
    const double min_ed = params.min_ed_ed_distance_m / 1000.0;

    int attempts = 0;
    while (t.ed_positions.size() < U) {
        if (++attempts > params.max_attempts)
            throw GenerationError("device placement exceeded " + std::to_string(params.max_attempts) +
                                  " attempts; minimum-distance constraints too dense for the disc");
        const double rad = params.ed_radius_km * std::sqrt(unit(rng));
        const double ang = 2.0 * std::numbers::pi * unit(rng);
        const Point2 cand{rad * std::cos(ang), rad * std::sin(ang)};

        bool ok = true;
        for (const auto& gw : t.gw_positions)
            if (std::hypot(cand.x - gw.x, cand.y - gw.y) < min_gw) ok = false;
        for (const auto& ed : t.ed_positions)
            if (std::hypot(cand.x - ed.x, cand.y - ed.y) < min_ed) ok = false;
        if (ok) t.ed_positions.push_back(cand);
    }

    std::normal_distribution<double> shadow(0.0, params.shadowing_std_db);
    t.beta.resize(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(U));
    for (std::size_t g = 0; g < U; ++g) {
        for (std::size_t l = 0; l < L; ++l) {
            const auto& gw = t.gw_positions[l];
            const auto& ed = t.ed_positions[g];
            const double d = std::sqrt((ed.x - gw.x) * (ed.x - gw.x) + (ed.y - gw.y) * (ed.y - gw.y) + gw.z * gw.z);
            const double z = params.shadowing_std_db > 0.0 ? shadow(rng) : 0.0;
            t.beta(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(g)) = db_to_linear(-path_loss_db(d, z));
        }
    }
    return t;
}

ChannelRealization sample_channels(const NetworkTopology& topology, std::size_t n_antennas, std::uint64_t seed) {
    if (n_antennas < 1) throw DomainError("need at least one antenna");
    const std::size_t L = topology.n_gateways();
    const std::size_t U = topology.n_devices();
    ChannelRealization ch(L, U, n_antennas);
    Rng rng(stream_seed(seed, Stream::channel));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t g = 0; g < U; ++g) {
            const double b = topology.beta(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(g));
            if (!(b >= 0.0) || !std::isfinite(b)) throw DomainError("beta entries must be non-negative and finite");
            const double sd = std::sqrt(b / 2.0);
            for (auto& v : ch.h(l, g)) {
                const double re = normal(rng);
                const double im = normal(rng);
                v = {sd * re, sd * im};
            }
        }
    }
    return ch;
}

ArraySamples synthesize_received(const NetworkTopology& topology, const ChannelRealization& channels,
                                 std::span<const double> powers, std::span<const int> symbols,
                                 const SpreadingConfig& cfg, std::uint64_t seed) {
    const std::size_t L = topology.n_gateways();
    const std::size_t U = topology.n_devices();
    const std::size_t M = cfg.M();
    if (channels.n_gateways() != L || channels.n_devices() != U)
        throw DomainError("channel realization does not match topology");
    if (powers.size() != U) throw DomainError("power vector length does not match device count");
    if (symbols.size() != U) throw DomainError("symbol tuple length does not match device count");
    for (double p : powers)
        if (!(p >= 0.0) || !std::isfinite(p)) throw DomainError("transmit powers must be non-negative");

    std::vector<ComplexVec> chirps;
    chirps.reserve(U);
    for (int m : symbols) chirps.push_back(generate_chirp(cfg, m));

    const std::size_t Nt = channels.n_antennas();
    const double noise_sd = std::sqrt(topology.sigma2 / 2.0);
    Rng rng(stream_seed(seed, Stream::noise));
    std::normal_distribution<double> normal(0.0, 1.0);

    ArraySamples out(L, std::vector<ComplexVec>(Nt, ComplexVec(M)));
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t a = 0; a < Nt; ++a) {
            ComplexVec& y = out[l][a];
            for (std::size_t g = 0; g < U; ++g) {
                const cplx gain = channels.h(l, g)[a] * std::sqrt(powers[g]);
                if (gain == cplx{}) continue;
                for (std::size_t n = 0; n < M; ++n) y[n] += gain * chirps[g][n];
            }
            if (noise_sd > 0.0) {
                for (std::size_t n = 0; n < M; ++n) {
                    const double re = normal(rng);
                    const double im = normal(rng);
                    y[n] += cplx{noise_sd * re, noise_sd * im};
                }
            }
        }
    }
    return out;
}

void write_topology(std::ostream& os, const NetworkTopology& t) {
    json j;
    j["gw_positions"] = json::array();
    for (const auto& p : t.gw_positions) j["gw_positions"].push_back({p.x, p.y, p.z});
    j["ed_positions"] = json::array();
    for (const auto& p : t.ed_positions) j["ed_positions"].push_back({p.x, p.y});
    j["beta"] = json::array();
    for (Eigen::Index l = 0; l < t.beta.rows(); ++l) {
        json row = json::array();
        for (Eigen::Index g = 0; g < t.beta.cols(); ++g) row.push_back(t.beta(l, g));
        j["beta"].push_back(row);
    }
    j["sigma2"] = t.sigma2;
    const auto& p = t.params;
    j["params"] = {{"n_gateways", p.n_gateways},
                   {"n_devices", p.n_devices},
                   {"ed_radius_km", p.ed_radius_km},
                   {"gw_radius_km", p.gw_radius_km},
                   {"gw_height_m", p.gw_height_m},
                   {"min_ed_gw_distance_m", p.min_ed_gw_distance_m},
                   {"min_ed_ed_distance_m", p.min_ed_ed_distance_m},
                   {"shadowing_std_db", p.shadowing_std_db},
                   {"bandwidth_hz", p.bandwidth_hz},
                   {"noise_figure_db", p.noise_figure_db},
                   {"max_attempts", p.max_attempts}};
    os << j.dump(2) << '\n';
}

NetworkTopology read_topology(std::istream& is) {
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed topology document: ") + e.what());
    }
    try {
        NetworkTopology t;
        for (const auto& p : j.at("gw_positions"))
            t.gw_positions.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
        for (const auto& p : j.at("ed_positions")) t.ed_positions.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        const auto& rows = j.at("beta");
        const auto L = static_cast<Eigen::Index>(rows.size());
        const auto U = L > 0 ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
        t.beta.resize(L, U);
        for (Eigen::Index l = 0; l < L; ++l) {
            if (static_cast<Eigen::Index>(rows.at(l).size()) != U) throw ConfigError("ragged beta matrix");
            for (Eigen::Index g = 0; g < U; ++g) t.beta(l, g) = rows.at(l).at(g).get<double>();
        }
        t.sigma2 = j.at("sigma2").get<double>();
        const auto& p = j.at("params");
        t.params.n_gateways = p.at("n_gateways").get<int>();
        t.params.n_devices = p.at("n_devices").get<int>();
        t.params.ed_radius_km = p.at("ed_radius_km").get<double>();
        t.params.gw_radius_km = p.at("gw_radius_km").get<double>();
        t.params.gw_height_m = p.at("gw_height_m").get<double>();
        t.params.min_ed_gw_distance_m = p.at("min_ed_gw_distance_m").get<double>();
        t.params.min_ed_ed_distance_m = p.at("min_ed_ed_distance_m").get<double>();
        t.params.shadowing_std_db = p.at("shadowing_std_db").get<double>();
        t.params.bandwidth_hz = p.at("bandwidth_hz").get<double>();
        t.params.noise_figure_db = p.at("noise_figure_db").get<double>();
        t.params.max_attempts = p.at("max_attempts").get<int>();
        t.validate();
        return t;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("topology document missing or mistyped field: ") + e.what());
    }
}

}  // namespace mulora
