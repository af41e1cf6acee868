#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <string>

#include <json.hpp>

#include "mulora/errors.hpp"
#include "mulora/harness.hpp"

namespace mulora {

using nlohmann::json;

std::string to_string(DetectorMode mode) { return mode == DetectorMode::ml ? "ml" : "two-stage"; }

DetectorMode parse_detector_mode(const std::string& s) {
    if (s == "ml") return DetectorMode::ml;
    if (s == "two-stage" || s == "two_stage") return DetectorMode::two_stage;
    throw ConfigError("unknown detector mode '" + s + "' (expected ml or two-stage)");
}

SweepAxis parse_sweep_axis(const std::string& s) {
    if (s == "n_antennas") return SweepAxis::n_antennas;
    if (s == "alpha") return SweepAxis::alpha;
    if (s == "snr" || s == "snr_db") return SweepAxis::snr;
    throw ConfigError("unknown sweep axis '" + s + "' (expected n_antennas, alpha or snr)");
}

TopologyParams ExperimentConfig::topology_params() const {
    TopologyParams p;
    p.n_gateways = n_gateways;
    p.n_devices = n_devices;
    p.ed_radius_km = ed_radius_km;
    p.gw_radius_km = gw_radius_km;
    p.gw_height_m = gw_height_m;
    p.min_ed_gw_distance_m = min_ed_gw_distance_m;
    p.min_ed_ed_distance_m = min_ed_ed_distance_m;
    p.shadowing_std_db = shadowing_std_db;
    p.bandwidth_hz = bandwidth_hz;
    p.noise_figure_db = noise_figure_db;
    return p;
}

void ExperimentConfig::validate() const {
    try {
        spreading().validate();
        topology_params().validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    if (n_antennas < 1) throw ConfigError("n_antennas must be >= 1");
    if (static_cast<std::size_t>(n_devices) > spreading().M()) throw ConfigError("more devices than chirps");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (n_topologies < 1) throw ConfigError("n_topologies must be >= 1");
    if (snr_db.empty()) throw ConfigError("snr_db grid is empty");
    for (double s : snr_db)
        if (!std::isfinite(s)) throw ConfigError("snr_db grid must be finite");
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
    if (!std::isfinite(snr_floor_offset_db)) throw ConfigError("snr_floor_offset_db must be finite");
    if (!(sca_tol > 0.0) || sca_max_iter < 1) throw ConfigError("invalid SCA convergence settings");
    if (threads < 0) throw ConfigError("threads must be >= 0");
}

namespace {

template <class T>
void read_field(const json& j, const char* key, T& out, std::set<std::string>& seen) {
    if (!j.contains(key)) return;
    seen.insert(key);
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

}  // namespace

ExperimentConfig load_config(std::istream& is, ExperimentConfig cfg) {
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be an object");

    std::set<std::string> seen;
    read_field(j, "experiment_id", cfg.experiment_id, seen);
    read_field(j, "gw_height_m", cfg.gw_height_m, seen);
    read_field(j, "min_ed_gw_distance_m", cfg.min_ed_gw_distance_m, seen);
    read_field(j, "min_ed_ed_distance_m", cfg.min_ed_ed_distance_m, seen);
    read_field(j, "bandwidth_hz", cfg.bandwidth_hz, seen);
    read_field(j, "sf", cfg.sf, seen);
    read_field(j, "shadowing_std_db", cfg.shadowing_std_db, seen);
    read_field(j, "noise_figure_db", cfg.noise_figure_db, seen);
    read_field(j, "ed_radius_km", cfg.ed_radius_km, seen);
    read_field(j, "gw_radius_km", cfg.gw_radius_km, seen);
    read_field(j, "n_gateways", cfg.n_gateways, seen);
    read_field(j, "n_devices", cfg.n_devices, seen);
    read_field(j, "n_antennas", cfg.n_antennas, seen);
    read_field(j, "snr_db", cfg.snr_db, seen);
    read_field(j, "trials", cfg.trials, seen);
    read_field(j, "seed", cfg.seed, seen);
    read_field(j, "n_topologies", cfg.n_topologies, seen);
    read_field(j, "alpha", cfg.alpha, seen);
    if (j.contains("detector")) {
        seen.insert("detector");
        cfg.detector = parse_detector_mode(j.at("detector").get<std::string>());
    }
    read_field(j, "power_control", cfg.power_control, seen);
    read_field(j, "surjective", cfg.surjective, seen);
    read_field(j, "p_max_mw", cfg.p_max_mw, seen);
    read_field(j, "snr_floor_offset_db", cfg.snr_floor_offset_db, seen);
    read_field(j, "sca_tol", cfg.sca_tol, seen);
    read_field(j, "sca_max_iter", cfg.sca_max_iter, seen);
    read_field(j, "ml_budget", cfg.ml_budget, seen);
    read_field(j, "threads", cfg.threads, seen);

    for (const auto& item : j.items())
        if (!seen.contains(item.key())) throw ConfigError("unknown config field '" + item.key() + "'");
    cfg.validate();
    return cfg;
}

void save_config(std::ostream& os, const ExperimentConfig& c) {
    json j = {{"experiment_id", c.experiment_id},
              {"gw_height_m", c.gw_height_m},
              {"min_ed_gw_distance_m", c.min_ed_gw_distance_m},
              {"min_ed_ed_distance_m", c.min_ed_ed_distance_m},
              {"bandwidth_hz", c.bandwidth_hz},
              {"sf", c.sf},
              {"shadowing_std_db", c.shadowing_std_db},
              {"noise_figure_db", c.noise_figure_db},
              {"ed_radius_km", c.ed_radius_km},
              {"gw_radius_km", c.gw_radius_km},
              {"n_gateways", c.n_gateways},
              {"n_devices", c.n_devices},
              {"n_antennas", c.n_antennas},
              {"snr_db", c.snr_db},
              {"trials", c.trials},
              {"seed", c.seed},
              {"n_topologies", c.n_topologies},
              {"alpha", c.alpha},
              {"detector", to_string(c.detector)},
              {"power_control", c.power_control},
              {"surjective", c.surjective},
              {"p_max_mw", c.p_max_mw},
              {"snr_floor_offset_db", c.snr_floor_offset_db},
              {"sca_tol", c.sca_tol},
              {"sca_max_iter", c.sca_max_iter},
              {"ml_budget", c.ml_budget},
              {"threads", c.threads}};
    os << j.dump(2) << '\n';
}

}  // namespace mulora
