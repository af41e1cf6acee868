// mulora: multiuser LoRa simulation front end.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "mulora/errors.hpp"
#include "mulora/harness.hpp"

using namespace mulora;

namespace {

// Flags left unset keep whatever the config file (or the defaults) said.
struct Overrides {
    std::optional<std::string> experiment_id;
    std::optional<double> gw_height_m, min_ed_gw_distance_m, min_ed_ed_distance_m, bandwidth_hz;
    std::optional<int> sf;
    std::optional<double> shadowing_std_db, noise_figure_db, ed_radius_km, gw_radius_km;
    std::optional<int> n_gateways, n_devices, n_antennas;
    std::vector<double> snr_db;
    std::optional<std::int64_t> trials;
    std::optional<std::uint64_t> seed;
    std::optional<int> n_topologies;
    std::optional<double> alpha;
    std::optional<std::string> detector;
    std::optional<bool> power_control, surjective;
    std::optional<double> p_max_mw, snr_floor_offset_db, sca_tol;
    std::optional<int> sca_max_iter;
    std::optional<std::uint64_t> ml_budget;
    std::optional<int> threads;
};

struct Common {
    std::string config_path;
    std::string output_path;
    Overrides o;
};

void add_common(CLI::App* app, Common& c) {
    auto& o = c.o;
    app->add_option("--config", c.config_path, "JSON config file (keys are the config field names)");
    app->add_option("-o,--output", c.output_path, "output CSV (default stdout)");
    app->add_option("--experiment_id", o.experiment_id);
    app->add_option("--gw_height_m", o.gw_height_m);
    app->add_option("--min_ed_gw_distance_m", o.min_ed_gw_distance_m);
    app->add_option("--min_ed_ed_distance_m", o.min_ed_ed_distance_m);
    app->add_option("--bandwidth_hz", o.bandwidth_hz);
    app->add_option("--sf", o.sf);
    app->add_option("--shadowing_std_db", o.shadowing_std_db);
    app->add_option("--noise_figure_db", o.noise_figure_db);
    app->add_option("--ed_radius_km", o.ed_radius_km);
    app->add_option("--gw_radius_km", o.gw_radius_km);
    app->add_option("--n_gateways", o.n_gateways);
    app->add_option("--n_devices", o.n_devices);
    app->add_option("--n_antennas", o.n_antennas);
    app->add_option("--snr_db", o.snr_db, "reference SNR grid in dB")->delimiter(',');
    app->add_option("--trials", o.trials);
    app->add_option("--seed", o.seed);
    app->add_option("--n_topologies", o.n_topologies);
    app->add_option("--alpha", o.alpha);
    app->add_option("--detector", o.detector, "ml or two-stage");
    app->add_option("--power_control", o.power_control, "true/false");
    app->add_option("--surjective", o.surjective, "true/false");
    app->add_option("--p_max_mw", o.p_max_mw, "<= 0 uses the single-user power sum");
    app->add_option("--snr_floor_offset_db", o.snr_floor_offset_db);
    app->add_option("--sca_tol", o.sca_tol);
    app->add_option("--sca_max_iter", o.sca_max_iter);
    app->add_option("--ml_budget", o.ml_budget);
    app->add_option("--threads", o.threads, "0 = hardware concurrency");
}

template <class T>
void put(const std::optional<T>& v, T& out) {
    if (v) out = *v;
}

ExperimentConfig resolve(const Common& c) {
    ExperimentConfig cfg;
    if (!c.config_path.empty()) {
        std::ifstream in(c.config_path);
        if (!in) throw ConfigError("cannot open config file " + c.config_path);
        cfg = load_config(in);
    }
    const auto& o = c.o;
    put(o.experiment_id, cfg.experiment_id);
    put(o.gw_height_m, cfg.gw_height_m);
    put(o.min_ed_gw_distance_m, cfg.min_ed_gw_distance_m);
    put(o.min_ed_ed_distance_m, cfg.min_ed_ed_distance_m);
    put(o.bandwidth_hz, cfg.bandwidth_hz);
    put(o.sf, cfg.sf);
    put(o.shadowing_std_db, cfg.shadowing_std_db);
    put(o.noise_figure_db, cfg.noise_figure_db);
    put(o.ed_radius_km, cfg.ed_radius_km);
    put(o.gw_radius_km, cfg.gw_radius_km);
    put(o.n_gateways, cfg.n_gateways);
    put(o.n_devices, cfg.n_devices);
    put(o.n_antennas, cfg.n_antennas);
    if (!o.snr_db.empty()) cfg.snr_db = o.snr_db;
    put(o.trials, cfg.trials);
    put(o.seed, cfg.seed);
    put(o.n_topologies, cfg.n_topologies);
    put(o.alpha, cfg.alpha);
    if (o.detector) cfg.detector = parse_detector_mode(*o.detector);
    put(o.power_control, cfg.power_control);
    put(o.surjective, cfg.surjective);
    put(o.p_max_mw, cfg.p_max_mw);
    put(o.snr_floor_offset_db, cfg.snr_floor_offset_db);
    put(o.sca_tol, cfg.sca_tol);
    put(o.sca_max_iter, cfg.sca_max_iter);
    put(o.ml_budget, cfg.ml_budget);
    put(o.threads, cfg.threads);
    cfg.validate();
    return cfg;
}

// Returns stdout or an opened file.
struct Sink {
    std::ofstream file;
    std::ostream* os = &std::cout;
    explicit Sink(const std::string& path) {
        if (path.empty() || path == "-") return;
        file.open(path);
        if (!file) throw ConfigError("cannot open output file " + path);
        os = &file;
    }
    std::ostream& operator*() { return *os; }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multiuser LoRa detection and power-control simulator"};
    app.require_subcommand(1);

    Common sim_c, cal_c, pc_c, sw_c;

    auto* sim = app.add_subcommand("simulate", "Monte Carlo SER over the reference-SNR grid");
    add_common(sim, sim_c);
    std::string save_cfg;
    sim->add_option("--save-config", save_cfg, "write the resolved config as JSON");

    auto* cal = app.add_subcommand("calibrate-threshold",
                                   "optimize the stage-1 threshold and emit the error-bound curve");
    add_common(cal, cal_c);
    std::size_t n_points = 200;
    std::size_t cal_topology = 0;
    cal->add_option("--points", n_points, "bound-curve grid size")->check(CLI::PositiveNumber);
    cal->add_option("--topology-index", cal_topology);

    auto* pc = app.add_subcommand("power-control", "run power control; emit allocation and SCA trace");
    add_common(pc, pc_c);
    std::string trace_path;
    std::size_t pc_topology = 0;
    pc->add_option("--trace", trace_path, "write the SCA convergence trace CSV here");
    pc->add_option("--topology-index", pc_topology);

    auto* sw = app.add_subcommand("sweep", "SER sweep over one axis with common seeds");
    add_common(sw, sw_c);
    std::string axis_name;
    std::vector<double> values;
    sw->add_option("--axis", axis_name, "n_antennas, alpha or snr")->required();
    sw->add_option("--values", values, "comma-separated axis values")->required()->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            const ExperimentConfig cfg = resolve(sim_c);
            if (!save_cfg.empty()) {
                std::ofstream out(save_cfg);
                save_config(out, cfg);
            }
            const auto records = run_ser_experiment(cfg);
            Sink sink(sim_c.output_path);
            write_ser_csv(*sink, records);
        } else if (*cal) {
            ExperimentConfig cfg = resolve(cal_c);
            cfg.detector = DetectorMode::two_stage;
            const double snr = cfg.snr_db.front();
            const OperatingPoint op = prepare_operating_point(cfg, snr, cal_topology);
            const auto& c = *op.calibration;
            std::cerr << fmt::format("p_th={} p_error_ub={}{}\n", c.p_th, c.p_error_ub,
                                     c.grid_fallback ? " (grid fallback)" : "");
            Sink sink(cal_c.output_path);
            write_bound_csv(*sink, bound_curve(c.stats, n_points));
        } else if (*pc) {
            ExperimentConfig cfg = resolve(pc_c);
            cfg.power_control = true;
            const double snr = cfg.snr_db.front();
            const OperatingPoint op = prepare_operating_point(cfg, snr, pc_topology);
            Sink sink(pc_c.output_path);
            *sink << "device,p_su_mw,p_mw,avg_snr_db\n";
            for (std::size_t g = 0; g < op.powers.size(); ++g)
                *sink << fmt::format("{},{},{},{}\n", g + 1, op.p_su[g], op.powers[g],
                                     linear_to_db(average_snr(op.topology, cfg.spreading(), g, op.powers[g])));
            for (auto g : op.snr_floor_violations)
                std::cerr << fmt::format("warning: device {} below the SNR floor after budget scaling\n", g + 1);
            if (!trace_path.empty()) {
                if (!op.power_control) throw ConfigError("power control skipped (fewer than two devices)");
                std::ofstream tr(trace_path);
                if (!tr) throw ConfigError("cannot open trace file " + trace_path);
                write_trace_csv(tr, op.power_control->state);
            }
        } else if (*sw) {
            const ExperimentConfig cfg = resolve(sw_c);
            const auto records = sweep(cfg, parse_sweep_axis(axis_name), values);
            Sink sink(sw_c.output_path);
            write_ser_csv(*sink, records);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
