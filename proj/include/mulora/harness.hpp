#pragma once

// Experiment orchestration: power calibration, Monte Carlo symbol-error-rate
// runs, sweeps and CSV emission.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mulora/channel.hpp"
#include "mulora/css_phy.hpp"
#include "mulora/detector.hpp"
#include "mulora/power_control.hpp"

namespace mulora {

enum class DetectorMode { ml, two_stage };

std::string to_string(DetectorMode mode);
DetectorMode parse_detector_mode(const std::string& s);

struct ExperimentConfig {
    std::string experiment_id = "exp";

    // Deployment defaults.
    double gw_height_m = 70.0;
    double min_ed_gw_distance_m = 50.0;
    double min_ed_ed_distance_m = 500.0;
    double bandwidth_hz = 125e3;
    int sf = 7;
    double shadowing_std_db = 7.8;
    double noise_figure_db = 6.0;
    double ed_radius_km = 4.0;
    double gw_radius_km = 2.0;

    int n_gateways = 3;
    int n_devices = 3;
    int n_antennas = 35;
    std::vector<double> snr_db{-20.0};
    std::int64_t trials = 1000;
    std::uint64_t seed = 1;
    int n_topologies = 1;

    double alpha = 1.061;
    DetectorMode detector = DetectorMode::two_stage;
    bool power_control = true;
    bool surjective = true;

    // Power-control budget per device; <= 0 selects the grouped single-user sum.
    double p_max_mw = 0.0;
    // SNR floor relative to the weakest device at single-user power (dB).
    double snr_floor_offset_db = 0.0;
    double sca_tol = 1e-5;
    int sca_max_iter = 100;

    std::uint64_t ml_budget = kDefaultMlBudget;
    int threads = 0;  // 0: hardware concurrency

    SpreadingConfig spreading() const { return {sf, bandwidth_hz}; }
    TopologyParams topology_params() const;
    void validate() const;
};

ExperimentConfig load_config(std::istream& is, ExperimentConfig base = {});
void save_config(std::ostream& os, const ExperimentConfig& cfg);

struct SERRecord {
    std::string experiment_id;
    double snr_db = 0.0;
    int n_u = 0;
    int n_t = 0;
    double alpha = 0.0;
    DetectorMode detector = DetectorMode::two_stage;
    bool power_control = false;
    std::int64_t trials = 0;
    std::vector<std::int64_t> errors;  // per device
    std::uint64_t seed = 0;

    double ser(std::size_t g) const { return static_cast<double>(errors.at(g)) / static_cast<double>(trials); }
    double ser_avg() const;
    double ser_best() const;
    double ser_worst() const;
};

// p_g = snr * sigma2 / max_l beta(l, g): the per-sample SNR a lone device gets at
// its strongest gateway.
std::vector<double> calibrate_single_user_powers(const NetworkTopology& topology, double reference_snr_db);

struct BudgetResult {
    PowerAllocation allocation;
    double scale = 1.0;
    std::vector<std::size_t> snr_floor_violations;  // devices below epsilon after scaling
};

BudgetResult apply_sum_power_budget(std::span<const double> p, std::span<const double> p_su,
                                    const NetworkTopology& topology, const SpreadingConfig& cfg, double epsilon);

// Transmit powers and detector state for one topology at one reference SNR.
struct OperatingPoint {
    NetworkTopology topology;
    std::vector<double> p_su;
    std::vector<double> powers;
    std::optional<PowerControlResult> power_control;
    std::vector<std::size_t> snr_floor_violations;
    LinkModel link;
    std::optional<ThresholdCalibration> calibration;
};

// Floor on average SNR: the weakest device's single-user average SNR, shifted by
// snr_floor_offset_db.
double snr_floor_epsilon(const ExperimentConfig& cfg, const NetworkTopology& topology, std::span<const double> p_su);

OperatingPoint prepare_operating_point(const ExperimentConfig& cfg, double reference_snr_db,
                                       std::size_t topology_index);

std::vector<SERRecord> run_ser_experiment(const ExperimentConfig& cfg);

// Symbol-level outcomes of two arms run on identical trial draws (same symbols,
// fading and noise seeds).
struct PairedOutcome {
    std::int64_t symbols = 0;  // trials * N_u
    std::int64_t both = 0;
    std::int64_t only_a = 0;
    std::int64_t only_b = 0;
};

PairedOutcome paired_symbol_errors(const ExperimentConfig& a, const ExperimentConfig& b, double snr_db);

enum class SweepAxis { n_antennas, alpha, snr };
SweepAxis parse_sweep_axis(const std::string& s);

std::vector<SERRecord> sweep(const ExperimentConfig& cfg, SweepAxis axis, std::span<const double> values);

void write_ser_csv(std::ostream& os, std::span<const SERRecord> records);
void write_bound_csv(std::ostream& os, std::span<const BoundPoint> curve);

struct IdentificationCount {
    std::int64_t correct = 0;
    std::int64_t trials = 0;
    double rate() const { return trials ? static_cast<double>(correct) / static_cast<double>(trials) : 0.0; }
};

// Monte Carlo frequency of stage 1 returning exactly the transmitted bins.
IdentificationCount stage1_identification_rate(const NetworkTopology& topology, std::span<const double> powers,
                                               const SpreadingConfig& spreading, std::size_t n_antennas,
                                               double p_th, std::int64_t trials, std::uint64_t seed,
                                               int threads = 0);

// Reference SNR where log10(average SER) crosses log10(target), by linear
// interpolation between the bracketing grid points (records sorted by SNR).
std::optional<double> snr_at_target_ser(std::span<const SERRecord> records, double target);

}  // namespace mulora
