#pragma once

// Non-coherent multiuser detection: exhaustive ML over all N_u-tuples and the
// two-stage detector (active-bin identification followed by a reduced ML
// search), plus the combinatorics and the analytical threshold calibration
// that drive stage 1.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mulora/channel.hpp"
#include "mulora/css_phy.hpp"
#include "mulora/stats_numerics.hpp"

namespace mulora {

struct CandidateTuple {
    std::vector<int> m;

    // Distinct symbols of m in ascending order.
    std::vector<int> active_support() const;
    // Throws DomainError unless every entry lies in [0, M).
    void validate(std::size_t M) const;

    auto operator<=>(const CandidateTuple&) const = default;
};

struct DetectionResult {
    CandidateTuple m_hat;
    std::vector<int> active_bins;  // S_+, ascending; empty for ML detection
    double loglik = 0.0;
    std::size_t stage1_bin_count = 0;  // bins whose fused power exceeded the threshold
};

// Everything the likelihood needs about the link: M*beta(l,g)*p_g, the noise
// power and the array size.
struct LinkModel {
    std::size_t M = 0;
    std::size_t n_antennas = 0;
    double sigma2 = 0.0;
    Eigen::MatrixXd gain;  // L x N_u

    std::size_t n_gateways() const { return static_cast<std::size_t>(gain.rows()); }
    std::size_t n_devices() const { return static_cast<std::size_t>(gain.cols()); }
};

LinkModel make_link_model(const NetworkTopology& topology, std::span<const double> powers,
                          const SpreadingConfig& cfg, std::size_t n_antennas);

// rho(l, k) = M sum_{g: m_g = k} beta(l,g) p_g + sigma2, as an L x M matrix.
Eigen::MatrixXd rho(const CandidateTuple& m, const LinkModel& model);
Eigen::MatrixXd rho(const CandidateTuple& m, const NetworkTopology& topology, std::span<const double> powers,
                    const SpreadingConfig& cfg);

// Gamma(N_t, rho) log-density of the unnormalized per-gateway bin powers, summed
// over all bins or over restrict_to only, without the (N_t-1)! constant.
double loglik(const CandidateTuple& m, const BinPowerTensor& bins, const LinkModel& model,
              std::optional<std::span<const int>> restrict_to = std::nullopt);

inline constexpr std::uint64_t kDefaultMlBudget = std::uint64_t{1} << 20;

// Exhaustive search over all M^N_u tuples; ties go to the lexicographically
// smallest tuple. Throws CapabilityError beyond the enumeration budget.
DetectionResult ml_detect(const BinPowerTensor& bins, const LinkModel& model,
                          std::uint64_t budget = kDefaultMlBudget);

// Classical single-device energy detector: argmax_k sum_l w_l r(l,k) with the
// likelihood weights w_l = 1/sigma2 - 1/(M beta_l p + sigma2).
int max_bin_detect(const BinPowerTensor& bins, const LinkModel& model);

// Lemma-style recursion: number of N_u-tuples whose support is exactly a given
// set of i symbols.
std::uint64_t count_tuples(int n_u, int i);
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

// P(N^+ = i) = C_i binom(M, i) / M^N_u.
double prob_support_size(std::size_t M, int n_u, int i);

struct ThresholdCalibration {
    double p_th = 0.0;
    double p_error_ub = 0.0;
    ActiveBinStats stats;
    bool grid_fallback = false;
};

// Probability that every one of N_u distinct active bins clears both the
// threshold and all inactive bins.
double prob_correct_distinct(double p_th, const ActiveBinStats& stats);

// Lower bound on correct identification when only i < N_u bins are active.
double prob_correct_shared_lb(double p_th, const ActiveBinStats& stats, int i);

// 1 - P_correct^(LB) for the stage-1 decision rule at threshold p_th.
double error_upper_bound(double p_th, const ActiveBinStats& stats);

// Search bracket [L sigma2, max_g(L mu_g) + 10 sqrt(L sigma2_g / N_t)].
std::pair<double, double> threshold_bracket(const ActiveBinStats& stats);

ThresholdCalibration calibrate_threshold(const ActiveBinStats& stats);

struct BoundPoint {
    double p_th;
    double p_error_ub;
};
std::vector<BoundPoint> bound_curve(const ActiveBinStats& stats, std::size_t n_points);

// Stage 1: bins of upsilon above p_th, capped to the n_u strongest; the single
// strongest bin when none exceeds. Returned ascending.
std::vector<int> stage1_identify(const BinPowerTensor& bins, double p_th, int n_u,
                                 std::size_t* exceed_count = nullptr);

// N_u-tuples over the identified bins, in lexicographic order. With
// surjective = true only tuples using every bin are produced.
std::vector<CandidateTuple> enumerate_candidates(std::span<const int> active_bins, int n_u, bool surjective = true);

DetectionResult two_stage_detect(const BinPowerTensor& bins, const LinkModel& model,
                                 const ThresholdCalibration& calibration, bool surjective = true);

}  // namespace mulora
