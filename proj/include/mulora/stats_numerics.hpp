#pragma once

// Scalar numerics used by the stage-1 threshold calibration.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace mulora {

struct NetworkTopology;
struct SpreadingConfig;

double erf(double x);

// Upper Gaussian tail P(X > x) for X ~ N(mean, var).
double gaussian_tail(double x, double mean, double var);

// Regularized lower incomplete gamma P(a, u/s) for integer shape a, i.e. the
// CDF of a sum of a i.i.d. exponentials with mean s:
//   1 - exp(-u/s) * sum_{q<a} (u/s)^q / q!
// Backed by Boost.Math, which stays accurate for a in the hundreds.
double chi2_sum_cdf(double u, int shape, double scale);

// Complement 1 - chi2_sum_cdf, accurate when the CDF is close to 1.
double chi2_sum_sf(double u, int shape, double scale);

// Where an integrand is concentrated: a Gaussian-like bump at `center` with
// standard deviation `width`.
struct GaussianEnvelope {
    double center = 0.0;
    double width = 1.0;
};

// Integral of f over [lower, +inf). The upper limit is truncated where a
// Gaussian with the given envelope drops below tol relative to its peak (never
// closer than 10 widths from the center); the lower limit is likewise raised to
// center - that span when it lies further out. Throws NumericError when the
// adaptive rule cannot certify an absolute error <= tol.
double integrate_semi_infinite(const std::function<double(double)>& f, double lower, double tol,
                               GaussianEnvelope envelope);

struct ScalarMinimum {
    double x = 0.0;
    double fx = 0.0;
    int evaluations = 0;
};

// Golden-section search for the minimizer of a unimodal f on [lo, hi].
ScalarMinimum golden_section_min(const std::function<double(double)>& f, double lo, double hi, double tol);

// Per-device statistics of an active bin's fused power when the device is alone
// on that bin: mean L*mu_g and variance L*sigma2_g/N_t.
struct ActiveBinStats {
    std::vector<double> mu;        // (1/L) sum_l (M beta p + sigma2)
    std::vector<double> sigma2_g;  // (1/L) sum_l (M beta p + sigma2)^2
    std::size_t L = 0;
    std::size_t n_antennas = 0;
    std::size_t M = 0;
    double noise = 0.0;

    std::size_t n_devices() const { return mu.size(); }
    void validate() const;
};

ActiveBinStats make_active_bin_stats(const NetworkTopology& topology, std::span<const double> powers,
                                     const SpreadingConfig& cfg, std::size_t n_antennas);

}  // namespace mulora
