#pragma once

// Transmit power control that makes the devices' expected bin-power vectors
// across gateways as dissimilar as possible (max-min inverse Jaccard), solved
// by successive convex approximation.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mulora/channel.hpp"
#include "mulora/css_phy.hpp"

namespace mulora {

struct PowerAllocation {
    std::vector<double> p;  // mW
    double p_max = 0.0;     // mW
    double epsilon = 0.0;   // floor on (1/(L sigma2)) sum_l M beta p

    // Throws DomainError on negative or non-finite entries.
    void validate() const;
};

// Average received SNR of device g over the gateways, despreading gain included.
double average_snr(const NetworkTopology& topology, const SpreadingConfig& cfg, std::size_t g, double p_g);

// Smallest power meeting the SNR floor for each device.
std::vector<double> snr_floor_powers(const NetworkTopology& topology, const SpreadingConfig& cfg, double epsilon);

// (u.v) / (|u|^2 + |v|^2 - u.v)
double jaccard(std::span<const double> u, std::span<const double> v);

struct ExpectedBinPowerVectors {
    std::vector<Eigen::VectorXd> mu_single;  // [g](l) = M beta(l,g) p_g + sigma2
    // [pair_index(g, g')](l) = M beta(l,g) p_g + M beta(l,g') p_g' + sigma2, g < g'
    std::vector<Eigen::VectorXd> mu_pair;
    std::size_t n_devices = 0;

    std::size_t pair_index(std::size_t g, std::size_t gp) const;
};

ExpectedBinPowerVectors build_mu_vectors(const NetworkTopology& topology, std::span<const double> p,
                                         const SpreadingConfig& cfg);

// max over g < g' of {J(mu_g, mu_g'), J(mu_{g,g'}, mu_g')}.
double objective_similarity(const NetworkTopology& topology, std::span<const double> p, const SpreadingConfig& cfg);

// min over g < g' of {1/J, alpha^2 |u+v|^2/(u.v) - 3} with (u, v) = (mu_{g,g'}, mu_g')
// in the second term: the epigraph value the optimizer maximizes. alpha = 1
// gives min{1/J, 1/J2}.
double min_inverse_similarity(const NetworkTopology& topology, std::span<const double> p,
                              const SpreadingConfig& cfg, double alpha);

// First-order minorant of x^2/y at (xbar, ybar).
double quad_over_lin_minorant(double x, double y, double xbar, double ybar);
// Majorant of x*y at (xbar, ybar): (xbar ybar / 4)(x/xbar + y/ybar)^2.
double bilinear_majorant(double x, double y, double xbar, double ybar);

enum class ConstraintFamily { similarity, collision };

// f(x, lambda) = 0.5 x'Qx + a'x + b lambda + c <= 0 in normalized powers
// x = p / p_scale. Q is PSD; b > 0.
struct QuadraticConstraint {
    ConstraintFamily family = ConstraintFamily::similarity;
    std::size_t g = 0, gp = 0;
    Eigen::MatrixXd Q;
    Eigen::VectorXd a;
    double b = 1.0;
    double c = 0.0;

    double value(const Eigen::VectorXd& x, double lambda) const { return 0.5 * x.dot(Q * x) + a.dot(x) + b * lambda + c; }
    // Largest lambda this constraint admits at x.
    double lambda_cap(const Eigen::VectorXd& x) const { return -(0.5 * x.dot(Q * x) + a.dot(x) + c) / b; }
};

// One convex instance: maximize lambda s.t. all constraints and lower <= x <= upper.
struct ScaSubproblem {
    std::vector<QuadraticConstraint> constraints;
    Eigen::VectorXd lower, upper;  // normalized box (SNR floor and budget)
    Eigen::VectorXd x_prev;
    double lambda_prev = 0.0;
    double p_scale = 1.0;  // mW per normalized unit
};

ScaSubproblem build_sca_constraints(std::span<const double> p_prev, double lambda_prev, double alpha,
                                    const NetworkTopology& topology, const SpreadingConfig& cfg, double p_max,
                                    double epsilon);

struct ScaSolution {
    std::vector<double> p;  // mW
    double lambda = 0.0;
    int newton_steps = 0;
};

// Log-barrier interior-point method on (x, lambda).
ScaSolution solve_sca_subproblem(const ScaSubproblem& problem);

struct ScaIterate {
    int iteration = 0;
    double lambda = 0.0;
    double max_pair_jaccard = 0.0;
    double min_budget_residual = 0.0;  // min_g min(p_g, p_max - p_g) / p_max
    double min_snr_residual = 0.0;     // min_g average_snr - epsilon (relative to epsilon when > 0)
};

struct SCAState {
    int iteration = 0;
    std::vector<double> p_current;
    double lambda_current = 0.0;
    std::vector<ScaIterate> trace;
    bool converged = false;
};

struct PowerControlResult {
    PowerAllocation allocation;
    SCAState state;
};

struct PowerControlOptions {
    double alpha = 1.061;
    double tol = 1e-5;
    int max_iter = 100;
};

PowerControlResult run_power_control(const NetworkTopology& topology, const SpreadingConfig& cfg, double p_max,
                                     double epsilon, const PowerControlOptions& options = {});

void write_trace_csv(std::ostream& os, const SCAState& state);

}  // namespace mulora
