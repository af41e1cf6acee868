#include "mulora/power_control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "mulora/errors.hpp"

namespace mulora {

namespace {

Eigen::Index ix(std::size_t i) { return static_cast<Eigen::Index>(i); }

void check_powers(const NetworkTopology& topology, std::span<const double> p) {
    if (p.size() != topology.n_devices()) throw DomainError("power vector length does not match device count");
    for (double v : p)
        if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("powers must be non-negative and finite");
}

// Affine vector of normalized powers: value(l) = c0(l) + sum_j coef(l, j) x_j.
struct AffineVec {
    Eigen::VectorXd c0;
    Eigen::MatrixXd coef;  // L x N_u

    Eigen::VectorXd at(const Eigen::VectorXd& x) const { return c0 + coef * x; }
};

// Both Jaccard arguments for one constraint, in units of sigma2.
struct PairVectors {
    AffineVec u, v;
};

PairVectors pair_vectors(ConstraintFamily fam, std::size_t g, std::size_t gp, const Eigen::MatrixXd& gamma) {
    const Eigen::Index L = gamma.rows();
    const Eigen::Index U = gamma.cols();
    PairVectors pv;
    pv.u.c0 = Eigen::VectorXd::Ones(L);
    pv.v.c0 = Eigen::VectorXd::Ones(L);
    pv.u.coef = Eigen::MatrixXd::Zero(L, U);
    pv.v.coef = Eigen::MatrixXd::Zero(L, U);
    pv.v.coef.col(ix(gp)) = gamma.col(ix(gp));
    pv.u.coef.col(ix(g)) = gamma.col(ix(g));
    if (fam == ConstraintFamily::collision) pv.u.coef.col(ix(gp)) = gamma.col(ix(gp));
    return pv;
}

// Epigraph value s^2 |u+v|^2 / (u.v) - 3 for one constraint at x.
double inverse_value(const PairVectors& pv, const Eigen::VectorXd& x, double s) {
    const Eigen::VectorXd u = pv.u.at(x);
    const Eigen::VectorXd v = pv.v.at(x);
    return s * s * (u + v).squaredNorm() / u.dot(v) - 3.0;
}

Eigen::MatrixXd normalized_gains(const NetworkTopology& topology, const SpreadingConfig& cfg, double p_scale) {
    if (!(topology.sigma2 > 0.0)) throw DomainError("power control needs a positive noise power");
    return topology.beta * (static_cast<double>(cfg.M()) * p_scale / topology.sigma2);
}

}  // namespace

void PowerAllocation::validate() const {
    for (double v : p)
        if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("powers must be non-negative and finite");
    if (!(p_max >= 0.0)) throw DomainError("p_max must be non-negative");
}

double average_snr(const NetworkTopology& topology, const SpreadingConfig& cfg, std::size_t g, double p_g) {
    const double L = static_cast<double>(topology.n_gateways());
    return static_cast<double>(cfg.M()) * topology.beta.col(ix(g)).sum() * p_g / (L * topology.sigma2);
}

std::vector<double> snr_floor_powers(const NetworkTopology& topology, const SpreadingConfig& cfg, double epsilon) {
    std::vector<double> out(topology.n_devices());
    for (std::size_t g = 0; g < out.size(); ++g) out[g] = epsilon / average_snr(topology, cfg, g, 1.0);
    return out;
}

double jaccard(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw DomainError("jaccard arguments differ in length");
    double uv = 0.0, uu = 0.0, vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        uv += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    const double den = uu + vv - uv;
    if (!(den > 0.0)) throw DomainError("jaccard undefined for two zero vectors");
    return uv / den;
}

std::size_t ExpectedBinPowerVectors::pair_index(std::size_t g, std::size_t gp) const {
    if (!(g < gp && gp < n_devices)) throw DomainError("pair index requires g < g' < N_u");
    // Row-major upper triangle without the diagonal.
    return g * n_devices - g * (g + 1) / 2 + (gp - g - 1);
}

ExpectedBinPowerVectors build_mu_vectors(const NetworkTopology& topology, std::span<const double> p,
                                         const SpreadingConfig& cfg) {
    check_powers(topology, p);
    const std::size_t U = topology.n_devices();
    const double M = static_cast<double>(cfg.M());
    ExpectedBinPowerVectors out;
    out.n_devices = U;
    std::vector<Eigen::VectorXd> signal;
    for (std::size_t g = 0; g < U; ++g) {
        signal.push_back(M * p[g] * topology.beta.col(ix(g)));
        out.mu_single.push_back(signal.back().array() + topology.sigma2);
    }
    for (std::size_t g = 0; g < U; ++g)
        for (std::size_t gp = g + 1; gp < U; ++gp)
            out.mu_pair.push_back((signal[g] + signal[gp]).array() + topology.sigma2);
    return out;
}

double objective_similarity(const NetworkTopology& topology, std::span<const double> p, const SpreadingConfig& cfg) {
    const auto mv = build_mu_vectors(topology, p, cfg);
    const std::size_t U = mv.n_devices;
    double worst = 0.0;
    auto span_of = [](const Eigen::VectorXd& v) { return std::span<const double>(v.data(), static_cast<std::size_t>(v.size())); };
    for (std::size_t g = 0; g < U; ++g) {
        for (std::size_t gp = g + 1; gp < U; ++gp) {
            worst = std::max(worst, jaccard(span_of(mv.mu_single[g]), span_of(mv.mu_single[gp])));
            worst = std::max(worst, jaccard(span_of(mv.mu_pair[mv.pair_index(g, gp)]), span_of(mv.mu_single[gp])));
        }
    }
    return worst;
}

double min_inverse_similarity(const NetworkTopology& topology, std::span<const double> p, const SpreadingConfig& cfg,
                              double alpha) {
    check_powers(topology, p);
    const std::size_t U = topology.n_devices();
    const Eigen::MatrixXd gamma = normalized_gains(topology, cfg, 1.0);
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(p.data(), ix(U));
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < U; ++g) {
        for (std::size_t gp = g + 1; gp < U; ++gp) {
            best = std::min(best, inverse_value(pair_vectors(ConstraintFamily::similarity, g, gp, gamma), x, 1.0));
            best = std::min(best, inverse_value(pair_vectors(ConstraintFamily::collision, g, gp, gamma), x, alpha));
        }
    }
    return best;
}

double quad_over_lin_minorant(double x, double y, double xbar, double ybar) {
    return 2.0 * xbar / ybar * x - (xbar * xbar) / (ybar * ybar) * y;
}

double bilinear_majorant(double x, double y, double xbar, double ybar) {
    const double t = x / xbar + y / ybar;
    return xbar * ybar / 4.0 * t * t;
}

ScaSubproblem build_sca_constraints(std::span<const double> p_prev, double lambda_prev, double alpha,
                                    const NetworkTopology& topology, const SpreadingConfig& cfg, double p_max,
                                    double epsilon) {
    check_powers(topology, p_prev);
    if (!(p_max > 0.0)) throw DomainError("p_max must be positive");
    if (!(lambda_prev > 0.0)) throw DomainError("lambda_prev must be positive");
    if (!(alpha > 0.0)) throw DomainError("alpha must be positive");
    for (double v : p_prev)
        if (!(v > 0.0)) throw DomainError("SCA expansion point needs strictly positive powers");

    const std::size_t U = topology.n_devices();
    ScaSubproblem sp;
    sp.p_scale = p_max;
    sp.lambda_prev = lambda_prev;
    sp.x_prev.resize(ix(U));
    for (std::size_t g = 0; g < U; ++g) sp.x_prev(ix(g)) = p_prev[g] / p_max;
    sp.upper = Eigen::VectorXd::Ones(ix(U));
    sp.lower.resize(ix(U));
    const auto floor = snr_floor_powers(topology, cfg, epsilon);
    for (std::size_t g = 0; g < U; ++g) sp.lower(ix(g)) = std::max(0.0, floor[g] / p_max);

    const Eigen::MatrixXd gamma = normalized_gains(topology, cfg, p_max);
    const Eigen::VectorXd& xb = sp.x_prev;
    const double ybar = lambda_prev + 3.0;

    for (std::size_t g = 0; g < U; ++g) {
        for (std::size_t gp = g + 1; gp < U; ++gp) {
            for (auto fam : {ConstraintFamily::similarity, ConstraintFamily::collision}) {
                const double s2 = fam == ConstraintFamily::collision ? alpha * alpha : 1.0;
                const PairVectors pv = pair_vectors(fam, g, gp, gamma);
                const Eigen::Index L = gamma.rows();

                QuadraticConstraint qc;
                qc.family = fam;
                qc.g = g;
                qc.gp = gp;
                qc.Q = Eigen::MatrixXd::Zero(ix(U), ix(U));
                qc.a = Eigen::VectorXd::Zero(ix(U));
                qc.c = 0.0;

                // Upper side: u.v = sum_l (u0 + ua.x)(v0 + va.x), quadratic part majorized.
                Eigen::MatrixXd A = Eigen::MatrixXd::Zero(ix(U), ix(U));
                for (Eigen::Index l = 0; l < L; ++l) {
                    const Eigen::VectorXd ua = pv.u.coef.row(l).transpose();
                    const Eigen::VectorXd va = pv.v.coef.row(l).transpose();
                    A += ua * va.transpose();
                    qc.a += pv.u.c0(l) * va + pv.v.c0(l) * ua;
                    qc.c += pv.u.c0(l) * pv.v.c0(l);
                }
                const Eigen::MatrixXd S = 0.5 * (A + A.transpose());
                for (std::size_t i = 0; i < U; ++i) {
                    qc.Q(ix(i), ix(i)) += 2.0 * S(ix(i), ix(i));
                    for (std::size_t j = i + 1; j < U; ++j) {
                        const double cij = 2.0 * S(ix(i), ix(j));  // coefficient of x_i x_j
                        if (cij == 0.0) continue;
                        // cij x_i x_j <= cij/4 (xb_j/xb_i x_i^2 + 2 x_i x_j + xb_i/xb_j x_j^2)
                        const double xi = xb(ix(i)), xj = xb(ix(j));
                        qc.Q(ix(i), ix(i)) += cij / 2.0 * (xj / xi);
                        qc.Q(ix(j), ix(j)) += cij / 2.0 * (xi / xj);
                        qc.Q(ix(i), ix(j)) += cij / 2.0;
                        qc.Q(ix(j), ix(i)) += cij / 2.0;
                    }
                }

                // Lower side: s^2 sum_l theta_l^2 / (lambda+3), linearized at (xb, ybar).
                const Eigen::VectorXd theta0 = pv.u.c0 + pv.v.c0;
                const Eigen::MatrixXd theta_coef = pv.u.coef + pv.v.coef;
                const Eigen::VectorXd theta_bar = theta0 + theta_coef * xb;
                double b = 0.0;
                for (Eigen::Index l = 0; l < L; ++l) {
                    const double tb = theta_bar(l);
                    qc.a -= s2 * 2.0 * tb / ybar * theta_coef.row(l).transpose();
                    qc.c -= s2 * 2.0 * tb / ybar * theta0(l);
                    b += s2 * tb * tb / (ybar * ybar);
                }
                qc.c += 3.0 * b;  // y = lambda + 3

                // Scale so the lambda coefficient is one.
                qc.Q /= b;
                qc.a /= b;
                qc.c /= b;
                qc.b = 1.0;
                sp.constraints.push_back(std::move(qc));
            }
        }
    }
    return sp;
}

PowerControlResult run_power_control(const NetworkTopology& topology, const SpreadingConfig& cfg, double p_max,
                                     double epsilon, const PowerControlOptions& options) {
    topology.validate();
    if (!(p_max > 0.0)) throw ConfigError("p_max must be positive");
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
    if (!(options.alpha > 0.0)) throw ConfigError("alpha must be positive");
    const std::size_t U = topology.n_devices();

    PowerControlResult res;
    res.allocation.p_max = p_max;
    res.allocation.epsilon = epsilon;

    for (std::size_t g = 0; g < U; ++g)
        if (average_snr(topology, cfg, g, p_max) < epsilon * (1.0 - 1e-12))
            throw ConfigError("device " + std::to_string(g) + " cannot meet the SNR floor at p_max");

    std::vector<double> p(U, p_max);
    auto record = [&](int it, double lambda) {
        ScaIterate s;
        s.iteration = it;
        s.lambda = lambda;
        s.max_pair_jaccard = U > 1 ? objective_similarity(topology, p, cfg) : 0.0;
        s.min_budget_residual = std::numeric_limits<double>::infinity();
        s.min_snr_residual = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < U; ++g) {
            s.min_budget_residual = std::min({s.min_budget_residual, p[g] / p_max, (p_max - p[g]) / p_max});
            const double margin = average_snr(topology, cfg, g, p[g]) - epsilon;
            s.min_snr_residual = std::min(s.min_snr_residual, epsilon > 0.0 ? margin / epsilon : margin);
        }
        res.state.trace.push_back(s);
    };

    if (U < 2) {
        res.state.p_current = p;
        res.state.converged = true;
        record(0, std::numeric_limits<double>::infinity());
        res.allocation.p = p;
        return res;
    }

    double lambda = min_inverse_similarity(topology, p, cfg, options.alpha);
    record(0, lambda);
    int it = 0;
    for (it = 1; it <= options.max_iter; ++it) {
        const ScaSubproblem sp = build_sca_constraints(p, lambda, options.alpha, topology, cfg, p_max, epsilon);
        const ScaSolution sol = solve_sca_subproblem(sp);
        // The solver's lambda is feasible for the exact constraints at sol.p; the
        // exact epigraph value there is at least as large.
        std::vector<double> p_new = sol.p;
        double lambda_new = min_inverse_similarity(topology, p_new, cfg, options.alpha);
        // Near-parallel bin-power vectors make the surrogate steps tiny; probe
        // further along the same direction, clipped to the box, and keep the
        // exact-lambda winner.
        std::vector<double> probe(U);
        for (double s = 2.0; s <= 1024.0; s *= 2.0) {
            for (std::size_t g = 0; g < U; ++g)
                probe[g] = std::clamp(p[g] + s * (sol.p[g] - p[g]), std::max(sp.lower(ix(g)), 1e-12) * p_max, p_max);
            const double lp = min_inverse_similarity(topology, probe, cfg, options.alpha);
            if (!(lp > lambda_new)) break;
            p_new = probe;
            lambda_new = lp;
        }
        if (!(lambda_new >= lambda)) {
            res.state.converged = true;
            break;
        }
        const double step = lambda_new - lambda;
        p = p_new;
        lambda = lambda_new;
        record(it, lambda);
        if (step < options.tol) {
            res.state.converged = true;
            break;
        }
    }
    res.state.iteration = static_cast<int>(res.state.trace.size()) - 1;
    res.state.p_current = p;
    res.state.lambda_current = lambda;
    res.allocation.p = p;
    return res;
}

void write_trace_csv(std::ostream& os, const SCAState& state) {
    os << "iteration,lambda,max_pair_jaccard,min_budget_residual,min_snr_residual\n";
    for (const auto& s : state.trace)
        os << fmt::format("{},{},{},{},{}\n", s.iteration, s.lambda, s.max_pair_jaccard,
                          s.min_budget_residual, s.min_snr_residual);
}

}  // namespace mulora
