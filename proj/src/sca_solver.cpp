// Interior-point solver for one convexified power-control instance:
//   maximize lambda  s.t.  f_i(x, lambda) <= 0,  lower <= x <= upper,
// with every f_i convex quadratic in x and affine in lambda.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mulora/errors.hpp"
#include "mulora/power_control.hpp"

namespace mulora {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class BarrierProblem {
public:
    explicit BarrierProblem(const ScaSubproblem& sp) : sp_(sp), n_(sp.x_prev.size()) {
        for (Eigen::Index i = 0; i < n_; ++i) {
            if (sp.lower(i) > sp.upper(i) + 1e-15)
                throw OptimizationError("infeasible box: SNR floor above power budget for device " + std::to_string(i));
            if (sp.upper(i) - sp.lower(i) > 1e-14 * std::max(1.0, std::abs(sp.upper(i)))) free_.push_back(i);
        }
    }

    Eigen::Index n() const { return n_; }
    const std::vector<Eigen::Index>& free_vars() const { return free_; }

    Eigen::VectorXd interior_start() const {
        Eigen::VectorXd x = sp_.x_prev;
        for (Eigen::Index i = 0; i < n_; ++i) {
            const double lo = sp_.lower(i), hi = sp_.upper(i);
            if (hi - lo <= 1e-14 * std::max(1.0, std::abs(hi))) {
                x(i) = 0.5 * (lo + hi);
                continue;
            }
            const double margin = 1e-3 * (hi - lo);
            x(i) = std::clamp(x(i), lo + margin, hi - margin);
        }
        return x;
    }

    double lambda_cap(const Eigen::VectorXd& x) const {
        double cap = kInf;
        for (const auto& c : sp_.constraints) cap = std::min(cap, c.lambda_cap(x));
        return cap;
    }

    // Barrier objective t*(-lambda) - sum log(-f) - sum log(box slack); +inf outside.
    double phi(const Eigen::VectorXd& x, double lambda, double t) const {
        double v = -t * lambda;
        for (const auto& c : sp_.constraints) {
            const double f = c.value(x, lambda);
            if (!(f < 0.0)) return kInf;
            v -= std::log(-f);
        }
        for (auto i : free_) {
            const double s1 = x(i) - sp_.lower(i), s2 = sp_.upper(i) - x(i);
            if (!(s1 > 0.0) || !(s2 > 0.0)) return kInf;
            v -= std::log(s1) + std::log(s2);
        }
        return v;
    }

    // Gradient and Hessian over the reduced variables (free x's, then lambda).
    void derivatives(const Eigen::VectorXd& x, double lambda, double t, Eigen::VectorXd& grad,
                     Eigen::MatrixXd& hess) const {
        const auto m = static_cast<Eigen::Index>(free_.size());
        grad = Eigen::VectorXd::Zero(m + 1);
        hess = Eigen::MatrixXd::Zero(m + 1, m + 1);
        grad(m) = -t;
        Eigen::VectorXd d(m + 1);
        for (const auto& c : sp_.constraints) {
            const double f = c.value(x, lambda);
            const Eigen::VectorXd gx = c.Q * x + c.a;
            for (Eigen::Index j = 0; j < m; ++j) d(j) = gx(free_[static_cast<std::size_t>(j)]);
            d(m) = c.b;
            grad += d / (-f);
            hess += d * d.transpose() / (f * f);
            for (Eigen::Index j = 0; j < m; ++j)
                for (Eigen::Index k = 0; k < m; ++k)
                    hess(j, k) += c.Q(free_[static_cast<std::size_t>(j)], free_[static_cast<std::size_t>(k)]) / (-f);
        }
        for (Eigen::Index j = 0; j < m; ++j) {
            const auto i = free_[static_cast<std::size_t>(j)];
            const double s1 = x(i) - sp_.lower(i), s2 = sp_.upper(i) - x(i);
            grad(j) += -1.0 / s1 + 1.0 / s2;
            hess(j, j) += 1.0 / (s1 * s1) + 1.0 / (s2 * s2);
        }
    }

    std::size_t barrier_terms() const { return sp_.constraints.size() + 2 * free_.size(); }

private:
    const ScaSubproblem& sp_;
    Eigen::Index n_;
    std::vector<Eigen::Index> free_;
};

}  // namespace

ScaSolution solve_sca_subproblem(const ScaSubproblem& sp) {
    if (sp.constraints.empty()) throw OptimizationError("subproblem has no similarity constraints");
    const BarrierProblem bp(sp);
    const auto& free = bp.free_vars();
    const auto m = static_cast<Eigen::Index>(free.size());

    Eigen::VectorXd x = bp.interior_start();
    const double cap0 = bp.lambda_cap(x);
    if (!std::isfinite(cap0)) throw OptimizationError("similarity constraints unbounded at start point");
    double lambda = cap0 - std::max(1e-3, 1e-3 * std::abs(cap0));

    ScaSolution sol;
    const double n_terms = static_cast<double>(bp.barrier_terms());
    double t = 1.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
    for (int outer = 0; outer < 60; ++outer) {
        for (int inner = 0; inner < 200; ++inner) {
            bp.derivatives(x, lambda, t, grad, hess);
            const Eigen::VectorXd step = -hess.ldlt().solve(grad);
            const double decrement = -grad.dot(step);
            if (!std::isfinite(decrement)) throw OptimizationError("Newton system became singular");
            if (decrement / 2.0 < 1e-12) break;

            const double phi0 = bp.phi(x, lambda, t);
            double s = 1.0;
            Eigen::VectorXd x_try = x;
            double l_try = lambda;
            bool accepted = false;
            for (int ls = 0; ls < 80; ++ls) {
                x_try = x;
                for (Eigen::Index j = 0; j < m; ++j) x_try(free[static_cast<std::size_t>(j)]) += s * step(j);
                l_try = lambda + s * step(m);
                if (bp.phi(x_try, l_try, t) <= phi0 - 0.25 * s * decrement) {
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            ++sol.newton_steps;
            if (!accepted) break;
            x = x_try;
            lambda = l_try;
        }
        // Duality gap of the centered point is n_terms / t.
        if (n_terms / t < 1e-11 * std::max(1.0, std::abs(lambda))) break;
        t *= 8.0;
    }

    // The best lambda admitted at the final x is at least the barrier iterate's.
    lambda = std::max(lambda, bp.lambda_cap(x));
    sol.lambda = lambda;
    sol.p.resize(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i)
        sol.p[static_cast<std::size_t>(i)] = std::clamp(x(i), sp.lower(i), sp.upper(i)) * sp.p_scale;
    return sol;
}

}  // namespace mulora
