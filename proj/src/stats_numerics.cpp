#include "mulora/stats_numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "mulora/channel.hpp"
#include "mulora/css_phy.hpp"
#include "mulora/errors.hpp"

namespace mulora {

double erf(double x) { return std::erf(x); }

double gaussian_tail(double x, double mean, double var) {
    if (!(var > 0.0)) return x < mean ? 1.0 : 0.0;
    return 0.5 * std::erfc((x - mean) / std::sqrt(2.0 * var));
}

namespace {

std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

void check_gamma_args(double u, int shape, double scale) {
    if (!(u >= 0.0)) throw DomainError("chi2_sum_cdf requires u >= 0");
    if (shape < 1) throw DomainError("chi2_sum_cdf requires shape >= 1");
    if (!(scale > 0.0)) throw DomainError("chi2_sum_cdf requires scale > 0");
}

using GK = boost::math::quadrature::gauss_kronrod<double, 31>;

struct Panel {
    double a, b, value, error;
    bool operator<(const Panel& o) const { return error < o.error; }
};

Panel gk_panel(const std::function<double(double)>& f, double a, double b) {
    double err = 0.0;
    const double v = GK::integrate(f, a, b, 0, 0.0, &err);
    // Boost reports the non-adaptive error on the reference interval [-1, 1].
    return {a, b, v, err * 0.5 * (b - a)};
}

}  // namespace

double chi2_sum_cdf(double u, int shape, double scale) {
    check_gamma_args(u, shape, scale);
    return boost::math::gamma_p(static_cast<double>(shape), u / scale);
}

double chi2_sum_sf(double u, int shape, double scale) {
    check_gamma_args(u, shape, scale);
    return boost::math::gamma_q(static_cast<double>(shape), u / scale);
}

double integrate_semi_infinite(const std::function<double(double)>& f, double lower, double tol,
                               GaussianEnvelope envelope) {
    if (!(tol > 0.0)) throw DomainError("quadrature tolerance must be positive");
    if (!(envelope.width > 0.0)) throw DomainError("envelope width must be positive");
    const double span = std::max(10.0, std::sqrt(2.0 * std::log(1.0 / tol))) * envelope.width;
    const double hi = envelope.center + span;
    const double lo = std::max(lower, envelope.center - span);
    if (lo >= hi) return 0.0;

    // Start from panels no wider than one envelope width so the bump is always
    // resolved, then bisect whichever panel carries the largest error.
    const int panels = std::max(1, static_cast<int>(std::ceil((hi - lo) / envelope.width)));
    const double step = (hi - lo) / panels;
    std::priority_queue<Panel> queue;
    double total = 0.0;
    double err_total = 0.0;
    for (int i = 0; i < panels; ++i) {
        const double a = lo + i * step;
        const double b = (i + 1 == panels) ? hi : a + step;
        const Panel p = gk_panel(f, a, b);
        total += p.value;
        err_total += p.error;
        queue.push(p);
    }
    constexpr int kMaxPanels = 4000;
    while (err_total > tol && static_cast<int>(queue.size()) < kMaxPanels) {
        const Panel worst = queue.top();
        queue.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        const Panel left = gk_panel(f, worst.a, mid);
        const Panel right = gk_panel(f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err_total += left.error + right.error - worst.error;
        queue.push(left);
        queue.push(right);
    }
    if (!std::isfinite(total) || err_total > tol)
        throw NumericError("semi-infinite quadrature did not converge (error estimate " + fmt_g(err_total) +
                           ")");
    return total;
}

ScalarMinimum golden_section_min(const std::function<double(double)>& f, double lo, double hi, double tol) {
    if (!(lo < hi)) throw DomainError("golden section requires lo < hi");
    if (!(tol > 0.0)) throw DomainError("golden section requires tol > 0");
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;

    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    int evals = 2;
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        ++evals;
    }
    return fc <= fd ? ScalarMinimum{c, fc, evals} : ScalarMinimum{d, fd, evals};
}

void ActiveBinStats::validate() const {
    if (L == 0 || n_antennas == 0 || M == 0) throw DomainError("active-bin stats need L, N_t, M >= 1");
    if (mu.size() != sigma2_g.size() || mu.empty()) throw DomainError("active-bin stats size mismatch");
    for (std::size_t g = 0; g < mu.size(); ++g) {
        if (!(mu[g] >= noise) || !(sigma2_g[g] > 0.0)) throw DomainError("active-bin stats out of range");
    }
}

ActiveBinStats make_active_bin_stats(const NetworkTopology& topology, std::span<const double> powers,
                                     const SpreadingConfig& cfg, std::size_t n_antennas) {
    const std::size_t L = topology.n_gateways();
    const std::size_t U = topology.n_devices();
    if (powers.size() != U) throw DomainError("power vector length does not match device count");
    ActiveBinStats s;
    s.L = L;
    s.n_antennas = n_antennas;
    s.M = cfg.M();
    s.noise = topology.sigma2;
    s.mu.assign(U, 0.0);
    s.sigma2_g.assign(U, 0.0);
    const double Md = static_cast<double>(s.M);
    for (std::size_t g = 0; g < U; ++g) {
        for (std::size_t l = 0; l < L; ++l) {
            const double rho = Md * topology.beta(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(g)) *
                                   powers[g] +
                               topology.sigma2;
            s.mu[g] += rho;
            s.sigma2_g[g] += rho * rho;
        }
        s.mu[g] /= static_cast<double>(L);
        s.sigma2_g[g] /= static_cast<double>(L);
    }
    return s;
}

}  // namespace mulora
