// Stage-1 threshold calibration: the identification-error upper bound and its
// minimization.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mulora/detector.hpp"
#include "mulora/errors.hpp"

namespace mulora {

namespace {

constexpr double kQuadTol = 1e-11;

struct FusedStats {
    std::vector<double> mean;  // L mu_g
    std::vector<double> var;   // L sigma2_g / N_t
    int inactive_shape = 0;    // N_t L
    double inactive_scale = 0.0;  // sigma2 / N_t
    std::size_t M = 0;
};

FusedStats fuse(const ActiveBinStats& s) {
    s.validate();
    FusedStats f;
    const double L = static_cast<double>(s.L);
    const double nt = static_cast<double>(s.n_antennas);
    for (std::size_t g = 0; g < s.n_devices(); ++g) {
        f.mean.push_back(L * s.mu[g]);
        f.var.push_back(L * s.sigma2_g[g] / nt);
    }
    f.inactive_shape = static_cast<int>(s.n_antennas * s.L);
    f.inactive_scale = s.noise / nt;
    f.M = s.M;
    return f;
}

// P(all `count` inactive bins below u).
double inactive_all_below(const FusedStats& f, double u, std::size_t count) {
    if (u <= 0.0) return 0.0;
    const double q = chi2_sum_sf(u, f.inactive_shape, f.inactive_scale);
    if (q >= 1.0) return 0.0;
    return std::exp(static_cast<double>(count) * std::log1p(-q));
}

}  // namespace

double prob_correct_distinct(double p_th, const ActiveBinStats& stats) {
    const FusedStats f = fuse(stats);
    const std::size_t U = f.mean.size();
    if (U > f.M) throw DomainError("more devices than bins");
    const std::size_t n_inactive = f.M - U;

    double total = 0.0;
    for (std::size_t g = 0; g < U; ++g) {
        const double sd = std::sqrt(f.var[g]);
        const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * f.var[g]);
        auto integrand = [&](double u) {
            const double z = (u - f.mean[g]) / sd;
            double v = norm * std::exp(-0.5 * z * z);
            if (v == 0.0) return 0.0;
            for (std::size_t q = 0; q < U; ++q)
                if (q != g) v *= gaussian_tail(u, f.mean[q], f.var[q]);
            if (v == 0.0) return 0.0;
            return v * inactive_all_below(f, u, n_inactive);
        };
        total += integrate_semi_infinite(integrand, p_th, kQuadTol, {f.mean[g], sd});
    }
    return std::clamp(total, 0.0, 1.0);
}

double prob_correct_shared_lb(double p_th, const ActiveBinStats& stats, int i) {
    const FusedStats f = fuse(stats);
    const auto U = static_cast<int>(f.mean.size());
    if (i < 1 || i > U) throw DomainError("support size out of range");
    // The i devices with the smallest mu_g.
    std::vector<std::size_t> order(f.mean.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return f.mean[a] < f.mean[b]; });

    double p = inactive_all_below(f, p_th, f.M - static_cast<std::size_t>(i));
    for (int j = 0; j < i && p > 0.0; ++j) {
        const std::size_t g = order[static_cast<std::size_t>(j)];
        p *= gaussian_tail(p_th, f.mean[g], f.var[g]);
    }
    return p;
}

double error_upper_bound(double p_th, const ActiveBinStats& stats) {
    if (!(p_th > 0.0)) throw DomainError("threshold must be positive");
    const auto U = static_cast<int>(stats.n_devices());
    double correct = prob_correct_distinct(p_th, stats) * prob_support_size(stats.M, U, U);
    for (int i = 1; i < U; ++i) correct += prob_correct_shared_lb(p_th, stats, i) * prob_support_size(stats.M, U, i);
    return std::clamp(1.0 - correct, 0.0, 1.0);
}

std::pair<double, double> threshold_bracket(const ActiveBinStats& stats) {
    stats.validate();
    const double L = static_cast<double>(stats.L);
    const double nt = static_cast<double>(stats.n_antennas);
    const double lo = L * stats.noise;
    double hi = lo;
    bool any_signal = false;
    for (std::size_t g = 0; g < stats.n_devices(); ++g) {
        if (stats.mu[g] > stats.noise * (1.0 + 1e-12)) any_signal = true;
        hi = std::max(hi, L * stats.mu[g] + 10.0 * std::sqrt(L * stats.sigma2_g[g] / nt));
    }
    if (!any_signal || !(hi > lo)) throw DomainError("no active-bin signal above noise; threshold undefined");
    return {lo, hi};
}

ThresholdCalibration calibrate_threshold(const ActiveBinStats& stats) {
    const auto [lo, hi] = threshold_bracket(stats);
    auto f = [&](double x) { return error_upper_bound(x, stats); };
    const ScalarMinimum gs = golden_section_min(f, lo, hi, (hi - lo) * 1e-6);

    ThresholdCalibration cal;
    cal.stats = stats;
    cal.p_th = gs.x;
    cal.p_error_ub = gs.fx;

    // Unimodality is assumed, not guaranteed: cross-check with a coarse grid and
    // fall back to a grid-seeded local search when it finds a clearly lower value.
    constexpr int kCoarse = 64;
    double best_x = gs.x, best_f = gs.fx;
    const double step = (hi - lo) / kCoarse;
    for (int i = 1; i < kCoarse; ++i) {
        const double x = lo + i * step;
        const double v = f(x);
        if (v < best_f - 1e-9) {
            best_f = v;
            best_x = x;
        }
    }
    if (best_x != gs.x) {
        const ScalarMinimum local = golden_section_min(f, std::max(lo, best_x - step), std::min(hi, best_x + step),
                                                       step * 1e-6);
        cal.grid_fallback = true;
        if (local.fx <= best_f) {
            cal.p_th = local.x;
            cal.p_error_ub = local.fx;
        } else {
            cal.p_th = best_x;
            cal.p_error_ub = best_f;
        }
    }
    return cal;
}

std::vector<BoundPoint> bound_curve(const ActiveBinStats& stats, std::size_t n_points) {
    if (n_points < 2) throw DomainError("bound curve needs at least two points");
    const auto [lo, hi] = threshold_bracket(stats);
    std::vector<BoundPoint> out;
    out.reserve(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
        // Skip the bracket's lower end: the bound is defined for p_th > L sigma2.
        const double x = lo + (hi - lo) * static_cast<double>(i + 1) / static_cast<double>(n_points);
        out.push_back({x, error_upper_bound(x, stats)});
    }
    return out;
}

}  // namespace mulora
