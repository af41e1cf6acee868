#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mulora/channel.hpp"
#include "mulora/detector.hpp"
#include "mulora/errors.hpp"

using namespace mulora;

namespace {

BinPowerTensor draw_bins(const NetworkTopology& topo, const std::vector<double>& p, const std::vector<int>& m,
                         const SpreadingConfig& cfg, std::size_t nt, std::uint64_t seed) {
    const auto ch = sample_channels(topo, nt, seed);
    return received_bin_powers(synthesize_received(topo, ch, p, m, cfg, seed + 7), cfg);
}

// Gamma(N_t, rho) log-density without the (N_t - 1)! constant, written out longhand.
double loglik_oracle(const std::vector<int>& m, const BinPowerTensor& bins, const Eigen::MatrixXd& beta,
                     const std::vector<double>& p, double sigma2) {
    const double M = static_cast<double>(bins.M()), nt = static_cast<double>(bins.n_antennas());
    double s = 0.0;
    for (std::size_t l = 0; l < bins.n_gateways(); ++l)
        for (std::size_t k = 0; k < bins.M(); ++k) {
            double rho = sigma2;
            for (std::size_t g = 0; g < m.size(); ++g)
                if (m[g] == static_cast<int>(k)) rho += M * beta(l, g) * p[g];
            const double r = bins.r(l, k);
            s += (nt - 1.0) * std::log(r) - nt * std::log(rho) - r / rho;
        }
    return s;
}

Eigen::MatrixXd three_by_two() {
    Eigen::MatrixXd beta(3, 2);
    beta << 1.0e-13, 3.0e-13, 2.5e-13, 0.8e-13, 0.6e-13, 1.7e-13;
    return beta;
}

}  // namespace

TEST_CASE("rho and the likelihood") {
    const SpreadingConfig cfg{5, 125e3};
    const auto beta = three_by_two();
    const double sigma2 = 2.0e-12;
    const auto topo = NetworkTopology::from_beta(beta, sigma2);
    const std::vector<double> p{1.0, 0.5};
    const auto model = make_link_model(topo, p, cfg, 4);

    const CandidateTuple same{{6, 6}}, apart{{6, 20}};
    const auto r1 = rho(same, model);
    CHECK(r1(1, 6) == doctest::Approx(32.0 * (2.5e-13 * 1.0 + 0.8e-13 * 0.5) + sigma2));
    CHECK(r1(1, 7) == sigma2);
    const auto r2 = rho(apart, topo, p, cfg);
    CHECK(r2(2, 20) == doctest::Approx(32.0 * 1.7e-13 * 0.5 + sigma2));
    CHECK(r2(0, 6) == doctest::Approx(32.0 * 1.0e-13 + sigma2));

    const auto bins = draw_bins(topo, p, {6, 20}, cfg, 4, 77);
    for (const auto& t : {same, apart, CandidateTuple{{0, 31}}})
        CHECK(loglik(t, bins, model) == doctest::Approx(loglik_oracle(t.m, bins, beta, p, sigma2)).epsilon(1e-12));

    // Restricting to the bins either tuple touches preserves the difference.
    const std::vector<int> touched{6, 20};
    const double full = loglik(same, bins, model) - loglik(apart, bins, model);
    const double part = loglik(same, bins, model, touched) - loglik(apart, bins, model, touched);
    CHECK(part == doctest::Approx(full).epsilon(1e-10));

    CHECK_THROWS_AS(loglik(CandidateTuple{{6}}, bins, model), DomainError);
    CHECK_THROWS_AS(loglik(CandidateTuple{{6, 32}}, bins, model), DomainError);
    CHECK(same.active_support() == std::vector<int>{6});
}

TEST_CASE("ML detection matches exhaustive scoring") {
    const SpreadingConfig cfg{5, 125e3};
    const auto beta = three_by_two();
    const double sigma2 = 2.0e-12;
    const auto topo = NetworkTopology::from_beta(beta, sigma2);
    // Low enough SNR that errors happen, so the comparison is not trivially the truth.
    const std::vector<double> p{0.06, 0.05};
    const auto model = make_link_model(topo, p, cfg, 4);
    int wrong = 0;
    for (std::uint64_t t = 0; t < 40; ++t) {
        const std::vector<int> truth{static_cast<int>(t % 32), static_cast<int>((7 * t + 3) % 32)};
        const auto bins = draw_bins(topo, p, truth, cfg, 4, 500 + t);
        std::vector<int> best;
        double best_v = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < 32; ++a)
            for (int b = 0; b < 32; ++b) {
                const double v = loglik_oracle({a, b}, bins, beta, p, sigma2);
                if (v > best_v) {
                    best_v = v;
                    best = {a, b};
                }
            }
        const auto res = ml_detect(bins, model);
        CHECK(res.m_hat.m == best);
        CHECK(res.loglik == doctest::Approx(best_v).epsilon(1e-10));
        if (best != truth) ++wrong;
    }
    CHECK(wrong > 0);
}

TEST_CASE("ML recovers the transmitted tuple without appreciable noise") {
    const SpreadingConfig cfg{5, 125e3};
    const auto topo = NetworkTopology::from_beta(three_by_two(), 1e-18);
    const std::vector<double> p{1.0, 1.0};
    const auto model = make_link_model(topo, p, cfg, 2);
    for (const std::vector<int>& truth : {std::vector<int>{4, 17}, std::vector<int>{9, 9}, std::vector<int>{31, 0}}) {
        const auto bins = draw_bins(topo, p, truth, cfg, 2, 3);
        CHECK(ml_detect(bins, model).m_hat.m == truth);
    }
}

TEST_CASE("single-device ML equals the weighted max-bin detector") {
    const SpreadingConfig cfg{5, 125e3};
    Eigen::MatrixXd beta(3, 1);
    beta << 1.0e-13, 0.4e-13, 2.0e-13;
    const auto topo = NetworkTopology::from_beta(beta, 2.0e-12);
    const std::vector<double> p{0.03};
    const auto model = make_link_model(topo, p, cfg, 2);
    int disagree = 0, errors = 0;
    for (std::uint64_t t = 0; t < 10000; ++t) {
        const int m = static_cast<int>(t % 32);
        const auto bins = draw_bins(topo, p, {m}, cfg, 2, 9000 + t);
        const int a = ml_detect(bins, model).m_hat.m[0];
        if (a != max_bin_detect(bins, model)) ++disagree;
        if (a != m) ++errors;
    }
    CHECK(disagree == 0);
    CHECK(errors > 0);
}

TEST_CASE("ML enumeration budget") {
    BinPowerTensor bins(1, 1, 1024);
    LinkModel model;
    model.M = 1024;
    model.n_antennas = 1;
    model.sigma2 = 1.0;
    model.gain = Eigen::MatrixXd::Ones(1, 3);
    CHECK_THROWS_AS(ml_detect(bins, model), CapabilityError);
    CHECK_THROWS_AS(ml_detect(bins, model, 1000), CapabilityError);
}

TEST_CASE("support-size combinatorics") {
    CHECK(binomial(10, 3) == 120);
    CHECK(binomial(64, 32) == 1832624140942590534ULL);
    CHECK(binomial(3, 5) == 0);

    const std::uint64_t c5[] = {1, 30, 150, 240, 120};
    for (int i = 1; i <= 5; ++i) CHECK(count_tuples(5, i) == c5[i - 1]);
    CHECK(count_tuples(2, 1) == 1);
    CHECK(count_tuples(2, 2) == 2);
    CHECK_THROWS_AS(count_tuples(3, 4), DomainError);

    // Brute force over all 8^3 tuples.
    int by_size[4] = {0, 0, 0, 0};
    for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b)
            for (int c = 0; c < 8; ++c) ++by_size[std::set<int>{a, b, c}.size()];
    for (int i = 1; i <= 3; ++i) {
        CHECK(static_cast<std::uint64_t>(by_size[i]) == count_tuples(3, i) * binomial(8, i));
        CHECK(prob_support_size(8, 3, i) == doctest::Approx(by_size[i] / 512.0).epsilon(1e-14));
    }

    CHECK(prob_support_size(2, 2, 2) == doctest::Approx(0.5));
    CHECK(prob_support_size(128, 2, 2) == doctest::Approx(127.0 / 128.0).epsilon(1e-15));
    CHECK(prob_support_size(128, 2, 1) == doctest::Approx(1.0 / 128.0).epsilon(1e-15));
    for (int n_u : {1, 3, 5}) {
        double s = 0.0;
        for (int i = 1; i <= n_u; ++i) s += prob_support_size(128, n_u, i);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK_THROWS_AS(prob_support_size(2, 3, 1), DomainError);
}

TEST_CASE("stage-1 identification") {
    BinPowerTensor bins(2, 1, 8);
    const double up[8] = {0.1, 5.0, 0.2, 3.0, 9.0, 0.3, 4.0, 0.1};
    for (std::size_t k = 0; k < 8; ++k) {
        bins.r(0, k) = up[k];
        bins.r(1, k) = up[k];
    }
    bins.fuse();
    // upsilon = 2 * up with one antenna.
    std::size_t exceed = 0;
    CHECK(stage1_identify(bins, 5.0, 3, &exceed) == std::vector<int>{1, 4, 6});
    CHECK(exceed == 4);
    CHECK(stage1_identify(bins, 5.0, 4) == std::vector<int>{1, 3, 4, 6});
    CHECK(exceed == 4);
    CHECK(stage1_identify(bins, 9.5, 3, &exceed) == std::vector<int>{1, 4});
    CHECK(stage1_identify(bins, 100.0, 3, &exceed) == std::vector<int>{4});
    CHECK(exceed == 0);
    CHECK(stage1_identify(bins, 1.0, 1) == std::vector<int>{4});
    CHECK_THROWS_AS(stage1_identify(bins, 0.0, 1), DomainError);
}

TEST_CASE("candidate enumeration") {
    const std::vector<int> two{9, 3};
    const auto s = enumerate_candidates(two, 3, true);
    const auto all = enumerate_candidates(two, 3, false);
    CHECK(s.size() == 6);
    CHECK(all.size() == 8);
    CHECK(std::is_sorted(all.begin(), all.end()));
    CHECK(all.front().m == std::vector<int>{3, 3, 3});
    CHECK(all.back().m == std::vector<int>{9, 9, 9});
    for (const auto& c : s) CHECK(c.active_support() == std::vector<int>{3, 9});

    const std::vector<int> one{5};
    CHECK(enumerate_candidates(one, 4).size() == 1);
    const std::vector<int> three{1, 2, 3};
    CHECK(enumerate_candidates(three, 3).size() == 6);
    CHECK(enumerate_candidates(three, 3, false).size() == 27);
    CHECK_THROWS_AS(enumerate_candidates(three, 2), DomainError);
}

TEST_CASE("threshold bound and calibration") {
    TopologyParams tp;
    const auto topo = generate_topology(tp, 19);
    const SpreadingConfig cfg{7, 125e3};
    // Reference SNR of -18 dB for every device on its best gateway.
    std::vector<double> p(topo.n_devices());
    for (std::size_t g = 0; g < p.size(); ++g) p[g] = db_to_linear(-18.0) * topo.sigma2 / topo.beta.col(g).maxCoeff();
    const auto stats = make_active_bin_stats(topo, p, cfg, 30);
    const auto [lo, hi] = threshold_bracket(stats);
    CHECK(lo == doctest::Approx(3.0 * topo.sigma2));

    CHECK(error_upper_bound(hi * 10.0, stats) == doctest::Approx(1.0).epsilon(1e-9));

    const auto cal = calibrate_threshold(stats);
    CHECK(cal.p_th > lo);
    CHECK(cal.p_th < hi);
    CHECK(cal.p_error_ub < 0.5);
    CHECK(cal.p_error_ub <= error_upper_bound(lo * (1.0 + 1e-9), stats));

    const int n = 2000;
    double grid_best = 2.0, grid_x = 0.0;
    for (int i = 1; i < n; ++i) {
        const double x = lo + (hi - lo) * i / n;
        const double v = error_upper_bound(x, stats);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        if (v < grid_best) {
            grid_best = v;
            grid_x = x;
        }
    }
    CHECK(cal.p_error_ub <= grid_best + 1e-9);
    CHECK(std::abs(cal.p_th - grid_x) <= (hi - lo) / n);

    const auto curve = bound_curve(stats, 50);
    CHECK(curve.size() == 50);
    CHECK(curve.back().p_th == doctest::Approx(hi));
    CHECK(curve.front().p_th > lo);

    ActiveBinStats quiet = stats;
    for (std::size_t g = 0; g < quiet.n_devices(); ++g) {
        quiet.mu[g] = quiet.noise;
        quiet.sigma2_g[g] = quiet.noise * quiet.noise;
    }
    CHECK_THROWS_AS(calibrate_threshold(quiet), DomainError);
}

TEST_CASE("two-stage detection tracks ML at moderate SNR") {
    const SpreadingConfig cfg{5, 125e3};
    const auto beta = three_by_two();
    const double sigma2 = 2.0e-12;
    const auto topo = NetworkTopology::from_beta(beta, sigma2);
    const std::vector<double> p{2.0, 1.6};
    const std::size_t nt = 8;
    const auto model = make_link_model(topo, p, cfg, nt);
    const auto cal = calibrate_threshold(make_active_bin_stats(topo, p, cfg, nt));
    int agree = 0, correct = 0, ml_correct = 0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        const std::vector<int> truth{t % 32, (t * 5 + 1) % 32};
        const auto bins = draw_bins(topo, p, truth, cfg, nt, 40000 + static_cast<std::uint64_t>(t));
        const auto two = two_stage_detect(bins, model, cal);
        const auto ml = ml_detect(bins, model);
        CHECK(two.active_bins.size() <= 2);
        agree += two.m_hat == ml.m_hat;
        correct += two.m_hat.m == truth;
        ml_correct += ml.m_hat.m == truth;
        // Surjective candidates use every identified bin.
        CHECK(two.m_hat.active_support().size() == two.active_bins.size());
    }
    CHECK(ml_correct >= trials * 98 / 100);
    CHECK(agree >= trials * 98 / 100);
    CHECK(correct >= trials * 98 / 100);
}
