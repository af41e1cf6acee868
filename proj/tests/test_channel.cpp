#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "mulora/channel.hpp"
#include "mulora/errors.hpp"

using namespace mulora;

TEST_CASE("path loss and unit conversions") {
    CHECK(path_loss_db(1.0, 0.0) == doctest::Approx(128.95));
    CHECK(db_to_linear(-path_loss_db(1.0, 0.0)) == doctest::Approx(std::pow(10.0, -12.895)).epsilon(1e-12));
    CHECK(path_loss_db(10.0, 0.0) == doctest::Approx(152.15));
    CHECK(path_loss_db(2.0, 3.5) == doctest::Approx(128.95 + 23.2 * std::log10(2.0) + 3.5));
    CHECK_THROWS_AS(path_loss_db(0.0, 0.0), DomainError);
    CHECK(linear_to_db(db_to_linear(-17.25)) == doctest::Approx(-17.25));
}

TEST_CASE("thermal noise") {
    CHECK(linear_to_db(noise_power(125e3, 6.0)) == doctest::Approx(-174.0 + 10.0 * std::log10(125e3) + 6.0));
    CHECK(linear_to_db(noise_power(125e3, 6.0)) == doctest::Approx(-117.03).epsilon(1e-4));
    CHECK(linear_to_db(noise_power(125e3, 0.0)) == doctest::Approx(-123.03).epsilon(1e-4));
    CHECK(linear_to_db(noise_power(250e3, 6.0)) - linear_to_db(noise_power(125e3, 6.0)) ==
          doctest::Approx(10.0 * std::log10(2.0)));
    CHECK_THROWS_AS(noise_power(0.0, 6.0), DomainError);
}

TEST_CASE("topology generation") {
    TopologyParams p;
    const auto t = generate_topology(p, 42);
    REQUIRE(t.n_gateways() == 3);
    REQUIRE(t.n_devices() == 3);
    CHECK_NOTHROW(t.validate());
    CHECK(t.sigma2 == doctest::Approx(noise_power(125e3, 6.0)));

    for (std::size_t l = 0; l < 3; ++l) {
        const auto& g = t.gw_positions[l];
        CHECK(std::hypot(g.x, g.y) == doctest::Approx(2.0));
        CHECK(g.z == doctest::Approx(0.07));
        CHECK(std::atan2(g.y, g.x) ==
              doctest::Approx(std::remainder(2.0 * std::numbers::pi * l / 3.0, 2.0 * std::numbers::pi)));
    }
    for (std::size_t g = 0; g < 3; ++g) {
        const auto& e = t.ed_positions[g];
        CHECK(std::hypot(e.x, e.y) <= 4.0);
        for (std::size_t h = g + 1; h < 3; ++h)
            CHECK(std::hypot(e.x - t.ed_positions[h].x, e.y - t.ed_positions[h].y) >= 0.5);
        for (const auto& gw : t.gw_positions) CHECK(std::hypot(e.x - gw.x, e.y - gw.y) >= 0.05);
    }

    SUBCASE("determinism") {
        const auto u = generate_topology(p, 42);
        CHECK(u.beta == t.beta);
        const auto v = generate_topology(p, 43);
        CHECK(v.beta != t.beta);
    }

    SUBCASE("no shadowing: beta follows the 3-D distance") {
        TopologyParams q = p;
        q.shadowing_std_db = 0.0;
        const auto s = generate_topology(q, 5);
        for (std::size_t l = 0; l < 3; ++l)
            for (std::size_t g = 0; g < 3; ++g) {
                const auto& gw = s.gw_positions[l];
                const auto& ed = s.ed_positions[g];
                const double d = std::sqrt(std::pow(gw.x - ed.x, 2) + std::pow(gw.y - ed.y, 2) + gw.z * gw.z);
                CHECK(s.beta(l, g) == doctest::Approx(std::pow(10.0, -(128.95 + 23.2 * std::log10(d)) / 10.0)));
            }
    }

    SUBCASE("infeasible density hits the attempt cap") {
        TopologyParams q = p;
        q.n_devices = 200;
        q.max_attempts = 2000;
        CHECK_THROWS_AS(generate_topology(q, 1), GenerationError);
    }

    SUBCASE("serialization round trip") {
        std::stringstream ss;
        write_topology(ss, t);
        const auto back = read_topology(ss);
        CHECK(back.beta == t.beta);
        CHECK(back.sigma2 == t.sigma2);
        CHECK(back.ed_positions.size() == 3);
        CHECK(back.gw_positions[1].x == t.gw_positions[1].x);
        CHECK(back.params.min_ed_ed_distance_m == t.params.min_ed_ed_distance_m);
    }
}

TEST_CASE("channel sampling") {
    Eigen::MatrixXd beta(1, 2);
    beta << 2.5, 0.0;
    const auto topo = NetworkTopology::from_beta(beta, 1.0);

    const auto a = sample_channels(topo, 1000000, 9);
    double re2 = 0, im2 = 0, mean_re = 0;
    for (const auto& h : a.h(0, 0)) {
        re2 += h.real() * h.real();
        im2 += h.imag() * h.imag();
        mean_re += h.real();
    }
    const double n = 1e6;
    CHECK((re2 + im2) / n == doctest::Approx(2.5).epsilon(0.01));
    CHECK(re2 / n == doctest::Approx(1.25).epsilon(0.01));
    CHECK(std::abs(mean_re / n) < 5.0 * std::sqrt(1.25 / n));
    const auto zero = a.h(0, 1);
    CHECK(std::count(zero.begin(), zero.end(), cplx{}) == static_cast<std::ptrdiff_t>(zero.size()));

    const auto b = sample_channels(topo, 16, 9);
    const auto c = sample_channels(topo, 16, 9);
    for (std::size_t i = 0; i < 16; ++i) CHECK(b.h(0, 0)[i] == c.h(0, 0)[i]);
    CHECK_THROWS_AS(sample_channels(topo, 0, 9), DomainError);
}

TEST_CASE("received signal synthesis") {
    const SpreadingConfig cfg{5, 125e3};
    Eigen::MatrixXd beta(1, 2);
    beta << 1.0, 1.0;
    const auto topo = NetworkTopology::from_beta(beta, 0.0);
    ChannelRealization ch(1, 2, 1);
    ch.h(0, 0)[0] = 1.0;
    ch.h(0, 1)[0] = 1.0;

    SUBCASE("single device reproduces its chirp") {
        ChannelRealization one(1, 2, 1);
        one.h(0, 0)[0] = 1.0;
        const std::vector<double> p{1.0, 0.0};
        const std::vector<int> m{7, 0};
        const auto y = synthesize_received(topo, one, p, m, cfg, 1);
        const auto x = generate_chirp(cfg, 7);
        for (std::size_t n = 0; n < 32; ++n) CHECK(y[0][0][n] == x[n]);
    }

    SUBCASE("two devices on one symbol superpose") {
        const std::vector<double> p{1.0, 1.0};
        const std::vector<int> m{3, 3};
        const auto y = synthesize_received(topo, ch, p, m, cfg, 1);
        const auto x = generate_chirp(cfg, 3);
        for (std::size_t n = 0; n < 32; ++n) CHECK(std::abs(y[0][0][n] - 2.0 * x[n]) < 1e-12);
    }

    SUBCASE("power split across identical virtual devices equals the merged device") {
        const std::vector<int> m{11, 11};
        const auto split = synthesize_received(topo, ch, std::vector<double>{0.36, 0.64}, m, cfg, 1);
        ChannelRealization merged(1, 2, 1);
        merged.h(0, 0)[0] = 1.0;
        const auto whole = synthesize_received(topo, merged, std::vector<double>{1.96, 0.0}, m, cfg, 1);
        for (std::size_t n = 0; n < 32; ++n) CHECK(std::abs(split[0][0][n] - whole[0][0][n]) < 1e-12);
    }

    SUBCASE("noise only") {
        Eigen::MatrixXd b1(1, 1);
        b1 << 1.0;
        const auto noisy = NetworkTopology::from_beta(b1, 3.0e-12);
        const auto chn = sample_channels(noisy, 3200, 4);
        const auto y = synthesize_received(noisy, chn, std::vector<double>{0.0}, std::vector<int>{0}, cfg, 8);
        double e = 0;
        std::size_t count = 0;
        for (const auto& ant : y[0])
            for (const auto& v : ant) {
                e += std::norm(v);
                ++count;
            }
        REQUIRE(count >= 100000);
        CHECK(e / count == doctest::Approx(3.0e-12).epsilon(0.02));
    }

    SUBCASE("input validation") {
        CHECK_THROWS_AS(synthesize_received(topo, ch, std::vector<double>{1.0}, std::vector<int>{0, 0}, cfg, 1),
                        DomainError);
        CHECK_THROWS_AS(synthesize_received(topo, ch, std::vector<double>{1.0, -1.0}, std::vector<int>{0, 0}, cfg, 1),
                        DomainError);
        CHECK_THROWS_AS(synthesize_received(topo, ch, std::vector<double>{1.0, 1.0}, std::vector<int>{0, 32}, cfg, 1),
                        DomainError);
    }
}

TEST_CASE("expected active-bin power for one device at one gateway") {
    const SpreadingConfig cfg{5, 125e3};
    Eigen::MatrixXd beta(1, 1);
    beta << 2.0e-13;
    const auto topo = NetworkTopology::from_beta(beta, 1.0e-12);
    const double p = 0.5;
    const int m = 6;
    const std::size_t Nt = 4;
    const int trials = 100000;
    double acc = 0;
    for (int t = 0; t < trials; ++t) {
        const auto ch = sample_channels(topo, Nt, 1000 + t);
        const auto y = synthesize_received(topo, ch, std::vector<double>{p}, std::vector<int>{m}, cfg, 1000 + t);
        const auto bins = received_bin_powers(y, cfg);
        acc += bins.r(0, m) / Nt;
    }
    const double expected = 32.0 * 2.0e-13 * p + 1.0e-12;
    CHECK(acc / trials == doctest::Approx(expected).epsilon(0.01));
}
