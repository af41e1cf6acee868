#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mulora/css_phy.hpp"
#include "mulora/errors.hpp"

using namespace mulora;

namespace {

// Reference chirp straight from the closed form, evaluated with plain doubles.
ComplexVec naive_chirp(std::size_t M, int m) {
    ComplexVec x(M);
    for (std::size_t n = 0; n < M; ++n) {
        const double t = static_cast<double>(n) + m;
        const double ph = 2.0 * std::numbers::pi * (t * t / (2.0 * M) - t / 2.0);
        x[n] = {std::cos(ph), std::sin(ph)};
    }
    return x;
}

// O(M^2) unitary DFT.
ComplexVec naive_dft(const ComplexVec& z) {
    const std::size_t M = z.size();
    ComplexVec Z(M);
    for (std::size_t k = 0; k < M; ++k) {
        cplx acc{};
        for (std::size_t n = 0; n < M; ++n) {
            const double ph = -2.0 * std::numbers::pi * static_cast<double>((n * k) % M) / M;
            acc += z[n] * cplx{std::cos(ph), std::sin(ph)};
        }
        Z[k] = acc / std::sqrt(static_cast<double>(M));
    }
    return Z;
}

cplx inner(const ComplexVec& a, const ComplexVec& b) {
    cplx s{};
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * std::conj(b[i]);
    return s;
}

}  // namespace

TEST_CASE("spreading config") {
    SpreadingConfig c{7, 125e3};
    CHECK(c.M() == 128);
    CHECK_NOTHROW(c.validate());
    CHECK_THROWS_AS((SpreadingConfig{4, 125e3}.validate()), DomainError);
    CHECK_THROWS_AS((SpreadingConfig{13, 125e3}.validate()), DomainError);
    CHECK_THROWS_AS((SpreadingConfig{7, 0.0}.validate()), DomainError);
}

TEST_CASE("chirp generation") {
    const SpreadingConfig c7{7, 125e3}, c5{5, 125e3};
    const auto x0 = generate_chirp(c7, 0);
    CHECK(x0[0] == cplx{1.0, 0.0});

    for (int m : {0, 3, 17, 31}) {
        const auto x = generate_chirp(c5, m);
        const auto ref = naive_chirp(32, m);
        for (std::size_t n = 0; n < 32; ++n) CHECK(std::abs(x[n] - ref[n]) < 1e-12);
    }

    // Cyclic shift of the base chirp.
    const auto base = generate_chirp(c5, 0);
    const auto x5 = generate_chirp(c5, 5);
    for (std::size_t n = 0; n < 32; ++n) CHECK(std::abs(x5[n] - base[(n + 5) % 32]) < 1e-12);

    CHECK(std::abs(inner(generate_chirp(c5, 3), generate_chirp(c5, 3)) - cplx{32.0, 0.0}) < 1e-12);
    CHECK(std::abs(inner(generate_chirp(c5, 3), generate_chirp(c5, 7))) < 1e-9);

    CHECK_THROWS_AS(generate_chirp(c5, 32), DomainError);
    CHECK_THROWS_AS(generate_chirp(c5, -1), DomainError);
}

TEST_CASE("dechirp") {
    const SpreadingConfig c5{5, 125e3};
    const auto ones = dechirp(generate_chirp(c5, 0), c5);
    for (const auto& v : ones) CHECK(std::abs(v - cplx{1.0, 0.0}) < 1e-12);

    const auto tone = dechirp(generate_chirp(c5, 5), c5);
    const double step = 2.0 * std::numbers::pi * 5.0 / 32.0;
    for (std::size_t n = 0; n < 32; ++n) {
        CHECK(std::abs(tone[n]) == doctest::Approx(1.0));
        if (n > 0) {
            const double d = std::arg(tone[n] / tone[n - 1]);
            CHECK(std::remainder(d - step, 2.0 * std::numbers::pi) == doctest::Approx(0.0).epsilon(1e-12));
        }
    }

    const ComplexVec zeros(32);
    for (const auto& v : dechirp(zeros, c5)) CHECK(v == cplx{});

    CHECK_THROWS_AS(dechirp(ComplexVec(31), c5), DomainError);
    ChirpFrame f;
    f.samples = generate_chirp(c5, 9);
    CHECK(dechirp(f, c5) == dechirp(f.samples, c5));
}

TEST_CASE("unitary DFT matches direct summation and preserves energy") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    for (std::size_t M : {32u, 128u, 512u}) {
        ComplexVec z(M);
        for (auto& v : z) v = {nd(rng), nd(rng)};
        const auto Z = unitary_dft(z);
        const auto ref = naive_dft(z);
        double e_time = 0, e_freq = 0;
        for (std::size_t k = 0; k < M; ++k) {
            CHECK(std::abs(Z[k] - ref[k]) < 1e-9);
            e_time += std::norm(z[k]);
            e_freq += std::norm(Z[k]);
        }
        CHECK(std::abs(e_freq - e_time) <= 1e-9 * e_time);
    }
}

TEST_CASE("bin powers") {
    const SpreadingConfig c5{5, 125e3};
    const std::size_t M = 32;

    SUBCASE("single device concentrates on its bin") {
        const int m = 13;
        ArraySamples dech{{dechirp(generate_chirp(c5, m), c5)}};
        const auto bp = bin_powers(dech, c5);
        const auto ref = naive_dft(dech[0][0]);
        for (std::size_t k = 0; k < M; ++k) {
            CHECK(bp.r(0, k) == doctest::Approx(std::norm(ref[k])).epsilon(1e-9).scale(1.0));
            if (k != static_cast<std::size_t>(m)) CHECK(bp.r(0, k) < 1e-9);
        }
        CHECK(bp.r(0, m) == doctest::Approx(32.0).epsilon(1e-12));
        CHECK(bp.upsilon()[m] == doctest::Approx(32.0).epsilon(1e-12));
    }

    SUBCASE("two devices on the same symbol add coherently") {
        ComplexVec y = generate_chirp(c5, 4);
        for (auto& v : y) v *= 2.0;
        ArraySamples raw{{y}};
        const auto bp = received_bin_powers(raw, c5);
        CHECK(bp.r(0, 4) == doctest::Approx(4.0 * 32.0).epsilon(1e-12));
    }

    SUBCASE("all-zero input") {
        ArraySamples raw(2, std::vector<ComplexVec>(3, ComplexVec(M)));
        const auto bp = received_bin_powers(raw, c5);
        for (std::size_t l = 0; l < 2; ++l)
            for (std::size_t k = 0; k < M; ++k) CHECK(bp.r(l, k) == 0.0);
    }

    SUBCASE("fused path equals dechirp then bin_powers; upsilon is the scaled gateway sum") {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> nd;
        ArraySamples raw(3, std::vector<ComplexVec>(4, ComplexVec(M)));
        ArraySamples dech = raw;
        for (std::size_t l = 0; l < 3; ++l)
            for (std::size_t a = 0; a < 4; ++a) {
                for (auto& v : raw[l][a]) v = {nd(rng), nd(rng)};
                dech[l][a] = dechirp(raw[l][a], c5);
            }
        const auto fused = received_bin_powers(raw, c5);
        const auto split = bin_powers(dech, c5);
        for (std::size_t k = 0; k < M; ++k) {
            double s = 0;
            for (std::size_t l = 0; l < 3; ++l) {
                CHECK(fused.r(l, k) == doctest::Approx(split.r(l, k)).epsilon(1e-12));
                CHECK(fused.r(l, k) >= 0.0);
                s += fused.r(l, k);
            }
            CHECK(fused.upsilon()[k] == doctest::Approx(s / 4.0).epsilon(1e-14));
        }
    }

    SUBCASE("dimension checks") {
        ArraySamples ragged(2);
        ragged[0].assign(2, ComplexVec(M));
        ragged[1].assign(1, ComplexVec(M));
        CHECK_THROWS_AS(bin_powers(ragged, c5), DomainError);
        ArraySamples short_frame{{ComplexVec(M - 1)}};
        CHECK_THROWS_AS(received_bin_powers(short_frame, c5), DomainError);
    }
}

TEST_CASE("noiseless frames put (1 - 1e-12) of their energy in the symbol bin") {
    for (int sf : {5, 7, 9}) {
        const SpreadingConfig c{sf, 125e3};
        for (int m : {0, 1, static_cast<int>(c.M()) - 1}) {
            ArraySamples raw{{generate_chirp(c, m)}};
            const auto bp = received_bin_powers(raw, c);
            double total = 0;
            for (std::size_t k = 0; k < c.M(); ++k) total += bp.r(0, k);
            CHECK(bp.r(0, m) >= (1.0 - 1e-12) * total);
        }
    }
}
