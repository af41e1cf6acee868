#include "mulora/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mulora/errors.hpp"

namespace mulora {

namespace {

constexpr double kPowerFloor = 1e-300;

class Scorer {
public:
    Scorer(const BinPowerTensor& bins, const LinkModel& model) : bins_(bins), model_(model) {
        if (bins.n_gateways() != model.n_gateways()) throw DomainError("bin tensor and link model disagree on L");
        if (bins.M() != model.M) throw DomainError("bin tensor and link model disagree on M");
        if (bins.n_antennas() != model.n_antennas) throw DomainError("bin tensor and link model disagree on N_t");
        if (!(model.sigma2 > 0.0)) throw DomainError("likelihood needs a positive noise power");
        const std::size_t L = bins.n_gateways();
        const std::size_t M = bins.M();
        log_r_.resize(L * M);
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t k = 0; k < M; ++k) log_r_[l * M + k] = std::log(std::max(bins.r(l, k), kPowerFloor));
        nt_ = static_cast<double>(model.n_antennas);
        log_sigma2_ = std::log(model.sigma2);
    }

    double term(std::size_t l, std::size_t k, double rho_lk) const {
        const double r = std::max(bins_.r(l, k), kPowerFloor);
        return (nt_ - 1.0) * log_r_[l * bins_.M() + k] - nt_ * std::log(rho_lk) - r / rho_lk;
    }

    double noise_term(std::size_t l, std::size_t k) const {
        const double r = std::max(bins_.r(l, k), kPowerFloor);
        return (nt_ - 1.0) * log_r_[l * bins_.M() + k] - nt_ * log_sigma2_ - r / model_.sigma2;
    }

    // Sum over all bins with rho = sigma2.
    double noise_baseline() const {
        double s = 0.0;
        for (std::size_t l = 0; l < bins_.n_gateways(); ++l)
            for (std::size_t k = 0; k < bins_.M(); ++k) s += noise_term(l, k);
        return s;
    }

    // rho(l) on bin k under tuple m.
    void bin_rho(std::span<const int> m, int k, std::vector<double>& out) const {
        const std::size_t L = model_.n_gateways();
        out.assign(L, model_.sigma2);
        for (std::size_t g = 0; g < m.size(); ++g)
            if (m[g] == k)
                for (std::size_t l = 0; l < L; ++l) out[l] += model_.gain(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(g));
    }

    double bin_score(std::span<const int> m, int k, std::vector<double>& scratch) const {
        bin_rho(m, k, scratch);
        double s = 0.0;
        for (std::size_t l = 0; l < scratch.size(); ++l) s += term(l, static_cast<std::size_t>(k), scratch[l]);
        return s;
    }

    double bin_noise_score(int k) const {
        double s = 0.0;
        for (std::size_t l = 0; l < bins_.n_gateways(); ++l) s += noise_term(l, static_cast<std::size_t>(k));
        return s;
    }

    // Score change relative to the all-noise hypothesis, from the bins m touches.
    double delta(std::span<const int> m, std::vector<int>& support, std::vector<double>& scratch) const {
        support.assign(m.begin(), m.end());
        std::sort(support.begin(), support.end());
        support.erase(std::unique(support.begin(), support.end()), support.end());
        double s = 0.0;
        for (int k : support) s += bin_score(m, k, scratch) - bin_noise_score(k);
        return s;
    }

private:
    const BinPowerTensor& bins_;
    const LinkModel& model_;
    std::vector<double> log_r_;
    double nt_ = 0.0;
    double log_sigma2_ = 0.0;
};

}  // namespace

std::vector<int> CandidateTuple::active_support() const {
    std::vector<int> s(m);
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

void CandidateTuple::validate(std::size_t M) const {
    if (m.empty()) throw DomainError("candidate tuple is empty");
    for (int v : m)
        if (v < 0 || static_cast<std::size_t>(v) >= M)
            throw DomainError("symbol " + std::to_string(v) + " outside [0, " + std::to_string(M) + ")");
}

LinkModel make_link_model(const NetworkTopology& topology, std::span<const double> powers,
                          const SpreadingConfig& cfg, std::size_t n_antennas) {
    if (powers.size() != topology.n_devices()) throw DomainError("power vector length does not match device count");
    if (n_antennas < 1) throw DomainError("need at least one antenna");
    LinkModel lm;
    lm.M = cfg.M();
    lm.n_antennas = n_antennas;
    lm.sigma2 = topology.sigma2;
    lm.gain = topology.beta;
    for (Eigen::Index g = 0; g < lm.gain.cols(); ++g)
        lm.gain.col(g) *= static_cast<double>(lm.M) * powers[static_cast<std::size_t>(g)];
    return lm;
}

Eigen::MatrixXd rho(const CandidateTuple& m, const LinkModel& model) {
    m.validate(model.M);
    if (m.m.size() != model.n_devices()) throw DomainError("tuple length does not match device count");
    Eigen::MatrixXd out = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(model.n_gateways()),
                                                    static_cast<Eigen::Index>(model.M), model.sigma2);
    for (std::size_t g = 0; g < m.m.size(); ++g) out.col(m.m[g]) += model.gain.col(static_cast<Eigen::Index>(g));
    return out;
}

Eigen::MatrixXd rho(const CandidateTuple& m, const NetworkTopology& topology, std::span<const double> powers,
                    const SpreadingConfig& cfg) {
    return rho(m, make_link_model(topology, powers, cfg, 1));
}

double loglik(const CandidateTuple& m, const BinPowerTensor& bins, const LinkModel& model,
              std::optional<std::span<const int>> restrict_to) {
    m.validate(model.M);
    if (m.m.size() != model.n_devices()) throw DomainError("tuple length does not match device count");
    const Scorer scorer(bins, model);
    const Eigen::MatrixXd r = rho(m, model);
    double s = 0.0;
    auto add_bin = [&](std::size_t k) {
        for (std::size_t l = 0; l < model.n_gateways(); ++l)
            s += scorer.term(l, k, r(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)));
    };
    if (restrict_to) {
        for (int k : *restrict_to) {
            if (k < 0 || static_cast<std::size_t>(k) >= model.M) throw DomainError("restricted bin out of range");
            add_bin(static_cast<std::size_t>(k));
        }
    } else {
        for (std::size_t k = 0; k < model.M; ++k) add_bin(k);
    }
    return s;
}

DetectionResult ml_detect(const BinPowerTensor& bins, const LinkModel& model, std::uint64_t budget) {
    const std::size_t U = model.n_devices();
    const std::size_t M = model.M;
    double space = 1.0;
    for (std::size_t g = 0; g < U; ++g) space *= static_cast<double>(M);
    if (space > static_cast<double>(budget))
        throw CapabilityError("ML search space M^N_u = " + std::to_string(space) + " exceeds budget " +
                              std::to_string(budget) + "; use the two-stage detector");

    const Scorer scorer(bins, model);
    std::vector<int> m(U, 0), best(U, 0), support;
    std::vector<double> scratch;
    double best_delta = -std::numeric_limits<double>::infinity();
    // Odometer over tuples in lexicographic order; strict > keeps the smallest on ties.
    while (true) {
        const double d = scorer.delta(m, support, scratch);
        if (d > best_delta) {
            best_delta = d;
            best = m;
        }
        std::size_t pos = U;
        while (pos > 0) {
            --pos;
            if (static_cast<std::size_t>(++m[pos]) < M) break;
            m[pos] = 0;
            if (pos == 0) {
                pos = U + 1;
                break;
            }
        }
        if (pos == U + 1) break;
    }

    DetectionResult res;
    res.m_hat.m = best;
    res.loglik = scorer.noise_baseline() + best_delta;
    return res;
}

int max_bin_detect(const BinPowerTensor& bins, const LinkModel& model) {
    if (model.n_devices() != 1) throw DomainError("max-bin detection is defined for a single device");
    if (!(model.sigma2 > 0.0)) throw DomainError("max-bin detection needs a positive noise power");
    const std::size_t L = model.n_gateways();
    std::vector<double> w(L);
    for (std::size_t l = 0; l < L; ++l)
        w[l] = 1.0 / model.sigma2 - 1.0 / (model.gain(static_cast<Eigen::Index>(l), 0) + model.sigma2);
    int best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < bins.M(); ++k) {
        double v = 0.0;
        for (std::size_t l = 0; l < L; ++l) v += w[l] * bins.r(l, k);
        if (v > best_v) {
            best_v = v;
            best = static_cast<int>(k);
        }
    }
    return best;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    std::uint64_t r = 1;
    for (std::uint64_t j = 1; j <= k; ++j) {
        // r = binom(n-k+j-1, j-1), so r * (n-k+j) is divisible by j.
        const unsigned __int128 t = static_cast<unsigned __int128>(r) * (n - k + j);
        r = static_cast<std::uint64_t>(t / j);
    }
    return r;
}

std::uint64_t count_tuples(int n_u, int i) {
    if (n_u < 1 || i < 1 || i > n_u) throw DomainError("count_tuples requires 1 <= i <= n_u");
    std::vector<std::uint64_t> C(static_cast<std::size_t>(i) + 1, 0);
    C[1] = 1;
    for (int j = 2; j <= i; ++j) {
        std::uint64_t total = 1;
        for (int e = 0; e < n_u; ++e) total *= static_cast<std::uint64_t>(j);
        for (int k = 1; k < j; ++k) total -= C[static_cast<std::size_t>(k)] * binomial(static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(k));
        C[static_cast<std::size_t>(j)] = total;
    }
    return C[static_cast<std::size_t>(i)];
}

double prob_support_size(std::size_t M, int n_u, int i) {
    if (n_u < 1 || i < 1 || i > n_u || static_cast<std::size_t>(n_u) > M)
        throw DomainError("prob_support_size requires 1 <= i <= n_u <= M");
    // C_i * M(M-1)...(M-i+1) / i! / M^n_u, accumulated as a product of ratios.
    double p = static_cast<double>(count_tuples(n_u, i));
    const double Md = static_cast<double>(M);
    for (int j = 0; j < i; ++j) p *= (Md - j) / (static_cast<double>(j + 1) * Md);
    for (int j = i; j < n_u; ++j) p /= Md;
    return p;
}

std::vector<int> stage1_identify(const BinPowerTensor& bins, double p_th, int n_u, std::size_t* exceed_count) {
    if (!(p_th > 0.0)) throw DomainError("stage-1 threshold must be positive");
    if (n_u < 1) throw DomainError("n_u must be >= 1");
    const auto ups = bins.upsilon();
    std::vector<int> above;
    for (std::size_t k = 0; k < ups.size(); ++k)
        if (ups[k] > p_th) above.push_back(static_cast<int>(k));
    if (exceed_count) *exceed_count = above.size();

    auto stronger = [&](int a, int b) {
        const double va = ups[static_cast<std::size_t>(a)], vb = ups[static_cast<std::size_t>(b)];
        return va != vb ? va > vb : a < b;
    };
    if (above.empty()) {
        int best = 0;
        for (std::size_t k = 1; k < ups.size(); ++k)
            if (stronger(static_cast<int>(k), best)) best = static_cast<int>(k);
        return {best};
    }
    if (above.size() > static_cast<std::size_t>(n_u)) {
        std::partial_sort(above.begin(), above.begin() + n_u, above.end(), stronger);
        above.resize(static_cast<std::size_t>(n_u));
        std::sort(above.begin(), above.end());
    }
    return above;
}

std::vector<CandidateTuple> enumerate_candidates(std::span<const int> active_bins, int n_u, bool surjective) {
    if (active_bins.empty() || n_u < 1 || active_bins.size() > static_cast<std::size_t>(n_u))
        throw DomainError("enumerate_candidates requires 1 <= |S+| <= n_u");
    std::vector<int> bins(active_bins.begin(), active_bins.end());
    std::sort(bins.begin(), bins.end());
    const std::size_t b = bins.size();
    const auto U = static_cast<std::size_t>(n_u);

    std::vector<CandidateTuple> out;
    std::vector<std::size_t> idx(U, 0);
    std::vector<int> used(b);
    while (true) {
        bool keep = true;
        if (surjective) {
            std::fill(used.begin(), used.end(), 0);
            for (auto i : idx) used[i] = 1;
            keep = std::all_of(used.begin(), used.end(), [](int u) { return u != 0; });
        }
        if (keep) {
            CandidateTuple c;
            c.m.reserve(U);
            for (auto i : idx) c.m.push_back(bins[i]);
            out.push_back(std::move(c));
        }
        std::size_t pos = U;
        bool done = true;
        while (pos > 0) {
            --pos;
            if (++idx[pos] < b) {
                done = false;
                break;
            }
            idx[pos] = 0;
        }
        if (done) break;
    }
    return out;
}

DetectionResult two_stage_detect(const BinPowerTensor& bins, const LinkModel& model,
                                 const ThresholdCalibration& calibration, bool surjective) {
    const int n_u = static_cast<int>(model.n_devices());
    DetectionResult res;
    res.active_bins = stage1_identify(bins, calibration.p_th, n_u, &res.stage1_bin_count);

    const Scorer scorer(bins, model);
    std::vector<double> scratch;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& cand : enumerate_candidates(res.active_bins, n_u, surjective)) {
        double s = 0.0;
        for (int k : res.active_bins) s += scorer.bin_score(cand.m, k, scratch);
        if (s > best) {
            best = s;
            res.m_hat = cand;
        }
    }
    res.loglik = best;
    return res;
}

}  // namespace mulora
