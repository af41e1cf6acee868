#include "mulora/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

#include "mulora/errors.hpp"
#include "mulora/rng.hpp"

namespace mulora {

namespace {

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs body(begin, end, worker) over contiguous chunks of [0, n). Workers own
// their accumulators, so results are independent of scheduling.
template <class Body>
void parallel_chunks(std::int64_t n, int threads, Body&& body) {
    const int w = static_cast<int>(std::min<std::int64_t>(std::max(1, threads), std::max<std::int64_t>(1, n)));
    if (w == 1) {
        body(std::int64_t{0}, n, 0);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(w));
    std::vector<std::thread> pool;
    for (int i = 0; i < w; ++i) {
        const std::int64_t begin = n * i / w;
        const std::int64_t end = n * (i + 1) / w;
        pool.emplace_back([&, begin, end, i] {
            try {
                body(begin, end, i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct TrialDraw {
    std::vector<int> symbols;
    BinPowerTensor bins;
};

TrialDraw draw_trial(const NetworkTopology& topology, std::span<const double> powers, const SpreadingConfig& spreading,
                     std::size_t n_antennas, std::uint64_t seed, std::int64_t trial) {
    const std::uint64_t trial_seed = derive_seed(seed, {static_cast<std::uint64_t>(trial)});
    TrialDraw d;
    Rng sym_rng(stream_seed(trial_seed, Stream::symbols));
    std::uniform_int_distribution<int> sym(0, static_cast<int>(spreading.M()) - 1);
    d.symbols.resize(topology.n_devices());
    for (auto& m : d.symbols) m = sym(sym_rng);
    const ChannelRealization ch = sample_channels(topology, n_antennas, trial_seed);
    const ArraySamples rx = synthesize_received(topology, ch, powers, d.symbols, spreading, trial_seed);
    d.bins = received_bin_powers(rx, spreading);
    return d;
}

}  // namespace

double SERRecord::ser_avg() const {
    double s = 0.0;
    for (std::size_t g = 0; g < errors.size(); ++g) s += ser(g);
    return errors.empty() ? 0.0 : s / static_cast<double>(errors.size());
}

double SERRecord::ser_best() const {
    const auto it = std::min_element(errors.begin(), errors.end());
    return it == errors.end() ? 0.0 : static_cast<double>(*it) / static_cast<double>(trials);
}

double SERRecord::ser_worst() const {
    const auto it = std::max_element(errors.begin(), errors.end());
    return it == errors.end() ? 0.0 : static_cast<double>(*it) / static_cast<double>(trials);
}

std::vector<double> calibrate_single_user_powers(const NetworkTopology& topology, double reference_snr_db) {
    topology.validate();
    const double snr = db_to_linear(reference_snr_db);
    std::vector<double> p(topology.n_devices());
    for (std::size_t g = 0; g < p.size(); ++g)
        p[g] = snr * topology.sigma2 / topology.beta.col(static_cast<Eigen::Index>(g)).maxCoeff();
    return p;
}

BudgetResult apply_sum_power_budget(std::span<const double> p, std::span<const double> p_su,
                                    const NetworkTopology& topology, const SpreadingConfig& cfg, double epsilon) {
    if (p.size() != p_su.size()) throw DomainError("power vectors differ in length");
    const double sum_p = std::accumulate(p.begin(), p.end(), 0.0);
    const double sum_su = std::accumulate(p_su.begin(), p_su.end(), 0.0);
    BudgetResult res;
    res.allocation.p.assign(p.begin(), p.end());
    res.allocation.epsilon = epsilon;
    if (sum_p > sum_su && sum_p > 0.0) {
        res.scale = sum_su / sum_p;
        for (auto& v : res.allocation.p) v *= res.scale;
    }
    res.allocation.p_max = res.allocation.p.empty() ? 0.0 : *std::max_element(res.allocation.p.begin(), res.allocation.p.end());
    for (std::size_t g = 0; g < p.size(); ++g)
        if (average_snr(topology, cfg, g, res.allocation.p[g]) < epsilon * (1.0 - 1e-12))
            res.snr_floor_violations.push_back(g);
    return res;
}

double snr_floor_epsilon(const ExperimentConfig& cfg, const NetworkTopology& topology, std::span<const double> p_su) {
    double weakest = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < p_su.size(); ++g)
        weakest = std::min(weakest, average_snr(topology, cfg.spreading(), g, p_su[g]));
    return weakest * db_to_linear(cfg.snr_floor_offset_db);
}

OperatingPoint prepare_operating_point(const ExperimentConfig& cfg, double reference_snr_db,
                                       std::size_t topology_index) {
    const SpreadingConfig spreading = cfg.spreading();
    OperatingPoint op;
    op.topology = generate_topology(cfg.topology_params(), stream_seed(cfg.seed, Stream::topology, topology_index));
    op.p_su = calibrate_single_user_powers(op.topology, reference_snr_db);
    op.powers = op.p_su;

    if (cfg.power_control && cfg.n_devices > 1) {
        const double eps = snr_floor_epsilon(cfg, op.topology, op.p_su);
        const double p_max =
            cfg.p_max_mw > 0.0 ? cfg.p_max_mw : std::accumulate(op.p_su.begin(), op.p_su.end(), 0.0);
        PowerControlOptions opts;
        opts.alpha = cfg.alpha;
        opts.tol = cfg.sca_tol;
        opts.max_iter = cfg.sca_max_iter;
        op.power_control = run_power_control(op.topology, spreading, p_max, eps, opts);
        BudgetResult budget = apply_sum_power_budget(op.power_control->allocation.p, op.p_su, op.topology, spreading, eps);
        op.powers = std::move(budget.allocation.p);
        op.snr_floor_violations = std::move(budget.snr_floor_violations);
    }

    op.link = make_link_model(op.topology, op.powers, spreading, static_cast<std::size_t>(cfg.n_antennas));
    if (cfg.detector == DetectorMode::two_stage) {
        const ActiveBinStats stats =
            make_active_bin_stats(op.topology, op.powers, spreading, static_cast<std::size_t>(cfg.n_antennas));
        op.calibration = calibrate_threshold(stats);
    }
    return op;
}

namespace {

std::vector<OperatingPoint> prepare_points(const ExperimentConfig& cfg, double snr) {
    std::vector<OperatingPoint> ops;
    for (std::size_t t = 0; t < static_cast<std::size_t>(cfg.n_topologies); ++t) {
        try {
            ops.push_back(prepare_operating_point(cfg, snr, t));
        } catch (const std::exception& e) {
            throw std::runtime_error(fmt::format("snr {} dB, topology {}: {}", snr, t, e.what()));
        }
    }
    return ops;
}

// Per-device error flags for trial i.
std::vector<bool> trial_errors(const ExperimentConfig& cfg, const std::vector<OperatingPoint>& ops, double snr,
                               std::int64_t i) {
    const OperatingPoint& op = ops[static_cast<std::size_t>(i) % ops.size()];
    try {
        const TrialDraw d = draw_trial(op.topology, op.powers, cfg.spreading(),
                                       static_cast<std::size_t>(cfg.n_antennas), cfg.seed, i);
        const DetectionResult det = cfg.detector == DetectorMode::ml
                                        ? ml_detect(d.bins, op.link, cfg.ml_budget)
                                        : two_stage_detect(d.bins, op.link, *op.calibration, cfg.surjective);
        std::vector<bool> err(d.symbols.size());
        for (std::size_t g = 0; g < err.size(); ++g) err[g] = det.m_hat.m[g] != d.symbols[g];
        return err;
    } catch (const std::exception& e) {
        throw std::runtime_error(fmt::format("snr {} dB, trial {}: {}", snr, i, e.what()));
    }
}

}  // namespace

std::vector<SERRecord> run_ser_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto U = static_cast<std::size_t>(cfg.n_devices);
    const int threads = resolve_threads(cfg.threads);

    std::vector<SERRecord> out;
    for (double snr : cfg.snr_db) {
        const std::vector<OperatingPoint> ops = prepare_points(cfg, snr);
        std::vector<std::vector<std::int64_t>> worker_errors(static_cast<std::size_t>(threads),
                                                             std::vector<std::int64_t>(U, 0));
        parallel_chunks(cfg.trials, threads, [&](std::int64_t begin, std::int64_t end, int w) {
            auto& errs = worker_errors[static_cast<std::size_t>(w)];
            for (std::int64_t i = begin; i < end; ++i) {
                const auto e = trial_errors(cfg, ops, snr, i);
                for (std::size_t g = 0; g < U; ++g) errs[g] += e[g];
            }
        });

        SERRecord rec;
        rec.experiment_id = cfg.experiment_id;
        rec.snr_db = snr;
        rec.n_u = cfg.n_devices;
        rec.n_t = cfg.n_antennas;
        rec.alpha = cfg.alpha;
        rec.detector = cfg.detector;
        rec.power_control = cfg.power_control;
        rec.trials = cfg.trials;
        rec.seed = cfg.seed;
        rec.errors.assign(U, 0);
        for (const auto& we : worker_errors)
            for (std::size_t g = 0; g < U; ++g) rec.errors[g] += we[g];
        out.push_back(std::move(rec));
    }
    return out;
}

PairedOutcome paired_symbol_errors(const ExperimentConfig& a, const ExperimentConfig& b, double snr_db) {
    a.validate();
    b.validate();
    if (a.seed != b.seed || a.trials != b.trials || a.n_devices != b.n_devices || a.n_antennas != b.n_antennas ||
        a.n_topologies != b.n_topologies || a.sf != b.sf || a.n_gateways != b.n_gateways)
        throw ConfigError("paired arms must share seed, trials and deployment");
    const auto ops_a = prepare_points(a, snr_db);
    const auto ops_b = prepare_points(b, snr_db);
    const int threads = resolve_threads(a.threads);
    std::vector<PairedOutcome> partial(static_cast<std::size_t>(threads));
    parallel_chunks(a.trials, threads, [&](std::int64_t begin, std::int64_t end, int w) {
        auto& acc = partial[static_cast<std::size_t>(w)];
        for (std::int64_t i = begin; i < end; ++i) {
            const auto ea = trial_errors(a, ops_a, snr_db, i);
            const auto eb = trial_errors(b, ops_b, snr_db, i);
            for (std::size_t g = 0; g < ea.size(); ++g) {
                ++acc.symbols;
                if (ea[g] && eb[g]) ++acc.both;
                else if (ea[g]) ++acc.only_a;
                else if (eb[g]) ++acc.only_b;
            }
        }
    });
    PairedOutcome total;
    for (const auto& p : partial) {
        total.symbols += p.symbols;
        total.both += p.both;
        total.only_a += p.only_a;
        total.only_b += p.only_b;
    }
    return total;
}

std::vector<SERRecord> sweep(const ExperimentConfig& cfg, SweepAxis axis, std::span<const double> values) {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    std::vector<SERRecord> out;
    for (double v : values) {
        if (!std::isfinite(v)) throw ConfigError("sweep values must be finite");
        ExperimentConfig c = cfg;
        switch (axis) {
            case SweepAxis::n_antennas:
                if (v < 1.0 || v != std::floor(v)) throw ConfigError("antenna counts must be positive integers");
                c.n_antennas = static_cast<int>(v);
                break;
            case SweepAxis::alpha:
                c.alpha = v;
                break;
            case SweepAxis::snr:
                c.snr_db = {v};
                break;
        }
        auto recs = run_ser_experiment(c);
        out.insert(out.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
    }
    return out;
}

void write_ser_csv(std::ostream& os, std::span<const SERRecord> records) {
    std::size_t max_u = 0;
    for (const auto& r : records) max_u = std::max(max_u, r.errors.size());
    os << "experiment_id,snr_db,n_u,n_t,alpha,detector,power_control,trials";
    for (std::size_t g = 0; g < max_u; ++g) os << ",errors_g" << (g + 1);
    os << ",ser_avg,ser_best,ser_worst,seed\n";
    for (const auto& r : records) {
        os << fmt::format("{},{},{},{},{},{},{},{}", r.experiment_id, r.snr_db, r.n_u, r.n_t, r.alpha,
                          to_string(r.detector), r.power_control ? 1 : 0, r.trials);
        for (std::size_t g = 0; g < max_u; ++g) {
            if (g < r.errors.size())
                os << ',' << r.errors[g];
            else
                os << ',';
        }
        os << fmt::format(",{},{},{},{}\n", r.ser_avg(), r.ser_best(), r.ser_worst(), r.seed);
    }
}

void write_bound_csv(std::ostream& os, std::span<const BoundPoint> curve) {
    os << "p_th,p_error_ub\n";
    for (const auto& pt : curve) os << fmt::format("{},{}\n", pt.p_th, pt.p_error_ub);
}

IdentificationCount stage1_identification_rate(const NetworkTopology& topology, std::span<const double> powers,
                                               const SpreadingConfig& spreading, std::size_t n_antennas,
                                               double p_th, std::int64_t trials, std::uint64_t seed, int threads) {
    if (trials < 1) throw DomainError("trials must be >= 1");
    const int w = resolve_threads(threads);
    std::vector<std::int64_t> correct(static_cast<std::size_t>(w), 0);
    const int n_u = static_cast<int>(topology.n_devices());
    parallel_chunks(trials, w, [&](std::int64_t begin, std::int64_t end, int worker) {
        for (std::int64_t i = begin; i < end; ++i) {
            const TrialDraw d = draw_trial(topology, powers, spreading, n_antennas, seed, i);
            std::vector<int> truth = d.symbols;
            std::sort(truth.begin(), truth.end());
            truth.erase(std::unique(truth.begin(), truth.end()), truth.end());
            if (stage1_identify(d.bins, p_th, n_u) == truth) ++correct[static_cast<std::size_t>(worker)];
        }
    });
    return {std::accumulate(correct.begin(), correct.end(), std::int64_t{0}), trials};
}

std::optional<double> snr_at_target_ser(std::span<const SERRecord> records, double target) {
    if (!(target > 0.0)) throw DomainError("target SER must be positive");
    auto log_ser = [](const SERRecord& r) {
        return std::log10(std::max(r.ser_avg(), 0.5 / static_cast<double>(r.trials)));
    };
    const double lt = std::log10(target);
    for (std::size_t i = 0; i + 1 < records.size(); ++i) {
        const double a = log_ser(records[i]), b = log_ser(records[i + 1]);
        if (a >= lt && b < lt) {
            const double frac = (a - lt) / (a - b);
            return records[i].snr_db + frac * (records[i + 1].snr_db - records[i].snr_db);
        }
    }
    return std::nullopt;
}

}  // namespace mulora
