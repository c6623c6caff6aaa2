// SPDX-License-Identifier: Apache-2.0
//
// ciforge - constructive interference precoding for the MU-MIMO downlink
//
// Experiment orchestration: Monte Carlo SER sweeps, alpha^2 CCDFs, sign
// prediction statistics, imperfect-CSI sweeps, analytical checks. Trials
// are keyed by (seed, trial index, purpose) streams, so results are byte
// identical regardless of worker count; schemes share channel, message and
// noise realizations (common random numbers).

#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ciforge/analysis.hpp"
#include "ciforge/channel.hpp"
#include "ciforge/cip.hpp"
#include "ciforge/errors.hpp"
#include "ciforge/prng.hpp"
#include "ciforge/qp.hpp"
#include "ciforge/rbc.hpp"
#include "ciforge/version.hpp"

namespace ciforge::sim {

using cip::Strategy;

enum class Experiment { Ser, CcdfAlpha, SignPred, CsiSweep, Props };

inline const char* experiment_name(Experiment e) {
    switch (e) {
        case Experiment::Ser: return "ser";
        case Experiment::CcdfAlpha: return "ccdf";
        case Experiment::SignPred: return "signpred";
        case Experiment::CsiSweep: return "csi";
        case Experiment::Props: return "props";
    }
    return "?";
}

struct CurveSpec {
    rbc::Scheme scheme;
    Strategy strategy;

    std::string label() const {
        return std::string(rbc::scheme_name(scheme)) + ":" + cip::strategy_name(strategy);
    }
};

struct ExperimentConfig {
    Experiment experiment = Experiment::Ser;
    int K = 0, Nt = 0, M = 0;
    std::vector<CurveSpec> curves;
    Strategy default_strategy = Strategy::PsQp;
    std::vector<double> snr_grid_db;   // transmit SNR rho = 1/sigma^2
    std::vector<double> sigma_e2_grid; // linear scale
    long trials = 0;
    long target_errors = 200;
    std::uint64_t seed = 1;
    int fsqp_cap = 16;
    double cond_cap = channel::kDefaultConditionCap;
    int workers = 0; // 0 = CIFORGE_WORKERS env or hardware concurrency
    std::string tag;

    void validate() const {
        if (K < 1 || Nt < K) throw ConfigError("config requires 1 <= K <= Nt");
        if (M < 4) throw ConfigError("config requires M >= 4");
        if (trials < 1) throw ConfigError("config requires trials > 0");
        if (target_errors < 1) throw ConfigError("config requires target_errors > 0");
        if (curves.empty() && experiment != Experiment::Props)
            throw ConfigError("config requires at least one curve");
        if ((experiment == Experiment::Ser || experiment == Experiment::CsiSweep) &&
            snr_grid_db.empty())
            throw ConfigError("experiment requires snr_db");
        if (experiment == Experiment::CsiSweep && sigma_e2_grid.empty())
            throw ConfigError("csi sweep requires sigma_e2_db");
        if (experiment == Experiment::SignPred &&
            (curves.size() != 1 || (curves[0].scheme != rbc::Scheme::MeQam &&
                                    curves[0].scheme != rbc::Scheme::RmQam)))
            throw ConfigError("signpred runs one ME-QAM or RM-QAM curve");
    }
};

// --------------------------------------------------------------------------
// Config file parsing: plain "key = value" lines, '#' comments.
// --------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    return out;
}

inline double parse_double(const std::string& s) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw ConfigError("bad number: " + s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad number: " + s);
    }
}

inline long parse_long(const std::string& s) {
    try {
        size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw ConfigError("bad integer: " + s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad integer: " + s);
    }
}

// "a,b,c" or "start:step:stop" (inclusive).
inline std::vector<double> parse_grid(const std::string& s) {
    std::vector<double> out;
    if (s.find(':') != std::string::npos) {
        const auto parts = split(s, ':');
        if (parts.size() != 3) throw ConfigError("range must be start:step:stop");
        const double start = parse_double(parts[0]), step = parse_double(parts[1]),
                     stop = parse_double(parts[2]);
        if (!(step > 0.0)) throw ConfigError("range step must be positive");
        for (double v = start; v <= stop + 1e-9; v += step) out.push_back(v);
        return out;
    }
    for (const auto& tok : split(s, ',')) out.push_back(parse_double(tok));
    return out;
}

inline Strategy strategy_from_name(const std::string& s) {
    if (s == "zf") return Strategy::Zf;
    if (s == "lcqp") return Strategy::Lcqp;
    if (s == "fsqp") return Strategy::FsQp;
    if (s == "psqp") return Strategy::PsQp;
    throw ConfigError("unknown strategy: " + s);
}

inline CurveSpec parse_curve(const std::string& token, Strategy default_strategy) {
    if (token == "zf") return {rbc::Scheme::QamCi, Strategy::Zf};
    const auto parts = split(token, ':');
    if (parts.empty() || parts.size() > 2) throw ConfigError("bad curve token: " + token);
    const rbc::Scheme scheme = rbc::scheme_from_name(parts[0]);
    Strategy strat;
    if (parts.size() == 2) {
        strat = strategy_from_name(parts[1]);
    } else if (scheme == rbc::Scheme::QamCi || scheme == rbc::Scheme::PskCi) {
        strat = Strategy::Lcqp;
    } else {
        strat = default_strategy;
    }
    const bool sf_scheme = scheme == rbc::Scheme::MeQam || scheme == rbc::Scheme::RmQam;
    if (strat == Strategy::Lcqp && sf_scheme)
        throw ConfigError("lcqp is only valid for fixed-sign schemes: " + token);
    if ((strat == Strategy::PsQp || strat == Strategy::FsQp) && !sf_scheme)
        throw ConfigError("psqp/fsqp require a sign-flexible scheme: " + token);
    return {scheme, strat};
}

} // namespace detail

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value: " + line);
        kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
    }

    ExperimentConfig cfg;
    std::string curves_raw;
    for (const auto& [key, value] : kv) {
        if (key == "experiment") {
            if (value == "ser") cfg.experiment = Experiment::Ser;
            else if (value == "ccdf") cfg.experiment = Experiment::CcdfAlpha;
            else if (value == "signpred") cfg.experiment = Experiment::SignPred;
            else if (value == "csi") cfg.experiment = Experiment::CsiSweep;
            else if (value == "props") cfg.experiment = Experiment::Props;
            else throw ConfigError("unknown experiment: " + value);
        } else if (key == "K") cfg.K = static_cast<int>(detail::parse_long(value));
        else if (key == "Nt") cfg.Nt = static_cast<int>(detail::parse_long(value));
        else if (key == "M") cfg.M = static_cast<int>(detail::parse_long(value));
        else if (key == "curves") curves_raw = value;
        else if (key == "strategy") cfg.default_strategy = detail::strategy_from_name(value);
        else if (key == "snr_db") cfg.snr_grid_db = detail::parse_grid(value);
        else if (key == "sigma_e2_db") {
            for (const auto& tok : detail::split(value, ','))
                cfg.sigma_e2_grid.push_back(
                    tok == "-inf" ? 0.0 : std::pow(10.0, detail::parse_double(tok) / 10.0));
        } else if (key == "trials") cfg.trials = detail::parse_long(value);
        else if (key == "target_errors") cfg.target_errors = detail::parse_long(value);
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(detail::parse_long(value));
        else if (key == "fsqp_cap") cfg.fsqp_cap = static_cast<int>(detail::parse_long(value));
        else if (key == "cond_cap") cfg.cond_cap = detail::parse_double(value);
        else if (key == "tag") cfg.tag = value;
        else throw ConfigError("unknown config key: " + key);
    }
    for (const auto& tok : detail::split(curves_raw, ','))
        if (!tok.empty()) cfg.curves.push_back(detail::parse_curve(tok, cfg.default_strategy));
    return cfg;
}

// --------------------------------------------------------------------------
// Records and manifest
// --------------------------------------------------------------------------

struct SerRecord {
    std::string scheme, strategy;
    double snr_db = 0.0;
    double sigma_e2_db = -std::numeric_limits<double>::infinity(); // csi only
    long symbol_errors = 0, symbols = 0;
    double ser = 0.0, stderr_ = 0.0;
};

struct CcdfRow {
    std::string scheme, strategy;
    double alpha2_db = 0.0, ccdf = 0.0;
};

struct DhRow {
    std::string scheme;
    int d_h = 0;
    long count = 0;
    double pmf = 0.0, ccdf = 0.0; // ccdf = Pr(d_H > d)
};

struct PropRecord {
    std::string check;
    double empirical = 0.0, reference = 0.0;
    long samples = 0;
    double stderr_ = 0.0;
    bool pass = false;
};

struct RunManifest {
    nlohmann::json config_echo;
    std::uint64_t seed = 0;
    std::string version = kVersion;
    long resamples = 0;       // ill-conditioned channels redrawn
    long fsqp_fallbacks = 0;  // FS-QP cap exceeded, PS-QP used instead
    long solver_retries = 0;  // QP failures leading to a redraw
    long excluded = 0;        // signpred realizations over the cap
    double wall_time_s = 0.0;
    int workers = 1;
};

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["experiment"] = experiment_name(cfg.experiment);
    j["K"] = cfg.K;
    j["Nt"] = cfg.Nt;
    j["M"] = cfg.M;
    std::vector<std::string> curves;
    for (const auto& c : cfg.curves) curves.push_back(c.label());
    j["curves"] = curves;
    j["snr_db"] = cfg.snr_grid_db;
    j["sigma_e2_linear"] = cfg.sigma_e2_grid;
    j["trials"] = cfg.trials;
    j["target_errors"] = cfg.target_errors;
    j["seed"] = cfg.seed;
    j["fsqp_cap"] = cfg.fsqp_cap;
    j["cond_cap"] = cfg.cond_cap;
    j["tag"] = cfg.tag;
    return j;
}

// --------------------------------------------------------------------------
// Deterministic parallel map over trial indices
// --------------------------------------------------------------------------

inline int worker_count(int requested = 0) {
    if (requested >= 1) return requested;
    if (const char* env = std::getenv("CIFORGE_WORKERS")) {
        const int w = std::atoi(env);
        if (w >= 1) return w;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

template <class T, class Fn>
std::vector<T> parallel_map(long lo, long hi, int workers, Fn&& fn) {
    const long n = hi - lo;
    std::vector<T> out(static_cast<size_t>(std::max<long>(n, 0)));
    if (n <= 0) return out;
    workers = static_cast<int>(std::min<long>(workers, n));
    if (workers <= 1) {
        for (long i = 0; i < n; ++i) out[static_cast<size_t>(i)] = fn(lo + i);
        return out;
    }
    std::atomic<long> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            const long i = next.fetch_add(1);
            if (i >= n) return;
            try {
                out[static_cast<size_t>(i)] = fn(lo + i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    return out;
}

// --------------------------------------------------------------------------
// Trial machinery
// --------------------------------------------------------------------------

namespace detail {

struct TrialCounters {
    int resamples = 0;
    int fsqp_fallbacks = 0;
    int solver_retries = 0;
};

struct TrialDraw {
    channel::ComplexChannel H;     // true channel
    channel::Workspace ws;         // workspace of the precoding channel
    std::vector<int> messages;
    Eigen::VectorXcd noise;        // CN(0,1) per user
};

// Draws one trial; resamples ill-conditioned precoding channels from the
// same streams so outcomes do not depend on scheduling.
inline TrialDraw draw_trial(const ExperimentConfig& cfg, std::uint64_t trial, double sigma_e2,
                            Prng& ch, Prng& mg, Prng& nz, Prng& ce, TrialCounters& counters) {
    (void)trial;
    TrialDraw d;
    for (;;) {
        d.H = channel::sample_channel(cfg.K, cfg.Nt, ch);
        channel::ComplexChannel Hp =
            sigma_e2 > 0.0 ? channel::perturb_csi(d.H, channel::CsiErrorModel(sigma_e2), ce)
                           : d.H;
        try {
            d.ws = channel::make_workspace(Hp, cfg.cond_cap);
            break;
        } catch (const SingularChannelError&) {
            ++counters.resamples;
        }
    }
    d.messages.resize(static_cast<size_t>(cfg.K));
    for (auto& v : d.messages)
        v = static_cast<int>(mg.next_below(static_cast<std::uint64_t>(cfg.M)));
    d.noise.resize(cfg.K);
    for (int k = 0; k < cfg.K; ++k) d.noise(k) = nz.next_cnormal(1.0);
    return d;
}

inline cip::PrecodeOutcome run_curve(const CurveSpec& cv, const rbc::RbcConstellation& c,
                                     const channel::Workspace& ws, const std::vector<int>& m,
                                     int fsqp_cap, TrialCounters& counters) {
    switch (cv.strategy) {
        case Strategy::Zf: return cip::precode_zf(c, ws.H, m);
        case Strategy::Lcqp: return cip::precode_lcqp(c, ws.gram, m);
        case Strategy::PsQp: return cip::precode_psqp(c, ws, m);
        case Strategy::FsQp:
            try {
                return cip::precode_fsqp(c, ws, m, fsqp_cap);
            } catch (const SizeError&) {
                ++counters.fsqp_fallbacks;
                return cip::precode_psqp(c, ws, m);
            }
    }
    throw ConfigError("unknown strategy");
}

struct SerTrial {
    std::vector<long> errors;
    TrialCounters counters;
};

// One Monte Carlo trial shared by every curve: received symbol is
// s_k + alpha*sigma*v_k under perfect CSI and (H Hhat^+ s)_k + alpha*sigma*v_k
// under a mismatched precoding channel.
inline SerTrial ser_trial(const ExperimentConfig& cfg,
                          const std::vector<const rbc::RbcConstellation*>& cons,
                          std::uint64_t trial, double sigma, double sigma_e2) {
    Prng ch = make_stream(cfg.seed, trial, StreamPurpose::Channel);
    Prng mg = make_stream(cfg.seed, trial, StreamPurpose::Messages);
    Prng nz = make_stream(cfg.seed, trial, StreamPurpose::Noise);
    Prng ce = make_stream(cfg.seed, trial, StreamPurpose::CsiError);

    SerTrial out;
    for (int attempt = 0;; ++attempt) {
        if (attempt > 100) throw Error("trial kept failing in the QP solver");
        TrialCounters counters = out.counters;
        const TrialDraw d = draw_trial(cfg, trial, sigma_e2, ch, mg, nz, ce, counters);
        std::vector<long> errors(cfg.curves.size(), 0);
        Eigen::MatrixXd Hd_true;
        if (sigma_e2 > 0.0) Hd_true = channel::widely_linear(d.H);
        try {
            for (size_t i = 0; i < cfg.curves.size(); ++i) {
                const auto o = run_curve(cfg.curves[i], *cons[i], d.ws, d.messages,
                                         cfg.fsqp_cap, counters);
                Eigen::VectorXcd r;
                if (sigma_e2 > 0.0) {
                    // x = Hhat^+ s computed in the real domain, received via
                    // the true channel.
                    const Eigen::VectorXd xdot =
                        d.ws.Hd.transpose() * (d.ws.gram.Q * channel::real_stack(o.s));
                    const Eigen::VectorXd rdot = Hd_true * xdot;
                    r = channel::complex_unstack(rdot);
                } else {
                    r = o.s;
                }
                const double a = std::sqrt(o.alpha2);
                for (int k = 0; k < cfg.K; ++k) {
                    const std::complex<double> y = r(k) + a * sigma * d.noise(k);
                    errors[i] += cons[i]->detect(y) != d.messages[static_cast<size_t>(k)];
                }
            }
        } catch (const QpNonconvergenceError&) {
            ++counters.solver_retries;
            out.counters = counters;
            continue;
        } catch (const QpInfeasibleError&) {
            ++counters.solver_retries;
            out.counters = counters;
            continue;
        }
        out.errors = std::move(errors);
        out.counters = counters;
        return out;
    }
}

inline double db_of(double linear) { return 10.0 * std::log10(std::max(linear, 1e-300)); }

} // namespace detail

// Empirical quantile: smallest sample x with Pr(X > x) <= tail.
inline double tail_quantile(std::vector<double> samples, double tail) {
    if (samples.empty()) throw Error("tail_quantile of empty sample set");
    std::sort(samples.begin(), samples.end());
    const auto n = static_cast<long>(samples.size());
    long idx = static_cast<long>(std::ceil((1.0 - tail) * n)) - 1;
    idx = std::clamp<long>(idx, 0, n - 1);
    return samples[static_cast<size_t>(idx)];
}

// --------------------------------------------------------------------------
// Runners
// --------------------------------------------------------------------------

struct SerResult {
    std::vector<SerRecord> records;
    RunManifest manifest;
};

namespace detail {

struct PointOutcome {
    std::vector<long> errors;
    long trials_used = 0;
};

// Runs one (snr, sigma_e2) point with deterministic batched early stopping:
// the point stops at the first trial index where every curve has reached the
// error target (or at the trial cap).
inline PointOutcome run_point(const ExperimentConfig& cfg,
                              const std::vector<const rbc::RbcConstellation*>& cons,
                              double sigma, double sigma_e2, int workers,
                              RunManifest& manifest) {
    PointOutcome out;
    out.errors.assign(cfg.curves.size(), 0);
    const long batch = std::max<long>(64, 8L * workers);
    bool stop = false;
    for (long start = 0; start < cfg.trials && !stop; start += batch) {
        const long end = std::min(cfg.trials, start + batch);
        auto results = parallel_map<SerTrial>(start, end, workers, [&](long t) {
            return ser_trial(cfg, cons, static_cast<std::uint64_t>(t), sigma, sigma_e2);
        });
        for (long t = start; t < end && !stop; ++t) {
            const auto& r = results[static_cast<size_t>(t - start)];
            ++out.trials_used;
            manifest.resamples += r.counters.resamples;
            manifest.fsqp_fallbacks += r.counters.fsqp_fallbacks;
            manifest.solver_retries += r.counters.solver_retries;
            bool all_done = true;
            for (size_t i = 0; i < cfg.curves.size(); ++i) {
                out.errors[i] += r.errors[i];
                if (out.errors[i] < cfg.target_errors) all_done = false;
            }
            if (all_done) stop = true;
        }
    }
    return out;
}

inline std::vector<rbc::RbcConstellation> build_constellations(const ExperimentConfig& cfg) {
    std::vector<rbc::RbcConstellation> cons;
    cons.reserve(cfg.curves.size());
    for (const auto& cv : cfg.curves) cons.push_back(rbc::build(cv.scheme, cfg.M));
    return cons;
}

inline std::vector<const rbc::RbcConstellation*> pointers(
    const std::vector<rbc::RbcConstellation>& cons) {
    std::vector<const rbc::RbcConstellation*> p;
    p.reserve(cons.size());
    for (const auto& c : cons) p.push_back(&c);
    return p;
}

} // namespace detail

inline SerResult run_ser(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const int workers = worker_count(cfg.workers);
    const auto cons = detail::build_constellations(cfg);
    const auto cptr = detail::pointers(cons);

    SerResult res;
    res.manifest.config_echo = config_to_json(cfg);
    res.manifest.seed = cfg.seed;
    res.manifest.workers = workers;

    for (const double snr_db : cfg.snr_grid_db) {
        const double sigma = std::sqrt(std::pow(10.0, -snr_db / 10.0));
        const auto point = detail::run_point(cfg, cptr, sigma, 0.0, workers, res.manifest);
        for (size_t i = 0; i < cfg.curves.size(); ++i) {
            SerRecord rec;
            rec.scheme = rbc::scheme_name(cfg.curves[i].scheme);
            rec.strategy = cip::strategy_name(cfg.curves[i].strategy);
            rec.snr_db = snr_db;
            rec.symbol_errors = point.errors[i];
            rec.symbols = point.trials_used * cfg.K;
            rec.ser = static_cast<double>(rec.symbol_errors) / rec.symbols;
            rec.stderr_ = std::sqrt(rec.ser * (1.0 - rec.ser) / rec.symbols);
            res.records.push_back(rec);
        }
    }
    res.manifest.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

struct CsiResult {
    std::vector<SerRecord> records; // sigma_e2_db column populated
    RunManifest manifest;
};

inline CsiResult run_csi_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.snr_grid_db.size() != 1)
        throw ConfigError("csi sweep uses a single fixed snr_db value");
    const auto t0 = std::chrono::steady_clock::now();
    const int workers = worker_count(cfg.workers);
    const auto cons = detail::build_constellations(cfg);
    const auto cptr = detail::pointers(cons);

    CsiResult res;
    res.manifest.config_echo = config_to_json(cfg);
    res.manifest.seed = cfg.seed;
    res.manifest.workers = workers;

    const double snr_db = cfg.snr_grid_db[0];
    const double sigma = std::sqrt(std::pow(10.0, -snr_db / 10.0));
    for (const double sigma_e2 : cfg.sigma_e2_grid) {
        const auto point = detail::run_point(cfg, cptr, sigma, sigma_e2, workers, res.manifest);
        for (size_t i = 0; i < cfg.curves.size(); ++i) {
            SerRecord rec;
            rec.scheme = rbc::scheme_name(cfg.curves[i].scheme);
            rec.strategy = cip::strategy_name(cfg.curves[i].strategy);
            rec.snr_db = snr_db;
            rec.sigma_e2_db = detail::db_of(sigma_e2);
            rec.symbol_errors = point.errors[i];
            rec.symbols = point.trials_used * cfg.K;
            rec.ser = static_cast<double>(rec.symbol_errors) / rec.symbols;
            rec.stderr_ = std::sqrt(rec.ser * (1.0 - rec.ser) / rec.symbols);
            res.records.push_back(rec);
        }
    }
    res.manifest.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

struct CcdfResult {
    struct Curve {
        std::string scheme, strategy;
        std::vector<double> alpha2_db; // per-trial samples, trial order
    };
    std::vector<Curve> curves;
    std::vector<CcdfRow> rows;
    RunManifest manifest;
};

inline CcdfResult run_ccdf_alpha(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const int workers = worker_count(cfg.workers);
    const auto cons = detail::build_constellations(cfg);
    const auto cptr = detail::pointers(cons);

    CcdfResult res;
    res.manifest.config_echo = config_to_json(cfg);
    res.manifest.seed = cfg.seed;
    res.manifest.workers = workers;
    for (const auto& cv : cfg.curves)
        res.curves.push_back({rbc::scheme_name(cv.scheme), cip::strategy_name(cv.strategy), {}});

    struct Trial {
        std::vector<double> alpha2;
        detail::TrialCounters counters;
    };
    const long batch = std::max<long>(64, 8L * workers);
    for (long start = 0; start < cfg.trials; start += batch) {
        const long end = std::min(cfg.trials, start + batch);
        auto results = parallel_map<Trial>(start, end, workers, [&](long t) {
            Prng ch = make_stream(cfg.seed, static_cast<std::uint64_t>(t), StreamPurpose::Channel);
            Prng mg = make_stream(cfg.seed, static_cast<std::uint64_t>(t), StreamPurpose::Messages);
            Prng nz = make_stream(cfg.seed, static_cast<std::uint64_t>(t), StreamPurpose::Noise);
            Prng ce = make_stream(cfg.seed, static_cast<std::uint64_t>(t), StreamPurpose::CsiError);
            Trial tr;
            for (int attempt = 0;; ++attempt) {
                if (attempt > 100) throw Error("trial kept failing in the QP solver");
                const auto d = detail::draw_trial(cfg, static_cast<std::uint64_t>(t), 0.0, ch,
                                                  mg, nz, ce, tr.counters);
                std::vector<double> alpha2(cfg.curves.size(), 0.0);
                try {
                    for (size_t i = 0; i < cfg.curves.size(); ++i)
                        alpha2[i] = detail::run_curve(cfg.curves[i], *cptr[i], d.ws, d.messages,
                                                      cfg.fsqp_cap, tr.counters)
                                        .alpha2;
                } catch (const QpNonconvergenceError&) {
                    ++tr.counters.solver_retries;
                    continue;
                } catch (const QpInfeasibleError&) {
                    ++tr.counters.solver_retries;
                    continue;
                }
                tr.alpha2 = std::move(alpha2);
                return tr;
            }
        });
        for (const auto& tr : results) {
            res.manifest.resamples += tr.counters.resamples;
            res.manifest.fsqp_fallbacks += tr.counters.fsqp_fallbacks;
            res.manifest.solver_retries += tr.counters.solver_retries;
            for (size_t i = 0; i < cfg.curves.size(); ++i)
                res.curves[i].alpha2_db.push_back(detail::db_of(tr.alpha2[i]));
        }
    }

    // Shared grid in 0.25 dB steps, padded so the CCDF spans 1 down to 0.
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& c : res.curves)
        for (double v : c.alpha2_db) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    const double step = 0.25;
    lo = std::floor(lo / step) * step - step;
    hi = std::ceil(hi / step) * step + step;
    for (const auto& c : res.curves) {
        std::vector<double> sorted = c.alpha2_db;
        std::sort(sorted.begin(), sorted.end());
        for (double g = lo; g <= hi + 1e-12; g += step) {
            const auto over = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), g);
            res.rows.push_back(
                {c.scheme, c.strategy, g,
                 static_cast<double>(over) / static_cast<double>(sorted.size())});
        }
    }
    res.manifest.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

struct SignPredResult {
    std::string scheme;
    std::vector<int> d_h;             // per included realization
    std::vector<double> alpha2_db_fs; // paired with d_h
    std::vector<double> alpha2_db_ps;
    std::vector<DhRow> dh_rows;
    std::vector<CcdfRow> alpha_rows; // strategy column distinguishes fsqp/psqp
    RunManifest manifest;
};

inline SignPredResult run_sign_pred(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const int workers = worker_count(cfg.workers);
    const auto c = rbc::build(cfg.curves[0].scheme, cfg.M);

    SignPredResult res;
    res.scheme = rbc::scheme_name(cfg.curves[0].scheme);
    res.manifest.config_echo = config_to_json(cfg);
    res.manifest.seed = cfg.seed;
    res.manifest.workers = workers;

    struct Trial {
        bool excluded = false;
        int d_h = 0;
        double a2_fs = 0.0, a2_ps = 0.0;
        detail::TrialCounters counters;
    };
    const long batch = std::max<long>(64, 8L * workers);
    for (long start = 0; start < cfg.trials; start += batch) {
        const long end = std::min(cfg.trials, start + batch);
        auto results = parallel_map<Trial>(start, end, workers, [&](long t) {
            Prng ch = make_stream(cfg.seed, static_cast<std::uint64_t>(t), StreamPurpose::Channel);
            Prng mg = make_stream(cfg.seed, static_cast<std::uint64_t>(t), StreamPurpose::Messages);
            Prng nz = make_stream(cfg.seed, static_cast<std::uint64_t>(t), StreamPurpose::Noise);
            Prng ce = make_stream(cfg.seed, static_cast<std::uint64_t>(t), StreamPurpose::CsiError);
            Trial tr;
            for (int attempt = 0;; ++attempt) {
                if (attempt > 100) throw Error("trial kept failing in the QP solver");
                const auto d = detail::draw_trial(cfg, static_cast<std::uint64_t>(t), 0.0, ch,
                                                  mg, nz, ce, tr.counters);
                const auto inst = cip::assemble(c, d.ws.gram, d.messages);
                if (static_cast<int>(inst.sf_indices.size()) > cfg.fsqp_cap) {
                    tr.excluded = true;
                    return tr;
                }
                try {
                    const auto psi_hat = cip::predict_signs(inst, d.ws.Hd);
                    const auto fs = cip::precode_fsqp_instance(inst, cfg.fsqp_cap);
                    const auto ps = cip::solve_with_signs(inst, psi_hat, Strategy::PsQp);
                    tr.d_h = cip::hamming(psi_hat, fs.psi);
                    tr.a2_fs = detail::db_of(fs.alpha2);
                    tr.a2_ps = detail::db_of(ps.alpha2);
                } catch (const QpNonconvergenceError&) {
                    ++tr.counters.solver_retries;
                    continue;
                } catch (const QpInfeasibleError&) {
                    ++tr.counters.solver_retries;
                    continue;
                } catch (const SingularSubblockError&) {
                    ++tr.counters.resamples;
                    continue;
                }
                return tr;
            }
        });
        for (const auto& tr : results) {
            res.manifest.resamples += tr.counters.resamples;
            res.manifest.solver_retries += tr.counters.solver_retries;
            if (tr.excluded) {
                ++res.manifest.excluded;
                continue;
            }
            res.d_h.push_back(tr.d_h);
            res.alpha2_db_fs.push_back(tr.a2_fs);
            res.alpha2_db_ps.push_back(tr.a2_ps);
        }
    }
    if (res.d_h.empty()) throw Error("sign prediction run produced no realizations");

    const long n = static_cast<long>(res.d_h.size());
    const int dmax = *std::max_element(res.d_h.begin(), res.d_h.end());
    for (int d = 0; d <= dmax; ++d) {
        DhRow row;
        row.scheme = res.scheme;
        row.d_h = d;
        row.count = std::count(res.d_h.begin(), res.d_h.end(), d);
        row.pmf = static_cast<double>(row.count) / n;
        row.ccdf = static_cast<double>(std::count_if(res.d_h.begin(), res.d_h.end(),
                                                     [d](int v) { return v > d; })) /
                   n;
        res.dh_rows.push_back(row);
    }

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto* v : {&res.alpha2_db_fs, &res.alpha2_db_ps})
        for (double x : *v) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    const double step = 0.25;
    lo = std::floor(lo / step) * step - step;
    hi = std::ceil(hi / step) * step + step;
    const std::array<std::pair<const char*, const std::vector<double>*>, 2> solvers{
        {{"fsqp", &res.alpha2_db_fs}, {"psqp", &res.alpha2_db_ps}}};
    for (const auto& [label, vec] : solvers) {
        std::vector<double> sorted = *vec;
        std::sort(sorted.begin(), sorted.end());
        for (double g = lo; g <= hi + 1e-12; g += step) {
            const auto over = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), g);
            res.alpha_rows.push_back(
                {res.scheme, label, g,
                 static_cast<double>(over) / static_cast<double>(sorted.size())});
        }
    }
    res.manifest.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

struct PropsResult {
    std::vector<PropRecord> records;
    RunManifest manifest;
};

// Analytical checks at the configured size; expected values carry the
// acceptance thresholds so the CLI output is self-contained.
inline PropsResult run_props(const ExperimentConfig& cfg) {
    if (cfg.K < 1 || cfg.Nt < cfg.K || cfg.M < 16 || cfg.trials < 1)
        throw ConfigError("props requires K <= Nt, M >= 16, trials > 0");
    const auto t0 = std::chrono::steady_clock::now();
    PropsResult res;
    res.manifest.config_echo = config_to_json(cfg);
    res.manifest.seed = cfg.seed;
    res.manifest.workers = worker_count(cfg.workers);

    const int L = static_cast<int>(std::lround(std::sqrt(static_cast<double>(cfg.M))));
    const double eta = static_cast<double>(cfg.Nt) / cfg.K;

    // Relaxed-objective mean against the closed-form lower bound.
    {
        const auto c = rbc::build_qam_ci(cfg.M);
        double sum = 0.0, sumsq = 0.0;
        long n = 0;
        for (long t = 0; t < cfg.trials; ++t) {
            Prng ch = make_stream(cfg.seed, static_cast<std::uint64_t>(t), StreamPurpose::Channel);
            Prng mg = make_stream(cfg.seed, static_cast<std::uint64_t>(t), StreamPurpose::Messages);
            const auto ws = analysis::sample_workspace(cfg.K, cfg.Nt, ch);
            const auto m = analysis::sample_messages(cfg.K, cfg.M, mg);
            const auto rel = analysis::relaxed_solve(cip::assemble(c, ws.gram, m));
            sum += rel.alpha_prime2;
            sumsq += rel.alpha_prime2 * rel.alpha_prime2;
            ++n;
        }
        const double mean = sum / n;
        const double se = std::sqrt(std::max(0.0, sumsq / n - mean * mean) / n);
        const double bound = analysis::prop1_bound(L, eta);
        res.records.push_back(
            {"prop1_relaxed_mean", mean, bound, n, se, mean >= bound - 3.0 * se});
    }
    {
        const auto rep = analysis::prop2_alignment(cfg.trials, cfg.K, cfg.Nt, cfg.M, cfg.seed);
        res.records.push_back({"prop2_alignment", rep.empirical_value, rep.bound_value,
                               rep.samples, rep.standard_error,
                               std::abs(rep.empirical_value - rep.bound_value) <= 0.05});
    }
    {
        const auto rep = analysis::prop3_alignment(cfg.trials, cfg.K, cfg.Nt, cfg.M, cfg.seed);
        res.records.push_back({"prop3_alignment", rep.empirical_value, rep.bound_value,
                               rep.samples, rep.standard_error,
                               std::abs(rep.empirical_value - rep.bound_value) <= 0.05});
    }
    // Constraint-removal reduction against its Schur-complement bound.
    {
        const auto c = rbc::build_meqam(cfg.M);
        long held = 0, n = 0;
        for (long t = 0; t < cfg.trials && n < 500; ++t) {
            Prng ch = make_stream(cfg.seed, static_cast<std::uint64_t>(t), StreamPurpose::Channel);
            Prng mg = make_stream(cfg.seed, static_cast<std::uint64_t>(t), StreamPurpose::Messages);
            Prng pt = make_stream(cfg.seed, static_cast<std::uint64_t>(t), StreamPurpose::Partition);
            const auto ws = analysis::sample_workspace(cfg.K, cfg.Nt, ch);
            const auto m = analysis::sample_messages(cfg.K, cfg.M, mg);
            const auto inst = cip::assemble(c, ws.gram, m);
            if (inst.sf_indices.empty() ||
                static_cast<int>(inst.sf_indices.size()) > cfg.fsqp_cap)
                continue;
            const auto star = cip::precode_fsqp_instance(inst, cfg.fsqp_cap);
            std::vector<int> sf = inst.sf_indices;
            for (size_t i = sf.size(); i > 1; --i) std::swap(sf[i - 1], sf[pt.next_below(i)]);
            sf.resize(static_cast<size_t>(std::llround(sf.size() / 2.0)));
            const auto r = analysis::prop4_delta(inst, channel::real_stack(star.s), star.alpha2,
                                                 sf, cfg.fsqp_cap);
            held += r.delta >= r.delta_lb - 1e-8;
            ++n;
        }
        res.records.push_back({"prop4_delta_bound", static_cast<double>(held) / n, 1.0, n, 0.0,
                               held == n});
    }
    res.manifest.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

// --------------------------------------------------------------------------
// Emit: CSV (12 significant digits, fixed column order), JSON mirror,
// manifest. Identical seed + config produce byte-identical CSV.
// --------------------------------------------------------------------------

namespace detail {

inline std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string fmt(long v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path.string());
    out << content;
    if (!out) throw Error("write failed: " + path.string());
}

inline void write_table(const std::filesystem::path& dir, const std::string& base,
                        const std::vector<std::string>& header,
                        const std::vector<std::vector<std::string>>& rows,
                        const nlohmann::json& jrecords) {
    if (rows.empty()) throw Error("no records to emit: " + base);
    std::filesystem::create_directories(dir);
    std::string csv;
    for (size_t i = 0; i < header.size(); ++i) {
        csv += header[i];
        csv += (i + 1 < header.size()) ? ',' : '\n';
    }
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            csv += row[i];
            csv += (i + 1 < row.size()) ? ',' : '\n';
        }
    }
    write_file(dir / (base + ".csv"), csv);
    nlohmann::json j;
    j["records"] = jrecords;
    write_file(dir / (base + ".json"), j.dump(2) + "\n");
}

} // namespace detail

inline const std::vector<std::string> kSerHeader = {
    "scheme", "strategy", "snr_db", "symbol_errors", "symbols", "ser", "stderr"};
inline const std::vector<std::string> kCsiHeader = {
    "scheme", "strategy", "snr_db", "sigma_e2_db", "symbol_errors", "symbols", "ser", "stderr"};
inline const std::vector<std::string> kCcdfHeader = {"scheme", "strategy", "alpha2_db", "ccdf"};
inline const std::vector<std::string> kDhHeader = {"scheme", "d_h", "count", "pmf", "ccdf"};
inline const std::vector<std::string> kPropsHeader = {"check", "empirical", "reference",
                                                      "samples", "stderr", "pass"};

inline void emit_ser(const std::vector<SerRecord>& records, const std::filesystem::path& dir,
                     const std::string& base = "ser") {
    std::vector<std::vector<std::string>> rows;
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : records) {
        rows.push_back({r.scheme, r.strategy, detail::fmt(r.snr_db),
                        detail::fmt(r.symbol_errors), detail::fmt(r.symbols), detail::fmt(r.ser),
                        detail::fmt(r.stderr_)});
        j.push_back({{"scheme", r.scheme},
                     {"strategy", r.strategy},
                     {"snr_db", r.snr_db},
                     {"symbol_errors", r.symbol_errors},
                     {"symbols", r.symbols},
                     {"ser", r.ser},
                     {"stderr", r.stderr_}});
    }
    detail::write_table(dir, base, kSerHeader, rows, j);
}

inline void emit_csi(const std::vector<SerRecord>& records, const std::filesystem::path& dir,
                     const std::string& base = "csi") {
    std::vector<std::vector<std::string>> rows;
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : records) {
        rows.push_back({r.scheme, r.strategy, detail::fmt(r.snr_db), detail::fmt(r.sigma_e2_db),
                        detail::fmt(r.symbol_errors), detail::fmt(r.symbols), detail::fmt(r.ser),
                        detail::fmt(r.stderr_)});
        j.push_back({{"scheme", r.scheme},
                     {"strategy", r.strategy},
                     {"snr_db", r.snr_db},
                     {"sigma_e2_db", r.sigma_e2_db},
                     {"symbol_errors", r.symbol_errors},
                     {"symbols", r.symbols},
                     {"ser", r.ser},
                     {"stderr", r.stderr_}});
    }
    detail::write_table(dir, base, kCsiHeader, rows, j);
}

inline void emit_ccdf(const std::vector<CcdfRow>& records, const std::filesystem::path& dir,
                      const std::string& base) {
    std::vector<std::vector<std::string>> rows;
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : records) {
        rows.push_back(
            {r.scheme, r.strategy, detail::fmt(r.alpha2_db), detail::fmt(r.ccdf)});
        j.push_back({{"scheme", r.scheme},
                     {"strategy", r.strategy},
                     {"alpha2_db", r.alpha2_db},
                     {"ccdf", r.ccdf}});
    }
    detail::write_table(dir, base, kCcdfHeader, rows, j);
}

inline void emit_dh(const std::vector<DhRow>& records, const std::filesystem::path& dir,
                    const std::string& base = "signpred_dh") {
    std::vector<std::vector<std::string>> rows;
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : records) {
        rows.push_back({r.scheme, detail::fmt(r.d_h), detail::fmt(r.count), detail::fmt(r.pmf),
                        detail::fmt(r.ccdf)});
        j.push_back({{"scheme", r.scheme},
                     {"d_h", r.d_h},
                     {"count", r.count},
                     {"pmf", r.pmf},
                     {"ccdf", r.ccdf}});
    }
    detail::write_table(dir, base, kDhHeader, rows, j);
}

inline void emit_props(const std::vector<PropRecord>& records, const std::filesystem::path& dir,
                       const std::string& base = "props") {
    std::vector<std::vector<std::string>> rows;
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : records) {
        rows.push_back({r.check, detail::fmt(r.empirical), detail::fmt(r.reference),
                        detail::fmt(r.samples), detail::fmt(r.stderr_),
                        r.pass ? "1" : "0"});
        j.push_back({{"check", r.check},
                     {"empirical", r.empirical},
                     {"reference", r.reference},
                     {"samples", r.samples},
                     {"stderr", r.stderr_},
                     {"pass", r.pass}});
    }
    detail::write_table(dir, base, kPropsHeader, rows, j);
}

inline void write_manifest(const RunManifest& m, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["config"] = m.config_echo;
    j["seed"] = m.seed;
    j["version"] = m.version;
    j["resamples"] = m.resamples;
    j["fsqp_fallbacks"] = m.fsqp_fallbacks;
    j["solver_retries"] = m.solver_retries;
    j["excluded"] = m.excluded;
    j["wall_time_s"] = m.wall_time_s;
    j["workers"] = m.workers;
    detail::write_file(dir / "manifest.json", j.dump(2) + "\n");
}

} // namespace ciforge::sim
