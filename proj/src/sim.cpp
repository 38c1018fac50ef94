#include "stoptree/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>

#include <json.hpp>

#include "stoptree/noise.hpp"
#include "stoptree/parallel.hpp"
#include "stoptree/pruning.hpp"
#include "stoptree/rng.hpp"

namespace stoptree {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// piecewise-linear interpolation through fixed knots
double pw_linear(double u, const std::vector<std::pair<double, double>>& knots) {
    if (u <= knots.front().first) return knots.front().second;
    if (u >= knots.back().first) return knots.back().second;
    for (size_t i = 1; i < knots.size(); ++i) {
        if (u <= knots[i].first) {
            const auto [x0, y0] = knots[i - 1];
            const auto [x1, y1] = knots[i];
            return y0 + (y1 - y0) * (u - x0) / (x1 - x0);
        }
    }
    return knots.back().second;
}

// Additive component registry. Representatives of four shape families on
// [-2.5, 2.5]: smooth, step, linear spline, and bump-sum ("hills").
double eval_component(const std::string& id, double u) {
    if (id == "smooth1") return 2.0 * std::sin(u);
    if (id == "smooth2") return 2.0 * std::cos(u);
    if (id == "smooth3") return 1.5 * std::sin(1.5 * u);
    if (id == "smooth4") return 2.0 * std::cos(0.7 * u + 1.0);
    if (id == "step1") return u < -1.0 ? -2.0 : (u < 0.0 ? -0.5 : (u < 1.0 ? 0.5 : 2.0));
    if (id == "step2") return u < -1.5 ? 1.0 : (u < 0.5 ? -1.0 : 2.0);
    if (id == "step3") return u < -0.5 ? -1.5 : (u < 1.5 ? 0.0 : 1.5);
    if (id == "step4") return u < -1.0 ? 0.0 : (u < 1.0 ? 2.0 : -1.0);
    if (id == "spline1") return pw_linear(u, {{-2.5, -2.0}, {-1.0, 1.0}, {0.0, -1.0}, {1.0, 2.0}, {2.5, 0.0}});
    if (id == "spline2") return pw_linear(u, {{-2.5, 1.5}, {-0.5, -1.5}, {0.5, 0.5}, {2.5, 2.0}});
    if (id == "spline3") return pw_linear(u, {{-2.5, 0.0}, {-1.5, 2.0}, {1.0, -2.0}, {2.5, 1.0}});
    if (id == "spline4") return pw_linear(u, {{-2.5, -1.0}, {0.0, 1.0}, {2.5, -1.0}});
    if (id == "hills1") return 2.0 * std::exp(-2.0 * (u - 1.0) * (u - 1.0)) + 1.5 * std::exp(-3.0 * (u + 1.5) * (u + 1.5));
    if (id == "hills2") return 2.5 * std::exp(-1.5 * u * u);
    if (id == "hills3") return 1.5 * std::exp(-2.0 * (u + 1.0) * (u + 1.0)) + 2.0 * std::exp(-4.0 * (u - 1.5) * (u - 1.5));
    if (id == "hills4") return 2.0 * std::exp(-(u - 0.5) * (u - 0.5));
    throw std::invalid_argument("unknown additive component: " + id);
}

} // namespace

DgpSpec make_dgp(const std::string& signal) {
    DgpSpec spec;
    spec.signal = signal;
    if (signal == "rectangular" || signal == "circular" || signal == "sine_cosine" ||
        signal == "elliptical") {
        spec.d = 5;
        spec.box_lo = 0.0;
        spec.box_hi = 1.0;
        spec.sigma_sq = 1.0;
    } else if (signal == "xor") {
        spec.d = 2;
        spec.box_lo = -1.0;
        spec.box_hi = 1.0;
        spec.sigma_sq = 0.1;
        spec.n_train = 500;
        spec.n_test = 500;
    } else if (signal == "additive_smooth" || signal == "additive_step" ||
               signal == "additive_linear" || signal == "additive_hills") {
        spec.d = 30;
        spec.box_lo = -2.5;
        spec.box_hi = 2.5;
        spec.sigma_sq = 1.0;
        const std::string stem = signal == "additive_smooth"
                                     ? "smooth"
                                     : (signal == "additive_step"
                                            ? "step"
                                            : (signal == "additive_linear" ? "spline" : "hills"));
        for (int i = 0; i < 4; ++i) spec.components[i] = stem + std::to_string(i + 1);
    } else {
        throw std::invalid_argument("unknown signal: " + signal);
    }
    return spec;
}

std::vector<std::string> registered_signals() {
    return {"rectangular", "circular",      "sine_cosine",     "elliptical",     "xor",
            "additive_smooth", "additive_step", "additive_linear", "additive_hills"};
}

std::string dgp_to_json(const DgpSpec& spec) {
    nlohmann::json doc;
    doc["signal"] = spec.signal;
    doc["d"] = spec.d;
    doc["n_train"] = spec.n_train;
    doc["n_test"] = spec.n_test;
    doc["box_lo"] = spec.box_lo;
    doc["box_hi"] = spec.box_hi;
    doc["sigma_sq"] = spec.sigma_sq;
    if (!spec.components[0].empty())
        doc["components"] = std::vector<std::string>(spec.components.begin(), spec.components.end());
    return doc.dump(2);
}

DgpSpec dgp_from_json(const std::string& text) {
    const nlohmann::json doc = nlohmann::json::parse(text);
    DgpSpec spec = make_dgp(doc.at("signal").get<std::string>());
    if (doc.contains("d")) spec.d = doc["d"].get<int>();
    if (doc.contains("n_train")) spec.n_train = doc["n_train"].get<int>();
    if (doc.contains("n_test")) spec.n_test = doc["n_test"].get<int>();
    if (doc.contains("box_lo")) spec.box_lo = doc["box_lo"].get<double>();
    if (doc.contains("box_hi")) spec.box_hi = doc["box_hi"].get<double>();
    if (doc.contains("sigma_sq")) spec.sigma_sq = doc["sigma_sq"].get<double>();
    if (doc.contains("components")) {
        const auto comps = doc["components"].get<std::vector<std::string>>();
        for (size_t i = 0; i < comps.size() && i < 4; ++i) spec.components[i] = comps[i];
    }
    return spec;
}

double eval_signal(const DgpSpec& spec, std::span<const double> x) {
    const std::string& s = spec.signal;
    if (s == "rectangular")
        return (x[0] >= 1.0 / 3 && x[0] <= 2.0 / 3 && x[1] >= 1.0 / 3 && x[1] <= 2.0 / 3) ? 1.0 : 0.0;
    if (s == "circular") {
        const double dx = x[0] - 0.5, dy = x[1] - 0.5;
        return dx * dx + dy * dy <= 1.0 / 16 ? 1.0 : 0.0;
    }
    if (s == "sine_cosine") return std::sin(x[0]) + std::cos(x[1]);
    if (s == "elliptical") {
        const double dx = x[0] - 0.5, dy = x[1] - 0.5;
        return 20.0 * std::exp(-5.0 * (dx * dx + dy * dy - 0.9 * dx * dy));
    }
    if (s == "xor") return sign(x[0]) * sign(x[1]);
    if (s.rfind("additive_", 0) == 0) {
        double v = 0.0;
        for (int i = 0; i < 4; ++i) v += eval_component(spec.components[i], x[i]);
        return v;
    }
    throw std::invalid_argument("unknown signal: " + s);
}

GeneratedData generate(const DgpSpec& spec, std::uint64_t seed) {
    if (spec.n_train < 1 || spec.n_test < 1 || spec.d < 1 || spec.sigma_sq < 0.0)
        throw std::invalid_argument("generate: bad spec");
    const Rng root(seed);
    const double sd = std::sqrt(spec.sigma_sq);

    auto draw = [&](int n, Rng x_rng, Rng e_rng, Dataset* ds, SimTruth* truth) {
        ds->n = n;
        ds->d = spec.d;
        ds->x.resize(static_cast<size_t>(n) * spec.d);
        ds->y.resize(n);
        truth->f_values.resize(n);
        truth->eps.resize(n);
        truth->sigma_sq = spec.sigma_sq;
        for (size_t i = 0; i < ds->x.size(); ++i)
            ds->x[i] = x_rng.next_uniform(spec.box_lo, spec.box_hi);
        for (int i = 0; i < n; ++i) {
            truth->f_values[i] = eval_signal(spec, ds->row(i));
            truth->eps[i] = e_rng.next_normal(0.0, sd);
            ds->y[i] = truth->f_values[i] + truth->eps[i];
        }
    };

    GeneratedData out;
    draw(spec.n_train, root.child(1), root.child(2), &out.train, &out.truth_train);
    draw(spec.n_test, root.child(3), root.child(4), &out.test, &out.truth_test);
    return out;
}

// ---- Monte Carlo driver -----------------------------------------------------

std::string to_string(Method m) {
    switch (m) {
        case Method::pruning: return "pruning";
        case Method::global: return "global";
        case Method::global_int: return "global-int";
        case Method::two_step: return "two-step";
        case Method::semi: return "semi";
        case Method::deep: return "deep";
        case Method::min_impurity: return "min-impurity";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    if (s == "pruning" || s == "prune") return Method::pruning;
    if (s == "global") return Method::global;
    if (s == "global-int" || s == "global_int") return Method::global_int;
    if (s == "two-step" || s == "two_step") return Method::two_step;
    if (s == "semi") return Method::semi;
    if (s == "deep") return Method::deep;
    if (s == "min-impurity" || s == "min_impurity") return Method::min_impurity;
    throw std::invalid_argument("unknown method: " + s);
}

double lower_median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    return v[(v.size() - 1) / 2];
}

namespace {

int non_interpolated_stop_step(const FlowTrace& trace, double kappa) {
    for (int s = 0; s <= trace.last(); ++s)
        if (trace.step(s).residual <= kappa) return s;
    return trace.last();
}

struct RunOutput {
    std::vector<RunRow> rows;
    double rho_glob_semi = std::numeric_limits<double>::quiet_NaN();
    double rho_prun_semi = std::numeric_limits<double>::quiet_NaN();
    std::vector<LedgerEntry> ledger;
};

double sse_of_predictions(const Dataset& eval, std::span<const double> target,
                          const std::function<double(std::span<const double>)>& predict_fn) {
    long double acc = 0.0L;
    for (int r = 0; r < eval.n; ++r) {
        const long double d = predict_fn(eval.row(r)) - target[r];
        acc += d * d;
    }
    return static_cast<double>(acc);
}

RunOutput run_one(const DgpSpec& spec, const McOptions& opts, int run_id, std::uint64_t child_seed) {
    RunOutput out;
    const GeneratedData data = generate(spec, child_seed);
    const Dataset& train = data.train;
    const Dataset& test = data.test;
    const std::span<const double> f_test(data.truth_test.f_values);
    const int nt = test.n;

    double kappa = opts.kappa;
    if (opts.kappa_auto) kappa = estimate_noise(train).sigma_sq_hat;

    const auto want = [&](Method m) {
        return std::find(opts.methods.begin(), opts.methods.end(), m) != opts.methods.end();
    };

    // The fully grown breadth-first tree doubles as the deep baseline, the
    // global flow, and the pruning master.
    const bool need_deep = want(Method::deep) || want(Method::pruning) ||
                           want(Method::global) || want(Method::global_int);
    GrowResult deep_res;
    TestFlowErrors gerr;
    if (need_deep) {
        deep_res = grow_deep(train);
        gerr = test_flow_errors(deep_res.trace, test, f_test);
    }

    auto push_row = [&](Method m, double sse, double oracle_sse, double leaves,
                        double oracle_leaves, double seconds) {
        RunRow row;
        row.run = run_id;
        row.method = m;
        row.rmse = std::sqrt(std::max(0.0, sse) / nt);
        row.oracle_rmse = std::isnan(oracle_sse)
                              ? std::numeric_limits<double>::quiet_NaN()
                              : std::sqrt(std::max(0.0, oracle_sse) / nt);
        row.leaves = leaves;
        row.oracle_leaves = oracle_leaves;
        row.seconds = seconds;
        row.efficiency = row.rmse > 0.0 && !std::isnan(row.oracle_rmse)
                             ? row.oracle_rmse / row.rmse
                             : std::numeric_limits<double>::quiet_NaN();
        out.rows.push_back(row);
    };

    const double nan = std::numeric_limits<double>::quiet_NaN();
    double prune_oracle_sse = nan;
    double semi_oracle_sse = nan;

    // full semi-global flow: needed for the semi oracle and the oracle ratios
    const bool need_semi_full = want(Method::semi);
    GrowResult semi_full;
    TestFlowErrors serr;
    if (need_semi_full) {
        StoppingConfig cfg;
        cfg.kappa = kappa;
        cfg.mode = GrowthMode::semi_global;
        cfg.continue_after_stop = true;
        semi_full = grow(train, cfg);
        serr = test_flow_errors(semi_full.trace, test, f_test);
        int arg = 0;
        semi_oracle_sse = serr.min_over_generations(&arg);
    }

    for (Method m : opts.methods) {
        switch (m) {
            case Method::deep: {
                const int last = deep_res.trace.last();
                push_row(m, gerr.sse[last], nan, deep_res.trace.step(last).k, nan,
                         deep_res.report.seconds);
                break;
            }
            case Method::pruning: {
                PrunedFit fit = prune_fit(train, Rng(child_seed).child(101).next_u64(), &deep_res);
                const std::vector<double> full_sse = path_sse(fit.path, test, f_test);
                size_t best = 0;
                for (size_t i = 1; i < full_sse.size(); ++i)
                    if (full_sse[i] < full_sse[best]) best = i;
                prune_oracle_sse = full_sse[best];
                const std::vector<double> chosen_sse = path_sse(fit.filtered, test, f_test);
                push_row(m, chosen_sse[fit.chosen_pos], prune_oracle_sse,
                         fit.leaf_count(), fit.path.entries[best].leaves, fit.seconds);
                break;
            }
            case Method::global: {
                StoppingConfig cfg;
                cfg.kappa = kappa;
                cfg.mode = GrowthMode::global;
                const GrowResult timed = grow(train, cfg); // standalone run for honest timing
                const int stop = non_interpolated_stop_step(deep_res.trace, kappa);
                double t_star = 0.0;
                const double oracle_sse = gerr.min_over_flow(&t_star);
                push_row(m, gerr.sse[stop], oracle_sse, deep_res.trace.step(stop).k, t_star,
                         timed.report.seconds);
                break;
            }
            case Method::global_int: {
                StoppingConfig cfg;
                cfg.kappa = kappa;
                cfg.mode = GrowthMode::global_interpolated;
                const GrowResult timed = grow(train, cfg);
                const StopReport rep = interpolated_stop(deep_res.trace, kappa);
                double sse;
                if (rep.step_k == rep.step_l) {
                    sse = gerr.sse[rep.step_k];
                } else {
                    const double A = gerr.sse[rep.step_k], C = gerr.sse[rep.step_l];
                    const double B = gerr.seg_dot[rep.step_k];
                    const double w = 1.0 - rep.alpha;
                    sse = w * w * A + 2.0 * rep.alpha * w * B + rep.alpha * rep.alpha * C;
                }
                double t_star = 0.0;
                const double oracle_sse = gerr.min_over_flow(&t_star);
                push_row(m, sse, oracle_sse, rep.k_at_stop, t_star, timed.report.seconds);
                break;
            }
            case Method::two_step: {
                PrunedFit fit = two_step_fit(train, kappa, Rng(child_seed).child(102).next_u64());
                const std::vector<double> full_sse = path_sse(fit.path, test, f_test);
                size_t best = 0;
                for (size_t i = 1; i < full_sse.size(); ++i)
                    if (full_sse[i] < full_sse[best]) best = i;
                const std::vector<double> chosen_sse = path_sse(fit.filtered, test, f_test);
                push_row(m, chosen_sse[fit.chosen_pos], full_sse[best], fit.leaf_count(),
                         fit.path.entries[best].leaves, fit.seconds);
                break;
            }
            case Method::semi: {
                StoppingConfig cfg;
                cfg.kappa = kappa;
                cfg.mode = GrowthMode::semi_global;
                const GrowResult timed = grow(train, cfg);
                const int stop = non_interpolated_stop_step(semi_full.trace, kappa);
                int arg = 0;
                const double oracle_sse = serr.min_over_generations(&arg);
                push_row(m, serr.sse[stop], oracle_sse, semi_full.trace.step(stop).k,
                         serr.k[arg], timed.report.seconds);
                break;
            }
            case Method::min_impurity: {
                const GrowResult fit = grow_min_impurity_baseline(train, opts.min_impurity_threshold);
                const int last = fit.trace.last();
                const TreeStage st{fit.trace.tree.get(), last};
                const double sse = sse_of_predictions(test, f_test, [&](std::span<const double> x) {
                    return predict(st, x);
                });
                push_row(m, sse, nan, fit.trace.step(last).k, nan, fit.report.seconds);
                break;
            }
        }
    }

    if (need_semi_full && semi_oracle_sse > 0.0) {
        if (need_deep) out.rho_glob_semi = std::sqrt(gerr.min_over_flow() / semi_oracle_sse);
        if (!std::isnan(prune_oracle_sse))
            out.rho_prun_semi = std::sqrt(prune_oracle_sse / semi_oracle_sse);
    }
    if (opts.diagnostics && need_deep && deep_res.trace.tree) {
        const FlowDiagnostics diag(deep_res.trace, data.truth_train);
        out.ledger.push_back(diag.check_distance_inequality(kappa));
        out.ledger.push_back(diag.check_oracle_factor4());
    }
    return out;
}

} // namespace

McSummary run_monte_carlo(const DgpSpec& spec, const McOptions& opts, std::uint64_t seed) {
    if (opts.M < 1) throw std::invalid_argument("run_monte_carlo: M must be >= 1");
    McSummary summary;
    summary.spec = spec;
    summary.seed = seed;
    summary.M = opts.M;
    summary.kappa = opts.kappa;
    summary.kappa_auto = opts.kappa_auto;

    std::vector<RunOutput> outputs(opts.M);
    std::vector<std::string> failures(opts.M);
    parallel_for(opts.M, opts.threads, [&](int r) {
        try {
            outputs[r] = run_one(spec, opts, r + 1, seed ^ static_cast<std::uint64_t>(r + 1));
        } catch (const std::exception& e) {
            failures[r] = e.what();
        }
    });
    for (int r = 0; r < opts.M; ++r)
        if (!failures[r].empty())
            throw std::runtime_error("replication " + std::to_string(r + 1) + " failed: " + failures[r]);

    for (int r = 0; r < opts.M; ++r) {
        RunOutput& o = outputs[r];
        summary.rows.insert(summary.rows.end(), o.rows.begin(), o.rows.end());
        if (!std::isnan(o.rho_glob_semi)) summary.rho_glob_semi.push_back(o.rho_glob_semi);
        if (!std::isnan(o.rho_prun_semi)) summary.rho_prun_semi.push_back(o.rho_prun_semi);
        for (const LedgerEntry& e : o.ledger) summary.ledger.push_back({r + 1, e});
    }

    for (Method m : opts.methods) {
        std::vector<double> rmse, orc, leaves, oleaves, secs, eff;
        for (const RunRow& row : summary.rows) {
            if (row.method != m) continue;
            rmse.push_back(row.rmse);
            leaves.push_back(row.leaves);
            secs.push_back(row.seconds);
            if (!std::isnan(row.oracle_rmse)) {
                orc.push_back(row.oracle_rmse);
                oleaves.push_back(row.oracle_leaves);
                eff.push_back(row.efficiency);
            }
        }
        MethodSummary ms;
        ms.method = m;
        ms.rmse = lower_median(rmse);
        ms.oracle_rmse = lower_median(orc);
        ms.leaves = lower_median(leaves);
        ms.oracle_leaves = lower_median(oleaves);
        ms.seconds = lower_median(secs);
        ms.efficiency = lower_median(eff);
        summary.medians.push_back(ms);
    }
    return summary;
}

void write_rows_csv(const McSummary& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "run,method,rmse,oracle_rmse,leaves,oracle_leaves,seconds\n";
    char buf[64];
    auto emit = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        out << buf;
    };
    for (const RunRow& r : s.rows) {
        out << r.run << ',' << to_string(r.method) << ',';
        emit(r.rmse);
        out << ',';
        emit(r.oracle_rmse);
        out << ',';
        emit(r.leaves);
        out << ',';
        emit(r.oracle_leaves);
        out << ',';
        emit(r.seconds);
        out << '\n';
    }
}

std::string summary_json(const McSummary& s) {
    nlohmann::json doc;
    doc["signal"] = s.spec.signal;
    doc["d"] = s.spec.d;
    doc["n_train"] = s.spec.n_train;
    doc["n_test"] = s.spec.n_test;
    doc["sigma_sq"] = s.spec.sigma_sq;
    doc["M"] = s.M;
    doc["seed"] = s.seed;
    doc["kappa_policy"] = s.kappa_auto ? "auto-nn" : "fixed";
    if (!s.kappa_auto) doc["kappa"] = s.kappa;
    nlohmann::json methods = nlohmann::json::object();
    for (const MethodSummary& ms : s.medians) {
        nlohmann::json jm;
        jm["median_rmse"] = ms.rmse;
        jm["median_oracle_rmse"] = ms.oracle_rmse;
        jm["median_leaves"] = ms.leaves;
        jm["median_oracle_leaves"] = ms.oracle_leaves;
        jm["median_seconds"] = ms.seconds;
        jm["median_efficiency"] = ms.efficiency;
        methods[to_string(ms.method)] = std::move(jm);
    }
    doc["methods"] = std::move(methods);
    if (!s.rho_glob_semi.empty()) {
        doc["rho"]["glob_semi_median"] = lower_median(s.rho_glob_semi);
        doc["rho"]["prun_semi_median"] = lower_median(s.rho_prun_semi);
    }
    return doc.dump(2);
}

void write_ledger_jsonl(const McSummary& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const LedgerRow& row : s.ledger) {
        nlohmann::json j;
        j["run"] = row.run;
        j["inequality"] = row.entry.name;
        j["pass"] = row.entry.pass;
        j["lhs"] = row.entry.lhs;
        j["rhs"] = row.entry.rhs;
        j["slack"] = row.entry.slack;
        out << j.dump() << '\n';
    }
}

XorReport xor_demo(int n, double sigma_sq, double kappa, double threshold, std::uint64_t seed) {
    DgpSpec spec = make_dgp("xor");
    spec.n_train = n;
    spec.n_test = n;
    spec.sigma_sq = sigma_sq;
    const GeneratedData data = generate(spec, seed);
    const std::span<const double> f_test(data.truth_test.f_values);

    XorReport rep;
    {
        StoppingConfig cfg;
        cfg.kappa = kappa;
        cfg.mode = GrowthMode::semi_global;
        const GrowResult semi = grow(data.train, cfg);
        const int stop = semi.trace.stop_step >= 0 ? semi.trace.stop_step : semi.trace.last();
        const TreeStage st{semi.trace.tree.get(), stop};
        rep.semi_leaves = semi.trace.step(stop).k;
        const double sse = sse_of_predictions(data.test, f_test, [&](std::span<const double> x) {
            return stop == 0 ? 0.0 : predict(st, x);
        });
        rep.semi_rmse = std::sqrt(sse / data.test.n);
    }
    {
        const GrowResult base = grow_min_impurity_baseline(data.train, threshold);
        const int last = base.trace.last();
        const TreeStage st{base.trace.tree.get(), last};
        rep.baseline_leaves = base.trace.step(last).k;
        const double sse = sse_of_predictions(data.test, f_test, [&](std::span<const double> x) {
            return predict(st, x);
        });
        rep.baseline_rmse = std::sqrt(sse / data.test.n);
    }
    return rep;
}

} // namespace stoptree
