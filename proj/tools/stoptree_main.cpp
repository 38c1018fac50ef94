// stoptree: regression trees with residual-based early stopping.
//
// Subcommands:
//   fit       fit a tree to CSV data and write the model as JSON
//   simulate  run seeded Monte Carlo benchmarks on built-in signals
//   bench     time the fitting methods on a built-in signal
//
// Exit codes: 0 success, 1 usage/config, 2 I/O, 3 CSV parse, 4 internal.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stoptree/dataset.hpp"
#include "stoptree/growth.hpp"
#include "stoptree/noise.hpp"
#include "stoptree/parallel.hpp"
#include "stoptree/pruning.hpp"
#include "stoptree/rng.hpp"
#include "stoptree/sim.hpp"
#include "stoptree/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stoptree;

namespace {

struct CliError : std::runtime_error {
    int code;
    CliError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

void ensure_out_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw CliError(2, "cannot create output directory " + out + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw CliError(2, "cannot write " + path);
    f << text;
}

double resolve_kappa(const std::string& kappa_arg, const Dataset& train, bool* auto_used) {
    *auto_used = false;
    if (kappa_arg == "auto") {
        *auto_used = true;
        return estimate_noise(train).sigma_sq_hat;
    }
    try {
        size_t pos = 0;
        const double v = std::stod(kappa_arg, &pos);
        if (pos != kappa_arg.size() || !(v >= 0.0)) throw std::invalid_argument("bad");
        return v;
    } catch (...) {
        throw CliError(1, "--kappa must be 'auto' or a number >= 0, got '" + kappa_arg + "'");
    }
}

// ---- fit --------------------------------------------------------------------

struct FitArgs {
    std::string train_path, test_path, target = "target";
    std::string method = "global";
    std::string kappa = "auto";
    std::uint64_t seed = 0;
    std::string out = ".";
    char delimiter = ',';
    bool no_header = false;
    double min_gain = 0.1;
};

int cmd_fit(const FitArgs& a) {
    CsvOptions copts;
    copts.delimiter = a.delimiter;
    copts.header = !a.no_header;
    const Dataset train = load_csv(a.train_path, a.target, copts);
    std::optional<Dataset> test;
    if (!a.test_path.empty()) test = load_csv(a.test_path, a.target, copts);

    bool kappa_auto = false;
    const double kappa = resolve_kappa(a.kappa, train, &kappa_auto);
    const Method method = method_from_string(a.method);

    ensure_out_dir(a.out);
    const auto t0 = std::chrono::steady_clock::now();

    json model;
    double leaves = 0.0, train_resid = 0.0;
    std::function<double(std::span<const double>)> predict_fn;

    auto grow_cfg = [&](GrowthMode mode) {
        StoppingConfig cfg;
        cfg.kappa = kappa;
        cfg.mode = mode;
        return cfg;
    };

    switch (method) {
        case Method::global:
        case Method::global_int:
        case Method::semi:
        case Method::deep:
        case Method::min_impurity: {
            GrowResult res;
            if (method == Method::deep)
                res = grow_deep(train);
            else if (method == Method::min_impurity)
                res = grow_min_impurity_baseline(train, a.min_gain);
            else if (method == Method::global)
                res = grow(train, grow_cfg(GrowthMode::global));
            else if (method == Method::global_int)
                res = grow(train, grow_cfg(GrowthMode::global_interpolated));
            else
                res = grow(train, grow_cfg(GrowthMode::semi_global));

            const StopReport& rep = res.report;
            leaves = rep.k_at_stop;
            train_resid = rep.residual_at_stop;
            if (res.trace.tree) {
                model = json::parse(tree_to_json(*res.trace.tree, rep.step_l));
            } else {
                model["schema_version"] = 1;
                model["n"] = train.n;
                model["d"] = train.d;
                model["nodes"] = json::array();
            }
            model["stop"] = {{"cause", to_string(rep.cause)},
                             {"tau", rep.tau},
                             {"alpha", rep.alpha},
                             {"step_k", rep.step_k},
                             {"step_l", rep.step_l},
                             {"residual", rep.residual_at_stop}};
            const FlowTrace* tr = &res.trace;
            auto shared = std::make_shared<GrowResult>(std::move(res));
            tr = &shared->trace;
            predict_fn = [shared, tr](std::span<const double> x) {
                const StopReport& r = shared->report;
                if (!tr->tree || r.step_l == 0) return 0.0;
                const double pl = predict({tr->tree.get(), r.step_l}, x);
                if (!r.interpolated || r.alpha == 0.0) return pl;
                const double pk =
                    r.step_k == 0 ? 0.0 : predict({tr->tree.get(), r.step_k}, x);
                return (1.0 - r.alpha) * pk + r.alpha * pl;
            };
            break;
        }
        case Method::pruning:
        case Method::two_step: {
            auto fit = std::make_shared<PrunedFit>(
                method == Method::pruning ? prune_fit(train, Rng(a.seed).child(101).next_u64())
                                          : two_step_fit(train, kappa, Rng(a.seed).child(102).next_u64()));
            leaves = fit->leaf_count();
            train_resid = fit->train_residual();
            model = json::parse(tree_to_json(*fit->tree, fit->stage));
            json pruned = json::array();
            const int h = fit->chosen().h;
            for (int id = 0; id < fit->tree->node_count(); ++id)
                if (fit->filtered.collapse_entry[id] <= h) pruned.push_back(id);
            model["pruned"] = std::move(pruned);
            model["lambda_opt"] = fit->cv.lambda_opt;
            predict_fn = [fit](std::span<const double> x) { return fit->predict_row(x); };

            json cv;
            cv["lambda_grid"] = fit->cv.lambda_grid;
            cv["mean_mse"] = fit->cv.mean_mse;
            cv["fold_mse"] = fit->cv.fold_mse;
            cv["chosen"] = fit->cv.chosen;
            write_text((fs::path(a.out) / "cv_selection.json").string(), cv.dump(2));
            break;
        }
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    model["method"] = to_string(method);
    model["kappa"] = kappa;
    model["kappa_policy"] = kappa_auto ? "auto-nn" : "fixed";
    write_text((fs::path(a.out) / "model.json").string(), model.dump(2));

    json metrics;
    metrics["method"] = to_string(method);
    metrics["kappa"] = kappa;
    metrics["leaves"] = leaves;
    metrics["train_residual"] = train_resid;
    metrics["seconds"] = seconds;
    metrics["n"] = train.n;
    metrics["d"] = train.d;

    std::printf("method=%s kappa=%.6g leaves=%.6g train_residual=%.6g seconds=%.3f\n",
                to_string(method).c_str(), kappa, leaves, train_resid, seconds);
    if (test) {
        long double sse = 0.0L;
        for (int i = 0; i < test->n; ++i) {
            const long double d = predict_fn(test->row(i)) - test->y[i];
            sse += d * d;
        }
        const double rmse = std::sqrt(static_cast<double>(sse) / test->n);
        metrics["test_rmse"] = rmse;
        std::printf("test_rmse=%.6g\n", rmse);
    }
    write_text((fs::path(a.out) / "metrics.json").string(), metrics.dump(2));
    return 0;
}

// ---- simulate -----------------------------------------------------------------

struct SimArgs {
    std::string signal = "sine_cosine";
    std::string spec_json;
    int M = 100;
    std::uint64_t seed = 0;
    std::string kappa = "sigma2";
    std::string out = ".";
    bool plots = false;
    bool diagnostics = false;
    int threads = 0;
    int n = 0, d = 0;
    double sigma_sq = -1.0;
    std::vector<std::string> methods;
};

int cmd_simulate(const SimArgs& a) {
    ensure_out_dir(a.out);
    DgpSpec spec;
    if (!a.spec_json.empty()) {
        std::ifstream in(a.spec_json);
        if (!in) throw CliError(2, "cannot read " + a.spec_json);
        std::stringstream ss;
        ss << in.rdbuf();
        spec = dgp_from_json(ss.str());
    } else {
        spec = make_dgp(a.signal);
    }
    if (a.n > 0) spec.n_train = spec.n_test = a.n;
    if (a.d > 0) spec.d = a.d;
    if (a.sigma_sq >= 0.0) spec.sigma_sq = a.sigma_sq;

    if (spec.signal == "xor") {
        // paired comparison of semi-global stopping and the local baseline
        const double kappa = a.kappa == "sigma2" ? spec.sigma_sq : std::stod(a.kappa);
        std::vector<XorReport> reps(a.M);
        const int threads = a.threads > 0 ? a.threads : default_threads();
        parallel_for(a.M, threads, [&](int r) {
            reps[r] = xor_demo(spec.n_train, spec.sigma_sq, kappa, 0.1,
                               a.seed ^ static_cast<std::uint64_t>(r + 1));
        });
        std::ofstream csv(fs::path(a.out) / "xor_runs.csv");
        if (!csv) throw CliError(2, "cannot write xor_runs.csv");
        csv << "run,semi_leaves,semi_rmse,baseline_leaves,baseline_rmse\n";
        char buf[256];
        std::vector<double> sl, sr, br;
        int wins = 0;
        for (int r = 0; r < a.M; ++r) {
            std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", r + 1,
                          reps[r].semi_leaves, reps[r].semi_rmse, reps[r].baseline_leaves,
                          reps[r].baseline_rmse);
            csv << buf;
            sl.push_back(reps[r].semi_leaves);
            sr.push_back(reps[r].semi_rmse);
            br.push_back(reps[r].baseline_rmse);
            if (reps[r].semi_rmse < reps[r].baseline_rmse) ++wins;
        }
        json rep;
        rep["signal"] = "xor";
        rep["M"] = a.M;
        rep["seed"] = a.seed;
        rep["kappa"] = kappa;
        rep["median_semi_leaves"] = lower_median(sl);
        rep["median_semi_rmse"] = lower_median(sr);
        rep["median_baseline_rmse"] = lower_median(br);
        rep["semi_win_rate"] = static_cast<double>(wins) / a.M;
        write_text((fs::path(a.out) / "xor_report.json").string(), rep.dump(2));
        std::printf("xor: semi median leaves=%.6g, win rate=%.3f\n", lower_median(sl),
                    static_cast<double>(wins) / a.M);
        return 0;
    }

    McOptions opts;
    opts.M = a.M;
    opts.diagnostics = a.diagnostics;
    opts.threads = a.threads > 0 ? a.threads : default_threads();
    if (a.kappa == "auto") {
        opts.kappa_auto = true;
    } else if (a.kappa == "sigma2") {
        opts.kappa = spec.sigma_sq;
    } else {
        opts.kappa = std::stod(a.kappa);
    }
    if (!a.methods.empty()) {
        opts.methods.clear();
        for (const auto& m : a.methods) opts.methods.push_back(method_from_string(m));
    }

    const McSummary summary = run_monte_carlo(spec, opts, a.seed);
    write_rows_csv(summary, (fs::path(a.out) / "runs.csv").string());
    write_text((fs::path(a.out) / "summary.json").string(), summary_json(summary));
    write_text((fs::path(a.out) / "dgp.json").string(), dgp_to_json(spec));
    if (a.diagnostics)
        write_ledger_jsonl(summary, (fs::path(a.out) / "ledger.jsonl").string());

    if (a.plots) {
        std::vector<std::string> labels;
        std::vector<std::vector<double>> eff;
        for (Method m : opts.methods) {
            if (m == Method::deep || m == Method::min_impurity) continue;
            std::vector<double> v;
            for (const RunRow& row : summary.rows)
                if (row.method == m && !std::isnan(row.efficiency)) v.push_back(row.efficiency);
            if (!v.empty()) {
                labels.push_back(to_string(m));
                eff.push_back(std::move(v));
            }
        }
        if (!labels.empty())
            write_boxplot_svg((fs::path(a.out) / (a.signal + "_efficiency.svg")).string(),
                              "Relative efficiency: " + a.signal, labels, eff);
    }
    std::printf("wrote %s/runs.csv and summary.json (M=%d, signal=%s)\n", a.out.c_str(), a.M,
                a.signal.c_str());
    return 0;
}

// ---- bench --------------------------------------------------------------------

struct BenchArgs {
    std::string signal = "sine_cosine";
    int n = 1000;
    int M = 5;
    std::uint64_t seed = 0;
    std::string out = ".";
    int threads = 0;
};

int cmd_bench(const BenchArgs& a) {
    ensure_out_dir(a.out);
    DgpSpec spec = make_dgp(a.signal);
    spec.n_train = spec.n_test = a.n;
    McOptions opts;
    opts.M = a.M;
    opts.kappa = spec.sigma_sq;
    opts.threads = a.threads > 0 ? a.threads : default_threads();
    const McSummary summary = run_monte_carlo(spec, opts, a.seed);

    std::ofstream csv(fs::path(a.out) / "bench.csv");
    if (!csv) throw CliError(2, "cannot write bench.csv");
    csv << "method,median_seconds,median_leaves,median_rmse\n";
    char buf[256];
    for (const MethodSummary& ms : summary.medians) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.17g,%.17g\n", to_string(ms.method).c_str(),
                      ms.seconds, ms.leaves, ms.rmse);
        csv << buf;
        std::printf("%-12s %8.3fs  leaves=%g\n", to_string(ms.method).c_str(), ms.seconds,
                    ms.leaves);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regression trees with residual-based early stopping"};
    app.require_subcommand(1);

    FitArgs fit;
    auto* cfit = app.add_subcommand("fit", "fit a tree to CSV data");
    cfit->add_option("--train", fit.train_path, "training CSV")->required();
    cfit->add_option("--test", fit.test_path, "held-out CSV for test RMSE");
    cfit->add_option("--target", fit.target, "target column name or index");
    cfit->add_option("--method", fit.method,
                     "global|global-int|semi|prune|two-step|deep|min-impurity");
    cfit->add_option("--kappa", fit.kappa, "'auto' (nearest-neighbour) or a value");
    cfit->add_option("--seed", fit.seed, "rng seed");
    cfit->add_option("--out", fit.out, "output directory");
    cfit->add_option("--delimiter", fit.delimiter, "CSV delimiter");
    cfit->add_flag("--no-header", fit.no_header, "CSV has no header row");
    cfit->add_option("--min-gain", fit.min_gain, "threshold for min-impurity");

    SimArgs sim;
    auto* csim = app.add_subcommand("simulate", "Monte Carlo benchmark on a built-in signal");
    csim->add_option("--signal", sim.signal, "signal id (see docs)");
    csim->add_option("--spec-json", sim.spec_json, "DGP spec as a JSON document");
    csim->add_option("--M", sim.M, "number of replications");
    csim->add_option("--seed", sim.seed, "rng seed");
    csim->add_option("--kappa", sim.kappa, "'sigma2' (true value), 'auto', or a number");
    csim->add_option("--out", sim.out, "output directory");
    csim->add_flag("--plots", sim.plots, "emit SVG boxplots");
    csim->add_flag("--diagnostics", sim.diagnostics, "emit per-run inequality ledger rows");
    csim->add_option("--threads", sim.threads, "worker threads (0 = auto)");
    csim->add_option("--n", sim.n, "override train/test sample size");
    csim->add_option("--d", sim.d, "override dimension");
    csim->add_option("--sigma2", sim.sigma_sq, "override noise variance");
    csim->add_option("--methods", sim.methods, "subset of methods to run");

    BenchArgs bench;
    auto* cbench = app.add_subcommand("bench", "compare method run times");
    cbench->add_option("--signal", bench.signal, "signal id");
    cbench->add_option("--n", bench.n, "train/test sample size");
    cbench->add_option("--M", bench.M, "replications");
    cbench->add_option("--seed", bench.seed, "rng seed");
    cbench->add_option("--out", bench.out, "output directory");
    cbench->add_option("--threads", bench.threads, "worker threads (0 = auto)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() != 0)
            std::cerr << json{{"error", e.what()}, {"code", 1}}.dump() << "\n";
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (cfit->parsed()) return cmd_fit(fit);
        if (csim->parsed()) return cmd_simulate(sim);
        if (cbench->parsed()) return cmd_bench(bench);
        return 1;
    } catch (const CliError& e) {
        std::cerr << json{{"error", e.what()}, {"code", e.code}}.dump() << "\n";
        return e.code;
    } catch (const CsvError& e) {
        std::cerr << json{{"error", e.what()}, {"code", 3}}.dump() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << json{{"error", e.what()}, {"code", 2}}.dump() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << json{{"error", e.what()}, {"code", 1}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", e.what()}, {"code", 4}}.dump() << "\n";
        return 4;
    }
}
