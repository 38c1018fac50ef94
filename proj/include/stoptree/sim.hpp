#pragma once
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stoptree/dataset.hpp"
#include "stoptree/growth.hpp"
#include "stoptree/oracle.hpp"

namespace stoptree {

// Data-generating process: i.i.d. uniform design on a box, additive Gaussian
// noise, and a registered signal function.
struct DgpSpec {
    std::string signal = "sine_cosine";
    int d = 5;
    int n_train = 1000;
    int n_test = 1000;
    double box_lo = 0.0;
    double box_hi = 1.0;
    double sigma_sq = 1.0;
    // component ids for the additive signals (one per coordinate 1..4)
    std::array<std::string, 4> components{};
};

/// Spec with per-signal defaults (dimension, box, noise, sample sizes).
DgpSpec make_dgp(const std::string& signal);

std::vector<std::string> registered_signals();

std::string dgp_to_json(const DgpSpec& spec);
DgpSpec dgp_from_json(const std::string& text);

double eval_signal(const DgpSpec& spec, std::span<const double> x);

struct GeneratedData {
    Dataset train, test;
    SimTruth truth_train, truth_test;
};

/// Draw one train/test pair from disjoint substreams of `seed`.
GeneratedData generate(const DgpSpec& spec, std::uint64_t seed);

// ---- Monte Carlo driver -----------------------------------------------------

enum class Method { pruning, global, global_int, two_step, semi, deep, min_impurity };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct RunRow {
    int run = 0;
    Method method = Method::global;
    double rmse = 0.0;
    double oracle_rmse = 0.0;
    double leaves = 0.0;
    double oracle_leaves = 0.0;
    double seconds = 0.0;
    double efficiency = 0.0;
};

struct McOptions {
    int M = 100;
    double kappa = 1.0;      // used when kappa_auto is false
    bool kappa_auto = false; // nearest-neighbour estimate per replication
    std::vector<Method> methods = {Method::pruning, Method::global,  Method::global_int,
                                   Method::two_step, Method::semi,   Method::deep};
    int threads = 1;
    double min_impurity_threshold = 0.1;
    bool diagnostics = false; // emit per-run inequality ledger rows
};

struct MethodSummary {
    Method method = Method::global;
    double rmse = 0.0, oracle_rmse = 0.0, leaves = 0.0, oracle_leaves = 0.0, seconds = 0.0,
           efficiency = 0.0;
};

struct LedgerRow {
    int run = 0;
    LedgerEntry entry;
};

struct McSummary {
    DgpSpec spec;
    std::uint64_t seed = 0;
    int M = 0;
    double kappa = 0.0;
    bool kappa_auto = false;
    std::vector<RunRow> rows; // one row per (run, method), run-major
    std::vector<double> rho_glob_semi, rho_prun_semi; // per run
    std::vector<LedgerRow> ledger; // filled when diagnostics are requested
    std::vector<MethodSummary> medians;
};

/// Seeded replications (child seed = seed xor run), evaluated on held-out
/// test data against the true signal; medians use the lower-median
/// convention. A failing replication aborts the whole summary.
McSummary run_monte_carlo(const DgpSpec& spec, const McOptions& opts, std::uint64_t seed);

void write_rows_csv(const McSummary& s, const std::string& path);
std::string summary_json(const McSummary& s);
void write_ledger_jsonl(const McSummary& s, const std::string& path);

/// Lower median: element at index (size-1)/2 of the sorted sample.
double lower_median(std::vector<double> v);

// ---- XOR demonstration ------------------------------------------------------

struct XorReport {
    double semi_leaves = 0.0;
    double semi_rmse = 0.0;
    double baseline_leaves = 0.0;
    double baseline_rmse = 0.0;
};

/// Semi-global early stopping vs the minimum-impurity-decrease baseline on
/// the XOR signal.
XorReport xor_demo(int n, double sigma_sq, double kappa, double threshold, std::uint64_t seed);

} // namespace stoptree
