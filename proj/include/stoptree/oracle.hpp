#pragma once
#include <string>
#include <vector>

#include "stoptree/growth.hpp"

namespace stoptree {

/// Simulation ground truth: Y = f(X) + eps, with the true noise level.
struct SimTruth {
    std::vector<double> f_values;
    std::vector<double> eps;
    double sigma_sq = 0.0;
};

struct ErrorDecomposition {
    double t = 0.0;
    double approx_sq = 0.0; // ||(Id - Pi_t) f||_n^2
    double stoch_sq = 0.0;  // ||Pi_t eps||_n^2
    double cross = 0.0;     // <Pi_t eps, (Id - Pi_t) f>_n
    double loss = 0.0;      // ||F_t - f||_n^2, evaluated directly
};

struct LedgerEntry {
    std::string name;
    bool pass = false;
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0;
};

// Per-trace diagnostics requiring known f and eps. Caches the per-step
// approximation and stochastic errors once, then answers interpolated
// queries through the segment closed forms.
class FlowDiagnostics {
  public:
    FlowDiagnostics(const FlowTrace& trace, const SimTruth& truth);
    // the trace and truth are referenced, not copied; temporaries would dangle
    FlowDiagnostics(FlowTrace&&, const SimTruth&) = delete;
    FlowDiagnostics(const FlowTrace&, SimTruth&&) = delete;
    FlowDiagnostics(FlowTrace&&, SimTruth&&) = delete;

    const FlowTrace& trace() const { return *trace_; }

    // per-step arrays, indexed like trace.steps
    std::vector<double> a_sq;     // approximation error squared
    std::vector<double> s_sq;     // stochastic error squared
    std::vector<double> pf_dot_e; // <Pi_g f, eps>_n
    std::vector<double> seg_cross; // per segment g: <(Pi_{g+1}-Pi_g) eps, f>_n
    double eps_norm_sq = 0.0;
    double f_norm_sq = 0.0;

    /// Closed-form decomposition at flow position t plus the directly
    /// evaluated loss of the blended estimator.
    ErrorDecomposition at(double t) const;

    /// Blended train-side fit of Y at flow position t.
    std::vector<double> fitted(double t) const;

    /// First t where the approximation error falls to the stochastic error,
    /// found by bisection on the crossing segment.
    double balanced_oracle() const;

    /// Distance bound between the early stopping estimator at threshold
    /// kappa and the balanced oracle estimator.
    LedgerEntry check_distance_inequality(double kappa) const;

    /// Factor-4 oracle property of the loss at the balanced oracle against a
    /// dense grid over the flow.
    LedgerEntry check_oracle_factor4() const;

  private:
    const FlowTrace* trace_;
    const SimTruth* truth_;
};

ErrorDecomposition error_decomposition(const FlowTrace& trace, const SimTruth& truth, double t);
double balanced_oracle(const FlowTrace& trace, const SimTruth& truth);
LedgerEntry check_distance_inequality(const FlowTrace& trace, const SimTruth& truth, double kappa);
LedgerEntry check_oracle_factor4(const FlowTrace& trace, const SimTruth& truth);

// ---- test-set error paths ---------------------------------------------------

// Squared test errors of the flow estimators against a target vector,
// replayed incrementally over the recorded split events.
struct TestFlowErrors {
    std::vector<double> sse;     // per step
    std::vector<double> seg_dot; // per segment: sum (pred_g - y)(pred_{g+1} - y)
    std::vector<int> k;          // per step leaf counts
    int n_eval = 0;

    double min_over_generations(int* arg_step = nullptr) const;
    /// Exact minimum over the linearly interpolated flow (quadratic on each
    /// segment); arg_t receives the minimizing flow position.
    double min_over_flow(double* arg_t = nullptr) const;
};

TestFlowErrors test_flow_errors(const FlowTrace& trace, const Dataset& eval,
                                std::span<const double> target);

struct EfficiencyRecord {
    std::string method;
    double oracle_rmse = 0.0;
    double achieved_rmse = 0.0;
    double efficiency = 0.0; // oracle / achieved, in norm units
    double oracle_index = 0.0;
    double oracle_leaves = 0.0;
};

EfficiencyRecord make_efficiency(std::string method, double oracle_sse, double achieved_sse,
                                 int n_eval, double oracle_index, double oracle_leaves);

} // namespace stoptree
