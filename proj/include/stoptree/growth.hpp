#pragma once
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "stoptree/tree.hpp"

namespace stoptree {

enum class GrowthMode { global, global_interpolated, semi_global, semi_global_interpolated };

enum class StopCause {
    threshold, // residual fell to kappa
    pre_root,  // kappa >= ||Y||_n^2: stopped at the empty projection
    exhausted, // no splittable node left before reaching kappa
    capped     // generation or leaf cap hit first
};

std::string to_string(StopCause c);
std::string to_string(GrowthMode m);

struct StoppingConfig {
    double kappa = 0.0;
    GrowthMode mode = GrowthMode::global;
    int max_generations = std::numeric_limits<int>::max();
    int max_leaves = std::numeric_limits<int>::max();
    bool allow_zero_gain_splits = false;
    // semi-global priority: the literal best gain of a node; optionally
    // weighted by the node's sample fraction
    bool weighted_priority = false;
    double min_gain = 0.0;            // refuse splits below this gain (pre-pruning baseline)
    bool continue_after_stop = false; // keep growing past the stop for diagnostics
    int extra_steps_after_stop = 0;   // the two-step procedure grows one more generation
};

struct FlowStep {
    int k = 0;             // partition size (0 for the empty projection)
    double residual = 0.0; // R^2 at this step
    std::vector<int> split_nodes;
};

// Record of one growth run: the frozen arena plus the per-step residual path.
// steps[0] is the empty projection, steps[1] the root-only tree.
struct FlowTrace {
    std::shared_ptr<Tree> tree; // null when growth stopped before the root
    std::vector<FlowStep> steps;
    GrowthMode mode = GrowthMode::global;
    int n = 0;
    double kappa = 0.0;
    double y_norm_sq = 0.0;
    int stop_step = -1; // first step with residual <= kappa, -1 if never reached
    StopCause cause = StopCause::exhausted;

    const FlowStep& step(int s) const { return steps[s]; }
    int last() const { return static_cast<int>(steps.size()) - 1; }
};

struct StopReport {
    double tau = 0.0;   // stopping time in flow units (= leaf count at stop)
    double alpha = 0.0; // interpolation weight in [0,1)
    int step_k = 0;     // earlier bracketing step (== step_l when not interpolated)
    int step_l = 0;
    bool interpolated = false;
    double kappa = 0.0;
    double k_at_stop = 0.0;
    double residual_at_stop = 0.0;
    std::vector<double> fitted;
    StopCause cause = StopCause::threshold;
    double seconds = 0.0;
};

struct GrowResult {
    FlowTrace trace;
    StopReport report;
};

/// One growth run under the configured mode and stopping rule. The residual
/// is tested before splitting at every step.
GrowResult grow(const Dataset& ds, const StoppingConfig& cfg);

GrowResult grow_global(const Dataset& ds, const StoppingConfig& cfg);
GrowResult grow_semi_global(const Dataset& ds, const StoppingConfig& cfg);

/// Full-depth tree: breadth-first growth with kappa = 0 and no caps.
GrowResult grow_deep(const Dataset& ds);

/// Best-first growth that refuses any split whose gain is below `threshold`.
GrowResult grow_min_impurity_baseline(const Dataset& ds, double threshold);

/// Residual of the linearly interpolated flow inside a segment:
/// R_t^2 = R_l^2 + (1-alpha)^2 (R_k^2 - R_l^2).
double segment_residual(double r_sq_k, double r_sq_l, double alpha);

/// Interpolated stopping time tau = inf{ t : R_t^2 <= kappa } evaluated on a
/// recorded trace, with the blended fit at tau.
StopReport interpolated_stop(const FlowTrace& trace, double kappa);

/// Blend of the stage fits bracketing flow position t (train side).
std::vector<double> fitted_at(const FlowTrace& trace, int step_k, int step_l, double alpha);

/// Locate flow position t in [0, k_last]: trace step g with k_g <= t plus the
/// interpolation weight into the following segment.
std::pair<int, double> locate(const FlowTrace& trace, double t);

} // namespace stoptree
