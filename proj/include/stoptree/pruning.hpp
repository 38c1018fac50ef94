#pragma once
#include <functional>
#include <memory>
#include <vector>

#include "stoptree/growth.hpp"
#include "stoptree/tree.hpp"

namespace stoptree {

struct PathEntry {
    int h = 0;             // index in the unfiltered sequence
    double lambda = 0.0;   // cost-complexity parameter where this subtree becomes optimal
    double residual = 0.0; // training residual R^2(T) of the subtree
    int leaves = 0;
};

// Weakest-link sequence of nested subtrees of one stage, lambda ascending
// from 0 (largest subtree) to the root. collapse_entry[v] records the
// unfiltered entry index at which internal node v becomes a leaf.
struct PruningPath {
    std::shared_ptr<const Tree> tree;
    int stage = 1;
    std::vector<PathEntry> entries;
    std::vector<int> collapse_entry; // per node id; kNeverSplit when never collapsed
    int h_count = 0;                 // number of unfiltered entries

    const PathEntry& at_lambda(double lambda) const; // largest entry lambda <= query
};

/// Critical-value recursion: repeatedly collapse every internal node whose
/// per-leaf residual increase attains the current minimum.
PruningPath weakest_link_path(std::shared_ptr<const Tree> tree, int stage);

/// Drop entries whose residual exceeds the previously kept entry's residual
/// by more than `tol`; the first entry is always kept.
PruningPath filter_path(const PruningPath& path, double tol = 0.01);

/// Thin a path to structurally distinct subtrees: keep an entry only when
/// its residual exceeds the last kept entry's by more than `tol`. The first
/// and last entries always stay. This is the candidate reduction used by the
/// fitting pipelines; unlike filter_path it never cuts off the small-tree
/// end of the path.
PruningPath thin_path(const PruningPath& path, double tol = 0.01);

/// Prediction of the subtree at unfiltered entry index h.
double predict_pruned(const PruningPath& path, int h, std::span<const double> xrow);

/// Squared prediction error against `targets` for every entry of `path`,
/// in one pass over the evaluation rows.
std::vector<double> path_sse(const PruningPath& path, const Dataset& eval,
                             std::span<const double> targets);

// ---- cross-validated selection --------------------------------------------

struct CvSelection {
    int chosen = 0; // grid index attaining the minimal fold-mean error
    double lambda_opt = 0.0;
    std::vector<double> lambda_grid;
    std::vector<std::vector<double>> fold_mse; // [fold][grid point]
    std::vector<double> mean_mse;
    std::vector<int> fold_of_row;
};

using PathBuilder = std::function<PruningPath(const Dataset& fold_train)>;

/// Geometric interval midpoints sqrt(lambda_h lambda_{h+1}) of a path, one
/// probe per entry; the final entry is probed at its own lambda.
std::vector<double> cv_grid(const PruningPath& path);

/// Seeded contiguous-block k-fold selection over the lambda grid. Ties go to
/// the smaller lambda.
CvSelection cv_select(const Dataset& ds, const PathBuilder& builder,
                      const std::vector<double>& grid, int folds, std::uint64_t seed);

// ---- full procedures -------------------------------------------------------

struct PrunedFit {
    std::shared_ptr<const Tree> tree;
    int stage = 1;
    PruningPath path;     // unfiltered
    PruningPath filtered; // cross-validation candidates
    CvSelection cv;
    int chosen_pos = 0; // position in filtered.entries
    double seconds = 0.0;

    const PathEntry& chosen() const { return filtered.entries[chosen_pos]; }
    int leaf_count() const { return chosen().leaves; }
    double train_residual() const { return chosen().residual; }
    double predict_row(std::span<const double> xrow) const {
        return predict_pruned(filtered, chosen().h, xrow);
    }
};

/// Cost-complexity pruning of the fully grown tree with 5-fold
/// cross-validation. A pre-grown deep tree can be supplied to avoid growing
/// it twice; its growth time is charged to this fit either way.
PrunedFit prune_fit(const Dataset& train, std::uint64_t seed, const GrowResult* deep = nullptr);

/// Two-step procedure: global early stopping with threshold kappa, then
/// cost-complexity pruning of the tree one generation past the stop,
/// selected by 5-fold cross-validation re-running the first step per fold.
PrunedFit two_step_fit(const Dataset& train, double kappa, std::uint64_t seed);

} // namespace stoptree
