#pragma once
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stoptree/dataset.hpp"
#include "stoptree/splitter.hpp"

namespace stoptree {

constexpr int kNeverSplit = std::numeric_limits<int>::max();

struct TreeNode {
    int id = -1;
    int parent = -1;
    int left = -1, right = -1;
    int begin = 0, end = 0; // contiguous range into the tree's permutation
    int depth = 0;
    double mean = 0.0;
    double impurity = 0.0; // centered two-pass R^2(A)
    NodeStats stats;
    int feature = -1; // adopted split, valid when internal
    double threshold = 0.0;
    double gain = 0.0;
    int born_step = 0;
    int split_step = kNeverSplit;
    std::optional<SplitCandidate> best; // cached best split, computed once
    bool best_cached = false;

    int count() const { return end - begin; }
    bool has_children() const { return left >= 0; }
};

// Recursive-partition arena over a dataset. Splits reorder a single
// permutation array stably in place, so every node owns a contiguous range.
// Node birth/split steps index into the growth trace, which makes the
// partition at any recorded step recoverable from one frozen arena.
class Tree {
  public:
    explicit Tree(Dataset ds); // owns a copy of the data; root born at step 1

    const Dataset& data() const { return ds_; }
    int n() const { return ds_.n; }
    int node_count() const { return static_cast<int>(nodes_.size()); }
    int leaf_count() const { return leaf_count_; }
    int last_step() const { return last_step_; }
    const TreeNode& node(int id) const { return nodes_[id]; }
    std::span<const int> samples(int id) const {
        const TreeNode& nd = nodes_[id];
        return {perm_.data() + nd.begin, static_cast<size_t>(nd.count())};
    }

    /// Split a terminal node; children own stable contiguous sub-ranges and
    /// the leaf count grows by one. Returns the residual decrease
    /// (n_A/n) * gain measured from recomputed child impurities.
    double split_node(int id, const SplitCandidate& cand, int step);

    /// Best split of a node, computed once and cached. nullptr when the node
    /// is unsplittable (singleton, pure, or without two distinct values).
    const SplitCandidate* cached_best_split(int id);

    /// Residual over the current terminal frontier, recomputed from node
    /// statistics rather than by subtraction.
    double residual_now() const;

    std::vector<int> terminal_ids() const;

  private:
    Dataset ds_;
    std::vector<TreeNode> nodes_;
    std::vector<int> perm_;
    int leaf_count_ = 0;
    int last_step_ = 0;

    void compute_node_stats(TreeNode& nd);
};

// View of the partition frozen at a recorded growth step. Step 0 is the
// empty projection (fit identically zero); the root-only tree is step 1.
struct TreeStage {
    const Tree* tree = nullptr;
    int step = 0;
};

bool stage_terminal(const TreeStage& st, int id);
void for_each_terminal(const TreeStage& st, const std::function<void(int)>& fn);
int stage_leaf_count(const TreeStage& st);

/// Fitted values: each entry is the mean response of the terminal node
/// containing that sample.
std::vector<double> fit_values(const TreeStage& st);

/// ||Y - fit||_n^2, accumulated from per-node statistics.
double residual_norm_sq(const TreeStage& st);

/// Node-mean averaging of an arbitrary length-n vector (the orthogonal
/// projection onto the stage's piecewise-constant functions).
std::vector<double> apply_projection(const TreeStage& st, std::span<const double> v);

/// Prediction for an arbitrary covariate row by tree descent.
double predict(const TreeStage& st, std::span<const double> xrow);

/// Stable JSON document for a grown tree (schema_version 1).
std::string tree_to_json(const Tree& tree, int stage_step);

} // namespace stoptree
