#pragma once
#include <optional>
#include <span>

#include "stoptree/dataset.hpp"

namespace stoptree {

/// Sufficient statistics of a node's responses.
struct NodeStats {
    long long count = 0;
    double sum_y = 0.0;
    double sum_y_sq = 0.0;
};

/// Axis-aligned split: left child {x_j < c}, right child {x_j >= c}.
struct SplitCandidate {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0; // impurity gain, clamped at 0
    int left_count = 0;
    int right_count = 0;
};

NodeStats node_stats(const Dataset& ds, std::span<const int> idx);

/// Within-node impurity: mean squared deviation from the node mean,
/// clamped at 0 against rounding.
double node_impurity(const NodeStats& s);

/// Impurity of an index set, computed by a centered two-pass sweep.
double impurity_of(const Dataset& ds, std::span<const int> idx);

/// Exact impurity gain of splitting the node at (feature, threshold).
/// Throws if either child would be empty.
double impurity_gain(const Dataset& ds, std::span<const int> idx, int feature, double threshold);

/// Exhaustive search over all features and all midpoints between consecutive
/// distinct sorted values. Returns the candidate with maximal gain, ties
/// broken by lower feature index then lower threshold; nullopt when no
/// feature takes two distinct values inside the node.
std::optional<SplitCandidate> best_split(const Dataset& ds, std::span<const int> idx);

} // namespace stoptree
