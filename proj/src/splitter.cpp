#include "stoptree/splitter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace stoptree {

namespace {

// rounding slack for scan-score comparisons; exact ties (identical induced
// partitions) land inside it
long double tie_band(long double best) {
    const long double mag = best > 0.0L ? best : -best;
    return 1e-9L * mag + 1e-30L;
}

} // namespace

NodeStats node_stats(const Dataset& ds, std::span<const int> idx) {
    NodeStats s;
    s.count = static_cast<long long>(idx.size());
    long double sum = 0.0L, sum_sq = 0.0L;
    for (int i : idx) {
        const long double y = ds.y[i];
        sum += y;
        sum_sq += y * y;
    }
    s.sum_y = static_cast<double>(sum);
    s.sum_y_sq = static_cast<double>(sum_sq);
    return s;
}

double node_impurity(const NodeStats& s) {
    if (s.count < 1) throw std::invalid_argument("node_impurity: empty node");
    const double mean = s.sum_y / static_cast<double>(s.count);
    const double raw = s.sum_y_sq / static_cast<double>(s.count) - mean * mean;
    return raw > 0.0 ? raw : 0.0;
}

double impurity_of(const Dataset& ds, std::span<const int> idx) {
    if (idx.empty()) throw std::invalid_argument("impurity_of: empty node");
    long double sum = 0.0L;
    for (int i : idx) sum += static_cast<long double>(ds.y[i]);
    const long double mean = sum / static_cast<long double>(idx.size());
    long double acc = 0.0L;
    for (int i : idx) {
        const long double dev = static_cast<long double>(ds.y[i]) - mean;
        acc += dev * dev;
    }
    const double raw = static_cast<double>(acc / static_cast<long double>(idx.size()));
    return raw > 0.0 ? raw : 0.0;
}

double impurity_gain(const Dataset& ds, std::span<const int> idx, int feature, double threshold) {
    std::vector<int> left, right;
    left.reserve(idx.size());
    right.reserve(idx.size());
    for (int i : idx) {
        if (ds.xat(i, feature) < threshold)
            left.push_back(i);
        else
            right.push_back(i);
    }
    if (left.empty() || right.empty())
        throw std::invalid_argument("impurity_gain: split produces an empty child");
    const double n_a = static_cast<double>(idx.size());
    const double raw = impurity_of(ds, idx) -
                       (static_cast<double>(left.size()) / n_a) * impurity_of(ds, left) -
                       (static_cast<double>(right.size()) / n_a) * impurity_of(ds, right);
    return raw > 0.0 ? raw : 0.0;
}

std::optional<SplitCandidate> best_split(const Dataset& ds, std::span<const int> idx) {
    const int n_a = static_cast<int>(idx.size());
    if (n_a < 2) return std::nullopt;

    // center responses at the node mean; the gain of a split then reduces to
    //   (1/n_A) (sL^2/nL + sR^2/nR - S^2/n_A)
    // with prefix sums sL of centered responses, kept in extended precision
    long double sum = 0.0L;
    for (int i : idx) sum += static_cast<long double>(ds.y[i]);
    const long double mean = sum / static_cast<long double>(n_a);

    std::vector<std::pair<double, int>> order(n_a); // (x value, sample index)
    bool found = false;
    long double best_score = 0.0L;
    // candidates whose scan score ties the maximum within rounding; the
    // winner among them is decided by the recomputed gain below
    std::vector<std::pair<int, double>> shortlist;

    auto scan = [&](bool collect) {
        for (int j = 0; j < ds.d; ++j) {
            for (int p = 0; p < n_a; ++p) order[p] = {ds.xat(idx[p], j), idx[p]};
            std::sort(order.begin(), order.end());

            long double left_sum = 0.0L;
            long double total = 0.0L;
            for (int p = 0; p < n_a; ++p)
                total += static_cast<long double>(ds.y[order[p].second]) - mean;

            for (int p = 0; p < n_a - 1; ++p) {
                left_sum += static_cast<long double>(ds.y[order[p].second]) - mean;
                if (order[p].first == order[p + 1].first) continue; // no boundary here
                const int n_l = p + 1;
                const int n_r = n_a - n_l;
                const long double right_sum = total - left_sum;
                const long double score = left_sum * left_sum / n_l +
                                          right_sum * right_sum / n_r - total * total / n_a;
                if (!collect) {
                    if (!found || score > best_score) {
                        found = true;
                        best_score = score;
                    }
                } else if (score >= best_score - tie_band(best_score)) {
                    // midpoint between consecutive distinct values; if rounding
                    // collapses it onto the lower value, use the upper value so
                    // that {x < c} still matches the scanned prefix
                    double thr = 0.5 * (order[p].first + order[p + 1].first);
                    if (!(thr > order[p].first)) thr = order[p + 1].first;
                    shortlist.emplace_back(j, thr);
                }
            }
        }
    };
    scan(false);
    if (!found) return std::nullopt;
    scan(true);

    // exact argmax over the shortlist by recomputed gain, ties resolved by
    // (lower feature, lower threshold); the scan order already delivers the
    // shortlist in that order
    SplitCandidate cand;
    bool have = false;
    for (const auto& [j, thr] : shortlist) {
        const double g = impurity_gain(ds, idx, j, thr);
        if (!have || g > cand.gain) {
            have = true;
            cand.feature = j;
            cand.threshold = thr;
            cand.gain = g;
        }
    }
    cand.left_count = cand.right_count = 0;
    for (int i : idx) {
        if (ds.xat(i, cand.feature) < cand.threshold)
            ++cand.left_count;
        else
            ++cand.right_count;
    }
    return cand;
}

} // namespace stoptree
