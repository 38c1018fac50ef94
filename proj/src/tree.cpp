#include "stoptree/tree.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace stoptree {

Tree::Tree(Dataset ds) : ds_(std::move(ds)) {
    if (ds_.n < 1) throw std::invalid_argument("Tree: empty dataset");
    perm_.resize(ds_.n);
    for (int i = 0; i < ds_.n; ++i) perm_[i] = i;
    TreeNode root;
    root.id = 0;
    root.begin = 0;
    root.end = ds_.n;
    root.depth = 0;
    root.born_step = 1;
    nodes_.push_back(root);
    compute_node_stats(nodes_[0]);
    leaf_count_ = 1;
    last_step_ = 1;
}

void Tree::compute_node_stats(TreeNode& nd) {
    long double sum = 0.0L, sum_sq = 0.0L;
    for (int p = nd.begin; p < nd.end; ++p) {
        const long double y = ds_.y[perm_[p]];
        sum += y;
        sum_sq += y * y;
    }
    const int cnt = nd.count();
    const long double mean = sum / cnt;
    long double dev_sq = 0.0L;
    for (int p = nd.begin; p < nd.end; ++p) {
        const long double dev = static_cast<long double>(ds_.y[perm_[p]]) - mean;
        dev_sq += dev * dev;
    }
    nd.mean = static_cast<double>(mean);
    const double imp = static_cast<double>(dev_sq / cnt);
    nd.impurity = imp > 0.0 ? imp : 0.0;
    nd.stats.count = cnt;
    nd.stats.sum_y = static_cast<double>(sum);
    nd.stats.sum_y_sq = static_cast<double>(sum_sq);
}

double Tree::split_node(int id, const SplitCandidate& cand, int step) {
    TreeNode& nd = nodes_[id];
    if (nd.has_children()) throw std::logic_error("split_node: node is not terminal");
    if (cand.feature < 0 || cand.feature >= ds_.d)
        throw std::invalid_argument("split_node: bad feature");

    const int j = cand.feature;
    const double c = cand.threshold;
    auto first = perm_.begin() + nd.begin;
    auto last = perm_.begin() + nd.end;
    auto mid = std::stable_partition(first, last, [&](int i) { return ds_.xat(i, j) < c; });
    const int n_left = static_cast<int>(mid - first);
    const int n_right = nd.count() - n_left;
    if (n_left == 0 || n_right == 0)
        throw std::invalid_argument("split_node: split produces an empty child");

    TreeNode left, right;
    left.id = static_cast<int>(nodes_.size());
    right.id = left.id + 1;
    left.parent = right.parent = id;
    left.begin = nd.begin;
    left.end = nd.begin + n_left;
    right.begin = left.end;
    right.end = nd.end;
    left.depth = right.depth = nd.depth + 1;
    left.born_step = right.born_step = step;

    nd.left = left.id;
    nd.right = right.id;
    nd.feature = j;
    nd.threshold = c;
    nd.gain = cand.gain;
    nd.split_step = step;

    nodes_.push_back(left);
    nodes_.push_back(right);
    compute_node_stats(nodes_[left.id]);
    compute_node_stats(nodes_[right.id]);

    // re-read the parent: push_back may have reallocated
    const TreeNode& parent = nodes_[id];
    const TreeNode& l = nodes_[parent.left];
    const TreeNode& r = nodes_[parent.right];
    ++leaf_count_;
    last_step_ = std::max(last_step_, step);

    const double decrease = (parent.count() * parent.impurity - l.count() * l.impurity -
                             r.count() * r.impurity) /
                            static_cast<double>(ds_.n);
    return decrease > 0.0 ? decrease : 0.0;
}

const SplitCandidate* Tree::cached_best_split(int id) {
    TreeNode& nd = nodes_[id];
    if (!nd.best_cached) {
        nd.best_cached = true;
        if (nd.count() >= 2 && nd.impurity > 0.0)
            nd.best = best_split(ds_, samples(id));
        else if (nd.count() >= 2)
            nd.best = std::nullopt; // pure node: permanently unsplittable
        else
            nd.best = std::nullopt;
    }
    return nd.best ? &*nd.best : nullptr;
}

double Tree::residual_now() const {
    long double acc = 0.0L;
    for (const TreeNode& nd : nodes_)
        if (!nd.has_children()) acc += static_cast<long double>(nd.count()) * nd.impurity;
    return static_cast<double>(acc / ds_.n);
}

std::vector<int> Tree::terminal_ids() const {
    std::vector<int> ids;
    for (const TreeNode& nd : nodes_)
        if (!nd.has_children()) ids.push_back(nd.id);
    return ids;
}

// ---- stage views ----------------------------------------------------------

bool stage_terminal(const TreeStage& st, int id) {
    const TreeNode& nd = st.tree->node(id);
    return !nd.has_children() || nd.split_step > st.step;
}

void for_each_terminal(const TreeStage& st, const std::function<void(int)>& fn) {
    if (st.step < 1) return;
    std::vector<int> stack{0};
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        if (stage_terminal(st, id)) {
            fn(id);
        } else {
            const TreeNode& nd = st.tree->node(id);
            stack.push_back(nd.right);
            stack.push_back(nd.left);
        }
    }
}

int stage_leaf_count(const TreeStage& st) {
    int k = 0;
    for_each_terminal(st, [&](int) { ++k; });
    return k;
}

std::vector<double> fit_values(const TreeStage& st) {
    const int n = st.tree ? st.tree->n() : 0;
    std::vector<double> fit(n, 0.0);
    if (st.step < 1) return fit; // empty projection
    for_each_terminal(st, [&](int id) {
        const double m = st.tree->node(id).mean;
        for (int i : st.tree->samples(id)) fit[i] = m;
    });
    return fit;
}

double residual_norm_sq(const TreeStage& st) {
    const Tree& t = *st.tree;
    if (st.step < 1) { // empty projection: ||Y||_n^2
        long double acc = 0.0L;
        for (double y : t.data().y) acc += static_cast<long double>(y) * y;
        return static_cast<double>(acc / t.n());
    }
    long double acc = 0.0L;
    for_each_terminal(st, [&](int id) {
        const TreeNode& nd = t.node(id);
        acc += static_cast<long double>(nd.count()) * nd.impurity;
    });
    return static_cast<double>(acc / t.n());
}

std::vector<double> apply_projection(const TreeStage& st, std::span<const double> v) {
    const Tree& t = *st.tree;
    if (static_cast<int>(v.size()) != t.n())
        throw std::invalid_argument("apply_projection: length mismatch");
    std::vector<double> out(v.size(), 0.0);
    if (st.step < 1) return out;
    for_each_terminal(st, [&](int id) {
        long double sum = 0.0L;
        const auto idx = t.samples(id);
        for (int i : idx) sum += v[i];
        const double mean = static_cast<double>(sum / static_cast<long double>(idx.size()));
        for (int i : idx) out[i] = mean;
    });
    return out;
}

double predict(const TreeStage& st, std::span<const double> xrow) {
    if (st.step < 1) return 0.0;
    const Tree& t = *st.tree;
    int id = 0;
    for (;;) {
        const TreeNode& nd = t.node(id);
        if (stage_terminal(st, id)) return nd.mean;
        id = xrow[nd.feature] < nd.threshold ? nd.left : nd.right;
    }
}

std::string tree_to_json(const Tree& tree, int stage_step) {
    nlohmann::json doc;
    doc["schema_version"] = 1;
    doc["n"] = tree.n();
    doc["d"] = tree.data().d;
    doc["stage_step"] = stage_step;
    doc["k"] = stage_leaf_count({&tree, stage_step});
    nlohmann::json nodes = nlohmann::json::array();
    for (int id = 0; id < tree.node_count(); ++id) {
        const TreeNode& nd = tree.node(id);
        if (nd.born_step > stage_step) continue;
        nlohmann::json jn;
        jn["id"] = nd.id;
        jn["parent"] = nd.parent;
        const bool internal = nd.has_children() && nd.split_step <= stage_step;
        jn["left"] = internal ? nd.left : -1;
        jn["right"] = internal ? nd.right : -1;
        if (internal) {
            jn["feature"] = nd.feature;
            jn["threshold"] = nd.threshold;
        }
        jn["mean"] = nd.mean;
        jn["count"] = nd.count();
        jn["impurity"] = nd.impurity;
        nodes.push_back(std::move(jn));
    }
    doc["nodes"] = std::move(nodes);
    return doc.dump(2);
}

} // namespace stoptree
