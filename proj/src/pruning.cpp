#include "stoptree/pruning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "stoptree/rng.hpp"

namespace stoptree {

namespace {

// g values within this band of the minimum collapse together
bool tie_with(double g, double gmin) { return g <= gmin * (1.0 + 1e-10) + 1e-15; }

} // namespace

const PathEntry& PruningPath::at_lambda(double lambda) const {
    int lo = 0;
    for (int i = 1; i < static_cast<int>(entries.size()); ++i) {
        if (entries[i].lambda <= lambda) lo = i;
        else break;
    }
    return entries[lo];
}

PruningPath weakest_link_path(std::shared_ptr<const Tree> tree, int stage) {
    PruningPath path;
    path.tree = tree;
    path.stage = stage;
    const Tree& t = *tree;
    const TreeStage st{&t, stage};
    const int nn = t.node_count();
    path.collapse_entry.assign(nn, kNeverSplit);

    const double n = static_cast<double>(t.n());
    std::vector<char> internal(nn, 0), live(nn, 0);
    std::vector<int> leaves_under(nn, 1);
    std::vector<double> sub_resid(nn, 0.0), self_resid(nn, 0.0), g(nn, 0.0);

    // bottom-up pass over the stage subtree
    std::vector<int> order; // nodes of the stage subtree, parents before children
    {
        std::vector<int> stack{0};
        while (!stack.empty()) {
            const int id = stack.back();
            stack.pop_back();
            order.push_back(id);
            if (!stage_terminal(st, id)) {
                stack.push_back(t.node(id).left);
                stack.push_back(t.node(id).right);
            }
        }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int id = *it;
        const TreeNode& nd = t.node(id);
        self_resid[id] = nd.count() * nd.impurity / n;
        if (stage_terminal(st, id)) {
            sub_resid[id] = self_resid[id];
            leaves_under[id] = 1;
        } else {
            internal[id] = live[id] = 1;
            sub_resid[id] = sub_resid[nd.left] + sub_resid[nd.right];
            leaves_under[id] = leaves_under[nd.left] + leaves_under[nd.right];
            const double raw = (self_resid[id] - sub_resid[id]) / (leaves_under[id] - 1);
            g[id] = raw > 0.0 ? raw : 0.0;
        }
    }

    long double resid = sub_resid[0];
    int leaves = leaves_under[0];
    std::vector<int> live_ids;
    for (int id : order)
        if (live[id]) live_ids.push_back(id);

    if (live_ids.empty()) { // root-only stage
        path.entries.push_back({0, 0.0, static_cast<double>(resid), leaves});
        path.h_count = 1;
        return path;
    }

    // the largest subtree enters at lambda = 0 unless zero-cost collapses
    // shrink it first
    double gmin0 = g[live_ids[0]];
    for (int id : live_ids) gmin0 = std::min(gmin0, g[id]);
    if (gmin0 > 0.0 && !tie_with(gmin0, 0.0))
        path.entries.push_back({0, 0.0, static_cast<double>(resid), leaves});

    while (!live_ids.empty()) {
        double gmin = g[live_ids[0]];
        for (int id : live_ids) gmin = std::min(gmin, g[id]);
        const double entry_lambda = path.entries.empty() ? 0.0 : gmin;

        // fold into the previous entry when lambda does not strictly increase
        const bool fold = !path.entries.empty() && tie_with(gmin, path.entries.back().lambda);
        const int entry_idx =
            fold ? static_cast<int>(path.entries.size()) - 1 : static_cast<int>(path.entries.size());

        // collapse minimizers top-down so nested minimizers vanish with their
        // ancestor
        std::vector<int> batch;
        for (int id : live_ids)
            if (tie_with(g[id], gmin)) batch.push_back(id);
        std::sort(batch.begin(), batch.end(),
                  [&](int a, int b) { return t.node(a).depth < t.node(b).depth; });

        for (int v : batch) {
            if (!live[v]) continue; // removed with a collapsed ancestor
            // remove the whole subtree below v from the live set
            std::vector<int> stack{v};
            while (!stack.empty()) {
                const int id = stack.back();
                stack.pop_back();
                if (!internal[id] || !live[id]) continue;
                live[id] = 0;
                if (id != v) {
                    // interior nodes of the removed subtree never collapse
                } else {
                    path.collapse_entry[v] = entry_idx;
                }
                stack.push_back(t.node(id).left);
                stack.push_back(t.node(id).right);
            }
            const double d_resid = self_resid[v] - sub_resid[v];
            const int d_leaves = leaves_under[v] - 1;
            resid += d_resid;
            leaves -= d_leaves;
            // refresh ancestors
            for (int a = t.node(v).parent; a >= 0; a = t.node(a).parent) {
                if (!live[a]) continue;
                sub_resid[a] += d_resid;
                leaves_under[a] -= d_leaves;
                const double raw = (self_resid[a] - sub_resid[a]) / (leaves_under[a] - 1);
                g[a] = raw > 0.0 ? raw : 0.0;
            }
        }

        live_ids.erase(std::remove_if(live_ids.begin(), live_ids.end(),
                                      [&](int id) { return !live[id]; }),
                       live_ids.end());

        if (fold) {
            path.entries.back().residual = static_cast<double>(resid);
            path.entries.back().leaves = leaves;
        } else {
            path.entries.push_back({entry_idx, entry_lambda, static_cast<double>(resid), leaves});
        }
    }

    path.h_count = static_cast<int>(path.entries.size());
    for (int p = 0; p < path.h_count; ++p) path.entries[p].h = p;
    return path;
}

PruningPath filter_path(const PruningPath& path, double tol) {
    PruningPath out;
    out.tree = path.tree;
    out.stage = path.stage;
    out.collapse_entry = path.collapse_entry;
    out.h_count = path.h_count;
    double last_kept = 0.0;
    for (size_t i = 0; i < path.entries.size(); ++i) {
        const PathEntry& e = path.entries[i];
        if (i == 0 || e.residual - last_kept <= tol) {
            out.entries.push_back(e);
            last_kept = e.residual;
        }
    }
    return out;
}

PruningPath thin_path(const PruningPath& path, double tol) {
    PruningPath out;
    out.tree = path.tree;
    out.stage = path.stage;
    out.collapse_entry = path.collapse_entry;
    out.h_count = path.h_count;
    double last_kept = 0.0;
    for (size_t i = 0; i < path.entries.size(); ++i) {
        const PathEntry& e = path.entries[i];
        const bool last = i + 1 == path.entries.size();
        if (i == 0 || last || e.residual - last_kept > tol) {
            out.entries.push_back(e);
            last_kept = e.residual;
        }
    }
    return out;
}

double predict_pruned(const PruningPath& path, int h, std::span<const double> xrow) {
    const Tree& t = *path.tree;
    const TreeStage st{&t, path.stage};
    int id = 0;
    for (;;) {
        if (stage_terminal(st, id) || path.collapse_entry[id] <= h) return t.node(id).mean;
        const TreeNode& nd = t.node(id);
        id = xrow[nd.feature] < nd.threshold ? nd.left : nd.right;
    }
}

std::vector<double> path_sse(const PruningPath& path, const Dataset& eval,
                             std::span<const double> targets) {
    if (static_cast<size_t>(eval.n) != targets.size())
        throw std::invalid_argument("path_sse: target length mismatch");
    const Tree& t = *path.tree;
    const TreeStage st{&t, path.stage};
    const int H = path.h_count;
    std::vector<long double> diff(H + 1, 0.0L);

    // Each row's prediction is a step function of the entry index: walking its
    // root-to-leaf chain, a node matters only when it collapses before every
    // node above it.
    std::vector<std::pair<int, double>> switches; // (collapse entry, node mean), decreasing
    for (int r = 0; r < eval.n; ++r) {
        const auto xrow = eval.row(r);
        switches.clear();
        int running = kNeverSplit;
        int id = 0;
        double leaf_mean;
        for (;;) {
            const TreeNode& nd = t.node(id);
            const int ce = path.collapse_entry[id];
            if (!stage_terminal(st, id) && ce < running) {
                switches.emplace_back(ce, nd.mean);
                running = ce;
            }
            if (stage_terminal(st, id)) {
                leaf_mean = nd.mean;
                break;
            }
            id = xrow[nd.feature] < nd.threshold ? nd.left : nd.right;
        }
        const double y = targets[r];
        auto add = [&](int lo, int hi, double pred) {
            if (lo >= hi) return;
            const long double e = static_cast<long double>(pred - y) * (pred - y);
            diff[lo] += e;
            diff[hi] -= e;
        };
        int hi = H;
        for (const auto& [ce, mean] : switches) {
            add(ce, hi, mean);
            hi = ce;
        }
        add(0, hi, leaf_mean);
    }

    std::vector<long double> sse_h(H, 0.0L);
    long double acc = 0.0L;
    for (int h = 0; h < H; ++h) {
        acc += diff[h];
        sse_h[h] = acc;
    }
    std::vector<double> out(path.entries.size());
    for (size_t p = 0; p < path.entries.size(); ++p)
        out[p] = static_cast<double>(sse_h[path.entries[p].h]);
    return out;
}

std::vector<double> cv_grid(const PruningPath& path) {
    const auto& es = path.entries;
    std::vector<double> grid(es.size());
    for (size_t j = 0; j + 1 < es.size(); ++j) grid[j] = std::sqrt(es[j].lambda * es[j + 1].lambda);
    if (!es.empty()) grid.back() = es.back().lambda;
    return grid;
}

CvSelection cv_select(const Dataset& ds, const PathBuilder& builder,
                      const std::vector<double>& grid, int folds, std::uint64_t seed) {
    if (ds.n < folds) throw std::invalid_argument("cv_select: fewer rows than folds");
    if (folds < 2) throw std::invalid_argument("cv_select: need at least 2 folds");
    if (grid.empty()) throw std::invalid_argument("cv_select: empty lambda grid");

    CvSelection sel;
    sel.lambda_grid = grid;
    sel.fold_of_row.assign(ds.n, 0);

    std::vector<int> order(ds.n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (int i = ds.n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
    }
    // contiguous blocks; remainder rows go to the first folds
    std::vector<std::vector<int>> fold_rows(folds);
    const int base = ds.n / folds, rem = ds.n % folds;
    int pos = 0;
    for (int f = 0; f < folds; ++f) {
        const int sz = base + (f < rem ? 1 : 0);
        for (int s = 0; s < sz; ++s) {
            fold_rows[f].push_back(order[pos]);
            sel.fold_of_row[order[pos]] = f;
            ++pos;
        }
    }

    sel.fold_mse.assign(folds, std::vector<double>(grid.size(), 0.0));
    for (int f = 0; f < folds; ++f) {
        std::vector<int> train_rows;
        train_rows.reserve(ds.n - fold_rows[f].size());
        for (int g = 0; g < folds; ++g)
            if (g != f) train_rows.insert(train_rows.end(), fold_rows[g].begin(), fold_rows[g].end());
        const Dataset fold_train = subset(ds, train_rows);
        const Dataset fold_val = subset(ds, fold_rows[f]);

        const PruningPath fold_path = builder(fold_train);
        const std::vector<double> sse = path_sse(fold_path, fold_val, fold_val.y);
        for (size_t j = 0; j < grid.size(); ++j) {
            const PathEntry& e = fold_path.at_lambda(grid[j]);
            // entry position within the fold path
            size_t p = 0;
            while (fold_path.entries[p].h != e.h) ++p;
            sel.fold_mse[f][j] = sse[p] / static_cast<double>(fold_val.n);
        }
    }

    sel.mean_mse.assign(grid.size(), 0.0);
    for (size_t j = 0; j < grid.size(); ++j) {
        double m = 0.0;
        for (int f = 0; f < folds; ++f) m += sel.fold_mse[f][j];
        sel.mean_mse[j] = m / folds;
    }
    sel.chosen = 0;
    for (size_t j = 1; j < grid.size(); ++j)
        if (sel.mean_mse[j] < sel.mean_mse[sel.chosen]) sel.chosen = static_cast<int>(j);
    sel.lambda_opt = grid[sel.chosen];
    return sel;
}

PrunedFit prune_fit(const Dataset& train, std::uint64_t seed, const GrowResult* deep) {
    PrunedFit fit;
    const auto t0 = std::chrono::steady_clock::now();
    GrowResult own;
    if (deep == nullptr) {
        own = grow_deep(train);
        deep = &own;
    }
    fit.tree = deep->trace.tree;
    fit.stage = deep->trace.last();
    fit.path = weakest_link_path(deep->trace.tree, fit.stage);
    fit.filtered = thin_path(fit.path);
    const std::vector<double> grid = cv_grid(fit.filtered);
    fit.cv = cv_select(train, [](const Dataset& ft) {
        GrowResult g = grow_deep(ft);
        return weakest_link_path(g.trace.tree, g.trace.last());
    }, grid, 5, seed);
    fit.chosen_pos = fit.cv.chosen;
    fit.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() +
                  (deep == &own ? 0.0 : deep->report.seconds);
    return fit;
}

PrunedFit two_step_fit(const Dataset& train, double kappa, std::uint64_t seed) {
    PrunedFit fit;
    const auto t0 = std::chrono::steady_clock::now();
    StoppingConfig cfg;
    cfg.kappa = kappa;
    cfg.mode = GrowthMode::global;
    cfg.extra_steps_after_stop = 1;
    const GrowResult first = grow(train, cfg);
    fit.tree = first.trace.tree;
    if (!fit.tree) { // stopped before the root and nothing to extend
        throw std::logic_error("two_step_fit: no tree grown");
    }
    const int stop = first.trace.stop_step >= 0 ? first.trace.stop_step : first.trace.last();
    fit.stage = std::min(stop + 1, first.trace.last());
    fit.path = weakest_link_path(fit.tree, fit.stage);
    fit.filtered = thin_path(fit.path);
    const std::vector<double> grid = cv_grid(fit.filtered);
    fit.cv = cv_select(train, [kappa](const Dataset& ft) {
        StoppingConfig c;
        c.kappa = kappa;
        c.mode = GrowthMode::global;
        c.extra_steps_after_stop = 1;
        GrowResult g = grow(ft, c);
        const int fold_stop = g.trace.stop_step >= 0 ? g.trace.stop_step : g.trace.last();
        return weakest_link_path(g.trace.tree, std::min(fold_stop + 1, g.trace.last()));
    }, grid, 5, seed);
    fit.chosen_pos = fit.cv.chosen;
    fit.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return fit;
}

} // namespace stoptree
