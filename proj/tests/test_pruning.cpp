#include <doctest.h>

#include <cmath>
#include <vector>

#include "stoptree/pruning.hpp"
#include "stoptree/rng.hpp"
#include "stoptree/sim.hpp"
#include "test_util.hpp"

using namespace stoptree;

namespace {

// all (residual, leaves) pairs over root-containing subtrees, enumerated
// independently of the path construction
void enumerate_subtrees(const Tree& t, const TreeStage& st, int id,
                        std::vector<std::pair<double, int>>* out) {
    const TreeNode& nd = t.node(id);
    out->push_back({nd.count() * nd.impurity / t.n(), 1});
    if (stage_terminal(st, id)) return;
    std::vector<std::pair<double, int>> left, right;
    enumerate_subtrees(t, st, nd.left, &left);
    enumerate_subtrees(t, st, nd.right, &right);
    for (const auto& l : left)
        for (const auto& r : right) out->push_back({l.first + r.first, l.second + r.second});
}

GrowResult small_tree(std::uint64_t seed, int max_leaves) {
    const Dataset ds = testutil::random_dataset(24, 2, seed);
    StoppingConfig cfg;
    cfg.kappa = 0.0;
    cfg.mode = GrowthMode::semi_global;
    cfg.max_leaves = max_leaves;
    return grow(ds, cfg);
}

PruningPath synthetic_entries(const std::vector<double>& residuals) {
    PruningPath p;
    double lambda = 0.0;
    for (size_t i = 0; i < residuals.size(); ++i) {
        p.entries.push_back({static_cast<int>(i), lambda, residuals[i], 10 - static_cast<int>(i)});
        lambda += 0.1;
    }
    p.h_count = static_cast<int>(residuals.size());
    return p;
}

} // namespace

TEST_CASE("weakest link on a stump") {
    const Dataset ds = testutil::dataset_1d({1, 2, 3, 4}, {0, 0, 1, 1});
    auto tree = std::make_shared<Tree>(ds);
    tree->split_node(0, *tree->cached_best_split(0), 2);
    const PruningPath path = weakest_link_path(tree, 2);
    REQUIRE(path.entries.size() == 2);
    CHECK(path.entries[0].lambda == 0.0);
    CHECK(path.entries[0].leaves == 2);
    CHECK(path.entries[0].residual == doctest::Approx(0.0));
    CHECK(path.entries[1].lambda == doctest::Approx(0.25));
    CHECK(path.entries[1].leaves == 1);
    CHECK(path.entries[1].residual == doctest::Approx(0.25));
    // collapsing applies at lambda >= 0.25
    CHECK(path.at_lambda(0.3).leaves == 1);
    CHECK(path.at_lambda(0.2).leaves == 2);
}

TEST_CASE("weakest link on a root-only tree") {
    const Dataset ds = testutil::dataset_1d({1, 2}, {3, 3});
    auto tree = std::make_shared<Tree>(ds);
    const PruningPath path = weakest_link_path(tree, 1);
    REQUIRE(path.entries.size() == 1);
    CHECK(path.entries[0].lambda == 0.0);
    CHECK(path.entries[0].leaves == 1);
}

TEST_CASE("path structure: nesting, monotone lambda, endpoint residuals") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        const GrowResult res = small_tree(seed, 12);
        const int stage = res.trace.last();
        const PruningPath path = weakest_link_path(res.trace.tree, stage);
        const double full_resid = residual_norm_sq({res.trace.tree.get(), stage});
        CHECK(path.entries.front().residual == doctest::Approx(full_resid).epsilon(1e-9));
        CHECK(path.entries.back().leaves == 1);
        for (size_t i = 1; i < path.entries.size(); ++i) {
            CHECK(path.entries[i].lambda > path.entries[i - 1].lambda);
            CHECK(path.entries[i].leaves < path.entries[i - 1].leaves);
            CHECK(path.entries[i].residual >= path.entries[i - 1].residual - 1e-12);
        }
    }
}

TEST_CASE("every path entry minimizes the cost-complexity objective") {
    Rng rng(71);
    for (int rep = 0; rep < 50; ++rep) {
        const GrowResult res = small_tree(rng.next_u64(), 12);
        const int stage = res.trace.last();
        const Tree& t = *res.trace.tree;
        const PruningPath path = weakest_link_path(res.trace.tree, stage);

        std::vector<std::pair<double, int>> subtrees;
        enumerate_subtrees(t, {&t, stage}, 0, &subtrees);

        for (size_t h = 0; h < path.entries.size(); ++h) {
            // probe at the midpoint of the entry's lambda interval
            const double lo = path.entries[h].lambda;
            const double lambda = h + 1 < path.entries.size()
                                      ? 0.5 * (lo + path.entries[h + 1].lambda)
                                      : lo + 1.0;
            const double mine = path.entries[h].residual + lambda * path.entries[h].leaves;
            double best = 1e300;
            for (const auto& [resid, leaves] : subtrees)
                best = std::min(best, resid + lambda * leaves);
            CHECK(mine <= best * (1 + 1e-9) + 1e-12);
        }
    }
}

TEST_CASE("filter_path: pinned rule traces") {
    // all jumps within tolerance: unchanged
    const PruningPath calm = synthetic_entries({0.0, 0.005, 0.012, 0.02});
    CHECK(filter_path(calm, 0.01).entries.size() == 4);

    // a single big jump drops that entry
    const PruningPath jumpy = synthetic_entries({0.0, 0.5});
    const PruningPath filtered = filter_path(jumpy, 0.01);
    REQUIRE(filtered.entries.size() == 1);
    CHECK(filtered.entries[0].residual == 0.0);

    // jumps (0.005, 0.02, 0.005): the middle entry is dropped and the later
    // entry is re-evaluated against the last kept one (0.025 > tol: dropped)
    const PruningPath chain = synthetic_entries({0.0, 0.005, 0.025, 0.03});
    const PruningPath kept = filter_path(chain, 0.01);
    REQUIRE(kept.entries.size() == 2);
    CHECK(kept.entries[1].residual == 0.005);
}

TEST_CASE("thin_path keeps endpoints and spaces residuals") {
    const PruningPath path = synthetic_entries({0.0, 0.001, 0.002, 0.05, 0.051, 0.2});
    const PruningPath thin = thin_path(path, 0.01);
    REQUIRE(thin.entries.size() == 3);
    CHECK(thin.entries[0].residual == 0.0);
    CHECK(thin.entries[1].residual == 0.05);
    CHECK(thin.entries[2].residual == 0.2);
}

TEST_CASE("path_sse equals brute-force pruned prediction errors") {
    Rng rng(91);
    for (int rep = 0; rep < 10; ++rep) {
        const GrowResult res = small_tree(rng.next_u64(), 14);
        const int stage = res.trace.last();
        const PruningPath path = weakest_link_path(res.trace.tree, stage);
        const Dataset eval = testutil::random_dataset(30, 2, rng.next_u64());
        const std::vector<double> got = path_sse(path, eval, eval.y);
        REQUIRE(got.size() == path.entries.size());
        for (size_t p = 0; p < path.entries.size(); ++p) {
            double want = 0.0;
            for (int r = 0; r < eval.n; ++r) {
                const double pred = predict_pruned(path, path.entries[p].h, eval.row(r));
                want += (pred - eval.y[r]) * (pred - eval.y[r]);
            }
            CHECK(got[p] == doctest::Approx(want).epsilon(1e-9));
        }
    }
}

TEST_CASE("cv_select: determinism and fold sanity") {
    const Dataset ds = testutil::random_dataset(60, 2, 10);
    const auto builder = [](const Dataset& ft) {
        GrowResult g = grow_deep(ft);
        return weakest_link_path(g.trace.tree, g.trace.last());
    };
    const PruningPath master = weakest_link_path(grow_deep(ds).trace.tree,
                                                 grow_deep(ds).trace.last());
    const auto grid = cv_grid(thin_path(master));
    const CvSelection a = cv_select(ds, builder, grid, 5, 42);
    const CvSelection b = cv_select(ds, builder, grid, 5, 42);
    CHECK(a.chosen == b.chosen);
    CHECK(a.mean_mse == b.mean_mse);
    CHECK(a.fold_of_row == b.fold_of_row);
    // fold sizes are near-equal
    std::vector<int> counts(5, 0);
    for (int f : a.fold_of_row) counts[f]++;
    for (int c : counts) CHECK(std::abs(c - 12) <= 1);

    CHECK_THROWS(cv_select(testutil::random_dataset(3, 1, 1), builder, grid, 5, 1));
}

TEST_CASE("pruning a constant response collapses to the root") {
    const Dataset ds = testutil::dataset_1d({1, 2, 3, 4, 5, 6}, {3, 3, 3, 3, 3, 3});
    const PrunedFit fit = prune_fit(ds, 7);
    CHECK(fit.leaf_count() == 1);
    CHECK(fit.predict_row(std::vector<double>{2.5}) == doctest::Approx(3.0));
}

TEST_CASE("two-step with kappa = 0 degenerates to pruning the deep tree") {
    const Dataset ds = testutil::random_dataset(50, 2, 20);
    const PrunedFit two = two_step_fit(ds, 0.0, 5);
    const GrowResult deep = grow_deep(ds);
    CHECK(two.stage == deep.trace.last());
    const PruningPath deep_path = weakest_link_path(deep.trace.tree, deep.trace.last());
    REQUIRE(two.path.entries.size() == deep_path.entries.size());
    for (size_t i = 0; i < deep_path.entries.size(); ++i) {
        CHECK(two.path.entries[i].lambda == doctest::Approx(deep_path.entries[i].lambda));
        CHECK(two.path.entries[i].leaves == deep_path.entries[i].leaves);
    }
}

TEST_CASE("two-step leaf count never exceeds its starting stage") {
    const Dataset ds = testutil::random_dataset(80, 2, 30);
    const PrunedFit two = two_step_fit(ds, 0.6, 9);
    CHECK(two.leaf_count() <= stage_leaf_count({two.tree.get(), two.stage}));
}
