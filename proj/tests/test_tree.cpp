#include <doctest.h>

#include <cmath>
#include <numeric>

#include <json.hpp>

#include "stoptree/growth.hpp"
#include "stoptree/rng.hpp"
#include "stoptree/tree.hpp"
#include "test_util.hpp"

using namespace stoptree;

TEST_CASE("root-only tree: grand mean fit and variance residual") {
    const Dataset ds = testutil::dataset_1d({1, 2, 3, 4}, {1, 2, 3, 6});
    Tree tree(ds);
    const TreeStage st{&tree, 1};
    const double mean = 3.0;
    for (double v : fit_values(st)) CHECK(v == doctest::Approx(mean));
    CHECK(residual_norm_sq(st) == doctest::Approx((4 + 1 + 0 + 9) / 4.0));
    CHECK(stage_leaf_count(st) == 1);
}

TEST_CASE("split_node on the four-point example") {
    const Dataset ds = testutil::dataset_1d({1, 2, 3, 4}, {0, 0, 1, 1});
    Tree tree(ds);
    const auto* best = tree.cached_best_split(0);
    REQUIRE(best != nullptr);
    const double decrease = tree.split_node(0, *best, 2);
    CHECK(decrease == doctest::Approx(0.25)); // (4/4) * 0.25
    CHECK(tree.leaf_count() == 2);
    const TreeStage st{&tree, 2};
    CHECK(fit_values(st) == std::vector<double>{0, 0, 1, 1});
    CHECK(residual_norm_sq(st) == 0.0);
    // stage 1 still sees the root partition
    CHECK(stage_leaf_count({&tree, 1}) == 1);
    // re-splitting the same node is an error
    CHECK_THROWS(tree.split_node(0, *tree.cached_best_split(0), 3));
}

TEST_CASE("fully grown tree interpolates distinct-design data") {
    const Dataset ds = testutil::random_dataset(40, 2, 7);
    const GrowResult deep = grow_deep(ds);
    const TreeStage st{deep.trace.tree.get(), deep.trace.last()};
    CHECK(stage_leaf_count(st) == 40);
    CHECK(fit_values(st) == ds.y);
    CHECK(residual_norm_sq(st) == 0.0);
}

TEST_CASE("apply_projection: idempotence, fit recovery, annihilation") {
    const Dataset ds = testutil::random_dataset(30, 2, 11);
    StoppingConfig cfg;
    cfg.kappa = 0.3;
    cfg.mode = GrowthMode::semi_global;
    const GrowResult res = grow(ds, cfg);
    const TreeStage st{res.trace.tree.get(), res.trace.last()};

    const std::vector<double> fit = fit_values(st);
    CHECK(apply_projection(st, fit) == fit);
    CHECK(apply_projection(st, ds.y) == fit);

    // a vector that is mean-zero on every leaf projects to zero
    std::vector<double> v(ds.n);
    Rng rng(3);
    for (auto& e : v) e = rng.next_normal();
    std::vector<double> centered = v;
    const std::vector<double> leaf_means = apply_projection(st, v);
    for (int i = 0; i < ds.n; ++i) centered[i] -= leaf_means[i];
    for (double e : apply_projection(st, centered)) CHECK(std::abs(e) < 1e-12);
}

TEST_CASE("nested stages behave as refining projections") {
    const Dataset ds = testutil::random_dataset(48, 3, 13);
    const GrowResult deep = grow_deep(ds);
    const Tree& tree = *deep.trace.tree;
    const int last = deep.trace.last();

    Rng rng(29);
    for (int rep = 0; rep < 20; ++rep) {
        const int s = 1 + static_cast<int>(rng.next_below(last));
        const int t = s + static_cast<int>(rng.next_below(last - s + 1));
        std::vector<double> v(ds.n);
        for (auto& e : v) e = rng.next_normal();
        const auto pt = apply_projection({&tree, t}, v);
        const auto ps_pt = apply_projection({&tree, s}, pt);
        const auto ps = apply_projection({&tree, s}, v);
        for (int i = 0; i < ds.n; ++i) CHECK(ps_pt[i] == doctest::Approx(ps[i]).epsilon(1e-10));
    }
}

TEST_CASE("trace identity: leaf count equals summed leverages") {
    const Dataset ds = testutil::random_dataset(32, 2, 17);
    StoppingConfig cfg;
    cfg.kappa = 0.2;
    const GrowResult res = grow(ds, cfg);
    const TreeStage st{res.trace.tree.get(), res.trace.last()};
    long double trace = 0.0L;
    for_each_terminal(st, [&](int id) {
        const int cnt = res.trace.tree->node(id).count();
        trace += cnt * (1.0L / cnt);
    });
    CHECK(static_cast<double>(trace) == doctest::Approx(stage_leaf_count(st)));
}

TEST_CASE("monotone residual and exact telescoping along a trace") {
    const Dataset ds = testutil::random_dataset(60, 2, 19);
    const GrowResult deep = grow_deep(ds);
    const FlowTrace& tr = deep.trace;
    for (int s = 1; s <= tr.last(); ++s)
        CHECK(tr.step(s).residual <= tr.step(s - 1).residual + 1e-12);

    Rng rng(23);
    for (int rep = 0; rep < 15; ++rep) {
        const int s = 1 + static_cast<int>(rng.next_below(tr.last()));
        const int t = s + static_cast<int>(rng.next_below(tr.last() - s + 1));
        const auto fs = fit_values({tr.tree.get(), s});
        const auto ft = fit_values({tr.tree.get(), t});
        long double acc = 0.0L;
        for (int i = 0; i < ds.n; ++i) acc += (ft[i] - fs[i]) * (ft[i] - fs[i]);
        const double diff_sq = static_cast<double>(acc / ds.n);
        const double want = tr.step(s).residual - tr.step(t).residual;
        CHECK(diff_sq == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("tree json is stable and well formed") {
    const Dataset ds = testutil::dataset_1d({1, 2, 3, 4}, {0, 0, 1, 1});
    Tree tree(ds);
    tree.split_node(0, *tree.cached_best_split(0), 2);
    const auto doc = nlohmann::json::parse(tree_to_json(tree, 2));
    CHECK(doc["schema_version"] == 1);
    CHECK(doc["k"] == 2);
    CHECK(doc["nodes"].size() == 3);
    CHECK(doc["nodes"][0]["feature"] == 0);
    CHECK(doc["nodes"][0]["threshold"] == 2.5);
    // at stage 1 the root serializes as a leaf
    const auto root_only = nlohmann::json::parse(tree_to_json(tree, 1));
    CHECK(root_only["k"] == 1);
    CHECK(root_only["nodes"].size() == 1);
    CHECK(root_only["nodes"][0]["left"] == -1);
}
