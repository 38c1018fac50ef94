#include <doctest.h>

#include <cmath>

#include "stoptree/growth.hpp"
#include "stoptree/rng.hpp"
#include "stoptree/sim.hpp"
#include "test_util.hpp"

using namespace stoptree;

TEST_CASE("stopping boundaries around the root") {
    const Dataset ds = testutil::dataset_1d({1, 2, 3, 4}, {0, 0, 1, 1});
    // ||Y||_n^2 = 0.5, root residual = 0.25

    StoppingConfig cfg;
    cfg.mode = GrowthMode::semi_global;

    cfg.kappa = 0.6; // above ||Y||^2: stop at the empty projection
    const GrowResult pre = grow(ds, cfg);
    CHECK(pre.report.cause == StopCause::pre_root);
    CHECK(pre.report.tau == 0.0);
    CHECK(pre.report.fitted == std::vector<double>(4, 0.0));

    cfg.kappa = 0.3; // between root residual and ||Y||^2: root-only fit
    const GrowResult root = grow(ds, cfg);
    CHECK(root.report.cause == StopCause::threshold);
    CHECK(root.report.k_at_stop == 1.0);
    CHECK(root.report.fitted == std::vector<double>(4, 0.5));
}

TEST_CASE("kappa = 0 with distinct design interpolates the data") {
    const Dataset ds = testutil::random_dataset(25, 2, 3);
    StoppingConfig cfg;
    cfg.kappa = 0.0;
    cfg.mode = GrowthMode::semi_global;
    const GrowResult res = grow(ds, cfg);
    CHECK(res.report.residual_at_stop == 0.0);
    CHECK(res.report.fitted == ds.y);
    // one-step property: each iteration adds exactly one leaf
    for (int s = 0; s <= res.trace.last(); ++s) CHECK(res.trace.step(s).k == s);
}

TEST_CASE("global growth on the four-point example stops at depth one") {
    const Dataset ds = testutil::dataset_1d({1, 2, 3, 4}, {0, 0, 1, 1});
    StoppingConfig cfg;
    cfg.kappa = 0.1;
    cfg.mode = GrowthMode::global;
    const GrowResult res = grow(ds, cfg);
    CHECK(res.report.cause == StopCause::threshold);
    CHECK(res.report.k_at_stop == 2.0);
    CHECK(res.report.residual_at_stop == 0.0);
}

TEST_CASE("constant response stops at the root for any kappa") {
    const Dataset ds = testutil::dataset_1d({1, 2, 3, 4, 5}, {2, 2, 2, 2, 2});
    for (auto mode : {GrowthMode::global, GrowthMode::semi_global}) {
        StoppingConfig cfg;
        cfg.kappa = 0.0;
        cfg.mode = mode;
        const GrowResult res = grow(ds, cfg);
        CHECK(res.report.k_at_stop <= 1.0);
        CHECK(res.report.residual_at_stop == 0.0);
    }
}

TEST_CASE("global trace dimensions at most double per generation") {
    const Dataset ds = testutil::random_dataset(80, 3, 9);
    const GrowResult deep = grow_deep(ds);
    const FlowTrace& tr = deep.trace;
    CHECK(tr.step(0).k == 0);
    CHECK(tr.step(1).k == 1);
    for (int s = 1; s < tr.last(); ++s) {
        CHECK(tr.step(s + 1).k > tr.step(s).k);
        CHECK(tr.step(s + 1).k <= 2 * tr.step(s).k);
    }
}

TEST_CASE("segment_residual: boundaries and pinned interior value") {
    CHECK(segment_residual(0.4, 0.1, 0.0) == doctest::Approx(0.4));
    CHECK(segment_residual(0.4, 0.1, 1.0) == doctest::Approx(0.1));
    CHECK(segment_residual(0.4, 0.1, 0.5) == doctest::Approx(0.175));
    // non-increasing in alpha
    double prev = 1e300;
    for (int i = 0; i <= 20; ++i) {
        const double r = segment_residual(0.4, 0.1, i / 20.0);
        CHECK(r <= prev + 1e-15);
        prev = r;
    }
}

TEST_CASE("segment residual closed form matches direct blended evaluation") {
    Rng rng(31);
    for (int rep = 0; rep < 30; ++rep) {
        const Dataset ds = testutil::random_dataset(20 + static_cast<int>(rng.next_below(30)), 2,
                                                    rng.next_u64());
        const GrowResult deep = grow_deep(ds);
        const FlowTrace& tr = deep.trace;
        const int g = 1 + static_cast<int>(rng.next_below(tr.last() - 1));
        const double alpha = rng.next_unit();
        const auto blend = fitted_at(tr, g, g + 1, alpha);
        long double acc = 0.0L;
        for (int i = 0; i < ds.n; ++i) {
            const long double d = ds.y[i] - blend[i];
            acc += d * d;
        }
        const double direct = static_cast<double>(acc / ds.n);
        const double closed =
            segment_residual(tr.step(g).residual, tr.step(g + 1).residual, alpha);
        CHECK(closed == doctest::Approx(direct).epsilon(1e-9));
    }
}

TEST_CASE("interpolated_stop: pinned alpha and boundary handling") {
    // build a synthetic two-step trace carrying the target residuals
    const Dataset ds = testutil::dataset_1d({1, 2, 3, 4}, {0, 0, 1, 1});
    StoppingConfig cfg;
    cfg.kappa = -1.0; // run to exhaustion
    cfg.mode = GrowthMode::semi_global;
    FlowTrace tr = grow(ds, cfg).trace;
    REQUIRE(tr.last() >= 2);
    tr.steps.resize(3);
    tr.steps[1].residual = 0.4;
    tr.steps[2].residual = 0.1;

    const StopReport rep = interpolated_stop(tr, 0.2);
    CHECK(rep.alpha == doctest::Approx(1.0 - 1.0 / std::sqrt(3.0)).epsilon(1e-12));
    CHECK(rep.step_k == 1);
    CHECK(rep.step_l == 2);
    CHECK(rep.residual_at_stop == doctest::Approx(0.2).epsilon(1e-12));

    // kappa equal to the later residual clamps to the later generation
    const StopReport at_l = interpolated_stop(tr, 0.1);
    CHECK(at_l.step_k == at_l.step_l);
    CHECK(at_l.alpha == 0.0);
    CHECK(at_l.residual_at_stop == doctest::Approx(0.1));

    // kappa equal to an exactly attained residual stops right there
    const StopReport at_k = interpolated_stop(tr, 0.4);
    CHECK(at_k.step_l == 1);
    CHECK(at_k.alpha == 0.0);

    CHECK_THROWS(interpolated_stop(tr, -0.5));
}

TEST_CASE("interpolated growth reports residual equal to kappa") {
    const Dataset ds = testutil::random_dataset(64, 2, 21);
    StoppingConfig cfg;
    cfg.kappa = 0.5;
    cfg.mode = GrowthMode::global_interpolated;
    const GrowResult res = grow(ds, cfg);
    REQUIRE(res.report.cause == StopCause::threshold);
    CHECK(res.report.residual_at_stop == doctest::Approx(cfg.kappa).epsilon(1e-9));
    // the blended fit evaluates to the same residual directly
    long double acc = 0.0L;
    for (int i = 0; i < ds.n; ++i) {
        const long double d = ds.y[i] - res.report.fitted[i];
        acc += d * d;
    }
    CHECK(static_cast<double>(acc / ds.n) == doctest::Approx(cfg.kappa).epsilon(1e-9));
}

TEST_CASE("non-interpolated stop step is minimal") {
    const Dataset ds = testutil::random_dataset(50, 2, 33);
    StoppingConfig cfg;
    cfg.kappa = 0.4;
    cfg.mode = GrowthMode::semi_global;
    const GrowResult res = grow(ds, cfg);
    REQUIRE(res.trace.stop_step >= 1);
    for (int s = 0; s < res.trace.stop_step; ++s)
        CHECK(res.trace.step(s).residual > cfg.kappa);
    CHECK(res.trace.step(res.trace.stop_step).residual <= cfg.kappa);
}

TEST_CASE("grow_deep: interpolation and the duplicate-row closure") {
    const Dataset ds = testutil::random_dataset(50, 2, 41);
    const GrowResult deep = grow_deep(ds);
    CHECK(deep.trace.steps.back().k == 50);

    // duplicated design rows with conflicting responses cannot be separated
    Dataset dup = ds;
    for (int j = 0; j < dup.d; ++j) dup.x[1 * dup.d + j] = dup.x[0 * dup.d + j];
    dup.y[0] = 0.0;
    dup.y[1] = 1.0;
    const GrowResult blocked = grow_deep(dup);
    CHECK(blocked.trace.steps.back().k < 50);
    CHECK(blocked.report.cause == StopCause::exhausted);
}

TEST_CASE("min-impurity baseline: thresholds zero and huge") {
    const Dataset ds = testutil::random_dataset(40, 2, 55);
    const GrowResult deep = grow_deep(ds);
    const GrowResult zero = grow_min_impurity_baseline(ds, 0.0);
    CHECK(zero.trace.steps.back().k == deep.trace.steps.back().k);
    CHECK(zero.trace.steps.back().residual ==
          doctest::Approx(deep.trace.steps.back().residual));

    const GrowResult huge = grow_min_impurity_baseline(ds, 1e6);
    CHECK(huge.trace.steps.back().k == 1);
}

TEST_CASE("leaf cap flags the report") {
    const Dataset ds = testutil::random_dataset(60, 2, 77);
    StoppingConfig cfg;
    cfg.kappa = 0.0;
    cfg.mode = GrowthMode::semi_global;
    cfg.max_leaves = 5;
    const GrowResult res = grow(ds, cfg);
    CHECK(res.report.cause == StopCause::capped);
    CHECK(res.report.k_at_stop == 5.0);
}

TEST_CASE("zero-gain splits are skipped unless explicitly allowed") {
    // duplicated design points with conflicting responses: the only split has
    // zero gain
    Dataset ds;
    ds.n = 4;
    ds.d = 1;
    ds.x = {0, 0, 1, 1};
    ds.y = {0, 1, 0, 1};
    StoppingConfig cfg;
    cfg.kappa = 0.0;
    cfg.mode = GrowthMode::semi_global;
    const GrowResult skip = grow(ds, cfg);
    CHECK(skip.trace.steps.back().k == 1);
    CHECK(skip.report.cause == StopCause::exhausted);

    cfg.allow_zero_gain_splits = true;
    const GrowResult take = grow(ds, cfg);
    CHECK(take.trace.steps.back().k == 2);
    CHECK(take.trace.steps.back().residual ==
          doctest::Approx(skip.trace.steps.back().residual)); // unchanged residual
}

TEST_CASE("xor semi-global stopping splits while the local rule stalls") {
    const XorReport rep = xor_demo(500, 0.1, 0.1, 0.1, 424242);
    CHECK(rep.baseline_leaves == 1.0);
    CHECK(rep.semi_leaves > 3.0);
    CHECK(rep.semi_rmse < rep.baseline_rmse);
}
