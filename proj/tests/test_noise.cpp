#include <doctest.h>

#include <cmath>

#include "stoptree/noise.hpp"
#include "stoptree/rng.hpp"
#include "test_util.hpp"

using namespace stoptree;

TEST_CASE("noise estimate is exactly zero for a constant response") {
    const Dataset ds = testutil::dataset_1d({0, 1, 2, 3}, {5, 5, 5, 5});
    const NoiseEstimate est = estimate_noise(ds);
    CHECK(est.sigma_sq_hat == 0.0);
    CHECK_FALSE(est.clamped);
}

TEST_CASE("hand-computed three-point case with a distance tie") {
    const Dataset ds = testutil::dataset_1d({0, 1, 2}, {0, 2, 0});
    const NoiseEstimate est = estimate_noise(ds);
    CHECK(est.nn_index == std::vector<int>{1, 0, 1}); // tie at i=1 goes to index 0
    CHECK(est.sigma_sq_hat == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("negative raw estimates clamp to zero with a flag") {
    const Dataset ds = testutil::dataset_1d({0, 1, 2}, {1, 1, 0.5});
    const NoiseEstimate est = estimate_noise(ds);
    CHECK(est.sigma_sq_hat == 0.0);
    CHECK(est.clamped);
}

TEST_CASE("nearest neighbours are invariant under covariate shifts") {
    Dataset ds = testutil::random_dataset(40, 3, 12);
    const NoiseEstimate base = estimate_noise(ds);
    for (auto& v : ds.x) v += 123.5;
    const NoiseEstimate shifted = estimate_noise(ds);
    CHECK(base.nn_index == shifted.nn_index);
}

TEST_CASE("threaded scan matches the serial scan") {
    const Dataset ds = testutil::random_dataset(200, 2, 8);
    const NoiseEstimate serial = estimate_noise(ds, 1);
    const NoiseEstimate par = estimate_noise(ds, 4);
    CHECK(serial.nn_index == par.nn_index);
    CHECK(serial.sigma_sq_hat == par.sigma_sq_hat);
}

TEST_CASE("pure-noise estimate concentrates near the true variance") {
    // constant f: the estimator is unbiased, so the seed average must sit
    // within a few standard errors of sigma^2
    const int n = 800, reps = 60;
    Rng seeds(100);
    double sum = 0.0, sum_sq = 0.0;
    for (int r = 0; r < reps; ++r) {
        Rng rng(seeds.next_u64());
        Dataset ds;
        ds.n = n;
        ds.d = 1;
        ds.x.resize(n);
        ds.y.resize(n);
        for (auto& v : ds.x) v = rng.next_unit();
        for (auto& v : ds.y) v = rng.next_normal();
        const double est = estimate_noise(ds).sigma_sq_hat;
        sum += est;
        sum_sq += est * est;
    }
    const double mean = sum / reps;
    const double var = sum_sq / reps - mean * mean;
    const double se = std::sqrt(var / reps);
    CHECK(std::abs(mean - 1.0) <= 3.0 * se + 1e-3);
}

TEST_CASE("rejects singleton input") {
    const Dataset ds = testutil::dataset_1d({0}, {1});
    CHECK_THROWS(estimate_noise(ds));
}
