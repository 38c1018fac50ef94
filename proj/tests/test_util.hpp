#pragma once
#include <vector>

#include "stoptree/dataset.hpp"
#include "stoptree/rng.hpp"

namespace testutil {

inline stoptree::Dataset random_dataset(int n, int d, std::uint64_t seed, double noise_sd = 1.0) {
    stoptree::Rng rng(seed);
    stoptree::Dataset ds;
    ds.n = n;
    ds.d = d;
    ds.x.resize(static_cast<size_t>(n) * d);
    ds.y.resize(n);
    for (auto& v : ds.x) v = rng.next_unit();
    for (int i = 0; i < n; ++i) {
        const double f = ds.xat(i, 0) > 0.5 ? 1.0 : -1.0; // simple step signal
        ds.y[i] = f + noise_sd * rng.next_normal();
    }
    return ds;
}

inline stoptree::Dataset dataset_1d(std::vector<double> x, std::vector<double> y) {
    stoptree::Dataset ds;
    ds.n = static_cast<int>(x.size());
    ds.d = 1;
    ds.x = std::move(x);
    ds.y = std::move(y);
    return ds;
}

} // namespace testutil
