#include "stoptree/noise.hpp"

#include <limits>
#include <stdexcept>

#include "stoptree/parallel.hpp"

namespace stoptree {

NoiseEstimate estimate_noise(const Dataset& ds, int threads) {
    if (ds.n < 2) throw std::invalid_argument("estimate_noise: need n >= 2");
    const int n = ds.n;
    const int d = ds.d;

    NoiseEstimate est;
    est.nn_index.assign(n, -1);

    parallel_for(n, threads, [&](int i) {
        const double* xi = ds.x.data() + static_cast<size_t>(i) * d;
        double best = std::numeric_limits<double>::infinity();
        int best_j = -1;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            const double* xj = ds.x.data() + static_cast<size_t>(j) * d;
            double dist = 0.0;
            for (int c = 0; c < d; ++c) {
                const double diff = xi[c] - xj[c];
                dist += diff * diff;
            }
            if (dist < best) { // ties keep the lowest index seen first
                best = dist;
                best_j = j;
            }
        }
        est.nn_index[i] = best_j;
    });

    long double sq = 0.0L, cross = 0.0L;
    for (int i = 0; i < n; ++i) {
        sq += static_cast<long double>(ds.y[i]) * ds.y[i];
        cross += static_cast<long double>(ds.y[i]) * ds.y[est.nn_index[i]];
    }
    const double raw = static_cast<double>((sq - cross) / n);
    est.clamped = raw < 0.0;
    est.sigma_sq_hat = est.clamped ? 0.0 : raw;
    return est;
}

} // namespace stoptree
