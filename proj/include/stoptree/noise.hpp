#pragma once
#include <vector>

#include "stoptree/dataset.hpp"

namespace stoptree {

struct NoiseEstimate {
    double sigma_sq_hat = 0.0;
    std::vector<int> nn_index; // nn_index[i] != i, nearest in Euclidean distance
    bool clamped = false;      // raw estimate was negative
};

/// Nearest-neighbour noise level estimate
///   sigma^2_hat = (1/n) sum Y_i^2 - (1/n) sum Y_i Y_nn(i),
/// from an exact O(n^2 d) scan. Distance ties break to the lowest index;
/// negative raw values clamp to zero. Requires n >= 2.
NoiseEstimate estimate_noise(const Dataset& ds, int threads = 1);

} // namespace stoptree
