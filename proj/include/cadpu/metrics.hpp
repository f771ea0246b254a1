#pragma once

#include <cstdint>
#include <vector>

#include "cadpu/geometry.hpp"

namespace cadpu {

// A bijection from set A to set B with its total Euclidean cost.
struct Assignment {
  std::vector<std::size_t> mapping;  // mapping[i] = index into B for A[i]
  double cost = 0.0;
};

// 0.5 * [mean_a min_b d(a,b) + mean_b min_a d(a,b)], non-squared distances.
double chamfer(const PointCloud& a, const PointCloud& b);

// max(max_a min_b d, max_b min_a d).
double hausdorff(const PointCloud& a, const PointCloud& b);

// Globally optimal bijection via the Hungarian algorithm on the Euclidean
// cost matrix. Requires |a| == |b| <= 512; use emd_auction beyond that.
Assignment emd_exact(const PointCloud& a, const PointCloud& b);

// Auction algorithm with epsilon-scaling. Guaranteed cost within
// (1 + epsilon_frac) of the optimum. Phases start at eps = (max cost)/2 and
// shrink by a factor of 4 down to epsilon_frac * lower_bound / n, where
// lower_bound = sum over rows of the row minimum. The per-phase bid count is
// capped at 1000*(n+1)^2; exceeding the cap raises NumericalError.
Assignment emd_auction(const PointCloud& a, const PointCloud& b,
                       double epsilon_frac);

struct EmdLossGrad {
  double loss = 0.0;           // sum over pairs of Euclidean distance
  std::vector<Vec3> grad;      // d loss / d pred under the frozen matching
  Assignment assignment;
};

// Auction assignment, frozen; loss = sum ||q - psi(q)||, gradient per point
// is the unit vector toward its match (0 for coincident pairs).
EmdLossGrad emd_loss_and_grad(const PointCloud& pred, const PointCloud& gt,
                              double epsilon_frac);

}  // namespace cadpu
