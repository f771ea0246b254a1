#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cadpu/geometry.hpp"

namespace cadpu {

// Surface-variation values aligned with a cloud; each in [0, 1/3].
struct CurvatureField {
  std::vector<double> values;
  std::size_t k_used = 0;
};

// Normalized curvature-adaptive sampling distribution.
struct SamplingWeights {
  std::vector<double> weights;  // sum to 1
  double epsilon = 0.0;
};

// Per point: lambda1 / (lambda1 + lambda2 + lambda3) over the k-neighborhood
// covariance (query point excluded). Returns 0 where the eigenvalue sum
// vanishes. Requires |cloud| > k.
CurvatureField surface_variation(const PointCloud& cloud, const KnnIndex& index,
                                 std::size_t k);

// w_i = log(kappa_i + 1 + eps) / sum_j log(kappa_j + 1 + eps), natural log.
SamplingWeights sampling_weights(const CurvatureField& curvatures, double epsilon);

// Averaged |<unit(q'-q), n_q>| over the k nearest neighbors of cloud point
// q_index within its own cloud. Pairs closer than 1e-12 contribute 0.
double surrogate_pred(std::size_t q_index, const PointCloud& cloud,
                      const KnnIndex& index, std::size_t k);

// Same shape but q is embedded into the ground truth: neighbors and normals
// both come from gt, using each neighbor's own normal.
double surrogate_gt(const Vec3& q, const PointCloud& gt, const KnnIndex& gt_index,
                    std::size_t k);

// Neighbor sets and normal assignments captured once from a (pred, gt) pair.
// Value and gradient evaluations against this structure treat those discrete
// selections as constants, which is the training-time convention.
struct RegularizerStructure {
  std::size_t k = 0;
  std::vector<Vec3> center_normals;                  // per pred point, from nearest gt
  std::vector<std::vector<std::size_t>> pred_neighbors;  // indices into pred
  std::vector<std::vector<std::size_t>> gt_neighbors;    // indices into gt
  std::vector<Vec3> gt_points;
  std::vector<Vec3> gt_normals;
};

RegularizerStructure build_regularizer_structure(const PointCloud& pred,
                                                 const PointCloud& gt,
                                                 std::size_t k);

double regularizer_value(const RegularizerStructure& s, std::span<const Vec3> pred);

std::vector<Vec3> regularizer_grad_frozen(const RegularizerStructure& s,
                                          std::span<const Vec3> pred);

// Eq.-7 style average of the two surrogates over all predicted points,
// with predicted normals borrowed from each point's nearest gt point.
double regularizer(const PointCloud& pred, const PointCloud& gt, std::size_t k);

// Exact gradient of regularizer() under the frozen-selection convention.
std::vector<Vec3> regularizer_grad(const PointCloud& pred, const PointCloud& gt,
                                   std::size_t k);

}  // namespace cadpu
