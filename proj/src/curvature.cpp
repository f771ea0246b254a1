#include "cadpu/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cadpu/parallel.hpp"

namespace cadpu {

namespace {
constexpr double kZeroDistanceGuard = 1e-12;
}

CurvatureField surface_variation(const PointCloud& cloud, const KnnIndex& index,
                                 std::size_t k) {
  if (cloud.size() <= k)
    throw std::invalid_argument("surface_variation: cloud smaller than k+1");
  if (&index.cloud() != &cloud)
    throw std::invalid_argument("surface_variation: index built over another cloud");

  CurvatureField field;
  field.k_used = k;
  field.values.assign(cloud.size(), 0.0);

  parallel_for(cloud.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<Vec3> nb;
    for (std::size_t i = begin; i < end; ++i) {
      const auto idx = index.neighbors_of(i, k);
      nb.clear();
      for (std::size_t j : idx) nb.push_back(cloud.points[j]);
      const Mat3 cov = neighborhood_covariance(cloud.points[i], nb);
      const SymEig3 eig = sym_eigen3(cov);
      const double sum =
          eig.eigenvalues[0] + eig.eigenvalues[1] + eig.eigenvalues[2];
      if (sum < 1e-15) {
        field.values[i] = 0.0;
        continue;
      }
      const double v = std::max(eig.eigenvalues[0], 0.0) / sum;
      field.values[i] = std::min(v, 1.0 / 3.0);
    }
  });
  return field;
}

SamplingWeights sampling_weights(const CurvatureField& curvatures, double epsilon) {
  if (!(epsilon > 0.0))
    throw std::invalid_argument("sampling_weights: epsilon must be positive");
  if (curvatures.values.empty())
    throw std::invalid_argument("sampling_weights: empty curvature field");
  SamplingWeights w;
  w.epsilon = epsilon;
  w.weights.resize(curvatures.values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < curvatures.values.size(); ++i) {
    const double kappa = curvatures.values[i];
    if (kappa < 0.0)
      throw std::invalid_argument("sampling_weights: negative curvature");
    w.weights[i] = std::log(kappa + 1.0 + epsilon);
    total += w.weights[i];
  }
  for (double& v : w.weights) v /= total;
  return w;
}

namespace {

// One term |<d/|d|, n>| with the zero-distance guard.
double surrogate_term(const Vec3& d, const Vec3& n) {
  const double rho = d.norm();
  if (rho < kZeroDistanceGuard) return 0.0;
  return std::fabs(d.dot(n)) / rho;
}

// Gradient of surrogate_term with respect to d. Zero at the |.| kink and
// inside the zero-distance guard.
Vec3 surrogate_term_grad(const Vec3& d, const Vec3& n) {
  const double rho = d.norm();
  if (rho < kZeroDistanceGuard) return Vec3{};
  const double s = d.dot(n);
  if (s == 0.0) return Vec3{};
  const double sign = s > 0.0 ? 1.0 : -1.0;
  return n * (sign / rho) - d * (std::fabs(s) / (rho * rho * rho));
}

}  // namespace

double surrogate_pred(std::size_t q_index, const PointCloud& cloud,
                      const KnnIndex& index, std::size_t k) {
  if (!cloud.has_normals())
    throw std::invalid_argument("surrogate_pred: cloud has no normals");
  if (cloud.size() <= k)
    throw std::invalid_argument("surrogate_pred: cloud smaller than k+1");
  const Vec3& q = cloud.points[q_index];
  const Vec3& n = cloud.normals[q_index];
  const auto nb = index.neighbors_of(q_index, k);
  double acc = 0.0;
  for (std::size_t j : nb) acc += surrogate_term(cloud.points[j] - q, n);
  return acc / static_cast<double>(k);
}

double surrogate_gt(const Vec3& q, const PointCloud& gt, const KnnIndex& gt_index,
                    std::size_t k) {
  if (!gt.has_normals())
    throw std::invalid_argument("surrogate_gt: gt has no normals");
  if (gt.size() <= k)
    throw std::invalid_argument("surrogate_gt: gt smaller than k+1");
  const auto nb = gt_index.nearest(q, k);
  double acc = 0.0;
  for (std::size_t j : nb)
    acc += surrogate_term(gt.points[j] - q, gt.normals[j]);
  return acc / static_cast<double>(k);
}

RegularizerStructure build_regularizer_structure(const PointCloud& pred,
                                                 const PointCloud& gt,
                                                 std::size_t k) {
  if (pred.empty()) throw std::invalid_argument("regularizer: empty prediction");
  if (!gt.has_normals())
    throw std::invalid_argument("regularizer: gt has no normals");
  if (pred.size() <= k)
    throw std::invalid_argument("regularizer: prediction smaller than k+1");
  if (gt.size() <= k)
    throw std::invalid_argument("regularizer: gt smaller than k+1");

  const KnnIndex pred_index(pred);
  const KnnIndex gt_index(gt);

  RegularizerStructure s;
  s.k = k;
  s.gt_points = gt.points;
  s.gt_normals = gt.normals;
  s.center_normals.resize(pred.size());
  s.pred_neighbors.resize(pred.size());
  s.gt_neighbors.resize(pred.size());

  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto nearest_gt = gt_index.nearest(pred.points[i], 1);
    s.center_normals[i] = gt.normals[nearest_gt[0]];
    s.pred_neighbors[i] = pred_index.neighbors_of(i, k);
    s.gt_neighbors[i] = gt_index.nearest(pred.points[i], k);
  }
  return s;
}

double regularizer_value(const RegularizerStructure& s, std::span<const Vec3> pred) {
  const double inv_k = 1.0 / static_cast<double>(s.k);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double own = 0.0;
    for (std::size_t j : s.pred_neighbors[i])
      own += surrogate_term(pred[j] - pred[i], s.center_normals[i]);
    double embedded = 0.0;
    for (std::size_t j : s.gt_neighbors[i])
      embedded += surrogate_term(s.gt_points[j] - pred[i], s.gt_normals[j]);
    total += inv_k * (own + embedded);
  }
  return total / static_cast<double>(pred.size());
}

std::vector<Vec3> regularizer_grad_frozen(const RegularizerStructure& s,
                                          std::span<const Vec3> pred) {
  std::vector<Vec3> grad(pred.size());
  const double w = 1.0 / (static_cast<double>(pred.size()) * static_cast<double>(s.k));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j : s.pred_neighbors[i]) {
      // d = pred[j] - pred[i]; term depends on both endpoints.
      const Vec3 g = surrogate_term_grad(pred[j] - pred[i], s.center_normals[i]);
      grad[j] += g * w;
      grad[i] -= g * w;
    }
    for (std::size_t j : s.gt_neighbors[i]) {
      const Vec3 g = surrogate_term_grad(s.gt_points[j] - pred[i], s.gt_normals[j]);
      grad[i] -= g * w;
    }
  }
  return grad;
}

double regularizer(const PointCloud& pred, const PointCloud& gt, std::size_t k) {
  const RegularizerStructure s = build_regularizer_structure(pred, gt, k);
  return regularizer_value(s, pred.points);
}

std::vector<Vec3> regularizer_grad(const PointCloud& pred, const PointCloud& gt,
                                   std::size_t k) {
  const RegularizerStructure s = build_regularizer_structure(pred, gt, k);
  return regularizer_grad_frozen(s, pred.points);
}

}  // namespace cadpu
