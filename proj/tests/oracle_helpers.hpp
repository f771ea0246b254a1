// Test-only oracles, independent of the implementation paths they check.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "cadpu/geometry.hpp"
#include "cadpu/rng.hpp"

namespace oracle {

// Brute-force kNN: full distance sort with the (distance, index) tie-break.
inline std::vector<std::size_t> knn_bruteforce(const cadpu::PointCloud& cloud,
                                               const cadpu::Vec3& p, std::size_t k,
                                               std::size_t exclude = static_cast<std::size_t>(-1)) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (i == exclude) continue;
    d.push_back({(cloud.points[i] - p).norm2(), i});
  }
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, d.size()); ++i) out.push_back(d[i].second);
  return out;
}

// Eigenvalues of a symmetric 3x3 via the closed-form characteristic
// polynomial (trigonometric cubic roots), sorted ascending.
inline std::array<double, 3> eigenvalues_cubic(const cadpu::Mat3& m) {
  const double a = m(0, 0), b = m(1, 1), c = m(2, 2);
  const double d = m(0, 1), e = m(0, 2), f = m(1, 2);
  const double p1 = d * d + e * e + f * f;
  std::array<double, 3> eig;
  if (p1 == 0.0) {
    eig = {a, b, c};
    std::sort(eig.begin(), eig.end());
    return eig;
  }
  const double q = (a + b + c) / 3.0;
  const double p2 = (a - q) * (a - q) + (b - q) * (b - q) + (c - q) * (c - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  // B = (M - q I) / p ; r = det(B) / 2 clamped into [-1, 1].
  const double b00 = (a - q) / p, b11 = (b - q) / p, b22 = (c - q) / p;
  const double b01 = d / p, b02 = e / p, b12 = f / p;
  const double detB = b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02) +
                      b02 * (b01 * b12 - b11 * b02);
  double r = detB / 2.0;
  r = std::max(-1.0, std::min(1.0, r));
  const double phi = std::acos(r) / 3.0;
  const double two_pi_3 = 2.0943951023931954923;
  const double l1 = q + 2.0 * p * std::cos(phi);
  const double l3 = q + 2.0 * p * std::cos(phi + 2.0 * two_pi_3);
  const double l2 = 3.0 * q - l1 - l3;
  eig = {l1, l2, l3};
  std::sort(eig.begin(), eig.end());
  return eig;
}

// Greedy FPS reference: first pick by the same convention (uniform rank in
// lexicographic order), then O(N*m) scans.
inline std::vector<std::size_t> fps_reference(const cadpu::PointCloud& cloud,
                                              std::size_t m, std::uint64_t seed) {
  const std::size_t n = cloud.size();
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) rank[i] = i;
  std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = cloud.points[a];
    const auto& pb = cloud.points[b];
    if (pa.x != pb.x) return pa.x < pb.x;
    if (pa.y != pb.y) return pa.y < pb.y;
    if (pa.z != pb.z) return pa.z < pb.z;
    return a < b;
  });
  cadpu::Rng rng(seed);
  std::vector<std::size_t> out{rank[rng.uniform_index(n)]};
  std::vector<double> mind(n);
  for (std::size_t i = 0; i < n; ++i)
    mind[i] = (cloud.points[i] - cloud.points[out[0]]).norm2();
  std::vector<bool> taken(n, false);
  taken[out[0]] = true;
  while (out.size() < m) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best == n || mind[i] > mind[best]) best = i;
    }
    out.push_back(best);
    taken[best] = true;
    for (std::size_t i = 0; i < n; ++i)
      mind[i] = std::min(mind[i], (cloud.points[i] - cloud.points[best]).norm2());
  }
  return out;
}

// Exact minimal assignment cost by DP over subsets (n <= ~12).
inline double assignment_dp(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  const std::size_t full = std::size_t{1} << n;
  std::vector<double> dp(full, 1e300);
  dp[0] = 0.0;
  for (std::size_t mask = 0; mask < full; ++mask) {
    if (dp[mask] >= 1e300) continue;
    std::size_t i = static_cast<std::size_t>(__builtin_popcountll(mask));
    if (i >= n) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask & (std::size_t{1} << j)) continue;
      const std::size_t next = mask | (std::size_t{1} << j);
      dp[next] = std::min(dp[next], dp[mask] + cost[i][j]);
    }
  }
  return dp[full - 1];
}

// Upper regularized incomplete gamma Q(a, x); chi-square p-value is
// Q(dof/2, stat/2). Series + continued fraction, Numerical-Recipes style.
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) return 1.0;
  if (x == 0.0) return 1.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    // series for P(a,x)
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
    }
    const double p = sum * std::exp(-x + a * std::log(x) - gln);
    return 1.0 - p;
  }
  // continued fraction for Q(a,x)
  double b = x + 1.0 - a;
  double c = 1e300;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - gln) * h;
}

inline double chi_square_p_value(const std::vector<double>& observed,
                                 const std::vector<double>& expected) {
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double diff = observed[i] - expected[i];
    stat += diff * diff / expected[i];
  }
  return gamma_q(0.5 * static_cast<double>(observed.size() - 1), 0.5 * stat);
}

// Random rotation from a seeded axis-angle (Rodrigues).
inline cadpu::Mat3 random_rotation(cadpu::Rng& rng) {
  cadpu::Vec3 axis{rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)};
  axis = axis.normalized();
  if (axis.norm() == 0.0) axis = {0, 0, 1};
  const double angle = rng.uniform(0.0, 6.283185307179586);
  const double c = std::cos(angle), s = std::sin(angle);
  const double t = 1.0 - c;
  cadpu::Mat3 r;
  r(0, 0) = c + axis.x * axis.x * t;
  r(0, 1) = axis.x * axis.y * t - axis.z * s;
  r(0, 2) = axis.x * axis.z * t + axis.y * s;
  r(1, 0) = axis.y * axis.x * t + axis.z * s;
  r(1, 1) = c + axis.y * axis.y * t;
  r(1, 2) = axis.y * axis.z * t - axis.x * s;
  r(2, 0) = axis.z * axis.x * t - axis.y * s;
  r(2, 1) = axis.z * axis.y * t + axis.x * s;
  r(2, 2) = c + axis.z * axis.z * t;
  return r;
}

inline cadpu::PointCloud random_cloud(std::size_t n, cadpu::Rng& rng,
                                      double extent = 1.0) {
  cadpu::PointCloud c;
  c.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    c.points.push_back({rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                        rng.uniform(-extent, extent)});
  return c;
}

// Fibonacci sphere: near-uniform deterministic spread of n points.
inline cadpu::PointCloud fibonacci_sphere(std::size_t n) {
  cadpu::PointCloud c;
  c.points.reserve(n);
  const double golden = 2.399963229728653;  // 2*pi*(1 - 1/phi)
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double theta = golden * static_cast<double>(i);
    c.points.push_back({rho * std::cos(theta), rho * std::sin(theta), z});
  }
  return c;
}

}  // namespace oracle
