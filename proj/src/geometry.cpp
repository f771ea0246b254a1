#include "cadpu/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

#include "cadpu/parallel.hpp"
#include "cadpu/rng.hpp"

namespace cadpu {

namespace {

bool lex_less(const Vec3& a, const Vec3& b) {
  if (a.x != b.x) return a.x < b.x;
  if (a.y != b.y) return a.y < b.y;
  return a.z < b.z;
}

}  // namespace

PointCloud PointCloud::subset(std::span<const std::size_t> indices) const {
  PointCloud out;
  out.points.reserve(indices.size());
  for (std::size_t i : indices) out.points.push_back(points.at(i));
  if (has_normals()) {
    out.normals.reserve(indices.size());
    for (std::size_t i : indices) out.normals.push_back(normals.at(i));
  }
  if (has_curvatures()) {
    out.curvatures.reserve(indices.size());
    for (std::size_t i : indices) out.curvatures.push_back(curvatures.at(i));
  }
  return out;
}

void PointCloud::validate() const {
  if (has_normals() && normals.size() != points.size())
    throw std::invalid_argument("PointCloud: normals length mismatch");
  if (has_curvatures() && curvatures.size() != points.size())
    throw std::invalid_argument("PointCloud: curvatures length mismatch");
  for (const Vec3& p : points)
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      throw std::invalid_argument("PointCloud: non-finite coordinate");
}

Mat3 neighborhood_covariance(const Vec3& center, std::span<const Vec3> neighbors) {
  if (neighbors.empty())
    throw std::invalid_argument("neighborhood_covariance: empty neighbor list");
  Mat3 cov;
  for (const Vec3& q : neighbors) {
    const Vec3 d = q - center;
    cov(0, 0) += d.x * d.x;
    cov(0, 1) += d.x * d.y;
    cov(0, 2) += d.x * d.z;
    cov(1, 1) += d.y * d.y;
    cov(1, 2) += d.y * d.z;
    cov(2, 2) += d.z * d.z;
  }
  const double inv_k = 1.0 / static_cast<double>(neighbors.size());
  cov(0, 0) *= inv_k;
  cov(0, 1) *= inv_k;
  cov(0, 2) *= inv_k;
  cov(1, 1) *= inv_k;
  cov(1, 2) *= inv_k;
  cov(2, 2) *= inv_k;
  cov(1, 0) = cov(0, 1);
  cov(2, 0) = cov(0, 2);
  cov(2, 1) = cov(1, 2);
  return cov;
}

SymEig3 sym_eigen3(const Mat3& m) {
  const double asym = std::max({std::fabs(m(0, 1) - m(1, 0)),
                                std::fabs(m(0, 2) - m(2, 0)),
                                std::fabs(m(1, 2) - m(2, 1))});
  if (!(asym <= 1e-9))
    throw std::invalid_argument("sym_eigen3: matrix not symmetric within 1e-9");

  // Work on the symmetrized copy.
  double a[3][3];
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a[r][c] = 0.5 * (m(r, c) + m(c, r));

  double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = std::fabs(a[0][1]) + std::fabs(a[0][2]) + std::fabs(a[1][2]);
    if (off == 0.0) break;
    const double scale =
        std::fabs(a[0][0]) + std::fabs(a[1][1]) + std::fabs(a[2][2]) + off;
    if (off <= 1e-15 * scale) break;
    static const int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (const auto& pq : pairs) {
      const int p = pq[0], q = pq[1];
      if (a[p][q] == 0.0) continue;
      const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
      double t = 1.0 / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
      if (theta < 0.0) t = -t;
      const double c = 1.0 / std::sqrt(t * t + 1.0);
      const double s = t * c;
      const double apq = a[p][q];
      const double app = a[p][p];
      const double aqq = a[q][q];
      a[p][p] = app - t * apq;
      a[q][q] = aqq + t * apq;
      a[p][q] = 0.0;
      a[q][p] = 0.0;
      const int r = 3 - p - q;  // the remaining axis
      const double arp = a[r][p];
      const double arq = a[r][q];
      a[r][p] = a[p][r] = c * arp - s * arq;
      a[r][q] = a[q][r] = s * arp + c * arq;
      for (int i = 0; i < 3; ++i) {
        const double vip = v[i][p];
        const double viq = v[i][q];
        v[i][p] = c * vip - s * viq;
        v[i][q] = s * vip + c * viq;
      }
    }
  }

  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return a[i][i] < a[j][j]; });

  SymEig3 out;
  for (int i = 0; i < 3; ++i) {
    const int s = order[i];
    out.eigenvalues[i] = a[s][s];
    Vec3 e{v[0][s], v[1][s], v[2][s]};
    // Deterministic sign: largest-magnitude component positive.
    double best = std::fabs(e.x);
    double comp = e.x;
    if (std::fabs(e.y) > best) { best = std::fabs(e.y); comp = e.y; }
    if (std::fabs(e.z) > best) { comp = e.z; }
    if (comp < 0.0) e = -e;
    out.eigenvectors[i] = e;
  }
  return out;
}

// ---------------------------------------------------------------------------
// KnnIndex

KnnIndex::KnnIndex(const PointCloud& cloud) : cloud_(&cloud) {
  if (cloud.empty()) throw std::invalid_argument("KnnIndex: empty input");
  cloud.validate();
  std::vector<std::size_t> order(cloud.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  nodes_.reserve(cloud.size());
  root_ = build(order.data(), order.data() + order.size(), 0);
}

std::int32_t KnnIndex::build(std::size_t* first, std::size_t* last, int depth) {
  if (first >= last) return -1;
  const auto& pts = cloud_->points;
  if (last - first == 1) {
    nodes_.push_back(Node{*first, -1, -1, -1});
    return static_cast<std::int32_t>(nodes_.size() - 1);
  }
  // Split on the widest axis of the current range.
  Vec3 lo{std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};
  for (std::size_t* it = first; it != last; ++it) {
    const Vec3& p = pts[*it];
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  int axis = 0;
  double extent = hi.x - lo.x;
  if (hi.y - lo.y > extent) { axis = 1; extent = hi.y - lo.y; }
  if (hi.z - lo.z > extent) { axis = 2; }
  (void)depth;

  std::size_t* mid = first + (last - first) / 2;
  std::nth_element(first, mid, last, [&](std::size_t i, std::size_t j) {
    const double a = pts[i][axis];
    const double b = pts[j][axis];
    if (a != b) return a < b;
    return i < j;
  });

  nodes_.push_back(Node{*mid, axis, -1, -1});
  const std::int32_t id = static_cast<std::int32_t>(nodes_.size() - 1);
  const std::int32_t l = build(first, mid, depth + 1);
  const std::int32_t r = build(mid + 1, last, depth + 1);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

namespace {

struct KnnCandidate {
  double d2;
  std::size_t idx;
  // "Worse" ordering: larger distance first, then larger index.
  bool operator<(const KnnCandidate& o) const {
    if (d2 != o.d2) return d2 < o.d2;
    return idx < o.idx;
  }
};

}  // namespace

void KnnIndex::query(const Vec3& p, std::size_t k, std::size_t exclude,
                     std::vector<std::size_t>& out) const {
  out.clear();
  if (k == 0) return;
  // Max-heap of the current best k under (d2, idx); top is the worst kept.
  std::priority_queue<KnnCandidate> best;

  const auto& pts = cloud_->points;
  // Explicit stack to avoid recursion overhead.
  std::vector<std::int32_t> stack;
  stack.reserve(64);
  stack.push_back(root_);
  // A simple recursive descent with pruning, implemented iteratively by
  // visiting the near child first via a small manual stack of (node, state).
  struct Frame { std::int32_t node; std::int32_t far_child; double plane_d2; };
  std::vector<Frame> frames;
  frames.reserve(64);

  std::int32_t cur = root_;
  while (cur != -1 || !frames.empty()) {
    if (cur == -1) {
      Frame f = frames.back();
      frames.pop_back();
      const bool full = best.size() >= k;
      if (!full || f.plane_d2 <= best.top().d2) {
        cur = f.far_child;
      }
      continue;
    }
    const Node& node = nodes_[cur];
    const Vec3& q = pts[node.point];
    if (node.point != exclude) {
      const double d2 = (q - p).norm2();
      KnnCandidate cand{d2, node.point};
      if (best.size() < k) {
        best.push(cand);
      } else if (cand < best.top()) {
        best.pop();
        best.push(cand);
      }
    }
    if (node.axis < 0) {
      cur = -1;
      continue;
    }
    const double diff = p[node.axis] - q[node.axis];
    const std::int32_t near_child = diff < 0.0 ? node.left : node.right;
    const std::int32_t far_child = diff < 0.0 ? node.right : node.left;
    frames.push_back(Frame{cur, far_child, diff * diff});
    cur = near_child;
  }

  out.resize(best.size());
  for (std::size_t i = best.size(); i-- > 0;) {
    out[i] = best.top().idx;
    best.pop();
  }
}

std::vector<std::size_t> KnnIndex::nearest(const Vec3& p, std::size_t k) const {
  std::vector<std::size_t> out;
  query(p, std::min(k, size()), static_cast<std::size_t>(-1), out);
  return out;
}

std::vector<std::size_t> KnnIndex::neighbors_of(std::size_t i, std::size_t k) const {
  if (i >= size()) throw std::out_of_range("KnnIndex::neighbors_of: bad index");
  std::vector<std::size_t> out;
  query(cloud_->points[i], std::min(k, size() - 1), i, out);
  return out;
}

// ---------------------------------------------------------------------------
// Normals

NormalEstimate estimate_normals(const PointCloud& cloud, std::size_t k) {
  if (cloud.size() <= k)
    throw std::invalid_argument("estimate_normals: cloud smaller than k+1");
  const KnnIndex index(cloud);

  Vec3 centroid;
  for (const Vec3& p : cloud.points) centroid += p;
  centroid = centroid / static_cast<double>(cloud.size());

  NormalEstimate out;
  out.cloud = cloud;
  out.cloud.normals.assign(cloud.size(), Vec3{});
  out.degenerate.assign(cloud.size(), 0);

  parallel_for(cloud.size(), [&](std::size_t begin, std::size_t end) {
    std::vector<Vec3> nb;
    for (std::size_t i = begin; i < end; ++i) {
      const auto idx = index.neighbors_of(i, k);
      nb.clear();
      for (std::size_t j : idx) nb.push_back(cloud.points[j]);
      const Mat3 cov = neighborhood_covariance(cloud.points[i], nb);
      const SymEig3 eig = sym_eigen3(cov);
      if (eig.eigenvalues[0] <= 1e-12 && eig.eigenvalues[1] <= 1e-12) {
        out.cloud.normals[i] = Vec3{0.0, 0.0, 1.0};
        out.degenerate[i] = 1;
        continue;
      }
      Vec3 n = eig.eigenvectors[0].normalized();
      const double d = n.dot(cloud.points[i] - centroid);
      if (d < 0.0) {
        n = -n;
      } else if (d == 0.0) {
        if (n.z < 0.0) n = -n;
        else if (n.z == 0.0 && n.y < 0.0) n = -n;
        else if (n.z == 0.0 && n.y == 0.0 && n.x < 0.0) n = -n;
      }
      out.cloud.normals[i] = n;
    }
  });

  for (std::uint8_t f : out.degenerate) out.degenerate_count += f;
  return out;
}

// ---------------------------------------------------------------------------
// Farthest point sampling / clustering

std::vector<std::size_t> farthest_point_sampling(const PointCloud& cloud,
                                                 std::size_t m,
                                                 std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (m > n)
    throw std::invalid_argument("farthest_point_sampling: m exceeds cloud size");
  std::vector<std::size_t> chosen;
  if (m == 0) return chosen;

  // Rank the points lexicographically so the seeded first pick refers to a
  // geometric position rather than a storage index.
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < n; ++i) rank[i] = i;
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
    if (!(cloud.points[a] == cloud.points[b]))
      return lex_less(cloud.points[a], cloud.points[b]);
    return a < b;
  });

  Rng rng(seed);
  std::size_t first = rank[rng.uniform_index(n)];
  chosen.reserve(m);
  chosen.push_back(first);

  std::vector<double> min_d2(n);
  for (std::size_t i = 0; i < n; ++i)
    min_d2[i] = (cloud.points[i] - cloud.points[first]).norm2();

  std::vector<std::uint8_t> taken(n, 0);
  taken[first] = 1;

  for (std::size_t step = 1; step < m; ++step) {
    std::size_t best = static_cast<std::size_t>(-1);
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best == static_cast<std::size_t>(-1) || min_d2[i] > min_d2[best]) {
        best = i;
      } else if (min_d2[i] == min_d2[best]) {
        if (!(cloud.points[i] == cloud.points[best]) &&
            lex_less(cloud.points[i], cloud.points[best]))
          best = i;
        // equal coordinates: keep the lower index (i > best here)
      }
    }
    chosen.push_back(best);
    taken[best] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double d2 = (cloud.points[i] - cloud.points[best]).norm2();
      if (d2 < min_d2[i]) min_d2[i] = d2;
    }
  }
  return chosen;
}

std::vector<std::vector<std::size_t>> cluster_into_patches(
    const PointCloud& cloud, std::size_t num_patches, std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (num_patches == 0 || n % num_patches != 0)
    throw std::invalid_argument(
        "cluster_into_patches: cloud size not divisible by num_patches");
  const std::size_t target = n / num_patches;

  const auto seeds = farthest_point_sampling(cloud, num_patches, seed);

  // Distances to every seed; assignment to the nearest.
  std::vector<double> dist(n * num_patches);
  std::vector<std::size_t> assign(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < num_patches; ++c) {
      const double d = (cloud.points[i] - cloud.points[seeds[c]]).norm();
      dist[i * num_patches + c] = d;
      if (d < best) { best = d; best_c = c; }
    }
    assign[i] = best_c;
  }

  std::vector<std::size_t> sizes(num_patches, 0);
  for (std::size_t i = 0; i < n; ++i) ++sizes[assign[i]];

  // Move points out of overfull patches, cheapest cost increase first.
  while (true) {
    bool any_over = false;
    for (std::size_t c = 0; c < num_patches; ++c)
      if (sizes[c] > target) { any_over = true; break; }
    if (!any_over) break;

    double best_delta = std::numeric_limits<double>::infinity();
    std::size_t best_i = static_cast<std::size_t>(-1);
    std::size_t best_c = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t cur = assign[i];
      if (sizes[cur] <= target) continue;
      const double d_cur = dist[i * num_patches + cur];
      for (std::size_t c = 0; c < num_patches; ++c) {
        if (sizes[c] >= target) continue;
        const double delta = dist[i * num_patches + c] - d_cur;
        if (delta < best_delta) {
          best_delta = delta;
          best_i = i;
          best_c = c;
        }
      }
    }
    --sizes[assign[best_i]];
    assign[best_i] = best_c;
    ++sizes[best_c];
  }

  std::vector<std::vector<std::size_t>> patches(num_patches);
  for (std::size_t c = 0; c < num_patches; ++c) patches[c].reserve(target);
  for (std::size_t i = 0; i < n; ++i) patches[assign[i]].push_back(i);
  return patches;
}

}  // namespace cadpu
