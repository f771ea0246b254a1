#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace cadpu {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
  Vec3 operator-() const { return {-x, -y, -z}; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(norm2()); }
  Vec3 normalized() const {
    double n = norm();
    return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{0.0, 0.0, 0.0};
  }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

using Point3 = Vec3;

// The universal currency of the toolkit. Optional channels are either empty
// or the same length as points.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<double> curvatures;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !normals.empty(); }
  bool has_curvatures() const { return !curvatures.empty(); }

  // Subset by index list; carries optional channels along.
  PointCloud subset(std::span<const std::size_t> indices) const;

  // Throws std::invalid_argument if a channel length mismatches or a
  // coordinate is not finite.
  void validate() const;
};

struct Mat3 {
  // Row-major.
  std::array<std::array<double, 3>, 3> m{};

  double& operator()(int r, int c) { return m[r][c]; }
  double operator()(int r, int c) const { return m[r][c]; }
  double trace() const { return m[0][0] + m[1][1] + m[2][2]; }
  Vec3 mul(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }
};

// Eigenvalues sorted ascending, eigenvectors orthonormal in matching order.
struct SymEig3 {
  std::array<double, 3> eigenvalues{};
  std::array<Vec3, 3> eigenvectors{};
};

// (1/k) sum (p' - p)(p' - p)^T, centered at the query point (not the
// neighborhood mean). Throws std::invalid_argument on an empty neighbor list.
Mat3 neighborhood_covariance(const Vec3& center, std::span<const Vec3> neighbors);

// Cyclic Jacobi for symmetric 3x3. Input must be symmetric within 1e-9
// (absolute) or std::invalid_argument is thrown.
SymEig3 sym_eigen3(const Mat3& m);

// kd-tree over an immutable cloud. The cloud must outlive the index.
// All queries return indices sorted by nondecreasing distance, ties broken
// by lower point index, and may be issued concurrently after construction.
class KnnIndex {
 public:
  explicit KnnIndex(const PointCloud& cloud);  // throws on empty cloud

  // k nearest to an arbitrary position (coincident points included).
  // Returns exactly min(k, size()) indices.
  std::vector<std::size_t> nearest(const Vec3& p, std::size_t k) const;

  // k nearest neighbors of cloud point i, excluding i itself.
  // Returns exactly min(k, size()-1) indices.
  std::vector<std::size_t> neighbors_of(std::size_t i, std::size_t k) const;

  std::size_t size() const { return cloud_->size(); }
  const PointCloud& cloud() const { return *cloud_; }

 private:
  struct Node {
    std::size_t point = 0;   // index into the cloud
    int axis = -1;           // -1 for leaf
    std::int32_t left = -1;
    std::int32_t right = -1;
  };

  std::int32_t build(std::size_t* first, std::size_t* last, int depth);
  void query(const Vec3& p, std::size_t k, std::size_t exclude,
             std::vector<std::size_t>& out) const;

  const PointCloud* cloud_;
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

struct NormalEstimate {
  PointCloud cloud;                   // input cloud with normals filled in
  std::vector<std::uint8_t> degenerate;  // per-point flag
  std::size_t degenerate_count = 0;
};

// Normal = eigenvector of the smallest covariance eigenvalue over the
// k-neighborhood (query point excluded). Orientation: nonnegative dot with
// the centroid-to-point direction; exact zeros resolved toward +z, +y, +x.
// Degenerate neighborhoods (lambda1 ~ lambda2 ~ 0) get (0,0,1) and a flag.
NormalEstimate estimate_normals(const PointCloud& cloud, std::size_t k);

// Greedy farthest-point sampling. The first pick is drawn uniformly by seed
// over the lexicographic (x,y,z) ordering of the points, which keeps the
// selection stable under relabeling; later ties also break lexicographically
// before falling back to the lower index.
std::vector<std::size_t> farthest_point_sampling(const PointCloud& cloud,
                                                 std::size_t m,
                                                 std::uint64_t seed);

// FPS seeds, nearest-seed assignment, then overflow points are moved to the
// nearest non-full seed in order of assignment-cost increase until all
// patches have exactly size()/num_patches members. Requires divisibility.
std::vector<std::vector<std::size_t>> cluster_into_patches(
    const PointCloud& cloud, std::size_t num_patches, std::uint64_t seed = 0);

}  // namespace cadpu
