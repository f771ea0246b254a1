#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "cadpu/geometry.hpp"
#include "cadpu/rng.hpp"
#include "oracle_helpers.hpp"

using namespace cadpu;

TEST_CASE("knn: three collinear points, middle query returns both endpoints") {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}, {3, 0, 0}};
  KnnIndex index(c);
  const auto nb = index.neighbors_of(1, 2);
  REQUIRE(nb.size() == 2);
  CHECK(nb[0] == 0);  // distance 1, nearer first
  CHECK(nb[1] == 2);  // distance 2
}

TEST_CASE("knn: matches brute force on random clouds") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 10 + rng.uniform_index(491);
    const PointCloud c = oracle::random_cloud(n, rng);
    KnnIndex index(c);
    const std::size_t k = 12;
    for (std::size_t i = 0; i < n; ++i) {
      const auto got = index.neighbors_of(i, k);
      const auto want = oracle::knn_bruteforce(c, c.points[i], k, i);
      REQUIRE(got == want);
    }
    // Position queries from off-cloud locations too.
    for (int q = 0; q < 5; ++q) {
      const Vec3 p{rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};
      CHECK(index.nearest(p, k) == oracle::knn_bruteforce(c, p, k));
    }
  }
}

TEST_CASE("knn: duplicate points tie-break to the lower index") {
  PointCloud c;
  c.points = {{1, 1, 1}, {0, 0, 0}, {1, 1, 1}, {1, 1, 1}};
  KnnIndex index(c);
  const auto nn = index.nearest({1, 1, 1}, 3);
  REQUIRE(nn.size() == 3);
  CHECK(nn[0] == 0);
  CHECK(nn[1] == 2);
  CHECK(nn[2] == 3);
}

TEST_CASE("knn: empty cloud rejected, counts clamped") {
  PointCloud empty;
  CHECK_THROWS_AS(KnnIndex{empty}, std::invalid_argument);
  PointCloud two;
  two.points = {{0, 0, 0}, {1, 0, 0}};
  KnnIndex index(two);
  CHECK(index.nearest({0, 0, 0}, 10).size() == 2);
  CHECK(index.neighbors_of(0, 10).size() == 1);
}

TEST_CASE("covariance: all neighbors at the center give the zero matrix") {
  const Vec3 c{0.3, -0.2, 0.9};
  std::vector<Vec3> nb(5, c);
  const Mat3 m = neighborhood_covariance(c, nb);
  for (int r = 0; r < 3; ++r)
    for (int col = 0; col < 3; ++col) CHECK(m(r, col) == 0.0);
}

TEST_CASE("covariance: symmetric pair along x gives diag(1,0,0)") {
  std::vector<Vec3> nb = {{1, 0, 0}, {-1, 0, 0}};
  const Mat3 m = neighborhood_covariance({0, 0, 0}, nb);
  CHECK(m(0, 0) == doctest::Approx(1.0));
  CHECK(m(1, 1) == 0.0);
  CHECK(m(2, 2) == 0.0);
  CHECK(m(0, 1) == 0.0);
}

TEST_CASE("covariance: random neighborhood matches direct re-summation") {
  Rng rng(7);
  const Vec3 center{rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)};
  std::vector<Vec3> nb;
  for (int i = 0; i < 12; ++i)
    nb.push_back({rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)});
  const Mat3 m = neighborhood_covariance(center, nb);
  // Independent accumulation, element by element.
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double want = 0.0;
      for (const Vec3& q : nb) {
        const Vec3 d = q - center;
        want += d[r] * d[c];
      }
      want /= static_cast<double>(nb.size());
      CHECK(m(r, c) == doctest::Approx(want).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(neighborhood_covariance(center, std::span<const Vec3>{}),
                  std::invalid_argument);
}

TEST_CASE("sym_eigen3: identity and diagonal") {
  Mat3 id;
  id(0, 0) = id(1, 1) = id(2, 2) = 1.0;
  const SymEig3 e = sym_eigen3(id);
  CHECK(e.eigenvalues[0] == doctest::Approx(1.0));
  CHECK(e.eigenvalues[2] == doctest::Approx(1.0));

  Mat3 d;
  d(0, 0) = 3.0;
  d(1, 1) = 1.0;
  d(2, 2) = 2.0;
  const SymEig3 ed = sym_eigen3(d);
  CHECK(ed.eigenvalues[0] == doctest::Approx(1.0));
  CHECK(ed.eigenvalues[1] == doctest::Approx(2.0));
  CHECK(ed.eigenvalues[2] == doctest::Approx(3.0));
  CHECK(std::fabs(ed.eigenvectors[0].y) == doctest::Approx(1.0));
  CHECK(std::fabs(ed.eigenvectors[1].z) == doctest::Approx(1.0));
  CHECK(std::fabs(ed.eigenvectors[2].x) == doctest::Approx(1.0));
}

TEST_CASE("sym_eigen3: random PSD matrices match the cubic-root oracle") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    // PSD by construction: A = B B^T scaled.
    double b[3][3];
    for (auto& row : b)
      for (double& v : row) v = rng.uniform(-1, 1);
    Mat3 m;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += b[r][k] * b[c][k];
        m(r, c) = s;
      }
    const SymEig3 e = sym_eigen3(m);
    const auto want = oracle::eigenvalues_cubic(m);
    for (int i = 0; i < 3; ++i)
      CHECK(e.eigenvalues[i] == doctest::Approx(want[i]).epsilon(1e-8));

    // Residual and orthogonality.
    for (int i = 0; i < 3; ++i) {
      const Vec3 mv = m.mul(e.eigenvectors[i]);
      const Vec3 lv = e.eigenvectors[i] * e.eigenvalues[i];
      CHECK((mv - lv).norm() <= 1e-6 * (1.0 + std::fabs(e.eigenvalues[i])));
    }
    CHECK(std::fabs(e.eigenvectors[0].dot(e.eigenvectors[1])) < 1e-6);
    CHECK(std::fabs(e.eigenvectors[0].dot(e.eigenvectors[2])) < 1e-6);
    CHECK(std::fabs(e.eigenvectors[1].dot(e.eigenvectors[2])) < 1e-6);

    // Trace preservation.
    CHECK(e.eigenvalues[0] + e.eigenvalues[1] + e.eigenvalues[2] ==
          doctest::Approx(m.trace()).epsilon(1e-9));
  }
}

TEST_CASE("sym_eigen3: rejects asymmetric input") {
  Mat3 m;
  m(0, 1) = 1.0;
  m(1, 0) = 1.0 + 1e-6;
  CHECK_THROWS_AS(sym_eigen3(m), std::invalid_argument);
}

TEST_CASE("estimate_normals: plane points get (0,0,1)") {
  PointCloud c;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      c.points.push_back({i * 0.1, j * 0.1, 0.0});
  const NormalEstimate est = estimate_normals(c, 8);
  for (const Vec3& n : est.cloud.normals) {
    CHECK(n.x == 0.0);
    CHECK(n.y == 0.0);
    CHECK(n.z == 1.0);
  }
  CHECK(est.degenerate_count == 0);
}

TEST_CASE("estimate_normals: sphere normals align with radial directions") {
  const PointCloud c = oracle::fibonacci_sphere(1000);
  const NormalEstimate est = estimate_normals(c, 12);
  std::size_t good = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Vec3 radial = c.points[i].normalized();
    const double cosang = std::fabs(est.cloud.normals[i].dot(radial));
    if (cosang >= std::cos(5.0 * 3.14159265358979 / 180.0)) ++good;
    // Orientation rule: outward from the centroid (the origin here).
    CHECK(est.cloud.normals[i].dot(c.points[i]) >= 0.0);
  }
  CHECK(static_cast<double>(good) >= 0.99 * static_cast<double>(c.size()));
}

TEST_CASE("estimate_normals: coincident cluster flagged with (0,0,1)") {
  PointCloud c;
  for (int i = 0; i < 6; ++i) c.points.push_back({1, 2, 3});
  const NormalEstimate est = estimate_normals(c, 4);
  CHECK(est.degenerate_count == 6);
  for (const Vec3& n : est.cloud.normals) CHECK(n.z == 1.0);
}

TEST_CASE("fps: m = n yields a permutation") {
  Rng rng(3);
  const PointCloud c = oracle::random_cloud(17, rng);
  const auto sel = farthest_point_sampling(c, 17, 5);
  std::set<std::size_t> s(sel.begin(), sel.end());
  CHECK(s.size() == 17);
}

TEST_CASE("fps: square corners pick a diagonal") {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}};
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto sel = farthest_point_sampling(c, 2, seed);
    const Vec3 d = c.points[sel[0]] - c.points[sel[1]];
    CHECK(d.norm2() == doctest::Approx(2.0));  // diagonal, not an edge
  }
}

TEST_CASE("fps: matches the greedy reference oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const PointCloud c = oracle::random_cloud(60, rng);
    const std::uint64_t seed = rng.next_u64();
    CHECK(farthest_point_sampling(c, 8, seed) == oracle::fps_reference(c, 8, seed));
  }
}

TEST_CASE("fps: permutation-stable geometric selection") {
  Rng rng(13);
  const PointCloud c = oracle::random_cloud(40, rng);
  PointCloud shuffled = c;
  std::vector<std::size_t> perm(c.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
  for (std::size_t i = 0; i < perm.size(); ++i)
    shuffled.points[i] = c.points[perm[i]];

  const auto a = farthest_point_sampling(c, 10, 77);
  const auto b = farthest_point_sampling(shuffled, 10, 77);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(c.points[a[i]] == shuffled.points[b[i]]);
}

TEST_CASE("fps: m > n rejected") {
  PointCloud c;
  c.points = {{0, 0, 0}};
  CHECK_THROWS_AS(farthest_point_sampling(c, 2, 0), std::invalid_argument);
}

TEST_CASE("cluster_into_patches: single patch holds everything") {
  Rng rng(5);
  const PointCloud c = oracle::random_cloud(32, rng);
  const auto patches = cluster_into_patches(c, 1);
  REQUIRE(patches.size() == 1);
  CHECK(patches[0].size() == 32);
}

TEST_CASE("cluster_into_patches: two separated blobs split cleanly") {
  Rng rng(21);
  PointCloud c;
  for (int i = 0; i < 128; ++i)
    c.points.push_back({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                        rng.uniform(-0.5, 0.5)});
  for (int i = 0; i < 128; ++i)
    c.points.push_back({100.0 + rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                        rng.uniform(-0.5, 0.5)});
  const auto patches = cluster_into_patches(c, 2, 9);
  REQUIRE(patches.size() == 2);
  CHECK(patches[0].size() == 128);
  CHECK(patches[1].size() == 128);
  // Every patch stays inside one blob: x-coordinates must not mix.
  for (const auto& patch : patches) {
    bool low = c.points[patch[0]].x < 50.0;
    for (std::size_t i : patch) CHECK((c.points[i].x < 50.0) == low);
  }
}

TEST_CASE("cluster_into_patches: 2048 points into 8 patches of 256") {
  Rng rng(33);
  const PointCloud c = oracle::random_cloud(2048, rng);
  const auto patches = cluster_into_patches(c, 8, 4);
  REQUIRE(patches.size() == 8);
  std::set<std::size_t> all;
  for (const auto& p : patches) {
    CHECK(p.size() == 256);
    all.insert(p.begin(), p.end());
  }
  CHECK(all.size() == 2048);  // partition: disjoint and covering
}

TEST_CASE("cluster_into_patches: non-divisible size rejected") {
  Rng rng(1);
  const PointCloud c = oracle::random_cloud(10, rng);
  CHECK_THROWS_AS(cluster_into_patches(c, 3), std::invalid_argument);
}
