#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cadpu/geometry.hpp"

namespace cadpu {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;

  void validate() const;  // DataError on out-of-range face indices
};

// One training sample: sparse input and its r-times denser curvature-adaptive
// target, jointly normalized to the unit sphere.
struct TrainPair {
  PointCloud input;    // N points, no normals required
  PointCloud target;   // rN points with normals
  std::string patch_id;
  Vec3 center;         // normalization parameters (original frame)
  double scale = 1.0;
};

struct NormalizeResult {
  PointCloud cloud;
  Vec3 center;
  double scale = 1.0;
  bool degenerate = false;  // all points coincident
};

// --- file formats ----------------------------------------------------------
// XYZ: one point per line, "x y z" or "x y z nx ny nz".
PointCloud read_xyz(const std::string& path);
void write_xyz(const std::string& path, const PointCloud& cloud);

// ASCII PLY with float/double x,y,z (optional nx,ny,nz) vertex properties and
// an optional face element ("property list uchar int vertex_indices").
// Binary PLY and other property layouts are rejected.
struct PlyContents {
  PointCloud cloud;
  std::vector<std::array<std::uint32_t, 3>> faces;
  bool has_faces = false;

  TriMesh mesh() const;  // DataError when no face element was present
};
PlyContents read_ply(const std::string& path);
void write_ply(const std::string& path, const TriMesh& mesh);
void write_ply(const std::string& path, const PointCloud& cloud);

// --- sampling and pair construction ----------------------------------------

// Area-weighted face selection, uniform barycentric placement, face normals
// from vertex winding. Zero-area faces are never sampled.
PointCloud sample_mesh_uniform(const TriMesh& mesh, std::size_t m,
                               std::uint64_t seed);

// Weighted draws without replacement from the Eq.-3 distribution computed
// over the dense cloud (surface variation with the given k, then weights).
std::vector<std::size_t> curvature_adaptive_select_indices(
    const PointCloud& dense, std::size_t m, std::size_t k, double epsilon,
    std::uint64_t seed);
PointCloud curvature_adaptive_select(const PointCloud& dense, std::size_t m,
                                     std::size_t k, double epsilon,
                                     std::uint64_t seed);

// Patch pipeline: FPS seeds over a dense sampling, per-seed Euclidean ball of
// 10*r*n_in dense points, n_in uniform input draws, r*n_in curvature-adaptive
// target draws, joint unit-sphere normalization. Patches that cannot fill a
// ball are skipped (with a warning on stderr). dense_total == 0 picks
// 10*r*n_in * min(num_patches, 4).
std::vector<TrainPair> make_train_pairs(const TriMesh& mesh,
                                        std::size_t num_patches,
                                        std::size_t n_in, std::size_t r,
                                        std::uint64_t seed, std::size_t k = 12,
                                        double epsilon = 0.01,
                                        std::size_t dense_total = 0);

// Independent normal(0, std) perturbation per coordinate.
PointCloud add_gaussian_noise(const PointCloud& cloud, double stddev,
                              std::uint64_t seed);

// Subtract the centroid, divide by the max point norm. Coincident clouds get
// scale 1 and the degenerate flag.
NormalizeResult normalize_unit_sphere(const PointCloud& cloud);
PointCloud denormalize(const PointCloud& cloud, const Vec3& center, double scale);

// --- analytic fixtures ------------------------------------------------------
TriMesh make_sphere_mesh(std::size_t rings = 32, std::size_t segments = 48);
TriMesh make_cylinder_mesh(std::size_t radial = 48, std::size_t height_steps = 24);
TriMesh make_saddle_mesh(std::size_t grid = 40);   // z = x^2 - y^2 over [-1,1]^2
TriMesh make_cube_mesh(std::size_t per_side = 12); // axis-aligned, grid faces
TriMesh make_plane_mesh(std::size_t grid = 24);    // z = 0 over [-1,1]^2

// Returns the fixture for "sphere", "cylinder", "saddle", "cube" or "plane";
// DataError for unknown names.
TriMesh builtin_fixture(const std::string& name);

}  // namespace cadpu
