#include "cadpu/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "cadpu/curvature.hpp"
#include "cadpu/errors.hpp"
#include "cadpu/rng.hpp"

namespace cadpu {

void TriMesh::validate() const {
  for (const auto& f : faces)
    for (std::uint32_t v : f)
      if (v >= vertices.size())
        throw DataError("TriMesh: face index out of range");
}

// ---------------------------------------------------------------------------
// XYZ

PointCloud read_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  bool with_normals = false;
  while (std::getline(in, line)) {
    ++line_no;
    // Skip blank lines.
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    double v[6];
    int count = 0;
    while (count < 6 && (ss >> v[count])) ++count;
    std::string trailing;
    if (ss >> trailing)
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": too many columns");
    if (count != 3 && count != 6)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected 3 or 6 columns, got " +
                      std::to_string(count));
    if (cloud.points.empty()) {
      with_normals = (count == 6);
    } else if ((count == 6) != with_normals) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": inconsistent column count");
    }
    cloud.points.push_back({v[0], v[1], v[2]});
    if (count == 6) cloud.normals.push_back({v[3], v[4], v[5]});
  }
  return cloud;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

void write_xyz(const std::string& path, const PointCloud& cloud) {
  cloud.validate();
  std::string body;
  body.reserve(cloud.size() * 32);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    append_double(body, p.x);
    body += ' ';
    append_double(body, p.y);
    body += ' ';
    append_double(body, p.z);
    if (cloud.has_normals()) {
      const Vec3& n = cloud.normals[i];
      body += ' ';
      append_double(body, n.x);
      body += ' ';
      append_double(body, n.y);
      body += ' ';
      append_double(body, n.z);
    }
    body += '\n';
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << body;
}

// ---------------------------------------------------------------------------
// PLY

TriMesh PlyContents::mesh() const {
  if (!has_faces) throw DataError("PLY has no face element");
  TriMesh m;
  m.vertices = cloud.points;
  m.faces = faces;
  m.validate();
  return m;
}

PlyContents read_ply(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  if (line.rfind("ply", 0) != 0) throw DataError(path + ": not a PLY file");

  struct Property { std::string type, name; };
  std::size_t vertex_count = 0, face_count = 0;
  std::vector<Property> vertex_props;
  bool in_vertex = false, in_face = false, has_face_element = false;
  bool face_list_ok = false;

  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "comment") continue;
    if (word == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt != "ascii") throw DataError(path + ": binary PLY unsupported");
      continue;
    }
    if (word == "element") {
      std::string name;
      std::size_t count = 0;
      ss >> name >> count;
      in_vertex = (name == "vertex");
      in_face = (name == "face");
      if (in_vertex) vertex_count = count;
      if (in_face) {
        face_count = count;
        has_face_element = true;
      }
      if (!in_vertex && !in_face)
        throw DataError(path + ": unsupported element '" + name + "'");
      continue;
    }
    if (word == "property") {
      std::string type;
      ss >> type;
      if (in_vertex) {
        if (type == "list")
          throw DataError(path + ": list property on vertex element unsupported");
        if (type != "float" && type != "double" && type != "float32" &&
            type != "float64")
          throw DataError(path + ": unsupported vertex property type '" + type + "'");
        std::string name;
        ss >> name;
        vertex_props.push_back({type, name});
      } else if (in_face) {
        if (type != "list")
          throw DataError(path + ": face property must be a list");
        std::string count_type, index_type, name;
        ss >> count_type >> index_type >> name;
        if ((count_type != "uchar" && count_type != "uint8") ||
            (index_type != "int" && index_type != "int32" && index_type != "uint" &&
             index_type != "uint32"))
          throw DataError(path + ": unsupported face list types");
        face_list_ok = true;
      }
      continue;
    }
    if (word == "end_header") break;
    throw DataError(path + ": unexpected header line '" + line + "'");
  }

  int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
  for (std::size_t i = 0; i < vertex_props.size(); ++i) {
    const std::string& n = vertex_props[i].name;
    if (n == "x") ix = static_cast<int>(i);
    else if (n == "y") iy = static_cast<int>(i);
    else if (n == "z") iz = static_cast<int>(i);
    else if (n == "nx") inx = static_cast<int>(i);
    else if (n == "ny") iny = static_cast<int>(i);
    else if (n == "nz") inz = static_cast<int>(i);
  }
  if (ix < 0 || iy < 0 || iz < 0)
    throw DataError(path + ": vertex element lacks x/y/z");
  const bool with_normals = inx >= 0 && iny >= 0 && inz >= 0;
  if (has_face_element && !face_list_ok)
    throw DataError(path + ": face element lacks vertex_indices list");

  PlyContents out;
  out.has_faces = has_face_element;
  out.cloud.points.reserve(vertex_count);

  std::vector<double> vals(vertex_props.size());
  for (std::size_t v = 0; v < vertex_count; ++v) {
    for (std::size_t p = 0; p < vertex_props.size(); ++p)
      if (!(in >> vals[p])) throw DataError(path + ": truncated vertex data");
    out.cloud.points.push_back({vals[ix], vals[iy], vals[iz]});
    if (with_normals)
      out.cloud.normals.push_back({vals[inx], vals[iny], vals[inz]});
  }
  for (std::size_t f = 0; f < face_count; ++f) {
    std::size_t arity = 0;
    if (!(in >> arity)) throw DataError(path + ": truncated face data");
    if (arity != 3) throw DataError(path + ": only triangle faces supported");
    std::array<std::uint32_t, 3> face{};
    for (auto& v : face)
      if (!(in >> v)) throw DataError(path + ": truncated face data");
    out.faces.push_back(face);
  }
  return out;
}

namespace {

void write_ply_impl(const std::string& path, const PointCloud& cloud,
                    const std::vector<std::array<std::uint32_t, 3>>* faces) {
  cloud.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  std::string s;
  s += "ply\nformat ascii 1.0\n";
  s += "element vertex " + std::to_string(cloud.size()) + "\n";
  s += "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_normals())
    s += "property float nx\nproperty float ny\nproperty float nz\n";
  if (faces != nullptr) {
    s += "element face " + std::to_string(faces->size()) + "\n";
    s += "property list uchar int vertex_indices\n";
  }
  s += "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    append_double(s, p.x);
    s += ' ';
    append_double(s, p.y);
    s += ' ';
    append_double(s, p.z);
    if (cloud.has_normals()) {
      const Vec3& n = cloud.normals[i];
      s += ' ';
      append_double(s, n.x);
      s += ' ';
      append_double(s, n.y);
      s += ' ';
      append_double(s, n.z);
    }
    s += '\n';
  }
  if (faces != nullptr) {
    for (const auto& f : *faces) {
      s += "3 " + std::to_string(f[0]) + ' ' + std::to_string(f[1]) + ' ' +
           std::to_string(f[2]) + '\n';
    }
  }
  out << s;
}

}  // namespace

void write_ply(const std::string& path, const TriMesh& mesh) {
  mesh.validate();
  PointCloud cloud;
  cloud.points = mesh.vertices;
  write_ply_impl(path, cloud, &mesh.faces);
}

void write_ply(const std::string& path, const PointCloud& cloud) {
  write_ply_impl(path, cloud, nullptr);
}

// ---------------------------------------------------------------------------
// Mesh sampling

PointCloud sample_mesh_uniform(const TriMesh& mesh, std::size_t m,
                               std::uint64_t seed) {
  mesh.validate();
  struct FaceInfo {
    std::size_t face;
    double cum_area;
    Vec3 normal;
  };
  std::vector<FaceInfo> info;
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& tri = mesh.faces[f];
    const Vec3 a = mesh.vertices[tri[0]];
    const Vec3 b = mesh.vertices[tri[1]];
    const Vec3 c = mesh.vertices[tri[2]];
    const Vec3 cr = (b - a).cross(c - a);
    const double area = 0.5 * cr.norm();
    if (area <= 0.0) continue;  // zero-area faces carry zero weight
    total += area;
    info.push_back({f, total, cr.normalized()});
  }
  if (total <= 0.0 || info.empty())
    throw std::invalid_argument("sample_mesh_uniform: mesh has zero total area");

  Rng rng(seed);
  PointCloud out;
  out.points.reserve(m);
  out.normals.reserve(m);
  for (std::size_t s = 0; s < m; ++s) {
    const double u = rng.uniform01() * total;
    auto it = std::upper_bound(
        info.begin(), info.end(), u,
        [](double value, const FaceInfo& fi) { return value < fi.cum_area; });
    if (it == info.end()) --it;
    const auto& tri = mesh.faces[it->face];
    const Vec3 a = mesh.vertices[tri[0]];
    const Vec3 b = mesh.vertices[tri[1]];
    const Vec3 c = mesh.vertices[tri[2]];
    double u1 = rng.uniform01();
    double u2 = rng.uniform01();
    if (u1 + u2 > 1.0) {
      u1 = 1.0 - u1;
      u2 = 1.0 - u2;
    }
    out.points.push_back(a + (b - a) * u1 + (c - a) * u2);
    out.normals.push_back(it->normal);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Curvature-adaptive selection

namespace {

// Fenwick tree over weights supporting prefix search and removal.
class WeightTree {
 public:
  explicit WeightTree(const std::vector<double>& weights)
      : n_(weights.size()), tree_(weights.size() + 1, 0.0) {
    for (std::size_t i = 0; i < n_; ++i) add(i, weights[i]);
  }

  void add(std::size_t i, double delta) {
    for (std::size_t x = i + 1; x <= n_; x += x & (~x + 1)) tree_[x] += delta;
  }

  double total() const {
    double s = 0.0;
    for (std::size_t x = n_; x > 0; x -= x & (~x + 1)) s += tree_[x];
    return s;
  }

  // Smallest index with prefix sum (inclusive) strictly greater than value.
  std::size_t find(double value) const {
    std::size_t pos = 0;
    std::size_t mask = 1;
    while ((mask << 1) <= n_) mask <<= 1;
    double acc = 0.0;
    for (; mask > 0; mask >>= 1) {
      const std::size_t next = pos + mask;
      if (next <= n_ && acc + tree_[next] <= value) {
        pos = next;
        acc += tree_[next];
      }
    }
    return pos;  // 0-based index of the chosen element
  }

 private:
  std::size_t n_;
  std::vector<double> tree_;
};

}  // namespace

std::vector<std::size_t> curvature_adaptive_select_indices(
    const PointCloud& dense, std::size_t m, std::size_t k, double epsilon,
    std::uint64_t seed) {
  if (m > dense.size())
    throw std::invalid_argument("curvature_adaptive_select: m exceeds cloud size");
  const KnnIndex index(dense);
  const CurvatureField field = surface_variation(dense, index, k);
  const SamplingWeights w = sampling_weights(field, epsilon);

  WeightTree tree(w.weights);
  std::vector<double> remaining = w.weights;
  Rng rng(seed);
  std::vector<std::size_t> picked;
  picked.reserve(m);
  for (std::size_t s = 0; s < m; ++s) {
    const double total = tree.total();
    const double u = rng.uniform01() * total;
    std::size_t idx = tree.find(std::min(u, total * (1.0 - 1e-16)));
    if (idx >= dense.size()) idx = dense.size() - 1;
    // Guard against landing on an already-removed slot through rounding.
    while (remaining[idx] == 0.0 && idx + 1 < dense.size()) ++idx;
    while (remaining[idx] == 0.0 && idx > 0) --idx;
    picked.push_back(idx);
    tree.add(idx, -remaining[idx]);
    remaining[idx] = 0.0;
  }
  return picked;
}

PointCloud curvature_adaptive_select(const PointCloud& dense, std::size_t m,
                                     std::size_t k, double epsilon,
                                     std::uint64_t seed) {
  const auto idx = curvature_adaptive_select_indices(dense, m, k, epsilon, seed);
  return dense.subset(idx);
}

// ---------------------------------------------------------------------------
// Train pairs

namespace {

// n_in distinct uniform draws: partial Fisher-Yates over the index range.
std::vector<std::size_t> uniform_draws(std::size_t n, std::size_t m, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  return idx;
}

}  // namespace

std::vector<TrainPair> make_train_pairs(const TriMesh& mesh,
                                        std::size_t num_patches,
                                        std::size_t n_in, std::size_t r,
                                        std::uint64_t seed, std::size_t k,
                                        double epsilon,
                                        std::size_t dense_total) {
  const std::size_t ball = 10 * r * n_in;
  if (dense_total == 0)
    dense_total = ball * std::min<std::size_t>(std::max<std::size_t>(num_patches, 1), 4);

  const PointCloud dense =
      sample_mesh_uniform(mesh, dense_total, derive_seed(seed, 0));
  const KnnIndex dense_index(dense);
  const auto seeds = farthest_point_sampling(dense, num_patches, derive_seed(seed, 1));

  std::vector<TrainPair> pairs;
  for (std::size_t p = 0; p < num_patches; ++p) {
    if (dense.size() < ball) {
      std::cerr << "warning: patch " << p << " skipped (dense sampling "
                << dense.size() << " < ball size " << ball << ")\n";
      continue;
    }
    const std::uint64_t patch_seed = seed + p;  // documented derivation
    const auto ball_idx = dense_index.nearest(dense.points[seeds[p]], ball);
    const PointCloud patch_cloud = dense.subset(ball_idx);

    Rng input_rng(derive_seed(patch_seed, 2));
    const auto in_idx = uniform_draws(patch_cloud.size(), n_in, input_rng);
    PointCloud input;
    input.points.reserve(n_in);
    for (std::size_t i : in_idx) input.points.push_back(patch_cloud.points[i]);

    PointCloud target = curvature_adaptive_select(patch_cloud, r * n_in, k,
                                                  epsilon, derive_seed(patch_seed, 3));

    // Joint normalization over the union of the two clouds.
    PointCloud both;
    both.points = input.points;
    both.points.insert(both.points.end(), target.points.begin(),
                       target.points.end());
    const NormalizeResult norm = normalize_unit_sphere(both);

    TrainPair pair;
    pair.center = norm.center;
    pair.scale = norm.scale;
    pair.patch_id = "p" + std::to_string(p);
    pair.input.points.assign(norm.cloud.points.begin(),
                             norm.cloud.points.begin() + static_cast<long>(n_in));
    pair.target.points.assign(norm.cloud.points.begin() + static_cast<long>(n_in),
                              norm.cloud.points.end());
    pair.target.normals = target.normals;  // directions survive the similarity map
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

PointCloud add_gaussian_noise(const PointCloud& cloud, double stddev,
                              std::uint64_t seed) {
  if (stddev < 0.0)
    throw std::invalid_argument("add_gaussian_noise: negative stddev");
  PointCloud out = cloud;
  if (stddev == 0.0) return out;
  Rng rng(seed);
  for (Vec3& p : out.points) {
    p.x += rng.normal(0.0, stddev);
    p.y += rng.normal(0.0, stddev);
    p.z += rng.normal(0.0, stddev);
  }
  return out;
}

NormalizeResult normalize_unit_sphere(const PointCloud& cloud) {
  if (cloud.empty())
    throw std::invalid_argument("normalize_unit_sphere: empty cloud");
  NormalizeResult res;
  Vec3 c;
  for (const Vec3& p : cloud.points) c += p;
  c = c / static_cast<double>(cloud.size());
  double max_norm = 0.0;
  for (const Vec3& p : cloud.points) max_norm = std::max(max_norm, (p - c).norm());
  res.center = c;
  if (max_norm <= 0.0) {
    res.scale = 1.0;
    res.degenerate = true;
  } else {
    res.scale = max_norm;
  }
  res.cloud = cloud;
  for (Vec3& p : res.cloud.points) p = (p - c) / res.scale;
  return res;
}

PointCloud denormalize(const PointCloud& cloud, const Vec3& center, double scale) {
  PointCloud out = cloud;
  for (Vec3& p : out.points) p = p * scale + center;
  return out;
}

// ---------------------------------------------------------------------------
// Analytic fixtures

TriMesh make_sphere_mesh(std::size_t rings, std::size_t segments) {
  TriMesh m;
  const double pi = 3.14159265358979323846;
  // Poles plus ring grid.
  m.vertices.push_back({0, 0, 1});
  for (std::size_t i = 1; i < rings; ++i) {
    const double phi = pi * static_cast<double>(i) / static_cast<double>(rings);
    for (std::size_t j = 0; j < segments; ++j) {
      const double theta = 2.0 * pi * static_cast<double>(j) / static_cast<double>(segments);
      m.vertices.push_back({std::sin(phi) * std::cos(theta),
                            std::sin(phi) * std::sin(theta), std::cos(phi)});
    }
  }
  m.vertices.push_back({0, 0, -1});
  const std::uint32_t south = static_cast<std::uint32_t>(m.vertices.size() - 1);
  auto ring_vertex = [&](std::size_t ring, std::size_t seg) {
    return static_cast<std::uint32_t>(1 + (ring - 1) * segments + (seg % segments));
  };
  for (std::size_t j = 0; j < segments; ++j) {
    m.faces.push_back({0, ring_vertex(1, j), ring_vertex(1, j + 1)});
    m.faces.push_back({south, ring_vertex(rings - 1, j + 1), ring_vertex(rings - 1, j)});
  }
  for (std::size_t i = 1; i + 1 < rings; ++i) {
    for (std::size_t j = 0; j < segments; ++j) {
      const auto a = ring_vertex(i, j), b = ring_vertex(i, j + 1);
      const auto c = ring_vertex(i + 1, j), d = ring_vertex(i + 1, j + 1);
      m.faces.push_back({a, c, b});
      m.faces.push_back({b, c, d});
    }
  }
  return m;
}

TriMesh make_cylinder_mesh(std::size_t radial, std::size_t height_steps) {
  TriMesh m;
  const double pi = 3.14159265358979323846;
  for (std::size_t i = 0; i <= height_steps; ++i) {
    const double z = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(height_steps);
    for (std::size_t j = 0; j < radial; ++j) {
      const double t = 2.0 * pi * static_cast<double>(j) / static_cast<double>(radial);
      m.vertices.push_back({std::cos(t), std::sin(t), z});
    }
  }
  auto v = [&](std::size_t i, std::size_t j) {
    return static_cast<std::uint32_t>(i * radial + (j % radial));
  };
  for (std::size_t i = 0; i < height_steps; ++i) {
    for (std::size_t j = 0; j < radial; ++j) {
      m.faces.push_back({v(i, j), v(i, j + 1), v(i + 1, j)});
      m.faces.push_back({v(i, j + 1), v(i + 1, j + 1), v(i + 1, j)});
    }
  }
  // Caps.
  const std::uint32_t c_bot = static_cast<std::uint32_t>(m.vertices.size());
  m.vertices.push_back({0, 0, -1});
  const std::uint32_t c_top = static_cast<std::uint32_t>(m.vertices.size());
  m.vertices.push_back({0, 0, 1});
  for (std::size_t j = 0; j < radial; ++j) {
    m.faces.push_back({c_bot, v(0, j + 1), v(0, j)});
    m.faces.push_back({c_top, v(height_steps, j), v(height_steps, j + 1)});
  }
  return m;
}

namespace {

TriMesh grid_surface(std::size_t grid,
                     const std::function<Vec3(double, double)>& f) {
  TriMesh m;
  for (std::size_t i = 0; i <= grid; ++i) {
    for (std::size_t j = 0; j <= grid; ++j) {
      const double u = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(grid);
      const double v = -1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(grid);
      m.vertices.push_back(f(u, v));
    }
  }
  auto vid = [&](std::size_t i, std::size_t j) {
    return static_cast<std::uint32_t>(i * (grid + 1) + j);
  };
  for (std::size_t i = 0; i < grid; ++i) {
    for (std::size_t j = 0; j < grid; ++j) {
      m.faces.push_back({vid(i, j), vid(i + 1, j), vid(i, j + 1)});
      m.faces.push_back({vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)});
    }
  }
  return m;
}

}  // namespace

TriMesh make_saddle_mesh(std::size_t grid) {
  return grid_surface(grid, [](double u, double v) {
    return Vec3{u, v, u * u - v * v};
  });
}

TriMesh make_plane_mesh(std::size_t grid) {
  return grid_surface(grid, [](double u, double v) { return Vec3{u, v, 0.0}; });
}

TriMesh make_cube_mesh(std::size_t per_side) {
  TriMesh m;
  const std::size_t g = per_side;
  // Six faces, each a (g+1)^2 grid; shared edges duplicate vertices, which is
  // harmless for area sampling.
  auto add_face = [&](const Vec3& origin, const Vec3& du, const Vec3& dv) {
    const std::uint32_t base = static_cast<std::uint32_t>(m.vertices.size());
    for (std::size_t i = 0; i <= g; ++i)
      for (std::size_t j = 0; j <= g; ++j)
        m.vertices.push_back(origin + du * (static_cast<double>(i) / g) +
                             dv * (static_cast<double>(j) / g));
    auto vid = [&](std::size_t i, std::size_t j) {
      return base + static_cast<std::uint32_t>(i * (g + 1) + j);
    };
    for (std::size_t i = 0; i < g; ++i)
      for (std::size_t j = 0; j < g; ++j) {
        m.faces.push_back({vid(i, j), vid(i + 1, j), vid(i, j + 1)});
        m.faces.push_back({vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)});
      }
  };
  const Vec3 ex{2, 0, 0}, ey{0, 2, 0}, ez{0, 0, 2};
  add_face({-1, -1, -1}, ex, ey);            // z = -1
  add_face({-1, -1, 1}, ey, ex);             // z = +1
  add_face({-1, -1, -1}, ez, ex);            // y = -1
  add_face({-1, 1, -1}, ex, ez);             // y = +1
  add_face({-1, -1, -1}, ey, ez);            // x = -1
  add_face({1, -1, -1}, ez, ey);             // x = +1
  return m;
}

TriMesh builtin_fixture(const std::string& name) {
  if (name == "sphere") return make_sphere_mesh();
  if (name == "cylinder") return make_cylinder_mesh();
  if (name == "saddle") return make_saddle_mesh();
  if (name == "cube") return make_cube_mesh();
  if (name == "plane") return make_plane_mesh();
  throw DataError("unknown fixture '" + name + "'");
}

}  // namespace cadpu
