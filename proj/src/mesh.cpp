#include "voxmem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <unordered_map>

#include "mc_tables.hpp"
#include "voxmem/rng.hpp"

namespace voxmem::mesh {

double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

namespace {

// Cell corner offsets matching the case tables: bottom face 0-3 winds
// around (x, z), top face 4-7 is the same ring shifted by +y.
constexpr int kCorner[8][3] = {
    {0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1},
    {0, 1, 0}, {1, 1, 0}, {1, 1, 1}, {0, 1, 1},
};

// Cell edges as corner pairs, in table order.
constexpr int kEdge[12][2] = {
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
    {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
};

struct EdgeKey {
  int x, y, z, axis;
  bool operator<(const EdgeKey& o) const {
    return std::tie(x, y, z, axis) < std::tie(o.x, o.y, o.z, o.axis);
  }
};

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * norm(cross(b - a, c - a));
}

}  // namespace

TriangleMesh marching_cubes(const VoxelGrid& grid, double iso) {
  if (!(iso > 0.0 && iso < 1.0))
    throw ConfigError("marching_cubes: iso level must lie in (0,1), got " + std::to_string(iso));

  const int r = static_cast<int>(grid.resolution());
  // One empty padding layer; lattice points run over [-1, r].
  auto field = [&](int i, int j, int k) -> double {
    if (i < 0 || j < 0 || k < 0 || i >= r || j >= r || k >= r) return 0.0;
    return grid.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                   static_cast<std::size_t>(k));
  };

  TriangleMesh out;
  std::map<EdgeKey, std::uint32_t> welded;

  // Interpolated crossing on the +axis edge starting at lattice point
  // (x,y,z); computed from the canonical orientation so shared edges weld to
  // identical positions.
  auto edge_vertex = [&](int x, int y, int z, int axis) -> std::uint32_t {
    EdgeKey key{x, y, z, axis};
    auto it = welded.find(key);
    if (it != welded.end()) return it->second;
    const double v0 = field(x, y, z);
    const double v1 = field(x + (axis == 0), y + (axis == 1), z + (axis == 2));
    const double t = (iso - v0) / (v1 - v0);
    Vec3 p{static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)};
    if (axis == 0) p.x += t;
    if (axis == 1) p.y += t;
    if (axis == 2) p.z += t;
    const auto idx = static_cast<std::uint32_t>(out.vertices.size());
    out.vertices.push_back(p);
    welded.emplace(key, idx);
    return idx;
  };

  for (int ci = -1; ci < r; ++ci) {
    for (int cj = -1; cj < r; ++cj) {
      for (int ck = -1; ck < r; ++ck) {
        double vals[8];
        for (int c = 0; c < 8; ++c)
          vals[c] = field(ci + kCorner[c][0], cj + kCorner[c][1], ck + kCorner[c][2]);

        int cube_index = 0;
        for (int c = 0; c < 8; ++c)
          if (vals[c] < iso) cube_index |= 1 << c;
        if (kEdgeTable[cube_index] == 0) continue;

        std::uint32_t edge_idx[12];
        for (int e = 0; e < 12; ++e) {
          if (!(kEdgeTable[cube_index] & (1 << e))) continue;
          const int a = kEdge[e][0], b = kEdge[e][1];
          // Canonical base: the corner with the smaller coordinates.
          int ax[3] = {ci + kCorner[a][0], cj + kCorner[a][1], ck + kCorner[a][2]};
          int bx[3] = {ci + kCorner[b][0], cj + kCorner[b][1], ck + kCorner[b][2]};
          int axis = 0;
          for (int d = 0; d < 3; ++d)
            if (ax[d] != bx[d]) axis = d;
          const bool forward = ax[axis] < bx[axis];
          const int* base = forward ? ax : bx;
          edge_idx[e] = edge_vertex(base[0], base[1], base[2], axis);
        }

        for (int t = 0; kTriTable[cube_index][t] != -1; t += 3) {
          const std::uint32_t i0 = edge_idx[kTriTable[cube_index][t]];
          const std::uint32_t i1 = edge_idx[kTriTable[cube_index][t + 1]];
          const std::uint32_t i2 = edge_idx[kTriTable[cube_index][t + 2]];
          if (i0 == i1 || i1 == i2 || i0 == i2) continue;
          if (triangle_area(out.vertices[i0], out.vertices[i1], out.vertices[i2]) < 1e-12)
            continue;
          out.triangles.push_back({i0, i1, i2});
        }
      }
    }
  }
  return out;
}

SurfaceSample sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed) {
  if (mesh.empty()) throw EmptySurfaceError("sample_surface: mesh has no triangles");

  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    total += triangle_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
    cumulative[t] = total;
  }
  if (!(total > 0.0)) throw EmptySurfaceError("sample_surface: zero total surface area");

  Rng rng(seed);
  SurfaceSample out;
  out.points.reserve(count);
  out.triangle_of_point.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const double pick = rng.next_double() * total;
    const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), pick);
    const std::size_t t = std::min(static_cast<std::size_t>(it - cumulative.begin()),
                                   mesh.triangles.size() - 1);
    const auto& tri = mesh.triangles[t];
    const Vec3& a = mesh.vertices[tri[0]];
    const Vec3& b = mesh.vertices[tri[1]];
    const Vec3& c = mesh.vertices[tri[2]];
    const double su = std::sqrt(rng.next_double());
    const double v = rng.next_double();
    // p = (1-su) a + su (1-v) b + su v c: uniform over the triangle.
    out.points.push_back(a * (1.0 - su) + b * (su * (1.0 - v)) + c * (su * v));
    out.triangle_of_point.push_back(static_cast<std::uint32_t>(t));
  }
  return out;
}

namespace {

// Exact neighbor queries: buckets of side `distance` so any point within the
// threshold lies in one of the 27 adjacent buckets.
class NeighborGrid {
 public:
  NeighborGrid(std::span<const Vec3> points, double distance)
      : points_(points), inv_cell_(1.0 / distance), d2_(distance * distance) {
    buckets_.reserve(points.size() * 2);
    for (std::size_t i = 0; i < points.size(); ++i)
      buckets_[key_of(points[i])].push_back(i);
  }

  bool any_within(const Vec3& q) const {
    const auto [cx, cy, cz] = cell_of(q);
    for (long dx = -1; dx <= 1; ++dx)
      for (long dy = -1; dy <= 1; ++dy)
        for (long dz = -1; dz <= 1; ++dz) {
          const auto it = buckets_.find(pack(cx + dx, cy + dy, cz + dz));
          if (it == buckets_.end()) continue;
          for (std::size_t i : it->second) {
            const Vec3 diff = points_[i] - q;
            if (dot(diff, diff) < d2_) return true;
          }
        }
    return false;
  }

 private:
  std::tuple<long, long, long> cell_of(const Vec3& p) const {
    return {static_cast<long>(std::floor(p.x * inv_cell_)),
            static_cast<long>(std::floor(p.y * inv_cell_)),
            static_cast<long>(std::floor(p.z * inv_cell_))};
  }

  static std::uint64_t pack(long x, long y, long z) {
    auto spread = [](long v) { return static_cast<std::uint64_t>(v + (1L << 20)) & 0x1fffff; };
    return spread(x) | (spread(y) << 21) | (spread(z) << 42);
  }

  std::uint64_t key_of(const Vec3& p) const {
    const auto [x, y, z] = cell_of(p);
    return pack(x, y, z);
  }

  std::span<const Vec3> points_;
  double inv_cell_;
  double d2_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets_;
};

}  // namespace

ScoreTriple f_score(std::span<const Vec3> predicted, std::span<const Vec3> ground_truth,
                    double distance) {
  if (predicted.empty() || ground_truth.empty())
    throw EmptySurfaceError("f_score: empty point sample");
  if (!(distance > 0.0)) throw ConfigError("f_score: distance threshold must be positive");

  const NeighborGrid gt_index(ground_truth, distance);
  const NeighborGrid pred_index(predicted, distance);

  std::size_t hits_p = 0;
  for (const Vec3& p : predicted)
    if (gt_index.any_within(p)) ++hits_p;
  std::size_t hits_r = 0;
  for (const Vec3& g : ground_truth)
    if (pred_index.any_within(g)) ++hits_r;

  ScoreTriple out;
  out.precision = static_cast<double>(hits_p) / static_cast<double>(predicted.size());
  out.recall = static_cast<double>(hits_r) / static_cast<double>(ground_truth.size());
  out.fscore = (out.precision + out.recall) > 0.0
                   ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                   : 0.0;
  return out;
}

double BoundingBox::longest_side() const {
  return std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
}

BoundingBox bounding_box(const TriangleMesh& mesh) {
  if (mesh.vertices.empty()) throw EmptySurfaceError("bounding_box: empty mesh");
  BoundingBox box{mesh.vertices[0], mesh.vertices[0]};
  for (const Vec3& v : mesh.vertices) {
    box.lo.x = std::min(box.lo.x, v.x);
    box.lo.y = std::min(box.lo.y, v.y);
    box.lo.z = std::min(box.lo.z, v.z);
    box.hi.x = std::max(box.hi.x, v.x);
    box.hi.y = std::max(box.hi.y, v.y);
    box.hi.z = std::max(box.hi.z, v.z);
  }
  return box;
}

void normalize_points(std::span<Vec3> points, const BoundingBox& box) {
  const double longest = box.longest_side();
  if (longest < 1e-12)
    throw DegenerateInputError("normalize_points: degenerate bounding box");
  const double inv = 1.0 / longest;
  for (Vec3& p : points) p = (p - box.lo) * inv;
}

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (f == nullptr) throw IoError("cannot open for writing: " + path.string());
  for (const Vec3& v : mesh.vertices)
    std::fprintf(f, "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
  for (const auto& t : mesh.triangles)
    std::fprintf(f, "f %u %u %u\n", t[0] + 1, t[1] + 1, t[2] + 1);
  if (std::fclose(f) != 0) throw IoError("write failed: " + path.string());
}

}  // namespace voxmem::mesh
