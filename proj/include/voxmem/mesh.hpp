#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "voxmem/voxel.hpp"

namespace voxmem::mesh {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }
};

double dot(const Vec3& a, const Vec3& b);
Vec3 cross(const Vec3& a, const Vec3& b);
double norm(const Vec3& a);

struct TriangleMesh {
  std::vector<Vec3> vertices;                          // voxel-index coordinates
  std::vector<std::array<std::uint32_t, 3>> triangles;  // indices into vertices

  bool empty() const { return triangles.empty(); }
};

// Isosurface extraction with the standard 256-case tables and linear edge
// interpolation. The grid is padded internally with one empty layer so
// occupancy touching the boundary still produces a closed surface. Vertices
// are welded across cells, and zero-area triangles are dropped.
TriangleMesh marching_cubes(const VoxelGrid& grid, double iso);

struct SurfaceSample {
  std::vector<Vec3> points;
  std::vector<std::uint32_t> triangle_of_point;  // source triangle per point
};

// Draws exactly `count` points, triangle chosen area-weighted, position
// uniform within the triangle via sqrt-barycentric sampling.
SurfaceSample sample_surface(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed);

struct ScoreTriple {
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
};

// Surface precision/recall at a distance threshold (strict <) plus their
// harmonic mean; the score is 0 when neither side matches. Nearest-neighbor
// queries are exact (grid-bucketed exhaustive search).
ScoreTriple f_score(std::span<const Vec3> predicted, std::span<const Vec3> ground_truth,
                    double distance);

struct BoundingBox {
  Vec3 lo, hi;
  double longest_side() const;
};

BoundingBox bounding_box(const TriangleMesh& mesh);

// Maps points into the frame where the box's corner sits at the origin and
// its longest side has length 1. Evaluation normalizes both point clouds by
// the ground-truth box so distance thresholds read as fractions of object
// size.
void normalize_points(std::span<Vec3> points, const BoundingBox& box);

// ASCII OBJ export (v/f records, 1-based indices).
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);

}  // namespace voxmem::mesh
