#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rieszlab {

using Vec = Eigen::VectorXd;

struct GeometryError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct EndSpec {
  int n = 3;
  std::vector<int> factor;  // cycle lengths of the compact factor, empty = point
  int R = 8;
  double h = 1.0;

  int compact_size() const;
  int total_dim() const;  // N = n + number of nontrivial cycles
  bool operator==(const EndSpec&) const = default;
};

void validate(const EndSpec& spec);
// Vertices of the fragment cubes before the cores are removed; bounds the connected sum.
int64_t vertex_count_bound(const std::vector<EndSpec>& ends);

// Tag 0 is the junction K; ends are tagged 1..l.
constexpr int kJunctionTag = 0;
constexpr double kUnreachable = std::numeric_limits<double>::infinity();

struct ModelManifold {
  std::vector<EndSpec> ends;
  bool fragment = false;  // true for a single isolated end (no junction)
  double h = 1.0;

  int num_vertices = 0;
  std::vector<int64_t> row_ptr;  // adjacency, CSR
  std::vector<int32_t> col;
  std::vector<double> weight;

  std::vector<double> mu;
  std::vector<int8_t> tag;
  std::vector<uint8_t> boundary;
  std::vector<uint8_t> core;  // fragment only: |x|_inf <= r_K

  // Lattice coordinates, stride = coord_stride: n spatial coordinates followed
  // by the cycle coordinates of the vertex's end. Junction rows are zero.
  int coord_stride = 0;
  std::vector<int32_t> coords;

  std::vector<int> base_points;  // one per end
  std::vector<std::vector<int32_t>> frag_to_vertex;  // per end, -1 where removed
  std::vector<std::vector<double>> dist;  // dist[i] = d(z_i, .)

  int num_ends() const { return static_cast<int>(ends.size()); }
  int degree(int v) const { return static_cast<int>(row_ptr[v + 1] - row_ptr[v]); }
  const int32_t* coord(int v) const { return coords.data() + static_cast<size_t>(v) * coord_stride; }
  int end_of(int v) const { return tag[v]; }  // 0 for junction
  int num_interior() const;

  // Euclidean end radius h|x|_2 of a vertex on an end (0 on the junction).
  double radius(int v) const;
  // Continuum-style distance from base point of end i: radius on end i,
  // routed through the junction otherwise.
  double radial_distance(int i, int v) const;
  // Lexicographic index of a lattice point on end i inside that end's
  // isolated fragment; -1 for junction vertices or off-end vertices.
  int64_t fragment_index(int i, int v) const;
};

ModelManifold build_end(const EndSpec& spec);
ModelManifold connect_sum(const std::vector<ModelManifold>& fragments);

std::vector<double> distance_field(const ModelManifold& M, int basepoint);
Vec cutoff_phi(const ModelManifold& M, int i, double r0, double r1);

// Counts of vertices in graph balls B(z, r), r = 1..rmax.
std::vector<int64_t> ball_volumes(const ModelManifold& M, int z, int rmax);

bool same_graph(const ModelManifold& a, const ModelManifold& b);
int vertex_at(const ModelManifold& M, int end, const std::vector<int>& x, const std::vector<int>& y = {});

std::string to_json(const ModelManifold& M);
ModelManifold from_json(const std::string& text);

}  // namespace rieszlab
