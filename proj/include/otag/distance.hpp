#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "otag/matrix.hpp"
#include "otag/ontology.hpp"

namespace otag {

// All-pairs shortest-path edge counts over the ontology. Dense uint8 with
// 255 as the unreachable sentinel; fine since the graphs here have
// diameters in the low tens. Rows/columns cover real nodes only; a virtual
// root participates as a transit vertex but gets no row.
struct DistanceMatrix {
  std::size_t n = 0;
  MatU8 d;
  int diameter = 0;  // max finite entry

  static constexpr std::uint8_t kInf = 255;

  std::uint8_t operator()(std::size_t i, std::size_t j) const { return d(i, j); }
  bool reachable(std::size_t i, std::size_t j) const { return d(i, j) != kInf; }
};

struct DistanceOptions {
  // Paper-faithful distances traverse edges both ways.
  bool undirected = true;
};

// BFS from every node. Fans sources out across threads; bitwise identical
// to the serial kernel for any thread count.
DistanceMatrix distance_matrix(const OntologyGraph& g, DistanceOptions opts = {});

// Max finite distance restricted to the given node indices.
int diameter_over(const DistanceMatrix& dm, std::span<const std::int32_t> nodes);

// Histogram of finite distances over unordered node pairs (i < j);
// bucket k counts pairs at distance k.
std::vector<std::uint64_t> distance_histogram(const DistanceMatrix& dm);

namespace kernel {

// Serial reference implementation, kept for tests and benchmarks.
void bfs_all_pairs_serial(const std::vector<std::vector<std::int32_t>>& adj,
                          std::size_t n_rows, MatU8& out);

// OpenMP fan-out over BFS sources.
void bfs_all_pairs_parallel(const std::vector<std::vector<std::int32_t>>& adj,
                            std::size_t n_rows, MatU8& out);

}  // namespace kernel

// Undirected adjacency (or directed child adjacency) including the virtual
// root as an extra trailing vertex when the graph has one. Exposed for the
// kernel benchmarks.
std::vector<std::vector<std::int32_t>> build_adjacency(const OntologyGraph& g, bool undirected);

}  // namespace otag
