#include "otag/distance.hpp"

#include <algorithm>
#include <queue>

#include "otag/parallel.hpp"

namespace otag {

std::vector<std::vector<std::int32_t>> build_adjacency(const OntologyGraph& g, bool undirected) {
  const auto n = static_cast<std::int32_t>(g.size());
  const std::size_t total = g.size() + (g.has_virtual_root ? 1 : 0);
  std::vector<std::vector<std::int32_t>> adj(total);
  for (std::int32_t i = 0; i < n; ++i) {
    for (auto c : g.children[i]) {
      adj[i].push_back(c);
      if (undirected) adj[c].push_back(i);
    }
  }
  if (g.has_virtual_root) {
    const auto vr = n;
    for (auto r : g.roots) {
      adj[vr].push_back(r);
      if (undirected) adj[r].push_back(vr);
    }
  }
  return adj;
}

namespace kernel {

namespace {

// Single-source BFS writing one row of the matrix.
void bfs_row(const std::vector<std::vector<std::int32_t>>& adj, std::int32_t source,
             std::size_t n_rows, std::uint8_t* row, std::vector<std::int32_t>& scratch) {
  scratch.assign(adj.size(), -1);
  scratch[source] = 0;
  std::queue<std::int32_t> q;
  q.push(source);
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    for (auto v : adj[u]) {
      if (scratch[v] < 0) {
        scratch[v] = scratch[u] + 1;
        q.push(v);
      }
    }
  }
  for (std::size_t j = 0; j < n_rows; ++j) {
    auto dist = scratch[j];
    row[j] = (dist < 0 || dist >= DistanceMatrix::kInf)
                 ? DistanceMatrix::kInf
                 : static_cast<std::uint8_t>(dist);
  }
}

}  // namespace

void bfs_all_pairs_serial(const std::vector<std::vector<std::int32_t>>& adj,
                          std::size_t n_rows, MatU8& out) {
  std::vector<std::int32_t> scratch;
  for (std::size_t i = 0; i < n_rows; ++i)
    bfs_row(adj, static_cast<std::int32_t>(i), n_rows, out.row(i).data(), scratch);
}

void bfs_all_pairs_parallel(const std::vector<std::vector<std::int32_t>>& adj,
                            std::size_t n_rows, MatU8& out) {
  const int threads = thread_count();
#pragma omp parallel num_threads(threads)
  {
    std::vector<std::int32_t> scratch;
#pragma omp for schedule(dynamic, 16)
    for (long i = 0; i < static_cast<long>(n_rows); ++i)
      bfs_row(adj, static_cast<std::int32_t>(i), n_rows, out.row(i).data(), scratch);
  }
}

}  // namespace kernel

DistanceMatrix distance_matrix(const OntologyGraph& g, DistanceOptions opts) {
  DistanceMatrix dm;
  dm.n = g.size();
  dm.d = MatU8(dm.n, dm.n, DistanceMatrix::kInf);
  auto adj = build_adjacency(g, opts.undirected);
#ifdef _OPENMP
  kernel::bfs_all_pairs_parallel(adj, dm.n, dm.d);
#else
  kernel::bfs_all_pairs_serial(adj, dm.n, dm.d);
#endif
  int diameter = 0;
  for (auto v : dm.d.data())
    if (v != DistanceMatrix::kInf) diameter = std::max(diameter, static_cast<int>(v));
  dm.diameter = diameter;
  return dm;
}

int diameter_over(const DistanceMatrix& dm, std::span<const std::int32_t> nodes) {
  int best = 0;
  for (auto i : nodes)
    for (auto j : nodes) {
      auto v = dm.d(i, j);
      if (v != DistanceMatrix::kInf) best = std::max(best, static_cast<int>(v));
    }
  return best;
}

std::vector<std::uint64_t> distance_histogram(const DistanceMatrix& dm) {
  std::vector<std::uint64_t> hist(static_cast<std::size_t>(dm.diameter) + 1, 0);
  for (std::size_t i = 0; i < dm.n; ++i)
    for (std::size_t j = i + 1; j < dm.n; ++j) {
      auto v = dm.d(i, j);
      if (v != DistanceMatrix::kInf) ++hist[v];
    }
  return hist;
}

}  // namespace otag
