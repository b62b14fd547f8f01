#pragma once

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "hinite/errors.hpp"
#include "hinite/tensor.hpp"

namespace hinite {

// One view of a heterogeneous graph, CSR over sorted neighbor lists.
// Invariants: undirected (j in N(i) iff i in N(j)), no self-loops, no
// duplicate entries.
struct ViewGraph {
  int n = 0;
  std::vector<int> offsets;    // size n+1
  std::vector<int> neighbors;  // sorted within each row

  std::span<const int> neighbors_of(int i) const;
  int degree(int i) const;
  long long edge_count() const { return static_cast<long long>(neighbors.size()) / 2; }
  bool has_edge(int i, int j) const;
};

// Builds a ViewGraph from arbitrary directed edge pairs: symmetrizes,
// deduplicates, and drops self-loops.
ViewGraph make_view_graph(int n, std::span<const std::pair<int, int>> edges);

// m adjacency views over the same n nodes.
struct HeteroGraph {
  std::vector<ViewGraph> views;

  int node_count() const { return views.empty() ? 0 : views.front().n; }
  int view_count() const { return static_cast<int>(views.size()); }
  // N_i^v, sorted, excluding i itself.
  std::span<const int> neighbors(int i, int v) const;
};

HeteroGraph make_hetero_graph(std::vector<ViewGraph> views);

// Single-view union of all views' edge sets.
ViewGraph projection(const HeteroGraph& g);

HeteroGraph as_hetero(ViewGraph view);

// Edge-list text format: one `src view dst` triple per line, `#` comments.
HeteroGraph load_edges(const std::filesystem::path& path, int n, int m);
void save_edges(const std::filesystem::path& path, const HeteroGraph& g);

// Entry list for attention/convolution over N_i ∪ {i}: segment i holds the
// sources {i} ∪ N_i in ascending order.
struct NeighborIncidence {
  Segments segments;      // one segment per node
  std::vector<int> src;   // source node per entry
  std::vector<int> dst;   // owning node per entry (the segment index, expanded)
};

NeighborIncidence self_loop_incidence(const ViewGraph& g);

// Per-entry coefficients of the symmetric-normalized adjacency with
// self-loops: 1/sqrt((deg_i+1)(deg_j+1)), aligned with a NeighborIncidence.
std::vector<double> gcn_coefficients(const ViewGraph& g, const NeighborIncidence& inc);

// Hop distances from `source` in g (BFS); unreachable nodes get -1.
std::vector<int> hop_distances(const ViewGraph& g, int source);

}  // namespace hinite
