#include "hinite/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <string>

namespace hinite {

std::span<const int> ViewGraph::neighbors_of(int i) const {
  if (i < 0 || i >= n) {
    throw IndexError("node " + std::to_string(i) + " out of " + std::to_string(n));
  }
  return std::span<const int>(neighbors).subspan(offsets[static_cast<std::size_t>(i)],
                                                 offsets[static_cast<std::size_t>(i) + 1] -
                                                     offsets[static_cast<std::size_t>(i)]);
}

int ViewGraph::degree(int i) const { return static_cast<int>(neighbors_of(i).size()); }

bool ViewGraph::has_edge(int i, int j) const {
  auto ns = neighbors_of(i);
  return std::binary_search(ns.begin(), ns.end(), j);
}

ViewGraph make_view_graph(int n, std::span<const std::pair<int, int>> edges) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (const auto& [a, b] : edges) {
    if (a < 0 || a >= n || b < 0 || b >= n) {
      throw IndexError("edge (" + std::to_string(a) + "," + std::to_string(b) + ") out of " +
                       std::to_string(n) + " nodes");
    }
    if (a == b) continue;  // self-loops are dropped, A_ii = 0
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  }
  ViewGraph g;
  g.n = n;
  g.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 0; i < n; ++i) {
    auto& row = adj[static_cast<std::size_t>(i)];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    g.offsets[static_cast<std::size_t>(i) + 1] = g.offsets[static_cast<std::size_t>(i)] + static_cast<int>(row.size());
  }
  g.neighbors.reserve(static_cast<std::size_t>(g.offsets.back()));
  for (const auto& row : adj) {
    g.neighbors.insert(g.neighbors.end(), row.begin(), row.end());
  }
  return g;
}

std::span<const int> HeteroGraph::neighbors(int i, int v) const {
  if (v < 0 || v >= view_count()) {
    throw IndexError("view " + std::to_string(v) + " out of " + std::to_string(view_count()));
  }
  return views[static_cast<std::size_t>(v)].neighbors_of(i);
}

HeteroGraph make_hetero_graph(std::vector<ViewGraph> views) {
  if (views.empty()) {
    throw ContractViolation("hetero graph needs at least one view");
  }
  for (const auto& v : views) {
    if (v.n != views.front().n) {
      throw ContractViolation("all views must share the node count");
    }
  }
  return HeteroGraph{std::move(views)};
}

ViewGraph projection(const HeteroGraph& g) {
  std::vector<std::pair<int, int>> edges;
  for (const auto& view : g.views) {
    for (int i = 0; i < view.n; ++i) {
      for (int j : view.neighbors_of(i)) {
        if (i < j) edges.emplace_back(i, j);
      }
    }
  }
  return make_view_graph(g.node_count(), edges);
}

HeteroGraph as_hetero(ViewGraph view) {
  std::vector<ViewGraph> views;
  views.push_back(std::move(view));
  return make_hetero_graph(std::move(views));
}

HeteroGraph load_edges(const std::filesystem::path& path, int n, int m) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open edge file " + path.string());
  }
  std::vector<std::vector<std::pair<int, int>>> per_view(static_cast<std::size_t>(m));
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    long long src, view, dst;
    if (!(ls >> src)) continue;  // blank or comment-only line
    if (!(ls >> view >> dst)) {
      throw ParseError("expected `src view dst`", line_no);
    }
    long long trailing;
    if (ls >> trailing) {
      throw ParseError("trailing fields after `src view dst`", line_no);
    }
    if (src < 0 || src >= n || dst < 0 || dst >= n) {
      throw ParseError("node id out of range [0," + std::to_string(n) + ")", line_no);
    }
    if (view < 0 || view >= m) {
      throw ParseError("view id out of range [0," + std::to_string(m) + ")", line_no);
    }
    per_view[static_cast<std::size_t>(view)].emplace_back(static_cast<int>(src), static_cast<int>(dst));
  }
  std::vector<ViewGraph> views;
  views.reserve(static_cast<std::size_t>(m));
  for (const auto& edges : per_view) {
    views.push_back(make_view_graph(n, edges));
  }
  return make_hetero_graph(std::move(views));
}

void save_edges(const std::filesystem::path& path, const HeteroGraph& g) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write edge file " + path.string());
  }
  out << "# src view dst\n";
  for (int v = 0; v < g.view_count(); ++v) {
    const auto& view = g.views[static_cast<std::size_t>(v)];
    for (int i = 0; i < view.n; ++i) {
      for (int j : view.neighbors_of(i)) {
        if (i < j) out << i << ' ' << v << ' ' << j << '\n';
      }
    }
  }
  if (!out) {
    throw IoError("short write to " + path.string());
  }
}

NeighborIncidence self_loop_incidence(const ViewGraph& g) {
  NeighborIncidence inc;
  inc.segments.offsets.assign(static_cast<std::size_t>(g.n) + 1, 0);
  inc.src.reserve(g.neighbors.size() + static_cast<std::size_t>(g.n));
  for (int i = 0; i < g.n; ++i) {
    auto ns = g.neighbors_of(i);
    bool placed = false;
    for (int j : ns) {
      if (!placed && i < j) {
        inc.src.push_back(i);
        placed = true;
      }
      inc.src.push_back(j);
    }
    if (!placed) inc.src.push_back(i);
    inc.segments.offsets[static_cast<std::size_t>(i) + 1] = static_cast<int>(inc.src.size());
  }
  inc.dst.resize(inc.src.size());
  for (int i = 0; i < g.n; ++i) {
    for (int e = inc.segments.offsets[static_cast<std::size_t>(i)];
         e < inc.segments.offsets[static_cast<std::size_t>(i) + 1]; ++e) {
      inc.dst[static_cast<std::size_t>(e)] = i;
    }
  }
  return inc;
}

std::vector<double> gcn_coefficients(const ViewGraph& g, const NeighborIncidence& inc) {
  std::vector<double> coeff(inc.src.size());
  for (int i = 0; i < g.n; ++i) {
    const double di = static_cast<double>(g.degree(i)) + 1.0;
    for (int e = inc.segments.offsets[static_cast<std::size_t>(i)];
         e < inc.segments.offsets[static_cast<std::size_t>(i) + 1]; ++e) {
      const double dj = static_cast<double>(g.degree(inc.src[static_cast<std::size_t>(e)])) + 1.0;
      coeff[static_cast<std::size_t>(e)] = 1.0 / std::sqrt(di * dj);
    }
  }
  return coeff;
}

std::vector<int> hop_distances(const ViewGraph& g, int source) {
  std::vector<int> dist(static_cast<std::size_t>(g.n), -1);
  std::deque<int> queue;
  dist[static_cast<std::size_t>(source)] = 0;
  queue.push_back(source);
  while (!queue.empty()) {
    int i = queue.front();
    queue.pop_front();
    for (int j : g.neighbors_of(i)) {
      if (dist[static_cast<std::size_t>(j)] < 0) {
        dist[static_cast<std::size_t>(j)] = dist[static_cast<std::size_t>(i)] + 1;
        queue.push_back(j);
      }
    }
  }
  return dist;
}

}  // namespace hinite
