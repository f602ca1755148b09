#include "mae/geodesic.hpp"

#include "mae/error.hpp"
#include "mae/io.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>

namespace mae {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::string_view kDistanceMagic = "MAEDM1";

DistanceMatrix finish(Matrix d) {
  const Eigen::Index n = d.rows();
  // Force exact symmetry; the two directions can differ in the last bit.
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double m = std::min(d(i, j), d(j, i));
      d(i, j) = m;
      d(j, i) = m;
    }
  }
  DistanceMatrix out;
  out.connected = d.allFinite();
  out.d = std::move(d);
  return out;
}

}  // namespace

std::size_t KnnGraph::edge_count() const {
  std::size_t total = 0;
  for (const auto& list : adjacency) total += list.size();
  return total / 2;
}

void KnnGraph::add_edge(std::size_t i, std::size_t j, double weight) {
  if (i == j) return;
  weight = std::max(weight, kMinEdgeWeight);
  auto insert = [](std::vector<Edge>& list, std::size_t to, double w) {
    auto it = std::lower_bound(list.begin(), list.end(), to,
                               [](const Edge& e, std::size_t v) { return e.to < v; });
    if (it != list.end() && it->to == to) {
      it->weight = std::min(it->weight, w);
    } else {
      list.insert(it, Edge{to, w});
    }
  };
  insert(adjacency.at(i), j, weight);
  insert(adjacency.at(j), i, weight);
}

KnnGraph build_knn_graph(const PointCloud& cloud, std::size_t k) {
  const auto n = static_cast<std::size_t>(cloud.size());
  if (k == 0 || k >= n) {
    throw Error(ErrorKind::Parameter, "k must satisfy 1 <= k < N (k=" + std::to_string(k) +
                                          ", N=" + std::to_string(n) + ")");
  }
  const Matrix& p = cloud.points;
  KnnGraph graph;
  graph.k = k;
  graph.adjacency.resize(n);
  std::vector<std::pair<double, std::size_t>> cand(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      cand[c++] = {(p.row(static_cast<Eigen::Index>(i)) - p.row(static_cast<Eigen::Index>(j))).squaredNorm(), j};
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t r = 0; r < k; ++r) graph.add_edge(i, cand[r].second, std::sqrt(cand[r].first));
  }
  return graph;
}

DistanceMatrix dijkstra_all_pairs(const KnnGraph& graph) {
  const std::size_t n = graph.size();
  Matrix d = Matrix::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), kInf);
  using Item = std::pair<double, std::size_t>;
  std::vector<double> dist(n);
  for (std::size_t src = 0; src < n; ++src) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[src] = 0.0;
    heap.emplace(0.0, src);
    while (!heap.empty()) {
      auto [du, u] = heap.top();
      heap.pop();
      if (du > dist[u]) continue;
      for (const Edge& e : graph.adjacency[u]) {
        const double nd = du + e.weight;
        if (nd < dist[e.to]) {
          dist[e.to] = nd;
          heap.emplace(nd, e.to);
        }
      }
    }
    for (std::size_t j = 0; j < n; ++j) d(static_cast<Eigen::Index>(src), static_cast<Eigen::Index>(j)) = dist[j];
  }
  return finish(std::move(d));
}

DistanceMatrix floyd_warshall(const KnnGraph& graph) {
  const auto n = static_cast<Eigen::Index>(graph.size());
  Matrix d = Matrix::Constant(n, n, kInf);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (const Edge& e : graph.adjacency[static_cast<std::size_t>(i)]) {
      const auto j = static_cast<Eigen::Index>(e.to);
      d(i, j) = std::min(d(i, j), e.weight);
    }
  }
  // Column-major storage: d(i, k) + d(k, j) with i innermost walks memory.
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dkj = d(k, j);
      if (dkj == kInf) continue;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double via = d(i, k) + dkj;
        if (via < d(i, j)) d(i, j) = via;
      }
    }
  }
  return finish(std::move(d));
}

DistanceMatrix all_pairs_shortest_paths(const KnnGraph& graph, ShortestPathAlgorithm algorithm) {
  if (algorithm == ShortestPathAlgorithm::Auto) {
    algorithm = graph.size() > 500 ? ShortestPathAlgorithm::Dijkstra : ShortestPathAlgorithm::FloydWarshall;
  }
  return algorithm == ShortestPathAlgorithm::Dijkstra ? dijkstra_all_pairs(graph) : floyd_warshall(graph);
}

std::size_t connected_components(const KnnGraph& graph) {
  const std::size_t n = graph.size();
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> stack;
  std::size_t components = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    ++components;
    seen[s] = 1;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (const Edge& e : graph.adjacency[u]) {
        if (!seen[e.to]) {
          seen[e.to] = 1;
          stack.push_back(e.to);
        }
      }
    }
  }
  return components;
}

Matrix euclidean_distances(const Matrix& points) {
  const Eigen::Index n = points.rows();
  Matrix d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (points.row(i) - points.row(j)).norm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

std::string encode_distance_matrix(const DistanceMatrix& dm) {
  io::ByteWriter w;
  w.bytes(kDistanceMagic);
  const Eigen::Index n = dm.size();
  w.u64(static_cast<std::uint64_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) w.f64(dm.d(i, j));
  }
  return w.str();
}

DistanceMatrix decode_distance_matrix(std::string_view bytes) {
  io::ByteReader r(bytes);
  r.expect(kDistanceMagic, "distance matrix");
  const std::uint64_t n = r.u64();
  if (n > 0 && r.remaining() / 8 / n < n) throw Error(ErrorKind::Parse, "distance matrix is truncated");
  const auto size = static_cast<Eigen::Index>(n);
  Matrix d(size, size);
  for (Eigen::Index i = 0; i < size; ++i) {
    for (Eigen::Index j = 0; j < size; ++j) d(i, j) = r.f64();
  }
  if (!r.at_end()) throw Error(ErrorKind::Parse, "trailing bytes after distance matrix");
  DistanceMatrix dm;
  dm.connected = d.allFinite();
  dm.d = std::move(d);
  return dm;
}

void save_distance_matrix(const std::filesystem::path& path, const DistanceMatrix& dm) {
  io::write_atomic(path, encode_distance_matrix(dm));
}

DistanceMatrix load_distance_matrix(const std::filesystem::path& path) {
  return decode_distance_matrix(io::read_file(path));
}

}  // namespace mae
