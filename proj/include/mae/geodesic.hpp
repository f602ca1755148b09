#pragma once

#include "mae/datasets.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <vector>

namespace mae {

struct Edge {
  std::size_t to = 0;
  double weight = 0.0;
};

/// Symmetric k-nearest-neighbor graph with Euclidean edge lengths.
/// Adjacency lists are sorted by neighbor index.
struct KnnGraph {
  std::size_t k = 0;
  std::vector<std::vector<Edge>> adjacency;

  std::size_t size() const { return adjacency.size(); }
  std::size_t edge_count() const;
  /// Inserts i<->j, keeping the smaller weight when the edge already exists.
  void add_edge(std::size_t i, std::size_t j, double weight);
};

/// Zero-length edges (duplicate points) are stored with this weight.
inline constexpr double kMinEdgeWeight = 1e-12;

/// Symmetric all-pairs shortest-path matrix; +inf marks disconnected pairs.
struct DistanceMatrix {
  Matrix d;
  bool connected = true;

  Eigen::Index size() const { return d.rows(); }
};

/// Links every point to its k nearest neighbors (ties broken by index), then
/// symmetrizes by edge union.
KnnGraph build_knn_graph(const PointCloud& cloud, std::size_t k);

DistanceMatrix dijkstra_all_pairs(const KnnGraph& graph);
DistanceMatrix floyd_warshall(const KnnGraph& graph);

enum class ShortestPathAlgorithm { Auto, Dijkstra, FloydWarshall };

/// Auto picks Floyd-Warshall up to 500 nodes and Dijkstra above.
DistanceMatrix all_pairs_shortest_paths(const KnnGraph& graph,
                                        ShortestPathAlgorithm algorithm = ShortestPathAlgorithm::Auto);

std::size_t connected_components(const KnnGraph& graph);

/// Pairwise Euclidean distances between rows.
Matrix euclidean_distances(const Matrix& points);

/// Binary cache: "MAEDM1", N as u64 LE, then N*N row-major f64 LE.
std::string encode_distance_matrix(const DistanceMatrix& dm);
DistanceMatrix decode_distance_matrix(std::string_view bytes);
void save_distance_matrix(const std::filesystem::path& path, const DistanceMatrix& dm);
DistanceMatrix load_distance_matrix(const std::filesystem::path& path);

}  // namespace mae
