#pragma once

#include "mae/datasets.hpp"
#include "mae/geodesic.hpp"
#include "mae/model.hpp"

#include <json.hpp>

#include <map>
#include <vector>

namespace mae {

/// Indices of the k nearest neighbors of `i` under row i of `distances`,
/// self excluded, ties broken by index.
std::vector<std::size_t> nearest_neighbors(const Matrix& distances, Eigen::Index i, std::size_t k);

/// Mean over points of |kNN_data(i) ∩ kNN_latent(i)| / k. Data neighbors come
/// from `d_data` (geodesic), latent neighbors from Euclidean distances.
double knn_recall(const DistanceMatrix& d_data, const Matrix& latent, std::size_t k);

/// Normalized Gaussian-kernel densities p_sigma(i) from a distance matrix, with
/// distances divided by their maximum. The sum over j includes j = i.
Eigen::VectorXd kernel_density(const Matrix& distances, double sigma);

/// D_KL(p_data || p_latent) of the kernel densities, natural log.
double kl_sigma(const Matrix& d_data, const Matrix& d_latent, double sigma);

inline const std::vector<double> kDefaultSigmas{0.01, 0.1, 1.0};

struct MetricsReport {
  double recon_mse = 0.0;  // mean over points and coordinates
  double knn_recall = 0.0;
  std::size_t k_eval = 10;
  std::vector<double> sigmas;
  std::map<double, double> kl;

  /// Keys recon_mse, knn_recall, kl_<sigma>, k_eval.
  nlohmann::json to_json() const;
};

std::string sigma_key(double sigma);

MetricsReport evaluate(const MlpModel& model, const PointCloud& points, const DistanceMatrix& d_data,
                       std::size_t k_eval = 10, const std::vector<double>& sigmas = kDefaultSigmas);

}  // namespace mae
