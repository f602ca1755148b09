#include "mae/metrics.hpp"

#include "mae/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace mae {

std::vector<std::size_t> nearest_neighbors(const Matrix& distances, Eigen::Index i, std::size_t k) {
  const auto n = static_cast<std::size_t>(distances.rows());
  std::vector<std::size_t> idx;
  idx.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    if (static_cast<Eigen::Index>(j) != i) idx.push_back(j);
  }
  auto closer = [&](std::size_t a, std::size_t b) {
    const double da = distances(i, static_cast<Eigen::Index>(a));
    const double db = distances(i, static_cast<Eigen::Index>(b));
    return da < db || (da == db && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), closer);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double knn_recall(const DistanceMatrix& d_data, const Matrix& latent, std::size_t k) {
  const Eigen::Index n = d_data.size();
  if (latent.rows() != n) throw Error(ErrorKind::Shape, "knn_recall: latent rows do not match distances");
  if (k == 0 || k >= static_cast<std::size_t>(n)) {
    throw Error(ErrorKind::Parameter, "knn_recall: k must satisfy 1 <= k < N");
  }
  const Matrix d_latent = euclidean_distances(latent);
  std::size_t hits = 0;
  std::vector<std::size_t> common;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto a = nearest_neighbors(d_data.d, i, k);
    const auto b = nearest_neighbors(d_latent, i, k);
    common.clear();
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    hits += common.size();
  }
  return static_cast<double>(hits) / (static_cast<double>(n) * static_cast<double>(k));
}

Eigen::VectorXd kernel_density(const Matrix& distances, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::Parameter, "kernel_density: sigma must be positive");
  const Eigen::Index n = distances.rows();
  if (n < 2 || distances.cols() != n) throw Error(ErrorKind::Shape, "kernel_density: need a square matrix, N >= 2");
  const double max_d = distances.maxCoeff();
  if (!(max_d > 0.0) || !std::isfinite(max_d)) {
    throw Error(ErrorKind::DegenerateInput, "kernel_density: maximum pairwise distance must be positive and finite");
  }
  Eigen::VectorXd p(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double r = distances(i, j) / max_d;
      s += std::exp(-(r * r) / sigma);
    }
    p(i) = s;
  }
  return p / p.sum();
}

double kl_sigma(const Matrix& d_data, const Matrix& d_latent, double sigma) {
  if (d_data.rows() != d_latent.rows() || d_data.cols() != d_latent.cols()) {
    throw Error(ErrorKind::Shape, "kl_sigma: distance matrices differ in shape");
  }
  const Eigen::VectorXd p = kernel_density(d_data, sigma);
  const Eigen::VectorXd q = kernel_density(d_latent, sigma);
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) kl += p(i) * std::log(p(i) / q(i));
  }
  return kl;
}

std::string sigma_key(double sigma) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "kl_%g", sigma);
  return buf;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["recon_mse"] = recon_mse;
  j["knn_recall"] = knn_recall;
  for (double s : sigmas) j[sigma_key(s)] = kl.at(s);
  j["k_eval"] = k_eval;
  return j;
}

MetricsReport evaluate(const MlpModel& model, const PointCloud& points, const DistanceMatrix& d_data,
                       std::size_t k_eval, const std::vector<double>& sigmas) {
  model.validate();
  if (points.dim() != model.ambient_dim()) throw Error(ErrorKind::Shape, "evaluate: model and data dimensions differ");
  if (d_data.size() != points.size()) throw Error(ErrorKind::Shape, "evaluate: distances do not match the points");
  MetricsReport report;
  report.k_eval = k_eval;
  report.sigmas = sigmas;
  const Matrix latent = encode(model, points.points);
  const Matrix recon = decode(model, latent);
  report.recon_mse = (points.points - recon).squaredNorm() / static_cast<double>(points.points.size());
  report.knn_recall = knn_recall(d_data, latent, k_eval);
  if (!sigmas.empty()) {
    const Matrix d_latent = euclidean_distances(latent);
    for (double s : sigmas) report.kl[s] = kl_sigma(d_data.d, d_latent, s);
  }
  return report;
}

}  // namespace mae
