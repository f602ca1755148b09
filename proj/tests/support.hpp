#pragma once

// Test-only oracles: central finite differences and seeded random inputs.
// Nothing here calls into the reverse-mode engine.

#include "mae/geodesic.hpp"
#include "mae/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

namespace mae::testing {

using Matrix = Eigen::MatrixXd;

inline constexpr double kFdStep = 1e-5;

/// d f / d p by central differences, perturbing `p` in place.
inline Matrix finite_difference(Matrix& p, const std::function<double()>& f, double h = kFdStep) {
  Matrix g(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double saved = p(i, j);
      p(i, j) = saved + h;
      const double up = f();
      p(i, j) = saved - h;
      const double down = f();
      p(i, j) = saved;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

/// ||a - b|| / max(||b||, floor): the relative error used by gradient checks.
inline double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-8) {
  return (a - b).norm() / std::max(b.norm(), floor);
}

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  }
  return m;
}

/// Euclidean distances between rows, by explicit loops.
inline Matrix pairwise(const Matrix& x) {
  Matrix d(x.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      double s = 0.0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) s += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      d(i, j) = std::sqrt(s);
    }
  }
  return d;
}

/// Plain-loop MLP forward pass, independent of the tape.
inline Matrix naive_forward(const std::vector<DenseLayer>& layers, const Matrix& x) {
  Matrix h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix next(h.rows(), layers[l].out());
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
      for (Eigen::Index c = 0; c < layers[l].out(); ++c) {
        double s = layers[l].bias(0, c);
        for (Eigen::Index k = 0; k < h.cols(); ++k) s += h(r, k) * layers[l].weight(k, c);
        next(r, c) = l + 1 < layers.size() ? std::tanh(s) : s;
      }
    }
    h = std::move(next);
  }
  return h;
}

/// Decoder Jacobian at z by central differences on naive_forward.
inline Matrix fd_decoder_jacobian(const MlpModel& model, const Eigen::RowVectorXd& z, double h = kFdStep) {
  const Eigen::Index n = model.ambient_dim();
  const Eigen::Index l = model.latent_dim();
  Matrix j(n, l);
  for (Eigen::Index c = 0; c < l; ++c) {
    Matrix up = z;
    Matrix down = z;
    up(0, c) += h;
    down(0, c) -= h;
    j.col(c) = ((naive_forward(model.decoder, up) - naive_forward(model.decoder, down)) / (2.0 * h)).transpose();
  }
  return j;
}

/// Small random tanh model with non-trivial biases.
inline MlpModel random_model(std::uint64_t seed, std::size_t n = 3, std::size_t l = 2, std::size_t width = 8) {
  ModelShape shape;
  shape.ambient_dim = n;
  shape.latent_dim = l;
  shape.encoder_hidden = {width, width};
  shape.decoder_hidden = {width, width};
  MlpModel model = init_model(shape, seed);
  std::mt19937_64 rng(seed + 17);
  for (Matrix* p : model.parameters()) {
    if (p->rows() == 1) *p = random_matrix(rng, 1, p->cols(), 0.3);
  }
  return model;
}

/// Analytic decoder Jacobian by forward-mode chain rule over plain loops.
inline Matrix naive_decoder_jacobian(const MlpModel& model, const Eigen::RowVectorXd& z) {
  Matrix h = z;
  Matrix dh = Matrix::Identity(z.cols(), z.cols());  // d h / d z, one row per unit
  for (std::size_t l = 0; l < model.decoder.size(); ++l) {
    const DenseLayer& layer = model.decoder[l];
    Matrix pre = h * layer.weight + layer.bias;
    Matrix dpre = layer.weight.transpose() * dh;
    if (l + 1 < model.decoder.size()) {
      for (Eigen::Index c = 0; c < pre.cols(); ++c) {
        const double y = std::tanh(pre(0, c));
        pre(0, c) = y;
        dpre.row(c) *= 1.0 - y * y;
      }
    }
    h = pre;
    dh = dpre;
  }
  return dh;
}

/// Random symmetric graph with small integer weights, so path sums are exact.
inline KnnGraph random_weighted_graph(std::mt19937_64& rng, std::size_t n, double density) {
  KnnGraph g;
  g.adjacency.resize(n);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> weight(1, 9);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (coin(rng) < density) g.add_edge(i, j, weight(rng));
    }
  }
  return g;
}

/// Minimum over every simple path, by exhaustive depth-first enumeration.
inline Matrix brute_force_paths(const KnnGraph& g) {
  const std::size_t n = g.size();
  const auto en = static_cast<Eigen::Index>(n);
  Matrix best = Matrix::Constant(en, en, std::numeric_limits<double>::infinity());
  std::vector<char> on_path(n, 0);
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t src, std::size_t at, double len) {
    best(src, at) = std::min(best(src, at), len);
    on_path[at] = 1;
    for (const Edge& e : g.adjacency[at]) {
      if (!on_path[e.to]) walk(src, e.to, len + e.weight);
    }
    on_path[at] = 0;
  };
  for (std::size_t s = 0; s < n; ++s) walk(s, s, 0.0);
  return best;
}

}  // namespace mae::testing
