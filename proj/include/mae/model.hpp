#pragma once

#include "mae/autodiff.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mae {

using Matrix = Eigen::MatrixXd;

enum class Activation { Tanh };

/// Affine layer acting on row batches: y = x W + b, W is in x out.
struct DenseLayer {
  Matrix weight;
  Matrix bias;  // 1 x out

  Eigen::Index in() const { return weight.rows(); }
  Eigen::Index out() const { return weight.cols(); }
};

struct ModelShape {
  std::size_t ambient_dim = 3;
  std::size_t latent_dim = 2;
  std::vector<std::size_t> encoder_hidden{64, 64};
  std::vector<std::size_t> decoder_hidden{64, 64};
  Activation activation = Activation::Tanh;
};

/// Encoder R^n -> R^l and decoder R^l -> R^n. Hidden layers use the
/// activation; the last layer of each network is linear.
struct MlpModel {
  std::vector<DenseLayer> encoder;
  std::vector<DenseLayer> decoder;
  Activation activation = Activation::Tanh;

  Eigen::Index ambient_dim() const { return encoder.front().in(); }
  Eigen::Index latent_dim() const { return encoder.back().out(); }
  std::size_t parameter_count() const;
  /// Throws a shape error unless the layers chain n -> l -> n with l < n.
  void validate() const;

  /// Every weight and bias, encoder first, in checkpoint order.
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
};

/// Same layer shapes and bit-identical parameters.
bool identical(const MlpModel& a, const MlpModel& b);

/// Glorot-uniform weights, U(-b, b) with b = sqrt(6 / (fan_in + fan_out));
/// zero biases.
MlpModel init_model(const ModelShape& shape, std::uint64_t seed);
double glorot_bound(Eigen::Index fan_in, Eigen::Index fan_out);

/// Batched evaluation, one point per row.
Matrix encode(const MlpModel& model, const Matrix& x);
Matrix decode(const MlpModel& model, const Matrix& z);

/// Decoder Jacobian at a single latent point (n x l).
ad::Jacobian decoder_jacobian(const MlpModel& model, const Eigen::RowVectorXd& z);
/// H = J_D(z)^T J_D(z), built entrywise so it is exactly symmetric.
Matrix decoder_pullback(const MlpModel& model, const Eigen::RowVectorXd& z);
Matrix gram(const Matrix& jacobian);

/// Model parameters registered as leaves of a tape.
struct ModelVars {
  std::vector<std::pair<ad::Var, ad::Var>> encoder;
  std::vector<std::pair<ad::Var, ad::Var>> decoder;
  Activation activation = Activation::Tanh;

  std::vector<ad::Var> all() const;
};

/// Registers every parameter as a differentiable leaf (named enc.i.w,
/// enc.i.b, dec.i.w, dec.i.b), or as constants when `trainable` is false.
ModelVars bind(ad::Tape& tape, const MlpModel& model, bool trainable = true);
ad::Var encode(const ModelVars& vars, ad::Var x);
ad::Var decode(const ModelVars& vars, ad::Var z);

/// Checkpoint: "MAECP1", then u64 LE header (n, l, activation, layer counts
/// and shapes), then row-major f64 LE weights and biases.
std::string encode_checkpoint(const MlpModel& model);
MlpModel decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const MlpModel& model);
MlpModel load_checkpoint(const std::filesystem::path& path);

}  // namespace mae
