#pragma once

#include "mae/autodiff.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace mae {

using Matrix = Eigen::MatrixXd;

enum class GlobalMode { Absolute, Relative };
enum class LocalMode { Isometric, Conformal, None };

std::string_view to_string(GlobalMode mode);
std::string_view to_string(LocalMode mode);
GlobalMode parse_global_mode(std::string_view text);
LocalMode parse_local_mode(std::string_view text);

struct LossWeights {
  double lambda_global = 0.0;
  double lambda_local = 0.0;
  double lambda_diag = 1e-3;
  GlobalMode global_mode = GlobalMode::Relative;
  LocalMode local_mode = LocalMode::Isometric;

  /// Names the offending field in the validation error.
  void validate() const;
};

/// Local losses are skipped while epoch < warmup_epochs; lambda_global is
/// multiplied by exp(-decay_rate * epoch) throughout.
struct Schedule {
  std::size_t warmup_epochs = 120;
  double decay_rate = 0.0;
};

/// Lower clamp for the relative-loss denominator.
inline constexpr double kRelativeClamp = 1e-8;

// Plain evaluations. Every batch loss is a mean over the batch or pair set.

/// (1/B) sum_i ||x_i - x_hat_i||^2.
double recon_loss(const Matrix& x, const Matrix& x_hat);
/// Mean over pairs of (dM - dE)^2.
double global_loss_abs(std::span<const double> d_manifold, std::span<const double> d_latent);
/// Mean over pairs of ((dM - dE) / dM)^2, dM clamped below at kRelativeClamp.
double global_loss_rel(std::span<const double> d_manifold, std::span<const double> d_latent);
/// Pair-mean over all i < j of two N x N distance matrices.
double global_loss(const Matrix& d_manifold, const Matrix& d_latent, GlobalMode mode);
/// Mean of ||H - I||_F^2.
double local_iso_loss(std::span<const Matrix> pullbacks);
/// Mean of sum_{j!=k} H_jk^2 + lambda_diag * sum_{j!=k} (H_jj - H_kk)^2.
double local_con_loss(std::span<const Matrix> pullbacks, double lambda_diag);

double effective_lambda_global(const Schedule& schedule, double base, std::size_t epoch);
/// base once the warm-up is over, 0 before.
double effective_lambda_local(const Schedule& schedule, double base, std::size_t epoch);

struct LossComponents {
  double recon = 0.0;
  double global = 0.0;
  double local = 0.0;
};

/// recon + lambda_global_eff * global + lambda_local_eff * local. Throws a
/// numeric error naming the first non-finite component.
double total_loss(const LossComponents& parts, const LossWeights& weights, std::size_t epoch,
                  const Schedule& schedule);

// Differentiable counterparts used by the trainer.
namespace tape {

ad::Var recon_loss(ad::Var x, ad::Var x_hat);
/// Loss over the within-batch pairs i < j of the latent rows. `d_manifold` is
/// the B x B block of precomputed geodesics; only the upper triangle is read.
ad::Var global_loss(ad::Var latent, const Matrix& d_manifold, GlobalMode mode);
/// Pullback entries H_jk (each B x 1, j <= k) from per-output Jacobian rows
/// (each B x l). Index with pullback_index.
std::vector<ad::Var> pullback_entries(const std::vector<ad::Var>& jacobian_rows);
std::size_t pullback_index(std::size_t j, std::size_t k, std::size_t latent_dim);
ad::Var local_loss(const std::vector<ad::Var>& jacobian_rows, LocalMode mode, double lambda_diag);

}  // namespace tape

}  // namespace mae
