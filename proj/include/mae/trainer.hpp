#pragma once

#include "mae/autodiff.hpp"
#include "mae/datasets.hpp"
#include "mae/error.hpp"
#include "mae/geodesic.hpp"
#include "mae/losses.hpp"
#include "mae/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace mae {

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  LossWeights weights;
  Schedule schedule;
  std::uint64_t seed = 0;
  std::size_t k_neighbors = 10;
  std::size_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::size_t latent_dim = 2;
  std::vector<std::size_t> encoder_hidden{64, 64};
  std::vector<std::size_t> decoder_hidden{64, 64};

  /// Collects every offending field into one validation error.
  void validate() const;
  ModelShape shape(std::size_t ambient_dim) const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double recon = 0.0;
  double global = 0.0;
  double local = 0.0;  // raw local loss; 0 when not evaluated
  double total = 0.0;
  double lambda_global_eff = 0.0;
  double lambda_local_eff = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  MlpModel model;
  TrainReport report;
};

/// Raised when the objective leaves the finite range. Carries the parameters
/// from the end of the last fully finite epoch.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& message, MlpModel last_good, TrainReport partial)
      : Error(ErrorKind::Divergence, message), last_good_(std::move(last_good)), partial_(std::move(partial)) {}

  const MlpModel& last_good() const { return last_good_; }
  const TrainReport& partial_report() const { return partial_; }

 private:
  MlpModel last_good_;
  TrainReport partial_;
};

/// Objective threshold above which training halts.
inline constexpr double kDivergenceThreshold = 1e6;

/// kNN graph + all-pairs shortest paths. Throws a connectivity error (with the
/// component count) when the graph is disconnected.
DistanceMatrix precompute_distances(const PointCloud& points, std::size_t k,
                                    ShortestPathAlgorithm algorithm = ShortestPathAlgorithm::Auto);

/// On-disk memo of precompute_distances keyed by the point digest and k.
class DistanceCache {
 public:
  explicit DistanceCache(std::filesystem::path directory) : dir_(std::move(directory)) {}

  std::filesystem::path path_for(const PointCloud& points, std::size_t k) const;
  DistanceMatrix get_or_compute(const PointCloud& points, std::size_t k);
  bool last_was_hit() const { return last_hit_; }

 private:
  std::filesystem::path dir_;
  bool last_hit_ = false;
};

/// Terms of the per-batch objective as recorded on a tape.
struct BatchObjective {
  ad::Var total;
  ad::Var recon;
  std::optional<ad::Var> global;
  std::optional<ad::Var> local;
};

/// Builds recon + lambda_global * global + lambda_local * local for one batch.
/// A term whose coefficient is zero is not recorded. The local term uses the
/// decoder Jacobian at the batch's latent codes, built with create_graph so
/// its parameter gradients are exact.
BatchObjective build_objective(const ModelVars& vars, ad::Var batch, const Matrix& d_manifold_block,
                               const LossWeights& weights, double lambda_global, double lambda_local);

/// First-order adaptive-moment optimizer (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
 public:
  explicit Adam(double learning_rate) : lr_(learning_rate) {}
  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads);

 private:
  double lr_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

using CheckpointFn = std::function<void(std::size_t epoch, const MlpModel& model)>;

/// Trains from a seeded initialization. Deterministic given the config.
TrainResult train(const PointCloud& points, const DistanceMatrix& distances, const TrainConfig& config,
                  const CheckpointFn& on_checkpoint = {});

struct NamedConfig {
  std::string name;
  TrainConfig config;
};

/// full_iso, full_con, global_only (lambda_local = 0) and local_only
/// (lambda_global = 0); everything else copied from `base`.
std::vector<NamedConfig> ablation_configs(const TrainConfig& base);

}  // namespace mae
