#include "mae/trainer.hpp"

#include "mae/io.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace mae {

void TrainConfig::validate() const {
  std::vector<std::string> bad;
  if (epochs < 1) bad.push_back("epochs (must be >= 1)");
  if (batch_size < 2) bad.push_back("batch_size (must be >= 2)");
  if (!std::isfinite(learning_rate) || learning_rate <= 0.0) bad.push_back("learning_rate (must be > 0)");
  auto weight = [&](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) bad.push_back(std::string(name) + " (must be finite and >= 0)");
  };
  weight(weights.lambda_global, "lambda_global");
  weight(weights.lambda_local, "lambda_local");
  weight(weights.lambda_diag, "lambda_diag");
  if (!std::isfinite(schedule.decay_rate) || schedule.decay_rate < 0.0) bad.push_back("decay_rate (must be >= 0)");
  if (k_neighbors < 1) bad.push_back("k_neighbors (must be >= 1)");
  if (latent_dim < 1) bad.push_back("latent_dim (must be >= 1)");
  for (std::size_t w : encoder_hidden) if (w == 0) bad.push_back("encoder_hidden (widths must be > 0)");
  for (std::size_t w : decoder_hidden) if (w == 0) bad.push_back("decoder_hidden (widths must be > 0)");
  if (bad.empty()) return;
  std::string msg = "invalid config:";
  for (const auto& b : bad) msg += " " + b + ";";
  throw Error(ErrorKind::Validation, msg);
}

ModelShape TrainConfig::shape(std::size_t ambient_dim) const {
  ModelShape s;
  s.ambient_dim = ambient_dim;
  s.latent_dim = latent_dim;
  s.encoder_hidden = encoder_hidden;
  s.decoder_hidden = decoder_hidden;
  return s;
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const EpochRecord& r : epochs) {
    rows.push_back({{"epoch", r.epoch},
                    {"recon", r.recon},
                    {"global", r.global},
                    {"local", r.local},
                    {"total", r.total},
                    {"lambda_global_eff", r.lambda_global_eff},
                    {"lambda_local_eff", r.lambda_local_eff}});
  }
  return {{"epochs", rows}, {"wall_seconds", wall_seconds}};
}

DistanceMatrix precompute_distances(const PointCloud& points, std::size_t k, ShortestPathAlgorithm algorithm) {
  points.validate();
  KnnGraph graph = build_knn_graph(points, k);
  const std::size_t components = connected_components(graph);
  if (components != 1) {
    throw Error(ErrorKind::Connectivity, "kNN graph with k=" + std::to_string(k) + " has " +
                                             std::to_string(components) +
                                             " connected components; increase k_neighbors");
  }
  return all_pairs_shortest_paths(graph, algorithm);
}

std::filesystem::path DistanceCache::path_for(const PointCloud& points, std::size_t k) const {
  return dir_ / ("geodesic-" + io::hex64(points.hash()) + "-k" + std::to_string(k) + ".maedm");
}

DistanceMatrix DistanceCache::get_or_compute(const PointCloud& points, std::size_t k) {
  const auto path = path_for(points, k);
  if (std::filesystem::exists(path)) {
    DistanceMatrix dm = load_distance_matrix(path);
    if (dm.size() == points.size()) {
      last_hit_ = true;
      return dm;
    }
  }
  last_hit_ = false;
  DistanceMatrix dm = precompute_distances(points, k);
  save_distance_matrix(path, dm);
  return dm;
}

BatchObjective build_objective(const ModelVars& vars, ad::Var batch, const Matrix& d_block,
                               const LossWeights& weights, double lambda_global, double lambda_local) {
  ad::Tape& tape = *batch.tape();
  BatchObjective obj;
  ad::Var z = encode(vars, batch);
  ad::Var x_hat = decode(vars, z);
  obj.recon = tape::recon_loss(batch, x_hat);
  obj.total = obj.recon;
  if (lambda_global != 0.0) {
    obj.global = tape::global_loss(z, d_block, weights.global_mode);
    obj.total = ad::add(obj.total, ad::scale(*obj.global, lambda_global));
  }
  if (lambda_local != 0.0 && weights.local_mode != LocalMode::None) {
    // Decoder Jacobian at E(x_i), evaluated on its own subgraph so that the
    // reverse passes only traverse the decoder.
    std::vector<ad::Var> rows = ad::jacobian_rows(tape, x_hat, z, true);
    obj.local = tape::local_loss(rows, weights.local_mode, weights.lambda_diag);
    obj.total = ad::add(obj.total, ad::scale(*obj.local, lambda_local));
  }
  return obj;
}

void Adam::step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  if (params.size() != grads.size()) throw Error(ErrorKind::Shape, "Adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const Matrix* p : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grads[i];
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grads[i].cwiseProduct(grads[i]);
    params[i]->array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + kEps);
  }
}

namespace {

std::size_t uniform_below(std::mt19937_64& rng, std::size_t n) {
  // Rejection keeps the draw unbiased and platform-independent.
  const std::uint64_t range = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t r = 0;
  do {
    r = rng();
  } while (r >= limit);
  return static_cast<std::size_t>(r % range);
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t>& order, std::size_t batch_size,
                                                   std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_below(rng, i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  // A trailing singleton has no pairs for the global loss; fold it back.
  if (batches.size() > 1 && batches.back().size() < 2) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

}  // namespace

TrainResult train(const PointCloud& points, const DistanceMatrix& distances, const TrainConfig& config,
                  const CheckpointFn& on_checkpoint) {
  config.validate();
  points.validate();
  const Eigen::Index n = points.size();
  if (n < 2) throw Error(ErrorKind::Validation, "training needs at least two points");
  if (distances.size() != n) throw Error(ErrorKind::Shape, "distance matrix does not match the point count");
  if (!distances.connected) {
    throw Error(ErrorKind::Connectivity, "distance matrix has disconnected pairs; increase k_neighbors");
  }
  if (config.latent_dim >= static_cast<std::size_t>(points.dim())) {
    throw Error(ErrorKind::Validation, "latent_dim (must be smaller than the ambient dimension)");
  }

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result{init_model(config.shape(static_cast<std::size_t>(points.dim())), config.seed), {}};
  MlpModel& model = result.model;
  MlpModel last_good = model;
  Adam adam(config.learning_rate);
  // Shuffling draws from a stream separate from the initialization.
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lg = effective_lambda_global(config.schedule, config.weights.lambda_global, epoch);
    const double ll = config.weights.local_mode == LocalMode::None
                          ? 0.0
                          : effective_lambda_local(config.schedule, config.weights.lambda_local, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lambda_global_eff = lg;
    rec.lambda_local_eff = ll;

    const auto batches = make_batches(order, config.batch_size, rng);
    for (const auto& idx : batches) {
      const auto b = static_cast<Eigen::Index>(idx.size());
      Matrix x(b, points.dim());
      Matrix d_block(b, b);
      for (Eigen::Index i = 0; i < b; ++i) {
        x.row(i) = points.points.row(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]));
        for (Eigen::Index j = 0; j < b; ++j) {
          d_block(i, j) = distances.d(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(i)]),
                                      static_cast<Eigen::Index>(idx[static_cast<std::size_t>(j)]));
        }
      }

      ad::Tape tape;
      ModelVars vars = bind(tape, model, true);
      ad::Var xv = tape.constant(std::move(x));
      BatchObjective obj = build_objective(vars, xv, d_block, config.weights, lg, ll);
      const double total = obj.total.value()(0, 0);
      if (!std::isfinite(total) || total > kDivergenceThreshold) {
        result.report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        throw DivergenceError("objective diverged at epoch " + std::to_string(epoch) + " (total=" +
                                  std::to_string(total) + ")",
                              last_good, result.report);
      }
      rec.recon += obj.recon.value()(0, 0);
      if (obj.global) rec.global += obj.global->value()(0, 0);
      if (obj.local) rec.local += obj.local->value()(0, 0);
      rec.total += total;

      const std::vector<ad::Var> leaves = vars.all();
      ad::BackwardOptions opts;
      opts.wrt = leaves;
      ad::Gradients g = tape.backward(obj.total, Matrix::Ones(1, 1), opts);
      std::vector<Matrix> grads;
      grads.reserve(leaves.size());
      for (ad::Var leaf : leaves) grads.push_back(g.value(leaf));
      adam.step(model.parameters(), grads);
    }
    const double nb = static_cast<double>(batches.size());
    rec.recon /= nb;
    rec.global /= nb;
    rec.local /= nb;
    rec.total /= nb;
    result.report.epochs.push_back(rec);
    last_good = model;
    if (on_checkpoint && config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
      on_checkpoint(epoch + 1, model);
    }
  }
  result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::vector<NamedConfig> ablation_configs(const TrainConfig& base) {
  base.validate();
  std::vector<NamedConfig> out;
  TrainConfig iso = base;
  iso.weights.local_mode = LocalMode::Isometric;
  TrainConfig con = base;
  con.weights.local_mode = LocalMode::Conformal;
  TrainConfig global_only = base;
  global_only.weights.lambda_local = 0.0;
  TrainConfig local_only = base;
  local_only.weights.lambda_global = 0.0;
  out.push_back({"full_iso", iso});
  out.push_back({"full_con", con});
  out.push_back({"global_only", global_only});
  out.push_back({"local_only", local_only});
  return out;
}

}  // namespace mae
