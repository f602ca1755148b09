#include "mae/error.hpp"
#include "mae/trainer.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace mae;
namespace fs = std::filesystem;

namespace {

PointCloud small_roll(std::size_t n = 300, std::uint64_t seed = 1) {
  return normalize(swiss_roll(n, default_swiss_roll_holes(), seed), Normalization::CenterScale).cloud;
}

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 4;
  c.batch_size = 64;
  c.encoder_hidden = {16};
  c.decoder_hidden = {16};
  c.weights.lambda_global = 10.0;
  c.weights.lambda_local = 1.0;
  c.schedule.warmup_epochs = 2;
  c.schedule.decay_rate = 0.1;
  c.seed = 3;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("geodesic precompute requires a connected graph") {
  DistanceMatrix d = precompute_distances(swiss_roll(500, default_swiss_roll_holes(), 1), 10);
  CHECK(d.connected);
  CHECK(d.d.allFinite());

  PointCloud two;
  two.points = Matrix(6, 2);
  two.points << 0, 0, 0.1, 0, 0, 0.1, 50, 50, 50.1, 50, 50, 50.1;
  try {
    precompute_distances(two, 1);
    FAIL("expected connectivity error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Connectivity);
    CHECK(std::string(e.what()).find("2 connected components") != std::string::npos);
  }
}

TEST_CASE("distance cache hits return bit-identical matrices") {
  const fs::path dir = fresh_dir("mae_cache_test");
  PointCloud c = small_roll(200);
  DistanceCache cache(dir);
  DistanceMatrix first = cache.get_or_compute(c, 10);
  CHECK_FALSE(cache.last_was_hit());
  CHECK(fs::exists(cache.path_for(c, 10)));
  DistanceMatrix second = cache.get_or_compute(c, 10);
  CHECK(cache.last_was_hit());
  CHECK(second.d == first.d);
  CHECK(cache.path_for(c, 10) != cache.path_for(c, 11));
  fs::remove_all(dir);
}

TEST_CASE("vanilla autoencoder epoch") {
  PointCloud c = small_roll();
  DistanceMatrix d = precompute_distances(c, 10);
  TrainConfig cfg = small_config();
  cfg.epochs = 1;
  cfg.weights.lambda_global = 0.0;
  cfg.weights.lambda_local = 0.0;
  TrainResult r = train(c, d, cfg);
  REQUIRE(r.report.epochs.size() == 1);
  CHECK(r.report.epochs[0].total == r.report.epochs[0].recon);
  CHECK(r.report.epochs[0].global == 0.0);
  CHECK(r.report.epochs[0].local == 0.0);
}

TEST_CASE("training is deterministic in the seed") {
  PointCloud c = small_roll();
  DistanceMatrix d = precompute_distances(c, 10);
  TrainConfig cfg = small_config();
  TrainResult a = train(c, d, cfg);
  TrainResult b = train(c, d, cfg);
  CHECK(identical(a.model, b.model));
  CHECK(a.report.epochs.size() == cfg.epochs);
  for (std::size_t e = 0; e < cfg.epochs; ++e) CHECK(a.report.epochs[e].total == b.report.epochs[e].total);
  cfg.seed = 4;
  CHECK_FALSE(identical(a.model, train(c, d, cfg).model));
}

TEST_CASE("schedule is followed exactly") {
  PointCloud c = small_roll();
  DistanceMatrix d = precompute_distances(c, 10);
  TrainConfig cfg = small_config();
  cfg.epochs = 5;
  TrainResult r = train(c, d, cfg);
  for (const EpochRecord& e : r.report.epochs) {
    const double expected = cfg.weights.lambda_global * std::exp(-cfg.schedule.decay_rate * static_cast<double>(e.epoch));
    CHECK(std::abs(e.lambda_global_eff - expected) <= 1e-12);
    if (e.epoch < cfg.schedule.warmup_epochs) {
      CHECK(e.lambda_local_eff == 0.0);
      CHECK(e.local == 0.0);
    } else {
      CHECK(e.lambda_local_eff == cfg.weights.lambda_local);
      CHECK(e.local > 0.0);
    }
  }
}

TEST_CASE("checkpoint callback fires on schedule") {
  PointCloud c = small_roll();
  DistanceMatrix d = precompute_distances(c, 10);
  TrainConfig cfg = small_config();
  cfg.checkpoint_every = 2;
  std::vector<std::size_t> seen;
  TrainResult r = train(c, d, cfg, [&](std::size_t epoch, const MlpModel&) { seen.push_back(epoch); });
  CHECK(seen == std::vector<std::size_t>{2, 4});
}

TEST_CASE("divergence keeps the last finite parameters") {
  PointCloud c = small_roll();
  DistanceMatrix d = precompute_distances(c, 10);
  TrainConfig cfg = small_config();
  cfg.weights.global_mode = GlobalMode::Absolute;
  cfg.weights.lambda_global = 1e9;
  try {
    train(c, d, cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.kind() == ErrorKind::Divergence);
    CHECK(e.partial_report().epochs.empty());
    CHECK(identical(e.last_good(), init_model(cfg.shape(3), cfg.seed)));
  }
}

TEST_CASE("config validation names every bad field") {
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 1;
  cfg.learning_rate = -1.0;
  cfg.weights.lambda_global = -2.0;
  try {
    cfg.validate();
    FAIL("expected validation error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(e.kind() == ErrorKind::Validation);
    for (const char* key : {"epochs", "batch_size", "learning_rate", "lambda_global"}) {
      CHECK(msg.find(key) != std::string::npos);
    }
  }
  PointCloud c = small_roll(50);
  DistanceMatrix d = precompute_distances(c, 10);
  TrainConfig wide = small_config();
  wide.latent_dim = 3;
  CHECK_THROWS_AS(train(c, d, wide), Error);
}

TEST_CASE("ablation variants differ only in their weights") {
  TrainConfig base = small_config();
  base.weights.lambda_global = 100.0;
  base.weights.lambda_local = 10.0;
  auto variants = ablation_configs(base);
  REQUIRE(variants.size() == 4);
  CHECK(variants[0].name == "full_iso");
  CHECK(variants[1].name == "full_con");
  CHECK(variants[2].name == "global_only");
  CHECK(variants[3].name == "local_only");
  CHECK(variants[0].config.weights.local_mode == LocalMode::Isometric);
  CHECK(variants[1].config.weights.local_mode == LocalMode::Conformal);
  CHECK(variants[2].config.weights.lambda_local == 0.0);
  CHECK(variants[2].config.weights.lambda_global == 100.0);
  CHECK(variants[3].config.weights.lambda_global == 0.0);
  CHECK(variants[3].config.weights.lambda_local == 10.0);
  for (const auto& v : variants) {
    CHECK(v.config.seed == base.seed);
    CHECK(v.config.learning_rate == base.learning_rate);
    CHECK(v.config.epochs == base.epochs);
  }
}

TEST_CASE("smoothed reconstruction trace does not increase without regularizers") {
  // Statistical sanity check on the default Swiss Roll with all weights zero.
  PointCloud c = small_roll(2000);
  DistanceMatrix d;
  d.d = Matrix::Zero(c.size(), c.size());
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.seed = 1;
  TrainResult r = train(c, d, cfg);
  std::vector<double> smooth;
  for (std::size_t e = 9; e < r.report.epochs.size(); ++e) {
    double s = 0.0;
    for (std::size_t j = e - 9; j <= e; ++j) s += r.report.epochs[j].total;
    smooth.push_back(s / 10.0);
  }
  for (std::size_t i = 1; i < smooth.size(); ++i) CHECK(smooth[i] <= smooth[i - 1]);
}
