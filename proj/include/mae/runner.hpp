#pragma once

// Orchestration behind the command-line tool: run configs, run directories
// and the generate / distances / train / evaluate / ablate commands.

#include "mae/datasets.hpp"
#include "mae/metrics.hpp"
#include "mae/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mae::cli {

namespace fs = std::filesystem;

struct DatasetSpec {
  std::string kind = "swiss-roll";  // swiss-roll | toroidal-helix | csv
  std::size_t n_points = 2000;
  std::uint64_t seed = 1;
  bool holes = true;  // swiss-roll only: default holes or none
  HelixParams helix;
  fs::path csv_path;
  std::size_t intrinsic_dims = 0;
};

/// One training run, parsed from a `key = value` document ('#' comments).
struct RunConfig {
  DatasetSpec dataset;
  Normalization normalization = Normalization::CenterScale;
  TrainConfig train;
  std::size_t k_eval = 10;
  std::vector<double> sigmas = kDefaultSigmas;

  nlohmann::json to_json() const;
};

using Overrides = std::map<std::string, std::string>;

/// Parses and validates; the error lists every offending key. Overrides take
/// precedence over the document. Relative csv paths resolve against `base_dir`.
RunConfig parse_run_config(std::string_view text, const Overrides& overrides = {}, const fs::path& base_dir = {});
RunConfig load_run_config(const fs::path& path, const Overrides& overrides = {});

PointCloud make_dataset(const DatasetSpec& spec);

/// Directory for the geodesic cache: $MAE_CACHE_DIR, else `fallback`.
fs::path cache_directory(const fs::path& fallback);

void cmd_generate(const DatasetSpec& spec, const fs::path& output);

void cmd_distances(const fs::path& input, std::size_t intrinsic_dims, std::size_t k,
                   ShortestPathAlgorithm algorithm, Normalization normalization, const fs::path& output);

/// Generates (or loads) the data, precomputes geodesics, trains and writes
/// config.cfg, dataset.csv, model.maecp, report.json and manifest.json into
/// `run_dir`. Returns the manifest path.
fs::path cmd_train(const fs::path& config_path, const fs::path& run_dir, const Overrides& overrides = {});

/// Writes metrics.json and embedding.csv next to the manifest and returns
/// the metrics document.
nlohmann::json cmd_evaluate(const fs::path& manifest_path);

/// Trains and evaluates the four ablation variants under `out_dir/<variant>`
/// and writes `out_dir/ablation.csv`. Returns the table path.
fs::path cmd_ablate(const fs::path& config_path, const fs::path& out_dir, std::size_t jobs = 1,
                    const Overrides& overrides = {});

/// Overrides that turn a base config into one ablation variant.
Overrides ablation_overrides(const std::string& variant);

}  // namespace mae::cli
