// Command-line front end: generate, distances, train, evaluate, ablate.

#include "mae/error.hpp"
#include "mae/runner.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

namespace {

int fail(std::string_view kind, const std::string& message) {
  nlohmann::json err{{"error", std::string(kind)}, {"message", message}};
  std::cerr << err.dump() << "\n";
  return 1;
}

mae::ShortestPathAlgorithm parse_algorithm(const std::string& name) {
  if (name == "auto") return mae::ShortestPathAlgorithm::Auto;
  if (name == "dijkstra") return mae::ShortestPathAlgorithm::Dijkstra;
  if (name == "floyd-warshall") return mae::ShortestPathAlgorithm::FloydWarshall;
  throw mae::Error(mae::ErrorKind::Validation, "algorithm must be auto|dijkstra|floyd-warshall");
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = mae::cli;
  CLI::App app{"Multi-scale geometric autoencoder: datasets, geodesics, training and evaluation"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset as CSV");
  cli::DatasetSpec spec;
  std::string holes = "default";
  std::string gen_out;
  gen->add_option("dataset", spec.kind, "swiss-roll | toroidal-helix")
      ->required()
      ->check(CLI::IsMember({"swiss-roll", "toroidal-helix"}));
  gen->add_option("--n", spec.n_points, "Number of points")->default_val(2000);
  gen->add_option("--seed", spec.seed, "Random seed")->default_val(1);
  gen->add_option("--holes", holes, "default | none (swiss-roll)")->check(CLI::IsMember({"default", "none"}));
  gen->add_option("--major-radius", spec.helix.major_radius, "Torus major radius")->default_val(2.0);
  gen->add_option("--minor-radius", spec.helix.minor_radius, "Torus minor radius")->default_val(1.0);
  gen->add_option("--windings", spec.helix.windings, "Helix windings")->default_val(8);
  gen->add_option("-o,--output", gen_out, "Output CSV")->required();

  // distances
  auto* dist = app.add_subcommand("distances", "Precompute kNN-graph geodesic distances");
  std::string dist_in, dist_out, algorithm = "auto", dist_norm = "center_scale";
  std::size_t dist_k = 10, dist_intrinsic = 0;
  dist->add_option("input", dist_in, "Input CSV")->required();
  dist->add_option("-k,--k-neighbors", dist_k, "Neighbors per point")->default_val(10);
  dist->add_option("--intrinsic-dims", dist_intrinsic, "Trailing intrinsic columns in the CSV")->default_val(0);
  dist->add_option("--algorithm", algorithm, "auto | dijkstra | floyd-warshall")->default_val("auto");
  dist->add_option("--normalize", dist_norm, "center | center_scale")
      ->check(CLI::IsMember({"center", "center_scale"}))
      ->default_val("center_scale");
  dist->add_option("-o,--output", dist_out, "Output .maedm file")->required();

  // train
  auto* tr = app.add_subcommand("train", "Train from a run config");
  std::string train_cfg, train_out, mode;
  std::vector<std::string> sets;
  tr->add_option("config", train_cfg, "Run config (key = value)")->required()->check(CLI::ExistingFile);
  tr->add_option("-o,--out", train_out, "Run directory")->required();
  tr->add_option("--mode", mode, "Local regularizer: isometric | conformal | none")
      ->check(CLI::IsMember({"isometric", "conformal", "none"}));
  tr->add_option("--set", sets, "Override a config key: key=value (repeatable)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Compute metrics and export the embedding of a trained run");
  std::string manifest;
  ev->add_option("manifest", manifest, "manifest.json of a trained run")->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and compare the four ablation variants");
  std::string ab_cfg, ab_out;
  std::size_t jobs = 1;
  std::vector<std::string> ab_sets;
  ab->add_option("config", ab_cfg, "Base run config")->required()->check(CLI::ExistingFile);
  ab->add_option("-o,--out", ab_out, "Output directory")->required();
  ab->add_option("-j,--jobs", jobs, "Variants trained concurrently")->default_val(1);
  ab->add_option("--set", ab_sets, "Override a config key: key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage_error", e.what());
  }

  auto to_overrides = [](const std::vector<std::string>& kv) {
    cli::Overrides o;
    for (const auto& item : kv) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw mae::Error(mae::ErrorKind::Validation, "--set expects key=value, got " + item);
      o[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return o;
  };

  try {
    if (*gen) {
      spec.holes = holes == "default";
      cli::cmd_generate(spec, gen_out);
    } else if (*dist) {
      cli::cmd_distances(dist_in, dist_intrinsic, dist_k, parse_algorithm(algorithm),
                         dist_norm == "center" ? mae::Normalization::Center : mae::Normalization::CenterScale,
                         dist_out);
    } else if (*tr) {
      cli::Overrides o = to_overrides(sets);
      if (!mode.empty()) o["local_mode"] = mode;
      std::cout << cli::cmd_train(train_cfg, train_out, o).string() << "\n";
    } else if (*ev) {
      std::cout << cli::cmd_evaluate(manifest).dump(2) << "\n";
    } else if (*ab) {
      const auto table = cli::cmd_ablate(ab_cfg, ab_out, jobs, to_overrides(ab_sets));
      std::cout << table.string() << "\n";
    }
  } catch (const mae::Error& e) {
    return fail(mae::to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return fail("internal_error", e.what());
  }
  return 0;
}
