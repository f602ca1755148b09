#include "mae/runner.hpp"

#include "mae/error.hpp"
#include "mae/io.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

namespace mae::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument("not a number");
  return out;
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument("not a nonnegative integer");
  return out;
}

std::vector<std::size_t> to_widths(const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<std::size_t>(to_uint(trim(item))));
  return out;
}

std::string widths_text(const std::vector<std::size_t>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dataset", [](RunConfig& c, const std::string& v) {
         if (v != "swiss-roll" && v != "toroidal-helix" && v != "csv") {
           throw std::invalid_argument("expected swiss-roll|toroidal-helix|csv");
         }
         c.dataset.kind = v;
       }},
      {"n_points", [](RunConfig& c, const std::string& v) { c.dataset.n_points = to_uint(v); }},
      {"data_seed", [](RunConfig& c, const std::string& v) { c.dataset.seed = to_uint(v); }},
      {"holes", [](RunConfig& c, const std::string& v) {
         if (v != "default" && v != "none") throw std::invalid_argument("expected default|none");
         c.dataset.holes = v == "default";
       }},
      {"major_radius", [](RunConfig& c, const std::string& v) { c.dataset.helix.major_radius = to_double(v); }},
      {"minor_radius", [](RunConfig& c, const std::string& v) { c.dataset.helix.minor_radius = to_double(v); }},
      {"windings", [](RunConfig& c, const std::string& v) { c.dataset.helix.windings = static_cast<int>(to_uint(v)); }},
      {"data_path", [](RunConfig& c, const std::string& v) { c.dataset.csv_path = v; }},
      {"intrinsic_dims", [](RunConfig& c, const std::string& v) { c.dataset.intrinsic_dims = to_uint(v); }},
      {"normalize", [](RunConfig& c, const std::string& v) {
         if (v == "center") c.normalization = Normalization::Center;
         else if (v == "center_scale") c.normalization = Normalization::CenterScale;
         else throw std::invalid_argument("expected center|center_scale");
       }},
      {"k_neighbors", [](RunConfig& c, const std::string& v) { c.train.k_neighbors = to_uint(v); }},
      {"latent_dim", [](RunConfig& c, const std::string& v) { c.train.latent_dim = to_uint(v); }},
      {"encoder_hidden", [](RunConfig& c, const std::string& v) { c.train.encoder_hidden = to_widths(v); }},
      {"decoder_hidden", [](RunConfig& c, const std::string& v) { c.train.decoder_hidden = to_widths(v); }},
      {"epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = to_uint(v); }},
      {"batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = to_uint(v); }},
      {"learning_rate", [](RunConfig& c, const std::string& v) { c.train.learning_rate = to_double(v); }},
      {"lambda_global", [](RunConfig& c, const std::string& v) { c.train.weights.lambda_global = to_double(v); }},
      {"lambda_local", [](RunConfig& c, const std::string& v) { c.train.weights.lambda_local = to_double(v); }},
      {"lambda_diag", [](RunConfig& c, const std::string& v) { c.train.weights.lambda_diag = to_double(v); }},
      {"global_mode", [](RunConfig& c, const std::string& v) { c.train.weights.global_mode = parse_global_mode(v); }},
      {"local_mode", [](RunConfig& c, const std::string& v) { c.train.weights.local_mode = parse_local_mode(v); }},
      {"warmup_epochs", [](RunConfig& c, const std::string& v) { c.train.schedule.warmup_epochs = to_uint(v); }},
      {"decay_rate", [](RunConfig& c, const std::string& v) { c.train.schedule.decay_rate = to_double(v); }},
      {"seed", [](RunConfig& c, const std::string& v) { c.train.seed = to_uint(v); }},
      {"checkpoint_every", [](RunConfig& c, const std::string& v) { c.train.checkpoint_every = to_uint(v); }},
      {"k_eval", [](RunConfig& c, const std::string& v) { c.k_eval = to_uint(v); }},
  };
  return table;
}

void write_json(const fs::path& path, const nlohmann::json& j) { io::write_atomic(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

struct PreparedData {
  PointCloud raw;
  NormalizedCloud normalized;
};

PreparedData prepare(const RunConfig& config, const fs::path& dataset_csv) {
  PreparedData out;
  out.raw = load_csv(dataset_csv, config.dataset.kind == "csv" ? config.dataset.intrinsic_dims
                                  : config.dataset.kind == "swiss-roll" ? 2 : 1);
  out.normalized = normalize(out.raw, config.normalization);
  return out;
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["dataset"] = dataset.kind;
  j["n_points"] = dataset.n_points;
  j["data_seed"] = dataset.seed;
  if (dataset.kind == "swiss-roll") j["holes"] = dataset.holes ? "default" : "none";
  if (dataset.kind == "toroidal-helix") {
    j["major_radius"] = dataset.helix.major_radius;
    j["minor_radius"] = dataset.helix.minor_radius;
    j["windings"] = dataset.helix.windings;
  }
  if (dataset.kind == "csv") {
    j["data_path"] = dataset.csv_path.string();
    j["intrinsic_dims"] = dataset.intrinsic_dims;
  }
  j["normalize"] = normalization == Normalization::Center ? "center" : "center_scale";
  j["k_neighbors"] = train.k_neighbors;
  j["latent_dim"] = train.latent_dim;
  j["encoder_hidden"] = widths_text(train.encoder_hidden);
  j["decoder_hidden"] = widths_text(train.decoder_hidden);
  j["epochs"] = train.epochs;
  j["batch_size"] = train.batch_size;
  j["learning_rate"] = train.learning_rate;
  j["lambda_global"] = train.weights.lambda_global;
  j["lambda_local"] = train.weights.lambda_local;
  j["lambda_diag"] = train.weights.lambda_diag;
  j["global_mode"] = std::string(to_string(train.weights.global_mode));
  j["local_mode"] = std::string(to_string(train.weights.local_mode));
  j["warmup_epochs"] = train.schedule.warmup_epochs;
  j["decay_rate"] = train.schedule.decay_rate;
  j["seed"] = train.seed;
  j["checkpoint_every"] = train.checkpoint_every;
  j["k_eval"] = k_eval;
  return j;
}

RunConfig parse_run_config(std::string_view text, const Overrides& overrides, const fs::path& base_dir) {
  std::map<std::string, std::string> values;
  std::vector<std::string> problems;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(line_no) + " (expected key = value)");
      continue;
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    std::string value = trim(std::string_view(t).substr(eq + 1));
    if (const auto hash = value.find(" #"); hash != std::string::npos) value = trim(value.substr(0, hash));
    values[key] = value;
  }
  for (const auto& [k, v] : overrides) values[k] = v;

  RunConfig config;
  for (const auto& [key, value] : values) {
    auto it = setters().find(key);
    if (it == setters().end()) {
      problems.push_back(key + " (unknown key)");
      continue;
    }
    try {
      it->second(config, value);
    } catch (const Error&) {
      problems.push_back(key + " (invalid value '" + value + "')");
    } catch (const std::exception& e) {
      problems.push_back(key + " (" + e.what() + ": '" + value + "')");
    }
  }

  auto field = [&](bool bad, const char* what) {
    if (bad) problems.push_back(what);
  };
  const TrainConfig& tc = config.train;
  field(tc.epochs < 1, "epochs (must be >= 1)");
  field(tc.batch_size < 2, "batch_size (must be >= 2)");
  field(!(tc.learning_rate > 0.0) || !std::isfinite(tc.learning_rate), "learning_rate (must be > 0)");
  field(!(tc.weights.lambda_global >= 0.0) || !std::isfinite(tc.weights.lambda_global), "lambda_global (must be >= 0)");
  field(!(tc.weights.lambda_local >= 0.0) || !std::isfinite(tc.weights.lambda_local), "lambda_local (must be >= 0)");
  field(!(tc.weights.lambda_diag >= 0.0) || !std::isfinite(tc.weights.lambda_diag), "lambda_diag (must be >= 0)");
  field(!(tc.schedule.decay_rate >= 0.0) || !std::isfinite(tc.schedule.decay_rate), "decay_rate (must be >= 0)");
  field(tc.k_neighbors < 1, "k_neighbors (must be >= 1)");
  field(tc.latent_dim < 1, "latent_dim (must be >= 1)");
  field(config.k_eval < 1, "k_eval (must be >= 1)");
  field(config.dataset.n_points < 2 && config.dataset.kind != "csv", "n_points (must be >= 2)");
  field(config.dataset.kind == "csv" && config.dataset.csv_path.empty(), "data_path (required for dataset = csv)");
  if (config.dataset.kind == "toroidal-helix") {
    field(!(config.dataset.helix.major_radius > 0.0), "major_radius (must be > 0)");
    field(!(config.dataset.helix.minor_radius > 0.0), "minor_radius (must be > 0)");
    field(config.dataset.helix.windings < 1, "windings (must be >= 1)");
  }
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw Error(ErrorKind::Validation, msg);
  }
  if (config.dataset.kind == "csv" && config.dataset.csv_path.is_relative() && !base_dir.empty()) {
    config.dataset.csv_path = base_dir / config.dataset.csv_path;
  }
  return config;
}

RunConfig load_run_config(const fs::path& path, const Overrides& overrides) {
  return parse_run_config(io::read_file(path), overrides, path.parent_path());
}

PointCloud make_dataset(const DatasetSpec& spec) {
  if (spec.kind == "swiss-roll") {
    return swiss_roll(spec.n_points, spec.holes ? default_swiss_roll_holes() : std::vector<Hole>{}, spec.seed);
  }
  if (spec.kind == "toroidal-helix") return toroidal_helix(spec.n_points, spec.helix, spec.seed);
  if (spec.kind == "csv") return load_csv(spec.csv_path, spec.intrinsic_dims);
  throw Error(ErrorKind::Validation, "dataset (unknown kind '" + spec.kind + "')");
}

fs::path cache_directory(const fs::path& fallback) {
  if (const char* env = std::getenv("MAE_CACHE_DIR"); env != nullptr && *env != '\0') return env;
  return fallback;
}

void cmd_generate(const DatasetSpec& spec, const fs::path& output) { save_csv(output, make_dataset(spec)); }

void cmd_distances(const fs::path& input, std::size_t intrinsic_dims, std::size_t k, ShortestPathAlgorithm algorithm,
                   Normalization normalization, const fs::path& output) {
  const NormalizedCloud data = normalize(load_csv(input, intrinsic_dims), normalization);
  save_distance_matrix(output, precompute_distances(data.cloud, k, algorithm));
}

fs::path cmd_train(const fs::path& config_path, const fs::path& run_dir, const Overrides& overrides) {
  const std::string config_bytes = io::read_file(config_path);
  const RunConfig config = parse_run_config(config_bytes, overrides, config_path.parent_path());
  fs::create_directories(run_dir);

  io::write_atomic(run_dir / "config.cfg", config_bytes);
  PointCloud generated = make_dataset(config.dataset);
  const fs::path dataset_csv = run_dir / "dataset.csv";
  save_csv(dataset_csv, generated);
  const PreparedData data = prepare(config, dataset_csv);

  const fs::path cache_dir = cache_directory(run_dir / "cache");
  DistanceCache cache(cache_dir);
  const DistanceMatrix distances = cache.get_or_compute(data.normalized.cloud, config.train.k_neighbors);
  const fs::path cache_path = cache.path_for(data.normalized.cloud, config.train.k_neighbors);

  nlohmann::json checkpoints = nlohmann::json::array();
  auto on_checkpoint = [&](std::size_t epoch, const MlpModel& model) {
    const std::string name = "checkpoint-" + std::to_string(epoch) + ".maecp";
    save_checkpoint(run_dir / name, model);
    checkpoints.push_back(name);
  };

  nlohmann::json manifest;
  manifest["config_snapshot"] = "config.cfg";
  manifest["overrides"] = overrides;
  manifest["resolved_config"] = config.to_json();
  manifest["dataset"] = "dataset.csv";
  manifest["dataset_hash"] = io::hex64(data.raw.hash());
  manifest["distance_cache"] = fs::absolute(cache_path).string();
  manifest["seed"] = config.train.seed;
  manifest["metrics"] = nullptr;

  TrainResult result;
  try {
    result = train(data.normalized.cloud, distances, config.train, on_checkpoint);
  } catch (const DivergenceError& e) {
    save_checkpoint(run_dir / "model.maecp", e.last_good());
    write_json(run_dir / "report.json", e.partial_report().to_json());
    manifest["checkpoint"] = "model.maecp";
    manifest["checkpoints"] = checkpoints;
    manifest["report"] = "report.json";
    manifest["status"] = "diverged";
    write_json(run_dir / "manifest.json", manifest);
    throw;
  }
  save_checkpoint(run_dir / "model.maecp", result.model);
  write_json(run_dir / "report.json", result.report.to_json());
  manifest["checkpoint"] = "model.maecp";
  manifest["checkpoints"] = checkpoints;
  manifest["report"] = "report.json";
  manifest["status"] = "trained";
  const fs::path manifest_path = run_dir / "manifest.json";
  write_json(manifest_path, manifest);
  return manifest_path;
}

nlohmann::json cmd_evaluate(const fs::path& manifest_path) {
  const fs::path run_dir = manifest_path.parent_path();
  nlohmann::json manifest = read_json(manifest_path);
  Overrides overrides;
  try {
    overrides = manifest.at("overrides").get<Overrides>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, manifest_path.string() + ": " + e.what());
  }
  const fs::path checkpoint = run_dir / manifest.value("checkpoint", "model.maecp");
  if (!fs::exists(checkpoint)) throw Error(ErrorKind::Io, "missing checkpoint: " + checkpoint.string());

  const RunConfig config =
      parse_run_config(io::read_file(run_dir / manifest.value("config_snapshot", "config.cfg")), overrides, run_dir);
  const PreparedData data = prepare(config, run_dir / manifest.value("dataset", "dataset.csv"));
  const MlpModel model = load_checkpoint(checkpoint);

  DistanceMatrix distances;
  const fs::path cache_path = manifest.value("distance_cache", "");
  if (!cache_path.empty() && fs::exists(cache_path)) {
    distances = load_distance_matrix(cache_path);
  } else {
    distances = precompute_distances(data.normalized.cloud, config.train.k_neighbors);
  }

  const MetricsReport report = evaluate(model, data.normalized.cloud, distances, config.k_eval, config.sigmas);
  const nlohmann::json metrics = report.to_json();
  write_json(run_dir / "metrics.json", metrics);

  PointCloud embedding;
  embedding.name = "embedding";
  embedding.points = encode(model, data.normalized.cloud.points);
  embedding.intrinsic = data.raw.intrinsic;
  save_csv(run_dir / "embedding.csv", embedding);

  manifest["metrics"] = "metrics.json";
  manifest["embedding"] = "embedding.csv";
  write_json(manifest_path, manifest);
  return metrics;
}

Overrides ablation_overrides(const std::string& variant) {
  if (variant == "full_iso") return {{"local_mode", "isometric"}};
  if (variant == "full_con") return {{"local_mode", "conformal"}};
  if (variant == "global_only") return {{"lambda_local", "0"}};
  if (variant == "local_only") return {{"lambda_global", "0"}};
  throw Error(ErrorKind::Parameter, "unknown ablation variant: " + variant);
}

fs::path cmd_ablate(const fs::path& config_path, const fs::path& out_dir, std::size_t jobs, const Overrides& overrides) {
  const RunConfig base = load_run_config(config_path, overrides);
  const std::vector<NamedConfig> variants = ablation_configs(base.train);
  fs::create_directories(out_dir);

  std::vector<nlohmann::json> metrics(variants.size());
  std::vector<std::exception_ptr> errors(variants.size());
  auto run_one = [&](std::size_t i) {
    try {
      Overrides o = overrides;
      for (const auto& [k, v] : ablation_overrides(variants[i].name)) o[k] = v;
      const fs::path manifest = cmd_train(config_path, out_dir / variants[i].name, o);
      metrics[i] = cmd_evaluate(manifest);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  jobs = std::max<std::size_t>(1, std::min(jobs, variants.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < variants.size(); ++i) run_one(i);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i = 0;
          {
            std::lock_guard lock(mu);
            if (next == variants.size()) return;
            i = next++;
          }
          run_one(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::string table = "variant,recon,knn,kl_0.01,kl_0.1,kl_1\n";
  char buf[64];
  for (std::size_t i = 0; i < variants.size(); ++i) {
    const auto& m = metrics[i];
    table += variants[i].name;
    for (const char* key : {"recon_mse", "knn_recall", "kl_0.01", "kl_0.1", "kl_1"}) {
      std::snprintf(buf, sizeof(buf), ",%.17g", m.value(key, std::nan("")));
      table += buf;
    }
    table += '\n';
  }
  const fs::path table_path = out_dir / "ablation.csv";
  io::write_atomic(table_path, table);
  return table_path;
}

}  // namespace mae::cli
