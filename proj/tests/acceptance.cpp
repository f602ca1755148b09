// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.
//
//   mae_acceptance --configs <dir> --work <dir>

#include "mae/error.hpp"
#include "mae/io.hpp"
#include "mae/runner.hpp"
#include "support.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

using namespace mae;
namespace fs = std::filesystem;
using mae::testing::finite_difference;
using mae::testing::pairwise;
using mae::testing::random_matrix;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

struct Run {
  fs::path dir;
  nlohmann::json metrics;
  std::string metrics_bytes;
};

Run train_and_evaluate(const fs::path& config, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::remove_all(dir);
  Run r;
  r.dir = dir;
  r.metrics = cli::cmd_evaluate(cli::cmd_train(config, dir));
  r.metrics_bytes = io::read_file(dir / "metrics.json");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("  trained %s in %.0f s: %s\n", config.filename().string().c_str(), secs, r.metrics.dump().c_str());
  std::fflush(stdout);
  return r;
}

double knn(const Run& r) { return r.metrics.at("knn_recall").get<double>(); }

// 1. Swiss Roll reproduction.
Outcome swiss_roll(const Run& r) {
  const double k = knn(r);
  const double mse = r.metrics.at("recon_mse").get<double>();
  return {k >= 0.90 && mse <= 1e-2, fmt("knn_recall=%.4f (>= 0.90), recon_mse=%.3e (<= 1e-2)", k, mse)};
}

// 2. Toroidal helix: recall and a closed latent loop.
Outcome helix(const Run& r) {
  const PointCloud emb = load_csv(r.dir / "embedding.csv", 1);
  const Eigen::RowVectorXd c = emb.points.colwise().mean();
  std::vector<double> angle;
  for (Eigen::Index i = 0; i < emb.size(); ++i) {
    angle.push_back(std::atan2(emb.points(i, 1) - c(1), emb.points(i, 0) - c(0)));
  }
  std::sort(angle.begin(), angle.end());
  std::vector<double> gaps;
  for (std::size_t i = 1; i < angle.size(); ++i) gaps.push_back(angle[i] - angle[i - 1]);
  gaps.push_back(angle.front() + 2.0 * std::numbers::pi - angle.back());
  const double max_gap = *std::max_element(gaps.begin(), gaps.end());
  std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
  const double median = gaps[gaps.size() / 2];
  const double k = knn(r);
  return {k >= 0.85 && max_gap < 5.0 * median,
          fmt("knn_recall=%.4f (>= 0.85), max angular gap=%.3e < 5 x median %.3e (ratio %.2f)", k, max_gap, median,
              max_gap / median)};
}

// 3. Ablation ordering.
Outcome ablation(const Run& full, const Run& global_only, const Run& local_only) {
  const double a = knn(full);
  const double b = knn(global_only);
  const double c = knn(local_only);
  return {a > b && b > c && a - c >= 0.2,
          fmt("knn full=%.4f > global-only=%.4f > local-only=%.4f, full-local=%.4f (>= 0.2)", a, b, c, a - c)};
}

// Plain evaluation of one loss term for FD.
enum class Term { Recon, GlobalAbs, GlobalRel, LocalIso, LocalCon };
constexpr double kDiag = 0.3;

double term_value(const MlpModel& m, const Matrix& x, const Matrix& dm, Term term) {
  const Matrix z = encode(m, x);
  switch (term) {
    case Term::Recon: return recon_loss(x, decode(m, z));
    case Term::GlobalAbs: return global_loss(dm, pairwise(z), GlobalMode::Absolute);
    case Term::GlobalRel: return global_loss(dm, pairwise(z), GlobalMode::Relative);
    case Term::LocalIso:
    case Term::LocalCon: {
      std::vector<Matrix> hs;
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        hs.push_back(gram(mae::testing::naive_decoder_jacobian(m, z.row(i))));
      }
      return term == Term::LocalIso ? local_iso_loss(hs) : local_con_loss(hs, kDiag);
    }
  }
  return 0.0;
}

ad::Var term_var(const ModelVars& vars, ad::Var x, const Matrix& dm, Term term) {
  ad::Var z = encode(vars, x);
  ad::Var x_hat = decode(vars, z);
  switch (term) {
    case Term::Recon: return tape::recon_loss(x, x_hat);
    case Term::GlobalAbs: return tape::global_loss(z, dm, GlobalMode::Absolute);
    case Term::GlobalRel: return tape::global_loss(z, dm, GlobalMode::Relative);
    case Term::LocalIso:
      return tape::local_loss(ad::jacobian_rows(*x.tape(), x_hat, z, true), LocalMode::Isometric, kDiag);
    case Term::LocalCon:
      return tape::local_loss(ad::jacobian_rows(*x.tape(), x_hat, z, true), LocalMode::Conformal, kDiag);
  }
  throw Error(ErrorKind::Parameter, "unknown term");
}

// 4. Every loss gradient against central differences.
Outcome gradients() {
  const std::pair<Term, const char*> terms[] = {{Term::Recon, "recon"},
                                                {Term::GlobalAbs, "global_abs"},
                                                {Term::GlobalRel, "global_rel"},
                                                {Term::LocalIso, "local_iso"},
                                                {Term::LocalCon, "local_con"}};
  double worst = 0.0;
  std::string worst_at = "-";
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    MlpModel m = mae::testing::random_model(1000 + seed, 3, 2, 8);
    std::mt19937_64 rng(seed);
    const Matrix x = random_matrix(rng, 6, 3);
    const Matrix dm = pairwise(random_matrix(rng, 6, 3));
    for (const auto& [term, name] : terms) {
      ad::Tape t;
      ModelVars vars = bind(t, m, true);
      ad::Var loss = term_var(vars, t.constant(x), dm, term);
      ad::BackwardOptions opts;
      opts.wrt = vars.all();
      ad::Gradients g = t.backward(loss, Matrix::Ones(1, 1), opts);
      double num = 0.0;
      double den = 0.0;
      const auto params = m.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix fd = finite_difference(*params[i], [&] { return term_value(m, x, dm, term); });
        num += (g.value(opts.wrt[i]) - fd).squaredNorm();
        den += fd.squaredNorm();
      }
      const double rel = std::sqrt(num) / std::max(std::sqrt(den), 1e-8);
      if (rel > worst) {
        worst = rel;
        worst_at = std::string(name) + " seed " + std::to_string(seed);
      }
    }
  }
  return {worst < 1e-3, fmt("20 models x 5 terms, worst relative error %.2e (< 1e-3) at %s", worst, worst_at.c_str())};
}

// 5. Pullback exactness.
Outcome pullback() {
  double worst_linear = 0.0;
  double worst_mlp = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, 3, 2));
    const Matrix q = qr.householderQ() * Matrix::Identity(3, 2);
    MlpModel lin = mae::testing::random_model(seed, 3, 2, 4);
    lin.decoder = {DenseLayer{q.transpose(), random_matrix(rng, 1, 3)}};
    const Eigen::RowVectorXd z = random_matrix(rng, 1, 2);
    worst_linear = std::max(worst_linear, (decoder_pullback(lin, z) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff());

    MlpModel m = mae::testing::random_model(seed, 3, 2, 16);
    const Matrix fd = gram(mae::testing::fd_decoder_jacobian(m, z));
    worst_mlp = std::max(worst_mlp, (decoder_pullback(m, z) - fd).cwiseAbs().maxCoeff());
  }
  return {worst_linear <= 1e-10 && worst_mlp <= 1e-4,
          fmt("orthonormal linear |H - I|max=%.2e (<= 1e-10), random MLP |H - H_fd|max=%.2e (<= 1e-4)", worst_linear,
              worst_mlp)};
}

// 6. Shortest-path oracles.
Outcome shortest_paths() {
  std::mt19937_64 rng(6);
  double worst = 0.0;
  bool inf_match = true;
  std::uniform_int_distribution<std::size_t> size(2, 200);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = trial == 0 ? 200 : size(rng);
    KnnGraph g;
    g.adjacency.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (coin(rng) < 5.0 / static_cast<double>(n)) g.add_edge(i, j, 1e-3 + coin(rng));
      }
    }
    const Matrix a = dijkstra_all_pairs(g).d;
    const Matrix b = floyd_warshall(g).d;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        if (std::isinf(a(i, j)) || std::isinf(b(i, j))) {
          inf_match = inf_match && a(i, j) == b(i, j);
        } else {
          worst = std::max(worst, std::abs(a(i, j) - b(i, j)));
        }
      }
    }
  }
  int exact = 0;
  const int small_graphs = 100;
  for (int trial = 0; trial < small_graphs; ++trial) {
    KnnGraph g = mae::testing::random_weighted_graph(rng, 2 + static_cast<std::size_t>(trial % 7), 0.2 + 0.6 * coin(rng));
    const Matrix oracle = mae::testing::brute_force_paths(g);
    if (dijkstra_all_pairs(g).d == oracle && floyd_warshall(g).d == oracle) ++exact;
  }
  return {worst <= 1e-9 && inf_match && exact == small_graphs,
          fmt("50 graphs <= 200 nodes max |Dijkstra - FW|=%.2e (<= 1e-9); %d/%d graphs <= 8 nodes exact", worst, exact,
              small_graphs)};
}

// 7. Loss zero points.
Outcome zero_points() {
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    // Latents that are a rigid motion of flat data.
    const Matrix z = random_matrix(rng, 15, 2);
    const double a = 0.3 * trial;
    Matrix rot(2, 2);
    rot << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    Matrix moved = z * rot.transpose();
    moved.rowwise() += Eigen::RowVector2d(1.0, -3.0);
    worst = std::max(worst, global_loss(pairwise(z), pairwise(moved), GlobalMode::Relative));
    worst = std::max(worst, local_iso_loss(std::vector<Matrix>{Matrix::Identity(2, 2), Matrix::Identity(2, 2)}));
    const double c = 0.1 + trial;
    worst = std::max(worst, local_con_loss(std::vector<Matrix>{c * Matrix::Identity(3, 3)}, 1.0));
  }
  // Only H = I zeroes the isometric loss.
  double smallest_off = 1.0;
  for (int trial = 0; trial < 20; ++trial) {
    Matrix p = 1e-3 * random_matrix(rng, 2, 2);
    smallest_off = std::min(smallest_off, local_iso_loss(std::vector<Matrix>{Matrix::Identity(2, 2) + p + p.transpose()}));
  }
  return {worst <= 1e-10 && smallest_off > 0.0,
          fmt("max loss at zero points %.2e (<= 1e-10); perturbed H gives iso loss >= %.2e > 0", worst, smallest_off)};
}

// 8. Metric properties.
Outcome metric_properties() {
  std::mt19937_64 rng(8);
  double min_kl = 0.0;
  bool self_zero = true;
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix a = pairwise(random_matrix(rng, 20, 3));
    const Matrix b = pairwise(random_matrix(rng, 20, 2));
    for (double s : kDefaultSigmas) {
      min_kl = std::min(min_kl, kl_sigma(a, b, s));
      self_zero = self_zero && kl_sigma(a, a, s) == 0.0;
    }
  }
  bool invariant = true;
  for (int trial = 0; trial < 10; ++trial) {
    DistanceMatrix d;
    d.d = pairwise(random_matrix(rng, 100, 3));
    const Matrix z = random_matrix(rng, 100, 2);
    const double base = knn_recall(d, z, 10);
    Matrix rot(2, 2);
    const double a = 0.7 * (trial + 1);
    rot << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    invariant = invariant && knn_recall(d, z * rot.transpose(), 10) == base && knn_recall(d, 2.5 * z, 10) == base;
  }
  // N = 5 against an exhaustive oracle.
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(rng, 5, 3);
    const Matrix z = random_matrix(rng, 5, 2);
    DistanceMatrix d;
    d.d = pairwise(x);
    const Matrix dz = pairwise(z);
    for (std::size_t k = 1; k < 5; ++k) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < 5; ++i) {
        auto rank = [&](const Matrix& m) {
          std::vector<std::pair<double, Eigen::Index>> v;
          for (Eigen::Index j = 0; j < 5; ++j) {
            if (j != i) v.emplace_back(m(i, j), j);
          }
          std::sort(v.begin(), v.end());
          std::vector<Eigen::Index> out;
          for (std::size_t r = 0; r < k; ++r) out.push_back(v[r].second);
          return out;
        };
        const auto p = rank(d.d);
        const auto q = rank(dz);
        for (auto j : p) total += static_cast<double>(std::count(q.begin(), q.end(), j));
      }
      worst = std::max(worst, std::abs(knn_recall(d, z, k) - total / (5.0 * static_cast<double>(k))));
    }
    for (double s : kDefaultSigmas) {
      auto density = [&](const Matrix& m) {
        const double mx = m.maxCoeff();
        std::vector<double> p(5, 0.0);
        double sum = 0.0;
        for (int i = 0; i < 5; ++i) {
          for (int j = 0; j < 5; ++j) p[i] += std::exp(-std::pow(m(i, j) / mx, 2) / s);
          sum += p[i];
        }
        for (double& v : p) v /= sum;
        return p;
      };
      const auto p = density(d.d);
      const auto q = density(dz);
      double kl = 0.0;
      for (int i = 0; i < 5; ++i) kl += p[i] * std::log(p[i] / q[i]);
      worst = std::max(worst, std::abs(kl_sigma(d.d, dz, s) - kl));
    }
  }
  return {min_kl >= -1e-12 && self_zero && invariant && worst <= 1e-12,
          fmt("min KL=%.2e (>= -1e-12), KL(d,d)==0: %s, recall invariant: %s, N=5 oracle error %.2e (<= 1e-12)",
              min_kl, self_zero ? "yes" : "no", invariant ? "yes" : "no", worst)};
}

// 9. Schedule conformance on the reference run's report.
Outcome schedule(const Run& r) {
  const nlohmann::json report = nlohmann::json::parse(io::read_file(r.dir / "report.json"));
  const nlohmann::json cfg = nlohmann::json::parse(io::read_file(r.dir / "manifest.json")).at("resolved_config");
  const double base = cfg.at("lambda_global").get<double>();
  const double alpha = cfg.at("decay_rate").get<double>();
  const auto warmup = cfg.at("warmup_epochs").get<std::size_t>();
  double worst = 0.0;
  bool warm_zero = true;
  std::size_t checked = 0;
  for (const auto& e : report.at("epochs")) {
    const auto epoch = e.at("epoch").get<std::size_t>();
    worst = std::max(worst, std::abs(e.at("lambda_global_eff").get<double>() -
                                     base * std::exp(-alpha * static_cast<double>(epoch))));
    if (epoch < warmup) {
      ++checked;
      warm_zero = warm_zero && e.at("lambda_local_eff").get<double>() == 0.0 && e.at("local").get<double>() == 0.0;
    }
  }
  return {worst <= 1e-12 && warm_zero && warmup == 120 && checked == warmup,
          fmt("max |lambda_global_eff - base exp(-a e)|=%.2e (<= 1e-12); local term 0 in all %zu warm-up epochs: %s",
              worst, checked, warm_zero ? "yes" : "no")};
}

// 10. Determinism.
Outcome determinism(const Run& a, const Run& b) {
  const bool same = a.metrics_bytes == b.metrics_bytes;
  return {same, fmt("metrics.json of two seeded runs byte-identical: %s (%zu bytes)", same ? "yes" : "no",
                    a.metrics_bytes.size())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  fs::path configs;
  fs::path work;
  app.add_option("--configs", configs, "directory of bundled configs")->required();
  app.add_option("--work", work, "scratch directory for runs")->required();
  CLI11_PARSE(app, argc, argv);

  std::vector<std::pair<std::string, Outcome>> results;
  auto record = [&](const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s [%s] %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    results.emplace_back(name, o);
  };

  record("4 gradients", gradients);
  record("5 pullback", pullback);
  record("6 shortest paths", shortest_paths);
  record("7 loss zero points", zero_points);
  record("8 metric properties", metric_properties);

  fs::create_directories(work);
  Run iso_a;
  Run iso_b;
  Run global_only;
  Run local_only;
  Run helix_run;
  bool trained = true;
  try {
    iso_a = train_and_evaluate(configs / "swiss_roll_mae_iso.cfg", work / "swiss_roll_mae_iso.a");
    iso_b = train_and_evaluate(configs / "swiss_roll_mae_iso.cfg", work / "swiss_roll_mae_iso.b");
    global_only = train_and_evaluate(configs / "swiss_roll_global_only.cfg", work / "swiss_roll_global_only");
    local_only = train_and_evaluate(configs / "swiss_roll_local_isometric.cfg", work / "swiss_roll_local_isometric");
    helix_run = train_and_evaluate(configs / "toroidal_helix_mae_iso.cfg", work / "toroidal_helix_mae_iso");
  } catch (const std::exception& e) {
    std::printf("training failed: %s\n", e.what());
    trained = false;
  }
  auto needs_runs = [&](std::function<Outcome()> fn) {
    return [=]() -> Outcome {
      if (!trained) return {false, "reference runs did not complete"};
      return fn();
    };
  };
  record("1 swiss roll", needs_runs([&] { return swiss_roll(iso_a); }));
  record("2 toroidal helix", needs_runs([&] { return helix(helix_run); }));
  record("3 ablation ordering", needs_runs([&] { return ablation(iso_a, global_only, local_only); }));
  record("9 schedule", needs_runs([&] { return schedule(iso_a); }));
  record("10 determinism", needs_runs([&] { return determinism(iso_a, iso_b); }));

  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) {
    return std::stoi(a.first) < std::stoi(b.first);
  });
  std::size_t passed = 0;
  std::printf("\nsummary\n");
  for (const auto& [name, o] : results) {
    std::printf("  %s %s\n", o.pass ? "PASS" : "FAIL", name.c_str());
    passed += o.pass ? 1 : 0;
  }
  std::printf("%zu/%zu criteria passed\n", passed, results.size());
  return passed == results.size() ? 0 : 1;
}
