#include "mae/losses.hpp"

#include "mae/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mae {

std::string_view to_string(GlobalMode mode) {
  return mode == GlobalMode::Absolute ? "absolute" : "relative";
}

std::string_view to_string(LocalMode mode) {
  switch (mode) {
    case LocalMode::Isometric: return "isometric";
    case LocalMode::Conformal: return "conformal";
    case LocalMode::None: return "none";
  }
  return "none";
}

GlobalMode parse_global_mode(std::string_view text) {
  if (text == "absolute" || text == "abs") return GlobalMode::Absolute;
  if (text == "relative" || text == "rel") return GlobalMode::Relative;
  throw Error(ErrorKind::Validation, "global_mode: expected absolute|relative, got '" + std::string(text) + "'");
}

LocalMode parse_local_mode(std::string_view text) {
  if (text == "isometric" || text == "iso") return LocalMode::Isometric;
  if (text == "conformal" || text == "con") return LocalMode::Conformal;
  if (text == "none") return LocalMode::None;
  throw Error(ErrorKind::Validation,
              "local_mode: expected isometric|conformal|none, got '" + std::string(text) + "'");
}

void LossWeights::validate() const {
  std::string bad;
  auto check = [&](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) bad += (bad.empty() ? "" : ", ") + std::string(name);
  };
  check(lambda_global, "lambda_global");
  check(lambda_local, "lambda_local");
  check(lambda_diag, "lambda_diag");
  if (!bad.empty()) throw Error(ErrorKind::Validation, "weights must be finite and nonnegative: " + bad);
}

double recon_loss(const Matrix& x, const Matrix& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) {
    throw Error(ErrorKind::Shape, "recon_loss: batch shapes differ");
  }
  if (x.rows() == 0) throw Error(ErrorKind::Parameter, "recon_loss: empty batch");
  return (x - x_hat).squaredNorm() / static_cast<double>(x.rows());
}

namespace {

void check_pairs(std::span<const double> dm, std::span<const double> de) {
  if (dm.size() != de.size()) throw Error(ErrorKind::Shape, "global loss: pair lists differ in length");
  if (dm.empty()) throw Error(ErrorKind::Parameter, "global loss: no pairs");
}

}  // namespace

double global_loss_abs(std::span<const double> dm, std::span<const double> de) {
  check_pairs(dm, de);
  double s = 0.0;
  for (std::size_t p = 0; p < dm.size(); ++p) s += (dm[p] - de[p]) * (dm[p] - de[p]);
  return s / static_cast<double>(dm.size());
}

double global_loss_rel(std::span<const double> dm, std::span<const double> de) {
  check_pairs(dm, de);
  double s = 0.0;
  for (std::size_t p = 0; p < dm.size(); ++p) {
    const double r = (dm[p] - de[p]) / std::max(dm[p], kRelativeClamp);
    s += r * r;
  }
  return s / static_cast<double>(dm.size());
}

double global_loss(const Matrix& d_manifold, const Matrix& d_latent, GlobalMode mode) {
  if (d_manifold.rows() != d_latent.rows() || d_manifold.cols() != d_latent.cols() ||
      d_manifold.rows() != d_manifold.cols()) {
    throw Error(ErrorKind::Shape, "global loss: distance matrices must be square and equal-sized");
  }
  std::vector<double> dm;
  std::vector<double> de;
  for (Eigen::Index i = 0; i < d_manifold.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < d_manifold.cols(); ++j) {
      dm.push_back(d_manifold(i, j));
      de.push_back(d_latent(i, j));
    }
  }
  return mode == GlobalMode::Absolute ? global_loss_abs(dm, de) : global_loss_rel(dm, de);
}

double local_iso_loss(std::span<const Matrix> pullbacks) {
  if (pullbacks.empty()) return 0.0;
  double s = 0.0;
  const Eigen::Index l = pullbacks.front().rows();
  for (const Matrix& h : pullbacks) {
    if (h.rows() != l || h.cols() != l) throw Error(ErrorKind::Shape, "local loss: pullbacks must be l x l");
    s += (h - Matrix::Identity(l, l)).squaredNorm();
  }
  return s / static_cast<double>(pullbacks.size());
}

double local_con_loss(std::span<const Matrix> pullbacks, double lambda_diag) {
  if (pullbacks.empty()) return 0.0;
  double s = 0.0;
  const Eigen::Index l = pullbacks.front().rows();
  for (const Matrix& h : pullbacks) {
    if (h.rows() != l || h.cols() != l) throw Error(ErrorKind::Shape, "local loss: pullbacks must be l x l");
    double off = 0.0;
    double diag = 0.0;
    for (Eigen::Index j = 0; j < l; ++j) {
      for (Eigen::Index k = 0; k < l; ++k) {
        if (j == k) continue;
        off += h(j, k) * h(j, k);
        diag += (h(j, j) - h(k, k)) * (h(j, j) - h(k, k));
      }
    }
    s += off + lambda_diag * diag;
  }
  return s / static_cast<double>(pullbacks.size());
}

double effective_lambda_global(const Schedule& schedule, double base, std::size_t epoch) {
  return base * std::exp(-schedule.decay_rate * static_cast<double>(epoch));
}

double effective_lambda_local(const Schedule& schedule, double base, std::size_t epoch) {
  return epoch < schedule.warmup_epochs ? 0.0 : base;
}

double total_loss(const LossComponents& parts, const LossWeights& weights, std::size_t epoch,
                  const Schedule& schedule) {
  if (!std::isfinite(parts.recon)) throw Error(ErrorKind::Numeric, "non-finite loss component: recon");
  if (!std::isfinite(parts.global)) throw Error(ErrorKind::Numeric, "non-finite loss component: global");
  if (!std::isfinite(parts.local)) throw Error(ErrorKind::Numeric, "non-finite loss component: local");
  double total = parts.recon;
  const double lg = effective_lambda_global(schedule, weights.lambda_global, epoch);
  if (lg != 0.0) total += lg * parts.global;
  const double ll = effective_lambda_local(schedule, weights.lambda_local, epoch);
  if (ll != 0.0) total += ll * parts.local;
  return total;
}

namespace tape {

ad::Var recon_loss(ad::Var x, ad::Var x_hat) {
  ad::Var diff = ad::sub(x, x_hat);
  return ad::scale(ad::sum(ad::mul(diff, diff)), 1.0 / static_cast<double>(x.rows()));
}

ad::Var global_loss(ad::Var latent, const Matrix& d_manifold, GlobalMode mode) {
  const Eigen::Index b = latent.rows();
  if (d_manifold.rows() != b || d_manifold.cols() != b) {
    throw Error(ErrorKind::Shape, "global loss: distance block does not match the batch");
  }
  if (b < 2) throw Error(ErrorKind::Parameter, "global loss: batch needs at least two points");
  // Upper-triangle weights fold the pair mask and, for the relative form, 1/dM.
  Matrix weight = Matrix::Zero(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = i + 1; j < b; ++j) {
      weight(i, j) = mode == GlobalMode::Absolute ? 1.0 : 1.0 / std::max(d_manifold(i, j), kRelativeClamp);
    }
  }
  ad::Tape& t = *latent.tape();
  ad::Var residual = ad::mul(ad::sub(ad::pairwise_distance(latent), t.constant(d_manifold)), t.constant(weight));
  const double pairs = static_cast<double>(b) * static_cast<double>(b - 1) / 2.0;
  return ad::scale(ad::sum(ad::mul(residual, residual)), 1.0 / pairs);
}

std::size_t pullback_index(std::size_t j, std::size_t k, std::size_t l) {
  if (j > k) std::swap(j, k);
  return j * l - j * (j + 1) / 2 + k;
}

std::vector<ad::Var> pullback_entries(const std::vector<ad::Var>& rows) {
  if (rows.empty()) throw Error(ErrorKind::Shape, "pullback needs at least one Jacobian row");
  const auto l = static_cast<std::size_t>(rows.front().cols());
  std::vector<std::vector<ad::Var>> cols(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < l; ++j) cols[i].push_back(ad::col(rows[i], static_cast<Eigen::Index>(j)));
  }
  std::vector<ad::Var> h;
  h.reserve(l * (l + 1) / 2);
  for (std::size_t j = 0; j < l; ++j) {
    for (std::size_t k = j; k < l; ++k) {
      ad::Var acc = ad::mul(cols[0][j], cols[0][k]);
      for (std::size_t i = 1; i < rows.size(); ++i) acc = ad::add(acc, ad::mul(cols[i][j], cols[i][k]));
      h.push_back(acc);
    }
  }
  return h;
}

ad::Var local_loss(const std::vector<ad::Var>& rows, LocalMode mode, double lambda_diag) {
  if (mode == LocalMode::None) throw Error(ErrorKind::Parameter, "local loss requested with local_mode none");
  const std::vector<ad::Var> h = pullback_entries(rows);
  const auto l = static_cast<std::size_t>(rows.front().cols());
  const Eigen::Index batch = rows.front().rows();
  std::vector<ad::Var> terms;
  for (std::size_t j = 0; j < l; ++j) {
    for (std::size_t k = j; k < l; ++k) {
      ad::Var e = h[pullback_index(j, k, l)];
      if (j == k) {
        if (mode == LocalMode::Isometric) {
          ad::Var d = ad::affine(e, 1.0, -1.0);
          terms.push_back(ad::mul(d, d));
        }
      } else {
        // H is symmetric, so each off-diagonal pair appears twice.
        terms.push_back(ad::scale(ad::mul(e, e), 2.0));
        if (mode == LocalMode::Conformal) {
          ad::Var d = ad::sub(h[pullback_index(j, j, l)], h[pullback_index(k, k, l)]);
          terms.push_back(ad::scale(ad::mul(d, d), 2.0 * lambda_diag));
        }
      }
    }
  }
  if (terms.empty()) {
    // l == 1 conformal: nothing to constrain.
    return ad::scale(ad::sum(h.front()), 0.0);
  }
  ad::Var acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = ad::add(acc, terms[i]);
  return ad::scale(ad::sum(acc), 1.0 / static_cast<double>(batch));
}

}  // namespace tape

}  // namespace mae
