#include "mae/datasets.hpp"

#include "mae/error.hpp"
#include "mae/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

namespace mae {

void PointCloud::validate() const {
  if (points.rows() < 1) throw Error(ErrorKind::Validation, "point cloud is empty");
  if (!points.allFinite()) throw Error(ErrorKind::Validation, "point cloud has non-finite coordinates");
  if (intrinsic && intrinsic->rows() != points.rows()) {
    throw Error(ErrorKind::Validation, "intrinsic coordinates do not match the point count");
  }
}

std::uint64_t PointCloud::hash() const {
  io::ByteWriter w;
  w.u64(static_cast<std::uint64_t>(points.rows()));
  w.u64(static_cast<std::uint64_t>(points.cols()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) w.f64(points(i, j));
  }
  const std::string& s = w.str();
  return io::fnv1a({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
}

double uniform01(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

std::vector<Hole> default_swiss_roll_holes() {
  const double radius = 0.15 * std::sqrt(2.0);
  return {{1.0 / 3.0, 1.0 / 3.0, radius}, {2.0 / 3.0, 2.0 / 3.0, radius}};
}

PointCloud swiss_roll(std::size_t n_points, const std::vector<Hole>& holes, std::uint64_t seed,
                      const SwissRollBounds& b) {
  if (n_points < 1) throw Error(ErrorKind::Parameter, "swiss_roll needs n_points >= 1");
  if (!(b.t_max > b.t_min) || !(b.h_max > b.h_min)) {
    throw Error(ErrorKind::Parameter, "swiss_roll bounds are empty");
  }
  std::mt19937_64 rng(seed);
  const auto n = static_cast<Eigen::Index>(n_points);
  PointCloud cloud;
  cloud.name = "swiss_roll";
  cloud.points.resize(n, 3);
  cloud.intrinsic = Matrix(n, 2);

  // Per-point rejection budget; exhausting it means the holes leave (almost)
  // nothing of the rectangle.
  constexpr std::size_t kMaxAttempts = 100000;
  for (Eigen::Index i = 0; i < n; ++i) {
    double t = 0.0;
    double h = 0.0;
    std::size_t attempts = 0;
    for (;;) {
      if (attempts++ == kMaxAttempts) {
        throw Error(ErrorKind::GenerationExhausted,
                    "swiss_roll: holes cover the sampling rectangle (no point accepted after " +
                        std::to_string(kMaxAttempts) + " attempts)");
      }
      const double u = uniform01(rng());
      const double v = uniform01(rng());
      t = b.t_min + (b.t_max - b.t_min) * u;
      h = b.h_min + (b.h_max - b.h_min) * v;
      bool inside = false;
      for (const Hole& hole : holes) {
        if (std::hypot(u - hole.u, v - hole.v) < hole.radius) {
          inside = true;
          break;
        }
      }
      if (!inside) break;
    }
    cloud.points.row(i) << t * std::cos(t), h, t * std::sin(t);
    (*cloud.intrinsic)(i, 0) = t;
    (*cloud.intrinsic)(i, 1) = h;
  }
  return cloud;
}

Eigen::RowVector3d toroidal_helix_point(double s, const HelixParams& p) {
  const double w = static_cast<double>(p.windings);
  const double ring = p.major_radius + p.minor_radius * std::cos(w * s);
  return {ring * std::cos(s), ring * std::sin(s), p.minor_radius * std::sin(w * s)};
}

PointCloud toroidal_helix(std::size_t n_points, const HelixParams& p, std::uint64_t seed) {
  if (n_points < 1) throw Error(ErrorKind::Parameter, "toroidal_helix needs n_points >= 1");
  if (!(p.major_radius > 0.0) || !(p.minor_radius > 0.0)) {
    throw Error(ErrorKind::Parameter, "toroidal_helix radii must be positive");
  }
  if (p.windings < 1) throw Error(ErrorKind::Parameter, "toroidal_helix needs windings >= 1");
  std::mt19937_64 rng(seed);
  const auto n = static_cast<Eigen::Index>(n_points);
  PointCloud cloud;
  cloud.name = "toroidal_helix";
  cloud.points.resize(n, 3);
  cloud.intrinsic = Matrix(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    // One draw per stratum [i, i + 1) / n keeps the coverage even.
    const double u = (static_cast<double>(i) + uniform01(rng())) / static_cast<double>(n);
    const double s = 2.0 * std::numbers::pi * u;
    cloud.points.row(i) = toroidal_helix_point(s, p);
    (*cloud.intrinsic)(i, 0) = s;
  }
  return cloud;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

PointCloud load_csv(const std::filesystem::path& path, std::size_t intrinsic_dims) {
  const std::string text = io::read_file(path);
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const std::size_t row_no = rows.size() + 1;
    std::vector<double> row;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = view.find(',', start);
      std::string_view cell = trim(view.substr(start, comma == std::string_view::npos ? view.npos : comma - start));
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw Error(ErrorKind::Parse, path.string() + ": non-numeric cell '" + std::string(cell) +
                                          "' at row " + std::to_string(row_no) + " (line " +
                                          std::to_string(line_no) + ")");
      }
      row.push_back(value);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (rows.empty()) {
      width = row.size();
    } else if (row.size() != width) {
      throw Error(ErrorKind::Parse, path.string() + ": row " + std::to_string(row_no) + " has " +
                                        std::to_string(row.size()) + " columns, expected " +
                                        std::to_string(width));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorKind::Parse, path.string() + ": no data rows");
  if (intrinsic_dims >= width) {
    throw Error(ErrorKind::Parse, path.string() + ": intrinsic_dims leaves no ambient columns");
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto amb = static_cast<Eigen::Index>(width - intrinsic_dims);
  PointCloud cloud;
  cloud.name = path.stem().string();
  cloud.points.resize(n, amb);
  if (intrinsic_dims > 0) cloud.intrinsic = Matrix(n, static_cast<Eigen::Index>(intrinsic_dims));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < amb; ++j) cloud.points(i, j) = row[static_cast<std::size_t>(j)];
    for (std::size_t j = 0; j < intrinsic_dims; ++j) {
      (*cloud.intrinsic)(i, static_cast<Eigen::Index>(j)) = row[static_cast<std::size_t>(amb) + j];
    }
  }
  cloud.validate();
  return cloud;
}

std::string to_csv(const PointCloud& cloud) {
  std::string out = "# " + (cloud.name.empty() ? std::string("points") : cloud.name) + ": " +
                    std::to_string(cloud.dim()) + " ambient";
  if (cloud.intrinsic) out += ", " + std::to_string(cloud.intrinsic->cols()) + " intrinsic";
  out += " columns\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
  };
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    for (Eigen::Index j = 0; j < cloud.dim(); ++j) {
      if (j) out += ',';
      put(cloud.points(i, j));
    }
    if (cloud.intrinsic) {
      for (Eigen::Index j = 0; j < cloud.intrinsic->cols(); ++j) {
        out += ',';
        put((*cloud.intrinsic)(i, j));
      }
    }
    out += '\n';
  }
  return out;
}

void save_csv(const std::filesystem::path& path, const PointCloud& cloud) {
  io::write_atomic(path, to_csv(cloud));
}

NormalizedCloud normalize(const PointCloud& cloud, Normalization mode) {
  cloud.validate();
  NormalizedCloud out;
  out.cloud = cloud;
  out.mean = cloud.points.colwise().mean();
  out.cloud.points.rowwise() -= out.mean;
  if (mode == Normalization::CenterScale) {
    const double rms = std::sqrt(out.cloud.points.squaredNorm() / static_cast<double>(cloud.size()));
    if (rms > 0.0) {
      out.scale = rms;
      out.cloud.points /= rms;
    }
  }
  return out;
}

}  // namespace mae
