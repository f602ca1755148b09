#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mae {

using Matrix = Eigen::MatrixXd;

/// N points in R^n, one per row, with optional ground-truth manifold
/// parameters (N x m) kept for coloring and validation.
struct PointCloud {
  Matrix points;
  std::optional<Matrix> intrinsic;
  std::string name;

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
  /// Throws a validation error when finiteness or row counts are violated.
  void validate() const;
  /// Digest of the ambient coordinates.
  std::uint64_t hash() const;
};

/// Disk removed from the sampling rectangle. Center and radius are in
/// normalized intrinsic coordinates: the (t, h) rectangle mapped to [0, 1]^2.
struct Hole {
  double u = 0.0;
  double v = 0.0;
  double radius = 0.0;
};

struct SwissRollBounds {
  double t_min = 1.5 * 3.14159265358979323846;
  double t_max = 4.5 * 3.14159265358979323846;
  double h_min = 0.0;
  double h_max = 21.0;
};

/// Two disks of radius 0.15 x the normalized diagonal, centered at (1/3, 1/3)
/// and (2/3, 2/3).
std::vector<Hole> default_swiss_roll_holes();

/// Swiss roll (t cos t, h, t sin t) with (t, h) uniform on the bounds
/// rectangle, rejecting samples that fall inside any hole.
PointCloud swiss_roll(std::size_t n_points, const std::vector<Hole>& holes, std::uint64_t seed,
                      const SwissRollBounds& bounds = {});

struct HelixParams {
  double major_radius = 2.0;
  double minor_radius = 1.0;
  int windings = 8;
};

/// Helix that winds `windings` times around a torus while circling it once.
/// Intrinsic coordinate is the angle s in [0, 2 pi), drawn by stratified
/// uniform sampling: point i is uniform on [i, i + 1) * 2 pi / n.
PointCloud toroidal_helix(std::size_t n_points, const HelixParams& params, std::uint64_t seed);
Eigen::RowVector3d toroidal_helix_point(double s, const HelixParams& params);

/// Comma-separated rows; '#' lines are comments. With `intrinsic_dims` > 0 the
/// trailing columns become the intrinsic coordinates.
PointCloud load_csv(const std::filesystem::path& path, std::size_t intrinsic_dims = 0);
std::string to_csv(const PointCloud& cloud);
void save_csv(const std::filesystem::path& path, const PointCloud& cloud);

enum class Normalization { Center, CenterScale };

struct NormalizedCloud {
  PointCloud cloud;
  Eigen::RowVectorXd mean;
  double scale = 1.0;  // points were divided by this
};

/// Subtracts the per-coordinate mean. CenterScale additionally divides every
/// coordinate by one common factor (the RMS norm of the centered points), so
/// all pairwise distances shrink by the same ratio.
NormalizedCloud normalize(const PointCloud& cloud, Normalization mode);

/// Uniform double in [0, 1) with 53 random bits.
double uniform01(std::uint64_t bits);

}  // namespace mae
