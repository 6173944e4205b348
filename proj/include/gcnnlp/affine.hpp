#pragma once

#include "gcnnlp/mesh.hpp"
#include "gcnnlp/surfaces.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>

namespace gcnnlp::affine {

struct AffineTransform {
  Eigen::Matrix3d linear = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return linear * p + translation; }
  std::vector<Vec3> apply(std::span<const Vec3> points) const;
  bool finite() const { return linear.allFinite() && translation.allFinite(); }
};

/// Normal equations of the homogeneous least-squares problem
/// min sum |A s + t - target|^2, accumulated pair by pair in call order.
class AffineAccumulator {
 public:
  void add(std::span<const Vec3> source, std::span<const Vec3> target);
  std::size_t count() const { return count_; }
  /// Throws ValidationError for fewer than 4 points or a rank-deficient
  /// (coplanar) source set.
  AffineTransform solve() const;

 private:
  Eigen::Matrix4d gram_ = Eigen::Matrix4d::Zero();
  Eigen::Matrix<double, 4, 3> cross_ = Eigen::Matrix<double, 4, 3>::Zero();
  std::size_t count_ = 0;
};

AffineTransform fit_affine(std::span<const Vec3> source, std::span<const Vec3> target);

/// Population transforms per transition (0: month 1 to 3, 1: month 3 to 6)
/// and per surface (0 inner, 1 outer).
struct AffineGrowthModel {
  std::array<std::array<AffineTransform, 2>, 2> transitions;
};

/// 1->3 is fitted on samples with month 3, 3->6 on samples with both later
/// months. Throws ValidationError when a transition has no sample.
AffineGrowthModel fit_growth(std::span<const LongitudinalSample> train);

/// Applies 1->3 to the baseline, then 3->6 to that result.
Prediction apply_growth(const AffineGrowthModel& model, const SurfacePair& baseline);

Prediction af_predict(std::span<const LongitudinalSample> train, const SurfacePair& test_baseline);

void write_growth_model(std::ostream& out, const AffineGrowthModel& model);
AffineGrowthModel read_growth_model(std::istream& in);
void save_growth_model(const std::filesystem::path& path, const AffineGrowthModel& model);
AffineGrowthModel load_growth_model(const std::filesystem::path& path);

}  // namespace gcnnlp::affine
