#include "gcnnlp/affine.hpp"

#include "gcnnlp/config.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <fstream>
#include <sstream>

namespace gcnnlp::affine {

std::vector<Vec3> AffineTransform::apply(std::span<const Vec3> points) const {
  std::vector<Vec3> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = apply(points[i]);
  return out;
}

void AffineAccumulator::add(std::span<const Vec3> source, std::span<const Vec3> target) {
  if (source.size() != target.size()) {
    throw ValidationError("affine fit needs equal point counts, got " + std::to_string(source.size()) + " and " +
                          std::to_string(target.size()));
  }
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Eigen::Vector4d h(source[i].x(), source[i].y(), source[i].z(), 1.0);
    gram_ += h * h.transpose();
    cross_ += h * target[i].transpose();
  }
  count_ += source.size();
}

AffineTransform AffineAccumulator::solve() const {
  if (count_ < 4) throw ValidationError("affine fit needs at least 4 points, got " + std::to_string(count_));
  // The homogeneous system is singular exactly when the centered source
  // scatter is, i.e. when the points are coplanar.
  const double n = static_cast<double>(count_);
  const Eigen::Vector3d mean = gram_.block<3, 1>(0, 3) / n;
  const Eigen::Matrix3d scatter = gram_.topLeftCorner<3, 3>() / n - mean * mean.transpose();
  const Eigen::Vector3d eig = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(scatter, Eigen::EigenvaluesOnly).eigenvalues();
  if (!(eig(2) > 0.0) || eig(0) <= 1e-12 * eig(2)) {
    throw ValidationError("affine fit source points are coplanar or degenerate");
  }
  const Eigen::Matrix<double, 4, 3> x = gram_.ldlt().solve(cross_);
  AffineTransform t;
  t.linear = x.topRows<3>().transpose();
  t.translation = x.row(3).transpose();
  if (!t.finite()) throw ValidationError("affine fit produced non-finite coefficients");
  return t;
}

AffineTransform fit_affine(std::span<const Vec3> source, std::span<const Vec3> target) {
  AffineAccumulator acc;
  acc.add(source, target);
  return acc.solve();
}

AffineGrowthModel fit_growth(std::span<const LongitudinalSample> train) {
  std::array<std::array<AffineAccumulator, 2>, 2> acc;
  for (const LongitudinalSample& s : train) {
    if (s.month3) {
      acc[0][0].add(s.month1.inner.positions(), s.month3->inner.positions());
      acc[0][1].add(s.month1.outer.positions(), s.month3->outer.positions());
    }
    if (s.month3 && s.month6) {
      acc[1][0].add(s.month3->inner.positions(), s.month6->inner.positions());
      acc[1][1].add(s.month3->outer.positions(), s.month6->outer.positions());
    }
  }
  const char* names[2] = {"month 1 to 3", "month 3 to 6"};
  AffineGrowthModel model;
  for (int t = 0; t < 2; ++t) {
    if (acc[t][0].count() == 0) throw ValidationError(std::string("no training sample covers the ") + names[t] + " transition");
    for (int c = 0; c < 2; ++c) model.transitions[t][c] = acc[t][c].solve();
  }
  return model;
}

Prediction apply_growth(const AffineGrowthModel& model, const SurfacePair& baseline) {
  const auto& t = model.transitions;
  SurfacePair m3{baseline.inner.with_positions(t[0][0].apply(baseline.inner.positions())),
                 baseline.outer.with_positions(t[0][1].apply(baseline.outer.positions()))};
  SurfacePair m6{baseline.inner.with_positions(t[1][0].apply(m3.inner.positions())),
                 baseline.outer.with_positions(t[1][1].apply(m3.outer.positions()))};
  return Prediction{std::move(m3), std::move(m6)};
}

Prediction af_predict(std::span<const LongitudinalSample> train, const SurfacePair& test_baseline) {
  return apply_growth(fit_growth(train), test_baseline);
}

void write_growth_model(std::ostream& out, const AffineGrowthModel& model) {
  out << "affine-growth 1\n";
  const char* transitions[2] = {"m1-m3", "m3-m6"};
  const char* surfaces[2] = {"inner", "outer"};
  for (int t = 0; t < 2; ++t) {
    for (int c = 0; c < 2; ++c) {
      const AffineTransform& a = model.transitions[t][c];
      out << transitions[t] << ' ' << surfaces[c];
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) out << ' ' << format_double(a.linear(i, j));
      }
      for (int i = 0; i < 3; ++i) out << ' ' << format_double(a.translation[i]);
      out << '\n';
    }
  }
}

AffineGrowthModel read_growth_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "affine-growth 1") throw ParseError("not an affine growth model");
  const char* transitions[2] = {"m1-m3", "m3-m6"};
  const char* surfaces[2] = {"inner", "outer"};
  AffineGrowthModel model;
  for (int t = 0; t < 2; ++t) {
    for (int c = 0; c < 2; ++c) {
      if (!std::getline(in, line)) throw ParseError("affine growth model is truncated");
      std::istringstream ls(line);
      std::string tn, sn;
      AffineTransform& a = model.transitions[t][c];
      ls >> tn >> sn;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) ls >> a.linear(i, j);
      }
      for (int i = 0; i < 3; ++i) ls >> a.translation[i];
      if (!ls || tn != transitions[t] || sn != surfaces[c] || !(ls >> std::ws).eof()) {
        throw ParseError("malformed affine line '" + line + "'");
      }
      if (!a.finite()) throw ParseError("non-finite affine coefficient");
    }
  }
  return model;
}

void save_growth_model(const std::filesystem::path& path, const AffineGrowthModel& model) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_growth_model(out, model);
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

AffineGrowthModel load_growth_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_growth_model(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace gcnnlp::affine
