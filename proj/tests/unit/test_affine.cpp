#include "gcnnlp/affine.hpp"
#include "gcnnlp/cohort.hpp"
#include "gcnnlp/random.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/SVD>

#include <algorithm>
#include <numeric>
#include <sstream>

using namespace gcnnlp;
using namespace gcnnlp::affine;

namespace {

std::vector<Vec3> random_points(std::size_t n, Rng& rng) {
  std::vector<Vec3> p(n);
  for (Vec3& x : p) x = Vec3(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
  return p;
}

// Least squares through the SVD pseudo-inverse of the homogeneous design.
AffineTransform svd_fit(std::span<const Vec3> src, std::span<const Vec3> dst) {
  Eigen::MatrixXd h(src.size(), 4), y(src.size(), 3);
  for (std::size_t i = 0; i < src.size(); ++i) {
    h.row(static_cast<Eigen::Index>(i)) << src[i].x(), src[i].y(), src[i].z(), 1.0;
    y.row(static_cast<Eigen::Index>(i)) = dst[i].transpose();
  }
  const Eigen::MatrixXd x = h.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(y);
  AffineTransform t;
  t.linear = x.topRows(3).transpose();
  t.translation = x.row(3).transpose();
  return t;
}

AffineTransform random_affine(Rng& rng) {
  AffineTransform t;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) t.linear(i, j) = (i == j ? 1.0 : 0.0) + rng.uniform(-0.3, 0.3);
    t.translation[i] = rng.uniform(-2, 2);
  }
  return t;
}

double max_coefficient_gap(const AffineTransform& a, const AffineTransform& b) {
  return std::max((a.linear - b.linear).cwiseAbs().maxCoeff(), (a.translation - b.translation).cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("identity and exact affine maps are recovered") {
  Rng rng(1);
  const auto src = random_points(50, rng);
  const AffineTransform id = fit_affine(src, src);
  CHECK(max_coefficient_gap(id, AffineTransform{}) <= 1e-12);

  const AffineTransform rigid{testing::rotation(Vec3(1, 2, 3), 0.7), Vec3(3, -1, 2)};
  CHECK(max_coefficient_gap(fit_affine(src, rigid.apply(src)), rigid) <= 1e-9);
  for (int trial = 0; trial < 5; ++trial) {
    const AffineTransform a = random_affine(rng);
    CHECK(max_coefficient_gap(fit_affine(src, a.apply(src)), a) <= 1e-9);
  }
}

TEST_CASE("noisy fits agree with the SVD pseudo-inverse solution") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto src = random_points(200, rng);
    auto dst = random_affine(rng).apply(src);
    for (Vec3& p : dst) p += Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.3;
    CHECK(max_coefficient_gap(fit_affine(src, dst), svd_fit(src, dst)) <= 1e-9);
  }
}

TEST_CASE("degenerate inputs are rejected") {
  Rng rng(3);
  std::vector<Vec3> plane(20);
  for (Vec3& p : plane) p = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), 2.0);
  CHECK_THROWS_WITH_AS(fit_affine(plane, plane), doctest::Contains("coplanar"), ValidationError);
  const auto three = random_points(3, rng);
  CHECK_THROWS_AS(fit_affine(three, three), ValidationError);
  const auto four = random_points(4, rng);
  CHECK_THROWS_AS(fit_affine(four, three), ValidationError);
  CHECK_NOTHROW(fit_affine(four, four));
}

TEST_CASE("fit commutes with a common change of frame") {
  Rng rng(4);
  const auto src = random_points(80, rng);
  auto dst = random_affine(rng).apply(src);
  for (Vec3& p : dst) p += Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.2;
  const AffineTransform frame{testing::rotation(Vec3(0, 1, 1), 1.1), Vec3(5, 5, -3)};
  const AffineTransform a = fit_affine(src, dst);
  const AffineTransform b = fit_affine(frame.apply(src), frame.apply(dst));
  // b = frame * a * frame^-1
  const Eigen::Matrix3d r = frame.linear;
  const Eigen::Matrix3d expect_linear = r * a.linear * r.transpose();
  const Vec3 expect_t = r * a.translation + frame.translation - expect_linear * frame.translation;
  CHECK((b.linear - expect_linear).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((b.translation - expect_t).cwiseAbs().maxCoeff() <= 1e-8);

  std::vector<std::size_t> order(src.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order.begin(), order.end(), rng);
  std::vector<Vec3> ps, pd;
  for (std::size_t i : order) {
    ps.push_back(src[i]);
    pd.push_back(dst[i]);
  }
  CHECK(max_coefficient_gap(fit_affine(ps, pd), a) <= 1e-10);
}

TEST_CASE("growth model on an affine cohort predicts the later surfaces") {
  synth::CohortSpec spec;
  spec.subjects = 6;
  spec.complete = 4;
  spec.missing6 = 1;
  spec.missing3 = 1;
  spec.level = 2;
  spec.growth.mode = synth::GrowthMode::Affine;
  const auto c = synth::generate_cohort(spec);
  const std::span<const LongitudinalSample> train(c.samples.data(), 5);
  const LongitudinalSample& test = c.samples[5];
  const auto g = synth::generate_subject(spec, make_icosphere(spec.level), c.seeds[5]);
  const Prediction p = af_predict(train, test.month1);
  for (VertexId v = 0; v < test.month1.inner.vertex_count(); ++v) {
    CHECK((p.month3->inner.position(v) - g[1].inner.position(v)).norm() <= 1e-6);
    CHECK((p.month6->outer.position(v) - g[2].outer.position(v)).norm() <= 1e-6);
  }
}

TEST_CASE("growth model of an unchanging cohort is the identity") {
  const TriangleMesh in = testing::bumpy_sphere(2, 10.0, 0.1, 5);
  std::vector<Vec3> op;
  for (const Vec3& x : in.positions()) op.push_back(x * 1.2);
  const SurfacePair pair{in, in.with_positions(op)};
  const std::vector<LongitudinalSample> train{{"a", pair, pair, pair}};
  const AffineGrowthModel m = fit_growth(train);
  for (const auto& t : m.transitions) {
    for (const auto& a : t) CHECK(max_coefficient_gap(a, AffineTransform{}) <= 1e-10);
  }
  const Prediction p = apply_growth(m, pair);
  CHECK((p.month6->outer.position(7) - pair.outer.position(7)).norm() <= 1e-9);

  const std::vector<LongitudinalSample> only3{{"a", pair, pair, std::nullopt}};
  CHECK_THROWS_WITH_AS(fit_growth(only3), doctest::Contains("month 3 to 6"), ValidationError);
}

TEST_CASE("growth model persistence") {
  Rng rng(6);
  AffineGrowthModel m;
  for (auto& t : m.transitions) {
    for (auto& a : t) a = random_affine(rng);
  }
  std::ostringstream out;
  write_growth_model(out, m);
  std::istringstream in(out.str());
  const AffineGrowthModel back = read_growth_model(in);
  for (int t = 0; t < 2; ++t) {
    for (int c = 0; c < 2; ++c) {
      CHECK(back.transitions[t][c].linear == m.transitions[t][c].linear);
      CHECK(back.transitions[t][c].translation == m.transitions[t][c].translation);
    }
  }
  CHECK(out.str().rfind("affine-growth 1\nm1-m3 inner ", 0) == 0);

  std::istringstream bad_header("affine 2\n");
  CHECK_THROWS_AS(read_growth_model(bad_header), ParseError);
  std::string text = out.str();
  std::istringstream truncated(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(read_growth_model(truncated), ParseError);
  std::string swapped = text;
  swapped.replace(swapped.find("inner"), 5, "outer");
  std::istringstream sw(swapped);
  CHECK_THROWS_AS(read_growth_model(sw), ParseError);

  testing::TempDir dir("affine");
  save_growth_model(dir / "af.txt", m);
  CHECK(testing::read_bytes(dir / "af.txt") == text);
  CHECK(load_growth_model(dir / "af.txt").transitions[1][1].linear == m.transitions[1][1].linear);
  CHECK_THROWS_AS(load_growth_model(dir / "none.txt"), IoError);
}
