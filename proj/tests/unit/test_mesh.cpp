#include "gcnnlp/error.hpp"
#include "gcnnlp/mesh.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace gcnnlp;
using testing::tetrahedron;

namespace {

const char* kTetraOff =
    "OFF\n"
    "# regular tetrahedron\n"
    "4 4 0\n"
    "1 1 1\n1 -1 -1\n-1 1 -1\n-1 -1 1\n"
    "3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n";

TriangleMesh parse(const std::string& text) {
  std::istringstream in(text);
  return read_off(in);
}

double signed_volume(const TriangleMesh& m) {
  double v = 0.0;
  for (const Face& f : m.topology().faces()) v += m.position(f[0]).dot(m.position(f[1]).cross(m.position(f[2])));
  return v / 6.0;
}

}  // namespace

TEST_CASE("tetrahedron loads with three neighbors per vertex") {
  const TriangleMesh m = parse(kTetraOff);
  CHECK(m.vertex_count() == 4);
  CHECK(m.face_count() == 4);
  for (VertexId v = 0; v < 4; ++v) CHECK(one_ring(m, v).size() == 3);
  const auto r0 = one_ring(m, 0);
  CHECK(std::vector<VertexId>(r0.begin(), r0.end()) == std::vector<VertexId>{1, 2, 3});
}

TEST_CASE("icosphere sizes follow the subdivision count") {
  for (int level = 0; level <= 5; ++level) {
    const TriangleMesh m = make_icosphere(level);
    const std::size_t faces = 20u << (2 * level);
    CHECK(m.face_count() == faces);
    CHECK(m.vertex_count() == faces / 2 + 2);
    const auto e = static_cast<long>(m.topology().edge_count());
    CHECK(static_cast<long>(m.vertex_count()) - e + static_cast<long>(m.face_count()) == 2);
  }
  CHECK(make_icosphere(4).vertex_count() == 2562);
  CHECK(make_icosphere(5).vertex_count() == 10242);
  CHECK(make_icosphere(5).face_count() == 20480);
}

TEST_CASE("icosphere valences: corners keep five neighbors, the rest have six") {
  const TriangleMesh m = make_icosphere(4);
  for (VertexId v = 0; v < m.vertex_count(); ++v) CHECK(one_ring(m, v).size() == (v < 12 ? 5u : 6u));
}

TEST_CASE("valence sum equals twice the edge count and three times the face count") {
  for (const TriangleMesh& m : {tetrahedron(), make_icosphere(3), testing::bumpy_sphere(2, 5.0, 0.1, 3)}) {
    std::size_t sum = 0;
    for (VertexId v = 0; v < m.vertex_count(); ++v) sum += one_ring(m, v).size();
    CHECK(sum == 2 * m.topology().edge_count());
    CHECK(sum == 3 * m.face_count());
  }
}

TEST_CASE("one-ring neighbors are sorted and share an edge") {
  const TriangleMesh m = testing::bumpy_sphere(3, 1.0, 0.05, 7);
  for (VertexId v = 0; v < m.vertex_count(); ++v) {
    const auto ring = one_ring(m, v);
    CHECK(std::is_sorted(ring.begin(), ring.end()));
    for (VertexId w : ring) CHECK((m.topology().face_with_edge(v, w) || m.topology().face_with_edge(w, v)));
  }
}

TEST_CASE("cyclic rings wind counter-clockwise about the outward normal") {
  const TriangleMesh m = make_icosphere(2);
  for (VertexId v = 0; v < m.vertex_count(); ++v) {
    const auto ring = m.topology().ring(v);
    const Vec3& c = m.position(v);
    for (std::size_t i = 0; i < ring.size(); ++i) {
      const Vec3 a = m.position(ring[i]) - c;
      const Vec3 b = m.position(ring[(i + 1) % ring.size()]) - c;
      CHECK(a.cross(b).dot(c) > 0.0);
    }
  }
}

TEST_CASE("winding is normalized to outward normals") {
  std::vector<Vec3> p{{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  const TriangleMesh inward = TriangleMesh::create(p, {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}});
  CHECK(signed_volume(inward) > 0.0);
  CHECK(signed_volume(tetrahedron()) > 0.0);
}

TEST_CASE("OFF round trip is bit exact") {
  const TriangleMesh m = testing::bumpy_sphere(3, 40.0, 0.1, 11);
  const auto q = quantize_positions(m.positions());
  const TriangleMesh mq = m.with_positions(q);
  std::stringstream buf;
  write_off(buf, mq);
  const TriangleMesh back = read_off(buf);
  CHECK(testing::same_positions(back, mq));
  CHECK(back.topology() == mq.topology());

  testing::TempDir dir("mesh");
  save_mesh(dir / "m.off", mq);
  const TriangleMesh loaded = load_mesh(dir / "m.off");
  CHECK(testing::same_positions(loaded, mq));
  CHECK(quantize_positions(q) == q);
}

TEST_CASE("OFF writer uses nine significant digits") {
  const TriangleMesh m = tetrahedron().with_positions({{1.0 / 3.0, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}});
  std::ostringstream out;
  write_off(out, m);
  CHECK(out.str().find("0.333333333 1 1") != std::string::npos);
  CHECK(out.str().rfind("OFF\n4 4 0\n", 0) == 0);
}

TEST_CASE("malformed OFF input is a parse error") {
  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_AS(parse("PLY\n4 4 0\n"), ParseError);
  CHECK_THROWS_AS(parse("OFF\n4 4 0\n1 1 1\n"), ParseError);
  CHECK_THROWS_AS(parse("OFF\n4 4 0\n1 1 x\n1 -1 -1\n-1 1 -1\n-1 -1 1\n3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n"),
                  ParseError);
  CHECK_THROWS_AS(parse("OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n4 0 1 2 3\n"), ParseError);
  CHECK_THROWS_AS(load_mesh("/nonexistent/mesh.off"), IoError);
}

TEST_CASE("structural defects are validation errors") {
  const std::vector<Vec3> p{{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  // open boundary: one face missing
  CHECK_THROWS_AS(TriangleMesh::create(p, {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}}), ValidationError);
  // inconsistent winding
  CHECK_THROWS_AS(TriangleMesh::create(p, {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 3, 2}}), ValidationError);
  // out-of-range id and repeated vertex
  CHECK_THROWS_AS(TriangleMesh::create(p, {{0, 1, 4}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}}), ValidationError);
  CHECK_THROWS_AS(TriangleMesh::create(p, {{0, 1, 1}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}}), ValidationError);
  // duplicate position gives zero-area faces or duplicates
  const std::vector<Vec3> dup{{1, 1, 1}, {1, 1, 1}, {-1, 1, -1}, {-1, -1, 1}};
  CHECK_THROWS_AS(TriangleMesh::create(dup, {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}}), ValidationError);
  // unreferenced vertex
  std::vector<Vec3> extra = p;
  extra.push_back({5, 5, 5});
  CHECK_THROWS_AS(TriangleMesh::create(extra, {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}}), ValidationError);
}

TEST_CASE("two tetrahedra sharing a vertex are non-manifold") {
  std::vector<Vec3> p{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {-1, 0, 0}, {0, -1, 0}, {0, 0, -1}};
  std::vector<Face> f{{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}, {0, 4, 5}, {0, 6, 4}, {0, 5, 6}, {4, 6, 5}};
  CHECK_THROWS_AS(TriangleMesh::create(p, f), ValidationError);
}

TEST_CASE("surface pairs and samples check correspondence") {
  const TriangleMesh a = make_icosphere(1);
  const TriangleMesh b = make_icosphere(2);
  CHECK_THROWS_AS((SurfacePair{a, b}.validate()), ValidationError);
  SurfacePair{a, a}.validate();
  LongitudinalSample s{"s", SurfacePair{a, a}, SurfacePair{b, b}, std::nullopt};
  CHECK(s.flag3());
  CHECK_FALSE(s.flag6());
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("neighborhood differences vanish on a collapsed mesh") {
  const TriangleMesh m = make_icosphere(2);
  const TriangleMesh z = m.with_positions(std::vector<Vec3>(m.vertex_count(), Vec3::Zero()));
  for (const Vec3& d : neighborhood_difference_map(z)) CHECK(d.isZero(0.0));
}

TEST_CASE("neighborhood differences match the direct mean over neighbors") {
  const TriangleMesh m = testing::bumpy_sphere(3, 10.0, 0.1, 5);
  const auto d = neighborhood_difference_map(m);
  for (VertexId v = 0; v < m.vertex_count(); ++v) {
    Vec3 sum = Vec3::Zero();
    const auto ring = one_ring(m, v);
    for (VertexId w : ring) sum += m.position(v) - m.position(w);
    CHECK((d[v] - sum / static_cast<double>(ring.size())).norm() <= 1e-12);
  }
}

TEST_CASE("on the unit icosphere neighborhood differences point outward") {
  const TriangleMesh m = make_icosphere(4);
  const auto d = neighborhood_difference_map(m);
  for (VertexId v = 0; v < m.vertex_count(); ++v) {
    const Vec3& n = m.position(v);
    double angle = 0.0;
    const auto ring = one_ring(m, v);
    for (VertexId w : ring) angle += std::acos(std::clamp(n.dot(m.position(w)), -1.0, 1.0));
    angle /= static_cast<double>(ring.size());
    CHECK(d[v].dot(n) > 0.0);
    CHECK(d[v].norm() == doctest::Approx(1.0 - std::cos(angle)).epsilon(0.05));
  }
}

TEST_CASE("neighborhood differences: translation invariant, rotation equivariant") {
  const TriangleMesh m = testing::bumpy_sphere(3, 20.0, 0.1, 9);
  const auto d = neighborhood_difference_map(m);
  const Vec3 t(12.5, -3.25, 7.0);
  const Eigen::Matrix3d r = testing::rotation(Vec3(1, 2, 3), 0.7);
  std::vector<Vec3> moved, turned;
  for (const Vec3& p : m.positions()) {
    moved.push_back(p + t);
    turned.push_back(r * p);
  }
  const auto dt = neighborhood_difference_map(m.with_positions(moved));
  const auto dr = neighborhood_difference_map(m.with_positions(turned));
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK((dt[i] - d[i]).norm() <= 1e-12);
    CHECK((dr[i] - r * d[i]).norm() <= 1e-12);
  }
}
