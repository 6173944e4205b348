#include "gcnnlp/surfaces.hpp"

#include "gcnnlp/error.hpp"

#include <span>
#include <string>

namespace gcnnlp {
namespace {

std::vector<Vec3> displaced(std::span<const Vec3> base, const std::vector<Vec3>& growth) {
  if (growth.size() != base.size()) {
    throw ShapeError("growth map of " + std::to_string(growth.size()) + " vertices for a surface of " +
                     std::to_string(base.size()));
  }
  std::vector<Vec3> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i] + growth[i];
  return out;
}

}  // namespace

Prediction reconstruct_surfaces(const SurfacePair& baseline, const GrowthMaps& growth) {
  Prediction p;
  const TriangleMesh* base[2] = {&baseline.inner, &baseline.outer};
  std::array<std::vector<Vec3>, 2> m3;
  const bool has3 = growth.month3[0] && growth.month3[1];
  if (has3) {
    for (int c = 0; c < 2; ++c) m3[c] = displaced(base[c]->positions(), *growth.month3[c]);
    p.month3 = SurfacePair{baseline.inner.with_positions(m3[0]), baseline.outer.with_positions(m3[1])};
  }
  if (growth.month6[0] && growth.month6[1]) {
    std::array<std::vector<Vec3>, 2> m6;
    for (int c = 0; c < 2; ++c) {
      m6[c] = has3 ? displaced(m3[c], *growth.month6[c]) : displaced(base[c]->positions(), *growth.month6[c]);
    }
    p.month6 = SurfacePair{baseline.inner.with_positions(std::move(m6[0])), baseline.outer.with_positions(std::move(m6[1]))};
  }
  return p;
}

std::vector<double> thickness(const SurfacePair& pair) {
  if (pair.inner.vertex_count() != pair.outer.vertex_count()) throw ValidationError("surface pair size mismatch");
  std::vector<double> out(pair.inner.vertex_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (pair.outer.position(i) - pair.inner.position(i)).norm();
  return out;
}

}  // namespace gcnnlp
