#pragma once

#include "gcnnlp/mesh.hpp"

#include <array>
#include <optional>
#include <vector>

namespace gcnnlp {

/// Per-vertex displacement fields in mm, index 0 inner, 1 outer. Absent
/// months are empty.
struct GrowthMaps {
  std::array<std::optional<std::vector<Vec3>>, 2> month3;
  std::array<std::optional<std::vector<Vec3>>, 2> month6;
};

/// Predicted surface pairs at the later time points.
struct Prediction {
  std::optional<SurfacePair> month3;
  std::optional<SurfacePair> month6;
};

/// Month 3 = baseline + O3. Month 6 = month 3 + O6, or baseline + O6 when
/// no month-3 map is given.
Prediction reconstruct_surfaces(const SurfacePair& baseline, const GrowthMaps& growth);

/// Per-vertex |outer - inner|.
std::vector<double> thickness(const SurfacePair& pair);

}  // namespace gcnnlp
