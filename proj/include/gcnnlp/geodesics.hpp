#pragma once

#include "gcnnlp/error.hpp"
#include "gcnnlp/mesh.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace gcnnlp::geodesic {

/// A vertex reached by the front, with its geodesic distance in mm.
struct Arrival {
  VertexId vertex;
  double distance;
};

/// Sparse distance field sorted by vertex id.
class DistanceField {
 public:
  DistanceField() = default;
  explicit DistanceField(std::vector<Arrival> arrivals);

  std::span<const Arrival> arrivals() const { return arrivals_; }
  std::size_t size() const { return arrivals_.size(); }
  bool contains(VertexId v) const;
  /// Throws std::out_of_range when v was not reached.
  double at(VertexId v) const;

 private:
  std::vector<Arrival> arrivals_;
};

/// First-arrival geodesic distances from `source` by fast marching with
/// point-source triangle updates. Obtuse corners are split by unfolding
/// across the opposite edges. Marching stops once the front passes `max_distance`.
DistanceField fast_marching_distances(const TriangleMesh& mesh, VertexId source, double max_distance);

/// Double-sweep estimate of the largest geodesic distance on the mesh.
double geodesic_diameter(const TriangleMesh& mesh);

/// One percent of the geodesic diameter, the conventional disc radius.
double suggested_radius(const TriangleMesh& mesh);

struct PolarCoordinate {
  VertexId vertex;
  double rho;    // mm, in (0, radius]
  double theta;  // radians, in [0, 2*pi)
};

/// Local geodesic polar grid: every vertex within `radius` of the center,
/// the center itself excluded, sorted by vertex id.
struct GeodesicPolarGrid {
  VertexId center = 0;
  std::vector<PolarCoordinate> members;
};

/// Raised when a disc contains no vertex besides its center.
class EmptyGridError : public Error {
 public:
  EmptyGridError(VertexId vertex, double radius);
  VertexId vertex() const { return vertex_; }

 private:
  VertexId vertex_;
};

struct GridSpec {
  double radius = 2.0;  // mm
  int n_rho = 5;
  int n_theta = 12;

  /// Throws ConfigError unless radius > 0, n_rho >= 1, n_theta >= 3.
  void validate() const;
};

/// Polar grid at `center`. Distances come from fast marching; angles are
/// the initial shooting directions in the flattened one-ring fan, where the
/// center's total corner angle is rescaled to 2*pi and theta = 0 points at
/// the smallest-id neighbor.
GeodesicPolarGrid build_polar_grid(const TriangleMesh& mesh, VertexId center, const GridSpec& spec);

/// Sparse (P, Theta) parameterization of a whole surface, stored row-wise.
class LocalParameterization {
 public:
  LocalParameterization() = default;
  LocalParameterization(GridSpec spec, std::vector<std::uint32_t> row_offsets, std::vector<PolarCoordinate> entries);

  const GridSpec& spec() const { return spec_; }
  std::size_t vertex_count() const { return row_offsets_.empty() ? 0 : row_offsets_.size() - 1; }
  std::size_t nonzeros() const { return entries_.size(); }
  std::span<const std::uint32_t> row_offsets() const { return row_offsets_; }
  std::span<const PolarCoordinate> entries() const { return entries_; }
  std::span<const PolarCoordinate> row(VertexId v) const {
    return {entries_.data() + row_offsets_[v], entries_.data() + row_offsets_[v + 1]};
  }
  GeodesicPolarGrid grid(VertexId v) const;

  bool operator==(const LocalParameterization& other) const;

 private:
  GridSpec spec_;
  std::vector<std::uint32_t> row_offsets_;
  std::vector<PolarCoordinate> entries_;
};

/// build_polar_grid at every vertex. Work is split over `threads` workers;
/// the result does not depend on the worker count. An empty grid anywhere
/// raises EmptyGridError for the smallest offending vertex.
LocalParameterization parameterize_surface(const TriangleMesh& mesh, const GridSpec& spec, unsigned threads = 1);

/// Throws ValidationError unless `param` could have been built on `mesh`:
/// same vertex count, and every one-ring neighbor within the radius appears
/// in its center's row at exactly the edge length.
void check_compatible(const LocalParameterization& param, const TriangleMesh& mesh);

// GPG1 cache ----------------------------------------------------------------

void write_parameterization(std::ostream& out, const LocalParameterization& param);
LocalParameterization read_parameterization(std::istream& in);
void save_parameterization(const std::filesystem::path& path, const LocalParameterization& param);
LocalParameterization load_parameterization(const std::filesystem::path& path);

/// Reads only the cache header; false when the file is missing or its
/// header differs from (vertex_count, spec).
bool cache_matches(const std::filesystem::path& path, std::size_t vertex_count, const GridSpec& spec);

}  // namespace gcnnlp::geodesic
