#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gcnnlp {

using Vec3 = Eigen::Vector3d;
using VertexId = std::uint32_t;
using FaceId = std::uint32_t;
using Face = std::array<VertexId, 3>;

/// Immutable connectivity of a closed, edge-manifold, consistently wound
/// triangle mesh. Shared between every time point of a longitudinal subject.
class Topology {
 public:
  /// Validates the face list and precomputes adjacency. Throws
  /// ValidationError on out-of-range or repeated ids, open boundaries,
  /// non-manifold edges or vertices, inconsistent winding and unreferenced
  /// vertices.
  static std::shared_ptr<const Topology> create(std::size_t vertex_count, std::vector<Face> faces);

  std::size_t vertex_count() const { return ring_offsets_.size() - 1; }
  std::size_t face_count() const { return faces_.size(); }
  std::size_t edge_count() const { return 3 * faces_.size() / 2; }

  std::span<const Face> faces() const { return faces_; }
  const Face& face(FaceId f) const { return faces_[f]; }

  /// One-ring neighbors sorted by id.
  std::span<const VertexId> neighbors(VertexId v) const;
  /// One-ring neighbors in cyclic winding order (counter-clockwise about the
  /// outward normal), starting at the smallest id.
  std::span<const VertexId> ring(VertexId v) const;
  /// Faces incident to v.
  std::span<const FaceId> incident_faces(VertexId v) const;

  /// Face that contains the directed edge a->b.
  std::optional<FaceId> face_with_edge(VertexId a, VertexId b) const;
  /// Vertex of face f that is neither a nor b.
  VertexId opposite(FaceId f, VertexId a, VertexId b) const;

  bool operator==(const Topology& other) const { return faces_ == other.faces_; }

 private:
  Topology() = default;

  std::vector<Face> faces_;
  std::vector<std::uint32_t> ring_offsets_;
  std::vector<VertexId> sorted_rings_;
  std::vector<VertexId> cyclic_rings_;
  std::vector<std::uint32_t> face_offsets_;
  std::vector<FaceId> vertex_faces_;
  // directed edge key (a << 32 | b) -> face, sorted by key
  std::vector<std::pair<std::uint64_t, FaceId>> directed_edges_;
};

/// Triangle mesh: shared connectivity plus vertex positions in mm.
class TriangleMesh {
 public:
  /// Builds and fully validates a mesh: connectivity checks, no zero-area
  /// faces, no duplicate vertices. Face winding is flipped when needed so
  /// that normals point outward (positive enclosed volume).
  static TriangleMesh create(std::vector<Vec3> positions, std::vector<Face> faces);

  /// Attaches new positions to an existing connectivity. Only the vertex
  /// count is checked; predicted surfaces may legitimately self-intersect.
  TriangleMesh(std::shared_ptr<const Topology> topology, std::vector<Vec3> positions);

  TriangleMesh with_positions(std::vector<Vec3> positions) const {
    return TriangleMesh(topology_, std::move(positions));
  }

  const Topology& topology() const { return *topology_; }
  const std::shared_ptr<const Topology>& shared_topology() const { return topology_; }

  std::size_t vertex_count() const { return positions_.size(); }
  std::size_t face_count() const { return topology_->face_count(); }
  std::span<const Vec3> positions() const { return positions_; }
  const Vec3& position(VertexId v) const { return positions_[v]; }

  /// Throws ValidationError on zero-area faces or duplicate positions.
  void validate_geometry() const;

 private:
  std::shared_ptr<const Topology> topology_;
  std::vector<Vec3> positions_;
};

/// True when both meshes index the same face list.
bool same_connectivity(const TriangleMesh& a, const TriangleMesh& b);

struct SurfacePair {
  TriangleMesh inner;
  TriangleMesh outer;

  /// Throws ValidationError unless inner and outer are in vertex-to-vertex
  /// correspondence.
  void validate() const;
};

/// One subject: baseline pair at month 1, optional pairs at months 3 and 6.
/// The availability flags are the presence of the optional pairs.
struct LongitudinalSample {
  std::string subject_id;
  SurfacePair month1;
  std::optional<SurfacePair> month3;
  std::optional<SurfacePair> month6;

  bool flag3() const { return month3.has_value(); }
  bool flag6() const { return month6.has_value(); }

  /// Every present mesh must share the month-1 connectivity.
  void validate() const;
};

// OFF input/output ----------------------------------------------------------

TriangleMesh read_off(std::istream& in);
TriangleMesh load_mesh(const std::filesystem::path& path);
void write_off(std::ostream& out, const TriangleMesh& mesh, int significant_digits = 9);
void save_mesh(const std::filesystem::path& path, const TriangleMesh& mesh, int significant_digits = 9);

/// Rounds each coordinate to the given number of significant decimal digits,
/// i.e. to the value an OFF round trip at that precision would produce.
std::vector<Vec3> quantize_positions(std::span<const Vec3> positions, int significant_digits = 9);

// Queries -------------------------------------------------------------------

std::span<const VertexId> one_ring(const TriangleMesh& mesh, VertexId v);

/// Per vertex, the mean over one-ring neighbors w of pos(v) - pos(w).
std::vector<Vec3> neighborhood_difference_map(const TriangleMesh& mesh);

/// Icosahedron refined `level` times by midpoint subdivision, vertices
/// projected to the sphere of the given radius. Level n has 10*4^n + 2
/// vertices; the 12 icosahedron corners keep ids 0..11.
TriangleMesh make_icosphere(int level, double radius = 1.0);

}  // namespace gcnnlp
