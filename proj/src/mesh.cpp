#include "gcnnlp/mesh.hpp"

#include "gcnnlp/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

namespace gcnnlp {
namespace {

constexpr std::uint64_t edge_key(VertexId a, VertexId b) {
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

double signed_volume(std::span<const Vec3> positions, std::span<const Face> faces) {
  double volume = 0.0;
  for (const Face& f : faces) {
    volume += positions[f[0]].dot(positions[f[1]].cross(positions[f[2]]));
  }
  return volume / 6.0;
}

}  // namespace

std::shared_ptr<const Topology> Topology::create(std::size_t vertex_count, std::vector<Face> faces) {
  if (vertex_count == 0 || faces.empty()) throw ValidationError("mesh has no vertices or faces");
  if (vertex_count > std::numeric_limits<VertexId>::max() / 2) throw ValidationError("mesh too large");

  std::shared_ptr<Topology> topo(new Topology());
  Topology& t = *topo;

  t.directed_edges_.reserve(3 * faces.size());
  std::vector<std::uint32_t> face_valence(vertex_count, 0);
  for (std::size_t fi = 0; fi < faces.size(); ++fi) {
    const Face& f = faces[fi];
    for (int k = 0; k < 3; ++k) {
      if (f[k] >= vertex_count) {
        throw ValidationError("face " + std::to_string(fi) + " references vertex " + std::to_string(f[k]) +
                              " out of range");
      }
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
      throw ValidationError("face " + std::to_string(fi) + " repeats a vertex");
    }
    for (int k = 0; k < 3; ++k) {
      t.directed_edges_.emplace_back(edge_key(f[k], f[(k + 1) % 3]), static_cast<FaceId>(fi));
      ++face_valence[f[k]];
    }
  }
  std::sort(t.directed_edges_.begin(), t.directed_edges_.end());
  for (std::size_t i = 1; i < t.directed_edges_.size(); ++i) {
    if (t.directed_edges_[i].first == t.directed_edges_[i - 1].first) {
      const auto key = t.directed_edges_[i].first;
      throw ValidationError("directed edge " + std::to_string(key >> 32) + "->" + std::to_string(key & 0xffffffffu) +
                            " appears in more than one face (inconsistent winding or non-manifold edge)");
    }
  }
  for (const auto& [key, face] : t.directed_edges_) {
    const auto a = static_cast<VertexId>(key >> 32);
    const auto b = static_cast<VertexId>(key & 0xffffffffu);
    if (!std::binary_search(t.directed_edges_.begin(), t.directed_edges_.end(), std::make_pair(edge_key(b, a), FaceId{0}),
                            [](const auto& x, const auto& y) { return x.first < y.first; })) {
      throw ValidationError("edge " + std::to_string(a) + "-" + std::to_string(b) +
                            " is on an open boundary or wound inconsistently");
    }
  }

  t.face_offsets_.assign(vertex_count + 1, 0);
  for (std::size_t v = 0; v < vertex_count; ++v) {
    if (face_valence[v] == 0) throw ValidationError("vertex " + std::to_string(v) + " is not referenced by any face");
    t.face_offsets_[v + 1] = t.face_offsets_[v] + face_valence[v];
  }
  t.vertex_faces_.resize(t.face_offsets_.back());
  {
    std::vector<std::uint32_t> cursor(t.face_offsets_.begin(), t.face_offsets_.end() - 1);
    for (std::size_t fi = 0; fi < faces.size(); ++fi) {
      for (VertexId v : faces[fi]) t.vertex_faces_[cursor[v]++] = static_cast<FaceId>(fi);
    }
  }

  // On a closed edge-manifold mesh every vertex has as many neighbors as
  // incident faces, provided its faces form a single fan.
  t.ring_offsets_ = t.face_offsets_;
  t.sorted_rings_.resize(t.vertex_faces_.size());
  t.cyclic_rings_.resize(t.vertex_faces_.size());
  std::vector<std::pair<VertexId, VertexId>> next;
  for (std::size_t v = 0; v < vertex_count; ++v) {
    next.clear();
    for (std::uint32_t i = t.face_offsets_[v]; i < t.face_offsets_[v + 1]; ++i) {
      const Face& f = faces[t.vertex_faces_[i]];
      const int k = f[0] == v ? 0 : (f[1] == v ? 1 : 2);
      next.emplace_back(f[(k + 1) % 3], f[(k + 2) % 3]);
    }
    std::sort(next.begin(), next.end());
    const std::size_t n = next.size();
    VertexId* cyc = t.cyclic_rings_.data() + t.ring_offsets_[v];
    VertexId current = next.front().first;
    for (std::size_t i = 0; i < n; ++i) {
      cyc[i] = current;
      auto it = std::lower_bound(next.begin(), next.end(), std::make_pair(current, VertexId{0}));
      if (it == next.end() || it->first != current) {
        throw ValidationError("vertex " + std::to_string(v) + " has a broken face fan");
      }
      current = it->second;
      if (current == cyc[0] && i + 1 < n) {
        throw ValidationError("vertex " + std::to_string(v) + " is non-manifold (more than one face fan)");
      }
    }
    if (current != cyc[0]) throw ValidationError("vertex " + std::to_string(v) + " has an open face fan");
    VertexId* srt = t.sorted_rings_.data() + t.ring_offsets_[v];
    std::copy(cyc, cyc + n, srt);
    std::sort(srt, srt + n);
  }

  t.faces_ = std::move(faces);
  return topo;
}

std::span<const VertexId> Topology::neighbors(VertexId v) const {
  return {sorted_rings_.data() + ring_offsets_[v], sorted_rings_.data() + ring_offsets_[v + 1]};
}

std::span<const VertexId> Topology::ring(VertexId v) const {
  return {cyclic_rings_.data() + ring_offsets_[v], cyclic_rings_.data() + ring_offsets_[v + 1]};
}

std::span<const FaceId> Topology::incident_faces(VertexId v) const {
  return {vertex_faces_.data() + face_offsets_[v], vertex_faces_.data() + face_offsets_[v + 1]};
}

std::optional<FaceId> Topology::face_with_edge(VertexId a, VertexId b) const {
  const auto key = edge_key(a, b);
  auto it = std::lower_bound(directed_edges_.begin(), directed_edges_.end(), key,
                             [](const auto& entry, std::uint64_t k) { return entry.first < k; });
  if (it == directed_edges_.end() || it->first != key) return std::nullopt;
  return it->second;
}

VertexId Topology::opposite(FaceId f, VertexId a, VertexId b) const {
  for (VertexId v : faces_[f]) {
    if (v != a && v != b) return v;
  }
  throw ValidationError("face " + std::to_string(f) + " does not contain the given edge");
}

TriangleMesh::TriangleMesh(std::shared_ptr<const Topology> topology, std::vector<Vec3> positions)
    : topology_(std::move(topology)), positions_(std::move(positions)) {
  if (!topology_) throw ValidationError("mesh without connectivity");
  if (positions_.size() != topology_->vertex_count()) {
    throw ValidationError("position count " + std::to_string(positions_.size()) + " does not match vertex count " +
                          std::to_string(topology_->vertex_count()));
  }
}

TriangleMesh TriangleMesh::create(std::vector<Vec3> positions, std::vector<Face> faces) {
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!positions[i].allFinite()) throw ValidationError("vertex " + std::to_string(i) + " has a non-finite coordinate");
  }
  auto topology = Topology::create(positions.size(), std::move(faces));
  if (signed_volume(positions, topology->faces()) < 0.0) {
    std::vector<Face> flipped(topology->faces().begin(), topology->faces().end());
    for (Face& f : flipped) std::swap(f[1], f[2]);
    topology = Topology::create(positions.size(), std::move(flipped));
  }
  TriangleMesh mesh(std::move(topology), std::move(positions));
  mesh.validate_geometry();
  return mesh;
}

void TriangleMesh::validate_geometry() const {
  const auto faces = topology_->faces();
  for (std::size_t fi = 0; fi < faces.size(); ++fi) {
    const Vec3& a = positions_[faces[fi][0]];
    const Vec3& b = positions_[faces[fi][1]];
    const Vec3& c = positions_[faces[fi][2]];
    const double longest = std::max({(b - a).squaredNorm(), (c - b).squaredNorm(), (a - c).squaredNorm()});
    if ((b - a).cross(c - a).norm() <= 1e-12 * longest) {
      throw ValidationError("face " + std::to_string(fi) + " is degenerate (zero area)");
    }
  }
  std::vector<VertexId> order(positions_.size());
  std::iota(order.begin(), order.end(), VertexId{0});
  auto less = [&](VertexId i, VertexId j) {
    const Vec3& p = positions_[i];
    const Vec3& q = positions_[j];
    return std::tie(p.x(), p.y(), p.z()) < std::tie(q.x(), q.y(), q.z());
  };
  std::sort(order.begin(), order.end(), less);
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (positions_[order[i]] == positions_[order[i - 1]]) {
      throw ValidationError("vertices " + std::to_string(order[i - 1]) + " and " + std::to_string(order[i]) +
                            " coincide");
    }
  }
}

bool same_connectivity(const TriangleMesh& a, const TriangleMesh& b) {
  return a.shared_topology() == b.shared_topology() || a.topology() == b.topology();
}

void SurfacePair::validate() const {
  if (!same_connectivity(inner, outer)) {
    throw ValidationError("inner and outer surfaces are not in vertex-to-vertex correspondence");
  }
}

void LongitudinalSample::validate() const {
  month1.validate();
  for (const auto* pair : {month3 ? &*month3 : nullptr, month6 ? &*month6 : nullptr}) {
    if (pair == nullptr) continue;
    pair->validate();
    if (!same_connectivity(pair->inner, month1.inner)) {
      throw ValidationError("subject " + subject_id + ": time points do not share one connectivity");
    }
  }
}

std::span<const VertexId> one_ring(const TriangleMesh& mesh, VertexId v) {
  return mesh.topology().neighbors(v);
}

std::vector<Vec3> neighborhood_difference_map(const TriangleMesh& mesh) {
  std::vector<Vec3> out(mesh.vertex_count());
  const auto positions = mesh.positions();
  for (VertexId v = 0; v < out.size(); ++v) {
    const auto ring = mesh.topology().neighbors(v);
    Vec3 sum = Vec3::Zero();
    for (VertexId w : ring) sum += positions[v] - positions[w];
    out[v] = sum / static_cast<double>(ring.size());
  }
  return out;
}

TriangleMesh make_icosphere(int level, double radius) {
  if (level < 0) throw ConfigError("icosphere level must be non-negative");
  if (!(radius > 0.0)) throw ConfigError("icosphere radius must be positive");
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> pts = {
      {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi}, {0, 1, phi},
      {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
  };
  for (Vec3& p : pts) p.normalize();
  std::vector<Face> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1},
  };
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<VertexId, VertexId>, VertexId> midpoints;
    auto midpoint = [&](VertexId a, VertexId b) {
      const auto key = std::minmax(a, b);
      auto [it, inserted] = midpoints.try_emplace({key.first, key.second}, static_cast<VertexId>(pts.size()));
      if (inserted) pts.push_back((pts[a] + pts[b]).normalized());
      return it->second;
    };
    std::vector<Face> refined;
    refined.reserve(4 * faces.size());
    for (const Face& f : faces) {
      const VertexId ab = midpoint(f[0], f[1]);
      const VertexId bc = midpoint(f[1], f[2]);
      const VertexId ca = midpoint(f[2], f[0]);
      refined.push_back({f[0], ab, ca});
      refined.push_back({f[1], bc, ab});
      refined.push_back({f[2], ca, bc});
      refined.push_back({ab, bc, ca});
    }
    faces = std::move(refined);
  }
  for (Vec3& p : pts) p *= radius;
  return TriangleMesh::create(std::move(pts), std::move(faces));
}

}  // namespace gcnnlp
