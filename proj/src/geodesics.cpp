#include "gcnnlp/geodesics.hpp"

#include "fast_marching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace gcnnlp::geodesic {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

using Vec2 = Eigen::Vector2d;

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double wrap_signed(double angle) {
  angle = std::remainder(angle, kTwoPi);
  return angle <= -std::numbers::pi ? angle + kTwoPi : angle;
}

double wrap_positive(double angle) {
  angle = std::fmod(angle, kTwoPi);
  if (angle < 0.0) angle += kTwoPi;
  return angle >= kTwoPi ? 0.0 : angle;
}

using detail::Candidate;

// Arrival at the origin from a point source consistent with the two known
// supports: the source sits at distance da from xa and db from xb, on the
// far side of line ab. Valid only when the straight ray from the source to
// the origin crosses the segment [xa, xb]; theta is interpolated linearly
// along the segment at the crossing.
std::optional<Candidate> point_source_update(const Vec2& xa, double da, double theta_a, const Vec2& xb, double db,
                                             double theta_b) {
  const Vec2 e = xb - xa;
  const double length = e.norm();
  if (!(length > 0.0)) return std::nullopt;
  const Vec2 dir = e / length;
  const double along = (da * da - db * db + length * length) / (2.0 * length);
  double h2 = da * da - along * along;
  if (h2 < 0.0) {
    if (h2 < -1e-12 * std::max(da * da, length * length)) return std::nullopt;
    h2 = 0.0;
  }
  const Vec2 normal(-dir.y(), dir.x());
  const double origin_side = cross2(dir, -xa);
  const Vec2 source = xa + along * dir - (origin_side >= 0.0 ? 1.0 : -1.0) * std::sqrt(h2) * normal;

  const Vec2 ray = -source;
  const double denom = cross2(e, ray);
  if (std::abs(denom) <= 1e-300) return std::nullopt;
  const double lambda = cross2(source - xa, ray) / denom;
  if (lambda < 0.0 || lambda > 1.0) return std::nullopt;

  Candidate c;
  c.distance = std::max(source.norm(), std::max(da, db));
  c.theta = wrap_positive(theta_a + lambda * wrap_signed(theta_b - theta_a));
  return c;
}

}  // namespace

namespace detail {

Marcher::Marcher(const TriangleMesh& mesh)
    : mesh_(mesh),
      distance_(mesh.vertex_count(), kInf),
      theta_(mesh.vertex_count(), 0.0),
      state_(mesh.vertex_count(), State::Far),
      pinned_(mesh.vertex_count(), 0) {}

void Marcher::reset() {
  for (VertexId v : touched_) {
    distance_[v] = kInf;
    theta_[v] = 0.0;
    state_[v] = State::Far;
    pinned_[v] = 0;
  }
  touched_.clear();
  alive_.clear();
  heap_.clear();
}

void Marcher::push(VertexId v, double distance, double theta) {
  if (state_[v] == State::Far) touched_.push_back(v);
  state_[v] = State::Trial;
  distance_[v] = distance;
  theta_[v] = theta;
  heap_.emplace_back(distance, v);
  std::push_heap(heap_.begin(), heap_.end(), std::greater<>());
}

void Marcher::run(VertexId source, double max_distance) {
  reset();
  const Topology& topo = mesh_.topology();
  const auto pos = mesh_.positions();
  push(source, 0.0, 0.0);
  pinned_[source] = 1;

  // The one-ring is exact: edge lengths, and shooting angles from the
  // flattened fan (corner angles rescaled to sum to 2*pi).
  const auto ring = topo.ring(source);
  const std::size_t n = ring.size();
  std::vector<double> corner(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 a = pos[ring[i]] - pos[source];
    const Vec3 b = pos[ring[(i + 1) % n]] - pos[source];
    corner[i] = std::atan2(a.cross(b).norm(), a.dot(b));
    total += corner[i];
  }
  double cumulative = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const VertexId w = ring[i];
    push(w, (pos[w] - pos[source]).norm(), wrap_positive(cumulative * kTwoPi / total));
    pinned_[w] = 1;
    cumulative += corner[i];
  }

  while (!heap_.empty()) {
    std::pop_heap(heap_.begin(), heap_.end(), std::greater<>());
    const auto [d, v] = heap_.back();
    heap_.pop_back();
    if (state_[v] == State::Alive || d != distance_[v]) continue;
    if (d > max_distance) break;
    state_[v] = State::Alive;
    alive_.push_back(v);

    for (VertexId u : topo.neighbors(v)) {
      if (state_[u] == State::Alive || pinned_[u]) continue;
      Candidate best{distance_[u], theta_[u]};
      const double edge = (pos[u] - pos[v]).norm();
      if (d + edge < best.distance) best = {d + edge, theta_[v]};
      for (auto [a, b] : {std::pair{u, v}, std::pair{v, u}}) {
        const auto face = topo.face_with_edge(a, b);
        if (!face) continue;
        const VertexId w = topo.opposite(*face, u, v);
        if (auto c = triangle_update(*face, u, v, w); c && c->distance < best.distance) best = *c;
      }
      if (best.distance < distance_[u]) push(u, best.distance, best.theta);
    }
  }
}

std::optional<Candidate> Marcher::triangle_update(FaceId face, VertexId target, VertexId v, VertexId w) const {
  const auto pos = mesh_.positions();
  const Vec3 ev = pos[v] - pos[target];
  const Vec3 ew = pos[w] - pos[target];
  const double lv = ev.norm();
  const double lw = ew.norm();
  const double cos_angle = ev.dot(ew) / (lv * lw);
  const double angle = std::acos(std::clamp(cos_angle, -1.0, 1.0));
  const Vec2 xv(lv, 0.0);
  const Vec2 xw(lw * std::cos(angle), lw * std::sin(angle));

  std::optional<Candidate> best;
  auto consider = [&](std::optional<Candidate> c) {
    if (c && (!best || c->distance < best->distance)) best = c;
  };

  if (cos_angle < 0.0) {
    if (auto unfolded = unfold(face, target, v, w, xv, xw)) {
      const auto [p, xp] = *unfolded;
      if (state_[p] == State::Alive) {
        consider(point_source_update(xv, distance_[v], theta_[v], xp, distance_[p], theta_[p]));
        if (state_[w] == State::Alive) {
          consider(point_source_update(xp, distance_[p], theta_[p], xw, distance_[w], theta_[w]));
        }
        if (best) return best;
      }
    }
  }
  if (state_[w] == State::Alive) {
    consider(point_source_update(xv, distance_[v], theta_[v], xw, distance_[w], theta_[w]));
  }
  return best;
}

// Walks across the edges opposite the obtuse corner at `target`, laying each
// crossed triangle flat, until a vertex lands strictly inside the corner's
// cone. Returns that vertex and its unfolded position.
std::optional<std::pair<VertexId, Vec2>> Marcher::unfold(FaceId face, VertexId target, VertexId v, VertexId w,
                                                         const Vec2& xv, const Vec2& xw) const {
  const Topology& topo = mesh_.topology();
  const auto pos = mesh_.positions();
  VertexId a = v;
  VertexId b = w;
  Vec2 xa = xv;
  Vec2 xb = xw;
  FaceId current = face;
  for (int step = 0; step < 50; ++step) {
    std::optional<FaceId> next = topo.face_with_edge(b, a);
    if (next && *next == current) next = topo.face_with_edge(a, b);
    if (!next || *next == current) return std::nullopt;
    const VertexId p = topo.opposite(*next, a, b);
    if (p == target) return std::nullopt;

    const Vec2 e = xb - xa;
    const double length = e.norm();
    const double ra = (pos[p] - pos[a]).norm();
    const double rb = (pos[p] - pos[b]).norm();
    const Vec2 dir = e / length;
    const double along = (ra * ra - rb * rb + length * length) / (2.0 * length);
    const double h = std::sqrt(std::max(0.0, ra * ra - along * along));
    const Vec2 normal(-dir.y(), dir.x());
    const double origin_side = cross2(dir, -xa);
    const Vec2 xp = xa + along * dir - (origin_side >= 0.0 ? 1.0 : -1.0) * h * normal;

    const bool past_v = cross2(xv, xp) <= 0.0;
    const bool past_w = cross2(xp, xw) <= 0.0;
    if (!past_v && !past_w) return std::pair{p, xp};
    if (past_v && past_w) return std::nullopt;
    if (past_v) {
      a = p;
      xa = xp;
    } else {
      b = p;
      xb = xp;
    }
    current = *next;
  }
  return std::nullopt;
}

}  // namespace detail

DistanceField::DistanceField(std::vector<Arrival> arrivals) : arrivals_(std::move(arrivals)) {
  std::sort(arrivals_.begin(), arrivals_.end(), [](const Arrival& x, const Arrival& y) { return x.vertex < y.vertex; });
}

bool DistanceField::contains(VertexId v) const {
  return std::binary_search(arrivals_.begin(), arrivals_.end(), Arrival{v, 0.0},
                            [](const Arrival& x, const Arrival& y) { return x.vertex < y.vertex; });
}

double DistanceField::at(VertexId v) const {
  auto it = std::lower_bound(arrivals_.begin(), arrivals_.end(), v,
                             [](const Arrival& x, VertexId id) { return x.vertex < id; });
  if (it == arrivals_.end() || it->vertex != v) throw std::out_of_range("vertex not reached by the front");
  return it->distance;
}

DistanceField fast_marching_distances(const TriangleMesh& mesh, VertexId source, double max_distance) {
  if (source >= mesh.vertex_count()) throw ValidationError("source vertex out of range");
  if (!(max_distance > 0.0)) throw ConfigError("maximum distance must be positive");
  detail::Marcher marcher(mesh);
  marcher.run(source, max_distance);
  std::vector<Arrival> arrivals;
  arrivals.reserve(marcher.alive().size());
  for (VertexId v : marcher.alive()) arrivals.push_back({v, marcher.distance(v)});
  return DistanceField(std::move(arrivals));
}

double geodesic_diameter(const TriangleMesh& mesh) {
  detail::Marcher marcher(mesh);
  auto farthest = [&](VertexId from) {
    marcher.run(from, kInf);
    VertexId best = from;
    double best_d = 0.0;
    for (VertexId v : marcher.alive()) {
      const double d = marcher.distance(v);
      if (d > best_d || (d == best_d && v < best)) {
        best = v;
        best_d = d;
      }
    }
    return std::pair{best, best_d};
  };
  const auto [far_vertex, first] = farthest(0);
  const auto [unused, second] = farthest(far_vertex);
  return std::max(first, second);
}

double suggested_radius(const TriangleMesh& mesh) { return 0.01 * geodesic_diameter(mesh); }

}  // namespace gcnnlp::geodesic
