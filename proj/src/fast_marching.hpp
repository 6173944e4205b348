#pragma once

#include "gcnnlp/mesh.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace gcnnlp::geodesic::detail {

struct Candidate {
  double distance = std::numeric_limits<double>::infinity();
  double theta = 0.0;
};

/// Reusable fast-marching workspace for one mesh. Only vertices touched by
/// the previous run are reset, so repeated small-radius runs cost
/// proportional to the disc size.
class Marcher {
 public:
  explicit Marcher(const TriangleMesh& mesh);

  /// Marches from `source` until the front passes `max_distance`. Angles
  /// are always propagated; callers that need distances only ignore them.
  void run(VertexId source, double max_distance);

  /// Vertices finalized by the last run, in arrival order.
  std::span<const VertexId> alive() const { return alive_; }
  double distance(VertexId v) const { return distance_[v]; }
  double theta(VertexId v) const { return theta_[v]; }

 private:
  enum class State : std::uint8_t { Far, Trial, Alive };

  void reset();
  void push(VertexId v, double distance, double theta);
  std::optional<Candidate> triangle_update(FaceId face, VertexId target, VertexId v, VertexId w) const;
  std::optional<std::pair<VertexId, Eigen::Vector2d>> unfold(FaceId face, VertexId target, VertexId v, VertexId w,
                                                             const Eigen::Vector2d& xv,
                                                             const Eigen::Vector2d& xw) const;

  const TriangleMesh& mesh_;
  std::vector<double> distance_;
  std::vector<double> theta_;
  std::vector<State> state_;
  std::vector<std::uint8_t> pinned_;
  std::vector<VertexId> touched_;
  std::vector<VertexId> alive_;
  std::vector<std::pair<double, VertexId>> heap_;
};

}  // namespace gcnnlp::geodesic::detail
