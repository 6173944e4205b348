#pragma once

#include "gcnnlp/autodiff.hpp"
#include "gcnnlp/mesh.hpp"
#include "gcnnlp/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

namespace testing {

using gcnnlp::Face;
using gcnnlp::TriangleMesh;
using gcnnlp::Vec3;
using gcnnlp::ad::Parameter;
using gcnnlp::ad::Tape;
using gcnnlp::ad::Tensor;
using gcnnlp::ad::Var;

inline TriangleMesh tetrahedron() {
  std::vector<Vec3> p{{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  return TriangleMesh::create(std::move(p), {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}});
}

/// Icosphere with every vertex pushed radially by up to `jitter` of the radius.
inline TriangleMesh bumpy_sphere(int level, double radius, double jitter, std::uint64_t seed) {
  const TriangleMesh s = gcnnlp::make_icosphere(level, radius);
  gcnnlp::Rng rng(seed);
  std::vector<Vec3> p(s.positions().begin(), s.positions().end());
  for (auto& x : p) x *= 1.0 + rng.uniform(-jitter, jitter);
  return s.with_positions(std::move(p));
}

inline Tensor random_tensor(gcnnlp::ad::Shape shape, gcnnlp::Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

/// Rotation from an axis and angle.
inline Eigen::Matrix3d rotation(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

struct GradCheck {
  double worst = 0.0;  // largest |a - n| / (tol_rel * max(|a|, |n|) + tol_abs)
  std::string where;
};

/// Compares the tape gradient of `loss` with respect to each parameter with
/// central differences of step h. Passing means worst <= 1.
inline GradCheck check_gradients(std::vector<Parameter*> params, const std::function<Var(Tape&)>& loss, double h = 1e-5,
                                 double tol_rel = 1e-4, double tol_abs = 1e-6) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  auto eval = [&] {
    Tape tape;
    return loss(tape).value()[0];
  };
  GradCheck out;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double x = p->value[i];
      p->value[i] = x + h;
      const double up = eval();
      p->value[i] = x - h;
      const double down = eval();
      p->value[i] = x;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad[i];
      const double ratio =
          std::abs(analytic - numeric) / (tol_rel * std::max(std::abs(analytic), std::abs(numeric)) + tol_abs);
      if (ratio > out.worst) {
        out.worst = ratio;
        out.where = p->name + "[" + std::to_string(i) + "] analytic " + std::to_string(analytic) + " numeric " +
                    std::to_string(numeric);
      }
    }
  }
  return out;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("gcnnlp_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline bool same_positions(const TriangleMesh& a, const TriangleMesh& b) {
  if (a.vertex_count() != b.vertex_count()) return false;
  for (std::size_t i = 0; i < a.vertex_count(); ++i) {
    if (a.position(static_cast<gcnnlp::VertexId>(i)) != b.position(static_cast<gcnnlp::VertexId>(i))) return false;
  }
  return true;
}

}  // namespace testing
