#include "gcnnlp/geodesics.hpp"

#include "binary_io.hpp"
#include "fast_marching.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

namespace gcnnlp::geodesic {
namespace {

constexpr std::string_view kMagic = "GPG1";

std::vector<PolarCoordinate> grid_members(const detail::Marcher& marcher, VertexId center) {
  std::vector<PolarCoordinate> members;
  members.reserve(marcher.alive().size());
  for (VertexId v : marcher.alive()) {
    if (v == center) continue;
    members.push_back({v, marcher.distance(v), marcher.theta(v)});
  }
  std::sort(members.begin(), members.end(),
            [](const PolarCoordinate& a, const PolarCoordinate& b) { return a.vertex < b.vertex; });
  return members;
}

std::string describe_radius(double radius) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", radius);
  return buf;
}

}  // namespace

EmptyGridError::EmptyGridError(VertexId vertex, double radius)
    : Error("empty geodesic disc at vertex " + std::to_string(vertex) + " (radius " + describe_radius(radius) +
            " mm is below the local edge length)"),
      vertex_(vertex) {}

void GridSpec::validate() const {
  if (!(radius > 0.0) || !std::isfinite(radius)) throw ConfigError("disc radius must be positive and finite");
  if (n_rho < 1) throw ConfigError("n_rho must be at least 1");
  if (n_theta < 3) throw ConfigError("n_theta must be at least 3");
}

GeodesicPolarGrid build_polar_grid(const TriangleMesh& mesh, VertexId center, const GridSpec& spec) {
  spec.validate();
  if (center >= mesh.vertex_count()) throw ValidationError("center vertex out of range");
  detail::Marcher marcher(mesh);
  marcher.run(center, spec.radius);
  GeodesicPolarGrid grid{center, grid_members(marcher, center)};
  if (grid.members.empty()) throw EmptyGridError(center, spec.radius);
  return grid;
}

LocalParameterization::LocalParameterization(GridSpec spec, std::vector<std::uint32_t> row_offsets,
                                             std::vector<PolarCoordinate> entries)
    : spec_(spec), row_offsets_(std::move(row_offsets)), entries_(std::move(entries)) {
  if (row_offsets_.empty() || row_offsets_.front() != 0 || row_offsets_.back() != entries_.size() ||
      !std::is_sorted(row_offsets_.begin(), row_offsets_.end())) {
    throw ValidationError("inconsistent parameterization row offsets");
  }
}

GeodesicPolarGrid LocalParameterization::grid(VertexId v) const {
  const auto r = row(v);
  return {v, std::vector<PolarCoordinate>(r.begin(), r.end())};
}

bool LocalParameterization::operator==(const LocalParameterization& other) const {
  if (spec_.radius != other.spec_.radius || spec_.n_rho != other.spec_.n_rho ||
      spec_.n_theta != other.spec_.n_theta || row_offsets_ != other.row_offsets_ ||
      entries_.size() != other.entries_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.vertex != b.vertex || a.rho != b.rho || a.theta != b.theta) return false;
  }
  return true;
}

LocalParameterization parameterize_surface(const TriangleMesh& mesh, const GridSpec& spec, unsigned threads) {
  spec.validate();
  const std::size_t n = mesh.vertex_count();
  std::vector<std::vector<PolarCoordinate>> rows(n);
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));

  auto work = [&](std::size_t begin, std::size_t end) {
    detail::Marcher marcher(mesh);
    for (std::size_t v = begin; v < end; ++v) {
      marcher.run(static_cast<VertexId>(v), spec.radius);
      rows[v] = grid_members(marcher, static_cast<VertexId>(v));
    }
  };
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t block = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t begin = std::min(n, t * block);
      const std::size_t end = std::min(n, begin + block);
      pool.emplace_back(work, begin, end);
    }
  }

  std::vector<std::uint32_t> offsets(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) {
    if (rows[v].empty()) throw EmptyGridError(static_cast<VertexId>(v), spec.radius);
    offsets[v + 1] = offsets[v] + static_cast<std::uint32_t>(rows[v].size());
  }
  std::vector<PolarCoordinate> entries;
  entries.reserve(offsets.back());
  for (auto& r : rows) entries.insert(entries.end(), r.begin(), r.end());
  return LocalParameterization(spec, std::move(offsets), std::move(entries));
}

void check_compatible(const LocalParameterization& param, const TriangleMesh& mesh) {
  if (param.vertex_count() != mesh.vertex_count()) {
    throw ValidationError("parameterization has " + std::to_string(param.vertex_count()) + " rows but the mesh has " +
                          std::to_string(mesh.vertex_count()) + " vertices");
  }
  const auto pos = mesh.positions();
  for (VertexId v = 0; v < mesh.vertex_count(); ++v) {
    const auto row = param.row(v);
    for (VertexId w : mesh.topology().neighbors(v)) {
      const double edge = (pos[w] - pos[v]).norm();
      if (edge > param.spec().radius) continue;
      auto it = std::lower_bound(row.begin(), row.end(), w,
                                 [](const PolarCoordinate& p, VertexId id) { return p.vertex < id; });
      if (it == row.end() || it->vertex != w || it->rho != edge) {
        throw ValidationError("parameterization does not match the mesh at vertex " + std::to_string(v));
      }
    }
  }
}

void write_parameterization(std::ostream& out, const LocalParameterization& param) {
  using namespace binary;
  put_magic(out, kMagic);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(param.vertex_count()));
  put<double>(out, param.spec().radius);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(param.spec().n_rho));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(param.spec().n_theta));
  for (VertexId v = 0; v < param.vertex_count(); ++v) {
    const auto row = param.row(v);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(row.size()));
    for (const auto& p : row) {
      put<std::uint32_t>(out, p.vertex);
      put<double>(out, p.rho);
      put<double>(out, p.theta);
    }
  }
  if (!out) throw IoError("failed writing parameterization");
}

namespace {

struct Header {
  std::uint32_t vertex_count;
  GridSpec spec;
};

Header read_header(std::istream& in) {
  using namespace binary;
  expect_magic(in, kMagic);
  Header h;
  h.vertex_count = get<std::uint32_t>(in, "vertex count");
  h.spec.radius = get<double>(in, "radius");
  h.spec.n_rho = static_cast<int>(get<std::uint32_t>(in, "n_rho"));
  h.spec.n_theta = static_cast<int>(get<std::uint32_t>(in, "n_theta"));
  return h;
}

}  // namespace

LocalParameterization read_parameterization(std::istream& in) {
  using namespace binary;
  const Header h = read_header(in);
  try {
    h.spec.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("bad parameterization header: ") + e.what());
  }
  std::vector<std::uint32_t> offsets(h.vertex_count + 1, 0);
  std::vector<PolarCoordinate> entries;
  for (std::uint32_t v = 0; v < h.vertex_count; ++v) {
    const auto count = get<std::uint32_t>(in, "row length");
    if (count >= h.vertex_count) throw ParseError("row length exceeds the vertex count");
    for (std::uint32_t i = 0; i < count; ++i) {
      PolarCoordinate p;
      p.vertex = get<std::uint32_t>(in, "member id");
      p.rho = get<double>(in, "rho");
      p.theta = get<double>(in, "theta");
      if (p.vertex >= h.vertex_count) throw ParseError("member id out of range");
      entries.push_back(p);
    }
    offsets[v + 1] = offsets[v] + count;
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after parameterization");
  return LocalParameterization(h.spec, std::move(offsets), std::move(entries));
}

void save_parameterization(const std::filesystem::path& path, const LocalParameterization& param) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_parameterization(out, param);
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

LocalParameterization load_parameterization(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_parameterization(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

bool cache_matches(const std::filesystem::path& path, std::size_t vertex_count, const GridSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  try {
    const Header h = read_header(in);
    return h.vertex_count == vertex_count && h.spec.radius == spec.radius && h.spec.n_rho == spec.n_rho &&
           h.spec.n_theta == spec.n_theta;
  } catch (const ParseError&) {
    return false;
  }
}

}  // namespace gcnnlp::geodesic
