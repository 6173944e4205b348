#include "gcnnlp/error.hpp"
#include "gcnnlp/mesh.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace gcnnlp {
namespace {

// Yields whitespace-separated tokens, skipping blank lines and lines whose
// first non-blank character is '#'.
class OffTokenizer {
 public:
  explicit OffTokenizer(std::istream& in) : in_(in) {}

  std::string next(const char* what) {
    while (!(line_ >> token_)) {
      std::string raw;
      if (!std::getline(in_, raw)) throw ParseError(std::string("unexpected end of OFF data while reading ") + what);
      ++line_no_;
      const auto first = raw.find_first_not_of(" \t\r");
      if (first == std::string::npos || raw[first] == '#') continue;
      line_.clear();
      line_.str(raw);
    }
    return token_;
  }

  std::size_t line() const { return line_no_; }

 private:
  std::istream& in_;
  std::istringstream line_;
  std::string token_;
  std::size_t line_no_ = 0;
};

template <typename T>
T parse_number(const std::string& token, const OffTokenizer& tok, const char* what) {
  T value{};
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("line " + std::to_string(tok.line()) + ": invalid " + what + " '" + token + "'");
  }
  return value;
}

}  // namespace

TriangleMesh read_off(std::istream& in) {
  OffTokenizer tok(in);
  if (tok.next("header") != "OFF") throw ParseError("missing OFF header");
  const auto nv = parse_number<std::size_t>(tok.next("vertex count"), tok, "vertex count");
  const auto nf = parse_number<std::size_t>(tok.next("face count"), tok, "face count");
  parse_number<std::size_t>(tok.next("edge count"), tok, "edge count");

  std::vector<Vec3> positions(nv);
  for (auto& p : positions) {
    for (int k = 0; k < 3; ++k) p[k] = parse_number<double>(tok.next("coordinate"), tok, "coordinate");
  }
  std::vector<Face> faces(nf);
  for (auto& f : faces) {
    const auto arity = parse_number<int>(tok.next("face arity"), tok, "face arity");
    if (arity != 3) throw ParseError("line " + std::to_string(tok.line()) + ": only triangular faces are supported");
    for (int k = 0; k < 3; ++k) f[k] = parse_number<VertexId>(tok.next("face index"), tok, "face index");
  }
  return TriangleMesh::create(std::move(positions), std::move(faces));
}

TriangleMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_off(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void write_off(std::ostream& out, const TriangleMesh& mesh, int significant_digits) {
  out << "OFF\n" << mesh.vertex_count() << ' ' << mesh.face_count() << " 0\n";
  char buf[128];
  for (const Vec3& p : mesh.positions()) {
    std::snprintf(buf, sizeof buf, "%.*g %.*g %.*g\n", significant_digits, p.x(), significant_digits, p.y(),
                  significant_digits, p.z());
    out << buf;
  }
  for (const Face& f : mesh.topology().faces()) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

void save_mesh(const std::filesystem::path& path, const TriangleMesh& mesh, int significant_digits) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_off(out, mesh, significant_digits);
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<Vec3> quantize_positions(std::span<const Vec3> positions, int significant_digits) {
  std::vector<Vec3> out(positions.size());
  char buf[64];
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (int k = 0; k < 3; ++k) {
      std::snprintf(buf, sizeof buf, "%.*g", significant_digits, positions[i][k]);
      out[i][k] = std::strtod(buf, nullptr);
    }
  }
  return out;
}

}  // namespace gcnnlp
