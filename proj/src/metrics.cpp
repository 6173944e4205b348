#include "gcnnlp/metrics.hpp"

#include "gcnnlp/surfaces.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gcnnlp::metrics {
namespace {

void require_same_size(std::size_t a, std::size_t b) {
  if (a != b) throw ValidationError("vertex counts differ: " + std::to_string(a) + " and " + std::to_string(b));
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty set");
  const std::size_t n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), mid);
  return (lower + upper) / 2.0;
}

std::vector<double> position_errors(const TriangleMesh& pred, const TriangleMesh& truth) {
  require_same_size(pred.vertex_count(), truth.vertex_count());
  std::vector<double> out(pred.vertex_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (pred.position(i) - truth.position(i)).norm();
  return out;
}

std::vector<double> thickness_errors(const SurfacePair& pred, const SurfacePair& truth) {
  require_same_size(pred.inner.vertex_count(), truth.inner.vertex_count());
  const auto tp = thickness(pred);
  const auto tt = thickness(truth);
  require_same_size(tp.size(), tt.size());
  std::vector<double> out(tp.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(tp[i] - tt[i]);
  return out;
}

double mae_cs(const TriangleMesh& pred, const TriangleMesh& truth) { return median(position_errors(pred, truth)); }
double mae_ct(const SurfacePair& pred, const SurfacePair& truth) { return median(thickness_errors(pred, truth)); }

void write_scalar_field(std::ostream& out, std::span<const double> values) {
  out << values.size() << '\n';
  for (double v : values) out << format_double(v) << '\n';
}

std::vector<double> read_scalar_field(std::istream& in) {
  std::size_t n = 0;
  if (!(in >> n)) throw ParseError("scalar field: missing vertex count");
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(in >> values[i])) throw ParseError("scalar field: expected " + std::to_string(n) + " values, read " + std::to_string(i));
  }
  if (!(in >> std::ws).eof()) throw ParseError("scalar field: trailing data");
  return values;
}

void save_scalar_field(const std::filesystem::path& path, std::span<const double> values) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_scalar_field(out, values);
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<double> load_scalar_field(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_scalar_field(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<double> error_map(const std::filesystem::path& path, const TriangleMesh& pred, const TriangleMesh& truth) {
  auto field = position_errors(pred, truth);
  save_scalar_field(path, field);
  return field;
}

std::vector<double> thickness_error_map(const std::filesystem::path& path, const SurfacePair& pred,
                                        const SurfacePair& truth) {
  auto field = thickness_errors(pred, truth);
  save_scalar_field(path, field);
  return field;
}

SubjectScore score(const std::string& subject, const std::string& method, int month, const SurfacePair& pred,
                   const SurfacePair& truth) {
  return SubjectScore{subject, method, month, mae_ct(pred, truth), mae_cs(pred.inner, truth.inner),
                      mae_cs(pred.outer, truth.outer)};
}

std::vector<CohortScore> EvalReport::summary() const {
  std::vector<std::string> methods;
  for (const SubjectScore& s : scores_) {
    if (std::find(methods.begin(), methods.end(), s.method) == methods.end()) methods.push_back(s.method);
  }
  std::vector<CohortScore> rows;
  for (int month : {3, 6}) {
    for (const std::string& m : methods) {
      CohortScore row{m, month, 0, 0.0, 0.0, 0.0};
      for (const SubjectScore& s : scores_) {
        if (s.method != m || s.month != month) continue;
        ++row.subjects;
        row.mae_ct += s.mae_ct;
        row.mae_cs_inner += s.mae_cs_inner;
        row.mae_cs_outer += s.mae_cs_outer;
      }
      if (row.subjects == 0) continue;
      const auto n = static_cast<double>(row.subjects);
      row.mae_ct /= n;
      row.mae_cs_inner /= n;
      row.mae_cs_outer /= n;
      rows.push_back(row);
    }
  }
  return rows;
}

CohortScore EvalReport::summary(const std::string& method, int month) const {
  for (const CohortScore& row : summary()) {
    if (row.method == method && row.month == month) return row;
  }
  throw std::out_of_range("no scores for " + method + " at month " + std::to_string(month));
}

std::string EvalReport::format(const Config& header) const {
  std::ostringstream out;
  for (const auto& [k, v] : header.items()) out << "# " << k << '=' << v << '\n';
  char line[160];
  out << "# mean over test subjects, mm\n";
  std::snprintf(line, sizeof line, "%-5s  %-9s  %8s  %12s  %12s  %8s\n", "month", "method", "MAE_ct", "MAE_cs_inner",
                "MAE_cs_outer", "subjects");
  out << line;
  for (const CohortScore& r : summary()) {
    std::snprintf(line, sizeof line, "%-5d  %-9s  %8.4f  %12.4f  %12.4f  %8zu\n", r.month, r.method.c_str(), r.mae_ct,
                  r.mae_cs_inner, r.mae_cs_outer, r.subjects);
    out << line;
  }
  out << "\n# per subject\n";
  std::snprintf(line, sizeof line, "%-10s  %-5s  %-9s  %8s  %12s  %12s\n", "subject", "month", "method", "MAE_ct",
                "MAE_cs_inner", "MAE_cs_outer");
  out << line;
  for (const SubjectScore& s : scores_) {
    std::snprintf(line, sizeof line, "%-10s  %-5d  %-9s  %8.4f  %12.4f  %12.4f\n", s.subject.c_str(), s.month,
                  s.method.c_str(), s.mae_ct, s.mae_cs_inner, s.mae_cs_outer);
    out << line;
  }
  return out.str();
}

}  // namespace gcnnlp::metrics
