#pragma once

#include "gcnnlp/config.hpp"
#include "gcnnlp/mesh.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace gcnnlp::metrics {

/// Median by selection; an even count gives the mean of the two middle
/// order statistics. Throws ValidationError on an empty input.
double median(std::vector<double> values);

/// Per-vertex Euclidean distance between corresponding vertices.
std::vector<double> position_errors(const TriangleMesh& pred, const TriangleMesh& truth);
/// Per-vertex |thickness(pred) - thickness(truth)|.
std::vector<double> thickness_errors(const SurfacePair& pred, const SurfacePair& truth);

double mae_cs(const TriangleMesh& pred, const TriangleMesh& truth);
double mae_ct(const SurfacePair& pred, const SurfacePair& truth);

// Scalar field files: "|V|" on the first line, then one value per line.
void write_scalar_field(std::ostream& out, std::span<const double> values);
std::vector<double> read_scalar_field(std::istream& in);
void save_scalar_field(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> load_scalar_field(const std::filesystem::path& path);

/// Writes the position error field and returns it.
std::vector<double> error_map(const std::filesystem::path& path, const TriangleMesh& pred, const TriangleMesh& truth);
/// Writes the thickness error field and returns it.
std::vector<double> thickness_error_map(const std::filesystem::path& path, const SurfacePair& pred,
                                        const SurfacePair& truth);

struct SubjectScore {
  std::string subject;
  std::string method;
  int month = 3;
  double mae_ct = 0.0;
  double mae_cs_inner = 0.0;
  double mae_cs_outer = 0.0;
};

SubjectScore score(const std::string& subject, const std::string& method, int month, const SurfacePair& pred,
                   const SurfacePair& truth);

struct CohortScore {
  std::string method;
  int month = 3;
  std::size_t subjects = 0;
  double mae_ct = 0.0;
  double mae_cs_inner = 0.0;
  double mae_cs_outer = 0.0;
};

class EvalReport {
 public:
  void add(SubjectScore s) { scores_.push_back(std::move(s)); }
  std::span<const SubjectScore> scores() const { return scores_; }

  /// Arithmetic means of the per-subject medians; one row per month {3, 6}
  /// times method, methods in first-seen order.
  std::vector<CohortScore> summary() const;
  /// Throws std::out_of_range when the pair was never scored.
  CohortScore summary(const std::string& method, int month) const;

  /// Table with a config header, the cohort averages and the per-subject rows.
  std::string format(const Config& header = {}) const;

 private:
  std::vector<SubjectScore> scores_;
};

}  // namespace gcnnlp::metrics
