#pragma once

#include "gcnnlp/config.hpp"
#include "gcnnlp/mesh.hpp"
#include "gcnnlp/surfaces.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gcnnlp::synth {

enum class GrowthMode : std::uint8_t {
  Nonlinear = 0,  // radial expansion, regional growth, deepening folds
  Affine = 1,     // one shared affine map per transition
};

/// Parameters of the synthetic growth model. Months are indexed 0, 1, 2
/// for months 1, 3 and 6.
struct GrowthModel {
  GrowthMode mode = GrowthMode::Nonlinear;
  double base_radius = 15.0;  // mm
  double radius_spread = 0.08;  // relative standard deviation across subjects
  double anisotropy = 0.10;     // population P2 elongation of the baseline
  std::array<double, 3> expansion{1.0, 1.15, 1.3};
  /// Absolute-growth coupling: subject growth rate scales as
  /// (base_radius / R_s)^catch_up.
  double catch_up = 1.0;
  double regional = 0.15;  // relative extra expansion along the anisotropy axis
  std::array<double, 3> sulcation{0.03, 0.05, 0.065};
  int sulcation_terms = 10;
  int min_degree = 3;
  int max_degree = 7;
  std::array<double, 3> thickness{1.6, 1.9, 2.1};  // mm, profile means
  double thickness_variation = 0.15;  // relative, |Q| <= 1
  /// Relative thickening of gyral crowns, factor 1 + fold_thickness * tanh(S).
  std::array<double, 3> fold_thickness{0.0, 0.1, 0.16};
  /// Affine mode: linear part minus identity per transition.
  std::array<double, 2> affine_strength{0.18, 0.11};
  double max_growth = 5.0;  // mm per transition

  void validate() const;
};

struct CohortSpec {
  int subjects = 37;
  int complete = 23;
  int missing6 = 5;  // month-3 present, month-6 missing
  int missing3 = 9;  // month-6 present, month-3 missing
  int level = 4;
  std::uint64_t seed = 1;
  GrowthModel growth;

  void validate() const;
  Config to_config() const;
  /// Reads generator keys; ignores the others. `split` accepts "a/b/c".
  static CohortSpec from_config(const Config& config);
  static const std::vector<std::string>& keys();
};

struct GeneratedCohort {
  CohortSpec spec;
  std::vector<LongitudinalSample> samples;
  std::vector<std::uint64_t> seeds;
  /// Ground-truth growth at both months, including months flagged missing.
  std::vector<GrowthMaps> growth;
};

/// Deterministic in the spec; per-subject work may run on `threads`
/// workers without changing the output. Throws ConfigError when a
/// transition exceeds growth.max_growth.
GeneratedCohort generate_cohort(const CohortSpec& spec, unsigned threads = 1);

/// Complete pair sequence of one subject at months 1, 3, 6.
std::array<SurfacePair, 3> generate_subject(const CohortSpec& spec, const TriangleMesh& sphere, std::uint64_t seed);

struct MonthSummary {
  std::size_t available = 0;
  double mean_thickness = 0.0;
  /// Mean |x_M - x_1| over both surfaces of available subjects.
  double mean_displacement = 0.0;
};

struct CohortReport {
  std::size_t subjects = 0;
  std::size_t complete = 0;
  std::size_t only3 = 0;
  std::size_t only6 = 0;
  std::array<MonthSummary, 3> months;

  std::string format() const;
};

CohortReport cohort_report(std::span<const LongitudinalSample> samples);

// On-disk layout ------------------------------------------------------------

struct ManifestEntry {
  std::string subject_id;
  bool flag3 = false;
  bool flag6 = false;
  std::uint64_t seed = 0;
};

std::string subject_name(std::size_t index);

void save_cohort(const std::filesystem::path& dir, const GeneratedCohort& cohort);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& dir);
std::vector<LongitudinalSample> load_cohort(const std::filesystem::path& dir);
LongitudinalSample load_subject(const std::filesystem::path& dir, const ManifestEntry& entry);

}  // namespace gcnnlp::synth
