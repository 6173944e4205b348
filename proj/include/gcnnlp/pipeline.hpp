#pragma once

#include "gcnnlp/cohort.hpp"
#include "gcnnlp/config.hpp"
#include "gcnnlp/metrics.hpp"
#include "gcnnlp/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace gcnnlp::pipeline {

/// Method selector: one of the three network variants or the affine baseline.
bool is_method(const std::string& name);
/// Row label in the evaluation table; the two single-month ablations share
/// the label gcnn-ip.
std::string method_label(const std::string& method);

/// Every setting of one experiment, from a flat key=value config.
struct Experiment {
  Config raw;
  net::NetworkConfig network;
  synth::CohortSpec cohort;
  std::string method = "gcnn-lp";
  std::vector<std::string> methods;  // evaluated methods, default {method}
  std::vector<std::string> test_subjects;  // empty: the first test_count complete subjects
  int test_count = 3;
  std::filesystem::path work_dir = "run";
  std::filesystem::path cohort_dir;
  std::filesystem::path cache_dir;
  std::filesystem::path model_dir;
  std::filesystem::path prediction_dir;
  std::filesystem::path error_map_dir;
  std::filesystem::path report_path;
  std::filesystem::path checkpoint_path;  // empty: model_dir/<method>.ckpt
  unsigned threads = 1;
  bool verbose = false;

  /// Throws ConfigError on unknown keys or invalid values.
  static Experiment from_config(const Config& config);
  static std::vector<std::string> keys();

  std::filesystem::path checkpoint_for(const std::string& method) const;
  std::filesystem::path loss_curve_for(const std::string& method) const;
  std::filesystem::path cache_path(const std::string& subject, int channel) const;
};

/// Writes the synthetic cohort to cohort_dir.
synth::GeneratedCohort cmd_generate(const Experiment& ex, std::ostream& log);

/// Builds GPG1 caches for every month-1 surface; existing caches that still
/// fit their mesh are kept. Returns the number of surfaces computed.
std::size_t cmd_parametrize(const Experiment& ex, std::ostream& log);

/// Held-out subjects: the configured ids, else the first test_count
/// complete subjects in manifest order. Throws ConfigError for unknown or
/// incomplete ids.
std::vector<std::string> resolve_test_subjects(const Experiment& ex, std::span<const synth::ManifestEntry> manifest);

/// Trains ex.method on the non-test subjects and writes its checkpoint
/// (and loss curve for network methods).
void cmd_train(const Experiment& ex, std::ostream& log);

/// Writes predicted OFF meshes of every test subject to
/// prediction_dir/<method>/<subject>/{inner,outer}_m{3,6}.off.
void cmd_predict(const Experiment& ex, std::ostream& log);

/// Scores the predictions of ex.methods against the ground truth, writes
/// error maps and the report, and returns the report.
metrics::EvalReport cmd_evaluate(const Experiment& ex, std::ostream& log);

/// Metadata of the checkpoint at `path` (network or affine).
std::string cmd_inspect(const std::filesystem::path& path);

/// Parameterizations of one subject's month-1 surfaces from the cache.
std::pair<geodesic::LocalParameterization, geodesic::LocalParameterization> load_caches(const Experiment& ex,
                                                                                         const std::string& subject);

}  // namespace gcnnlp::pipeline
