#include "gcnnlp/pipeline.hpp"

#include "gcnnlp/affine.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

namespace gcnnlp::pipeline {
namespace fs = std::filesystem;
namespace {

const std::vector<std::string> kMethods = {"gcnn-lp", "gcnn-ip3", "gcnn-ip6", "affine"};

const std::vector<std::string> kOwnKeys = {
    "method", "methods", "test_subjects", "test_count", "work_dir", "cohort_dir", "cache_dir", "model_dir",
    "prediction_dir", "error_map_dir", "report", "checkpoint", "threads", "verbose"};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    out.push_back(item.substr(a, item.find_last_not_of(" \t") - a + 1));
  }
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

// Runs work(i) for i in [0, n) on up to `threads` workers and rethrows the
// failure of the smallest index.
template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& work) {
  std::vector<std::exception_ptr> failures(n);
  auto run = [&](std::size_t i) {
    try {
      work(i);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) run(i);
      });
    }
  }
  for (auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
}

synth::ManifestEntry baseline_only(synth::ManifestEntry e) {
  e.flag3 = e.flag6 = false;
  return e;
}

// Settings that shape the results; worker count and logging are left out so
// artifacts do not depend on them.
Config provenance(const Experiment& ex) {
  Config c;
  for (const auto& [k, v] : ex.raw.items()) {
    if (k != "threads" && k != "verbose") c.set(k, v);
  }
  for (const auto& [k, v] : ex.network.to_config().items()) c.set(k, v);
  return c;
}

}  // namespace

bool is_method(const std::string& name) { return std::find(kMethods.begin(), kMethods.end(), name) != kMethods.end(); }

std::string method_label(const std::string& method) {
  return method == "gcnn-ip3" || method == "gcnn-ip6" ? "gcnn-ip" : method;
}

std::vector<std::string> Experiment::keys() {
  std::vector<std::string> k = kOwnKeys;
  for (const auto& key : net::NetworkConfig::keys()) k.push_back(key);
  for (const auto& key : synth::CohortSpec::keys()) k.push_back(key);
  return k;
}

Experiment Experiment::from_config(const Config& config) {
  config.require_known(keys());
  Experiment ex;
  ex.raw = config;
  ex.network = net::NetworkConfig::from_config(config);
  ex.network.validate();
  ex.cohort = synth::CohortSpec::from_config(config);
  ex.cohort.validate();
  ex.method = config.get("method", ex.method);
  if (!is_method(ex.method)) throw ConfigError("unknown method '" + ex.method + "'");
  ex.methods = split_list(config.get("methods", ex.method));
  for (const auto& m : ex.methods) {
    if (!is_method(m)) throw ConfigError("unknown method '" + m + "' in methods");
  }
  ex.test_subjects = split_list(config.get("test_subjects", ""));
  ex.test_count = static_cast<int>(config.get_int("test_count", ex.test_count));
  if (ex.test_count < 0) throw ConfigError("test_count must not be negative");
  ex.work_dir = config.get("work_dir", ex.work_dir.string());
  ex.cohort_dir = config.get("cohort_dir", (ex.work_dir / "cohort").string());
  ex.cache_dir = config.get("cache_dir", (ex.work_dir / "cache").string());
  ex.model_dir = config.get("model_dir", (ex.work_dir / "models").string());
  ex.prediction_dir = config.get("prediction_dir", (ex.work_dir / "predictions").string());
  ex.error_map_dir = config.get("error_map_dir", (ex.work_dir / "error_maps").string());
  ex.report_path = config.get("report", (ex.work_dir / "report.txt").string());
  ex.checkpoint_path = config.get("checkpoint", "");
  const auto threads = config.get_int("threads", 1);
  if (threads < 1 || threads > 256) throw ConfigError("threads must lie in [1, 256]");
  ex.threads = static_cast<unsigned>(threads);
  ex.verbose = config.get_bool("verbose", false);
  for (const fs::path* p : {&ex.cohort_dir, &ex.cache_dir, &ex.model_dir, &ex.prediction_dir, &ex.error_map_dir,
                            &ex.report_path}) {
    if (p->empty()) throw ConfigError("paths must not be empty");
  }
  return ex;
}

fs::path Experiment::checkpoint_for(const std::string& m) const {
  if (!checkpoint_path.empty() && m == method) return checkpoint_path;
  return model_dir / (m + (m == "affine" ? ".affine" : ".ckpt"));
}

fs::path Experiment::loss_curve_for(const std::string& m) const { return model_dir / (m + ".loss"); }

fs::path Experiment::cache_path(const std::string& subject, int channel) const {
  return cache_dir / (subject + (channel == 0 ? "_inner.gpg" : "_outer.gpg"));
}

// generate --------------------------------------------------------------------

synth::GeneratedCohort cmd_generate(const Experiment& ex, std::ostream& log) {
  auto cohort = synth::generate_cohort(ex.cohort, ex.threads);
  synth::save_cohort(ex.cohort_dir, cohort);
  log << "generate: " << cohort.samples.size() << " subjects written to " << ex.cohort_dir.string() << '\n';
  if (ex.verbose) log << synth::cohort_report(cohort.samples).format();
  return cohort;
}

// parametrize -----------------------------------------------------------------

std::size_t cmd_parametrize(const Experiment& ex, std::ostream& log) {
  const auto manifest = synth::load_manifest(ex.cohort_dir);
  ensure_dir(ex.cache_dir);
  const geodesic::GridSpec& spec = ex.network.grid;
  std::vector<std::string> lines(manifest.size());
  std::vector<std::size_t> computed(manifest.size(), 0);
  // Work is split over subjects, so each parameterization runs single-threaded.
  parallel_for(manifest.size(), ex.threads, [&](std::size_t i) {
    const auto& entry = manifest[i];
    const LongitudinalSample sample = synth::load_subject(ex.cohort_dir, baseline_only(entry));
    std::ostringstream msg;
    for (int c = 0; c < 2; ++c) {
      const TriangleMesh& mesh = c == 0 ? sample.month1.inner : sample.month1.outer;
      const fs::path path = ex.cache_path(entry.subject_id, c);
      if (geodesic::cache_matches(path, mesh.vertex_count(), spec)) {
        try {
          geodesic::check_compatible(geodesic::load_parameterization(path), mesh);
          msg << "parametrize: cache hit " << path.string() << ", skipped\n";
          continue;
        } catch (const Error&) {
          // stale or damaged cache: rebuild below
        }
      }
      try {
        geodesic::save_parameterization(path, geodesic::parameterize_surface(mesh, spec));
      } catch (const Error& e) {
        throw Error("subject " + entry.subject_id + ": " + e.what());
      }
      ++computed[i];
      msg << "parametrize: wrote " << path.string() << '\n';
    }
    lines[i] = msg.str();
  });
  for (const auto& l : lines) log << l;
  std::size_t total = 0;
  for (auto c : computed) total += c;
  log << "parametrize: " << total << " surfaces computed, " << 2 * manifest.size() - total << " cached\n";
  return total;
}

std::pair<geodesic::LocalParameterization, geodesic::LocalParameterization> load_caches(const Experiment& ex,
                                                                                         const std::string& subject) {
  std::array<geodesic::LocalParameterization, 2> out;
  for (int c = 0; c < 2; ++c) {
    const fs::path path = ex.cache_path(subject, c);
    if (!fs::exists(path)) throw IoError("missing parameterization cache " + path.string() + "; run parametrize first");
    out[c] = geodesic::load_parameterization(path);
    if (!(out[c].spec().radius == ex.network.grid.radius && out[c].spec().n_rho == ex.network.grid.n_rho &&
          out[c].spec().n_theta == ex.network.grid.n_theta)) {
      throw ConfigError("cache " + path.string() + " was built with a different grid; rerun parametrize");
    }
  }
  return {std::move(out[0]), std::move(out[1])};
}

// train -----------------------------------------------------------------------

std::vector<std::string> resolve_test_subjects(const Experiment& ex, std::span<const synth::ManifestEntry> manifest) {
  std::vector<std::string> ids;
  if (!ex.test_subjects.empty()) {
    for (const auto& id : ex.test_subjects) {
      auto it = std::find_if(manifest.begin(), manifest.end(), [&](const auto& e) { return e.subject_id == id; });
      if (it == manifest.end()) throw ConfigError("test subject " + id + " is not in the cohort");
      if (!(it->flag3 && it->flag6)) throw ConfigError("test subject " + id + " lacks a month-3 or month-6 surface");
      if (std::find(ids.begin(), ids.end(), id) != ids.end()) throw ConfigError("test subject " + id + " listed twice");
      ids.push_back(id);
    }
    return ids;
  }
  for (const auto& e : manifest) {
    if (static_cast<int>(ids.size()) == ex.test_count) break;
    if (e.flag3 && e.flag6) ids.push_back(e.subject_id);
  }
  if (static_cast<int>(ids.size()) < ex.test_count) {
    throw ConfigError("the cohort has only " + std::to_string(ids.size()) + " complete subjects for " +
                      std::to_string(ex.test_count) + " test subjects");
  }
  return ids;
}

void cmd_train(const Experiment& ex, std::ostream& log) {
  const auto manifest = synth::load_manifest(ex.cohort_dir);
  const auto test = resolve_test_subjects(ex, manifest);
  std::vector<LongitudinalSample> samples;
  for (const auto& e : manifest) {
    if (std::find(test.begin(), test.end(), e.subject_id) == test.end()) samples.push_back(synth::load_subject(ex.cohort_dir, e));
  }
  if (samples.empty()) throw Error("no training subjects left after holding out the test set");
  ensure_dir(ex.model_dir);
  const fs::path out = ex.checkpoint_for(ex.method);

  if (ex.method == "affine") {
    affine::save_growth_model(out, affine::fit_growth(samples));
    log << "train: affine growth model fitted on " << samples.size() << " subjects, written to " << out.string() << '\n';
    return;
  }

  const net::Variant variant = net::parse_variant(ex.method);
  std::vector<net::NetworkInputs> inputs;
  inputs.reserve(samples.size());
  for (const auto& s : samples) {
    auto [inner, outer] = load_caches(ex, s.subject_id);
    inputs.push_back(net::build_inputs(s, inner, outer));
  }
  net::TrainOptions options;
  options.threads = ex.threads;
  if (ex.verbose) {
    options.on_update = [&](const net::LossRecord& r) {
      if (r.update % 100 == 0 || r.update == 1) log << "train: update " << r.update << " loss " << r.loss << '\n';
    };
  }
  net::TrainResult result = net::train(variant, ex.network, samples, inputs, options);
  result.checkpoint.echo = provenance(ex);
  result.checkpoint.echo.set("test_subjects", [&] {
    std::string s;
    for (const auto& id : test) s += (s.empty() ? "" : ",") + id;
    return s;
  }());
  net::save_checkpoint(out, result.checkpoint);
  net::save_loss_curve(ex.loss_curve_for(ex.method), result.curve);
  log << "train: " << ex.method << " trained for " << result.curve.size() << " updates on " << samples.size()
      << " subjects, written to " << out.string() << '\n';
}

// predict ---------------------------------------------------------------------

void cmd_predict(const Experiment& ex, std::ostream& log) {
  const auto manifest = synth::load_manifest(ex.cohort_dir);
  const auto test = resolve_test_subjects(ex, manifest);
  const fs::path path = ex.checkpoint_for(ex.method);
  std::optional<affine::AffineGrowthModel> af;
  std::optional<net::Checkpoint> ck;
  if (ex.method == "affine") {
    af = affine::load_growth_model(path);
  } else {
    ck = net::load_checkpoint(path);
    if (net::variant_name(ck->model.variant) != ex.method) {
      throw ConfigError(path.string() + " holds a " + net::variant_name(ck->model.variant) + " model, not " + ex.method);
    }
  }
  for (const auto& id : test) {
    auto entry = *std::find_if(manifest.begin(), manifest.end(), [&](const auto& e) { return e.subject_id == id; });
    const LongitudinalSample sample = synth::load_subject(ex.cohort_dir, baseline_only(entry));
    Prediction p;
    if (af) {
      p = affine::apply_growth(*af, sample.month1);
    } else {
      auto [inner, outer] = load_caches(ex, id);
      p = net::predict(*ck, sample.month1, inner, outer);
    }
    const fs::path dir = ex.prediction_dir / ex.method / id;
    ensure_dir(dir);
    int written = 0;
    for (const auto& [month, pair] : {std::pair{3, &p.month3}, std::pair{6, &p.month6}}) {
      if (!*pair) continue;
      save_mesh(dir / ("inner_m" + std::to_string(month) + ".off"), (*pair)->inner);
      save_mesh(dir / ("outer_m" + std::to_string(month) + ".off"), (*pair)->outer);
      written += 2;
    }
    log << "predict: " << id << " -> " << written << " meshes in " << dir.string() << '\n';
  }
}

// evaluate --------------------------------------------------------------------

metrics::EvalReport cmd_evaluate(const Experiment& ex, std::ostream& log) {
  const auto manifest = synth::load_manifest(ex.cohort_dir);
  const auto test = resolve_test_subjects(ex, manifest);
  metrics::EvalReport report;
  std::vector<LongitudinalSample> truths;
  for (const auto& id : test) {
    truths.push_back(synth::load_subject(
        ex.cohort_dir, *std::find_if(manifest.begin(), manifest.end(), [&](const auto& e) { return e.subject_id == id; })));
  }
  for (const auto& method : ex.methods) {
    const fs::path map_dir = ex.error_map_dir / method;
    ensure_dir(map_dir);
    std::size_t scored = 0;
    for (const LongitudinalSample& truth : truths) {
      for (int month : {3, 6}) {
        const fs::path dir = ex.prediction_dir / method / truth.subject_id;
        const std::string m = std::to_string(month);
        const fs::path inner_path = dir / ("inner_m" + m + ".off");
        const fs::path outer_path = dir / ("outer_m" + m + ".off");
        if (!fs::exists(inner_path) || !fs::exists(outer_path)) continue;
        const SurfacePair& t = month == 3 ? *truth.month3 : *truth.month6;
        const TriangleMesh inner = load_mesh(inner_path);
        const TriangleMesh outer = load_mesh(outer_path);
        const SurfacePair pred{t.inner.with_positions(std::vector<Vec3>(inner.positions().begin(), inner.positions().end())),
                               t.outer.with_positions(std::vector<Vec3>(outer.positions().begin(), outer.positions().end()))};
        const std::string stem = truth.subject_id + "_m" + m;
        metrics::error_map(map_dir / (stem + "_inner.txt"), pred.inner, t.inner);
        metrics::error_map(map_dir / (stem + "_outer.txt"), pred.outer, t.outer);
        metrics::thickness_error_map(map_dir / (stem + "_thickness.txt"), pred, t);
        report.add(metrics::score(truth.subject_id, method_label(method), month, pred, t));
        ++scored;
      }
    }
    if (scored == 0) throw IoError("no predictions of " + method + " found under " + (ex.prediction_dir / method).string());
  }
  if (!ex.report_path.parent_path().empty()) ensure_dir(ex.report_path.parent_path());
  std::ofstream out(ex.report_path);
  if (!out) throw IoError("cannot write " + ex.report_path.string());
  out << report.format(provenance(ex));
  out.close();
  if (!out) throw IoError("failed writing " + ex.report_path.string());
  log << "evaluate: report written to " << ex.report_path.string() << '\n';
  if (ex.verbose) log << report.format();
  return report;
}

// inspect ---------------------------------------------------------------------

std::string cmd_inspect(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in && std::string(magic, 4) == "GCNN") return net::describe_checkpoint(net::load_checkpoint(path));
  const auto model = affine::load_growth_model(path);
  std::ostringstream out;
  out << "format: affine growth model\n";
  affine::write_growth_model(out, model);
  return out.str();
}

}  // namespace gcnnlp::pipeline
