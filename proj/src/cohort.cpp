#include "gcnnlp/cohort.hpp"

#include "gcnnlp/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace gcnnlp::synth {
namespace {

constexpr std::uint64_t kSplitStream = 0x73706c6974ULL;
constexpr std::uint64_t kAffineStream = 0x6166666e65ULL;
constexpr const char* kManifest = "manifest.txt";
const char* const kMonthNames[3] = {"m1", "m3", "m6"};

double legendre(int degree, double x) {
  if (degree == 0) return 1.0;
  double p0 = 1.0, p1 = x;
  for (int l = 2; l <= degree; ++l) {
    const double p2 = ((2.0 * l - 1.0) * x * p1 - (l - 1.0) * p0) / l;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

// Sum of zonal harmonics about random axes: a band-limited random field.
struct ZonalField {
  std::vector<Vec3> axes;
  std::vector<int> degrees;
  std::vector<double> weights;

  static ZonalField random(Rng& rng, int terms, int min_degree, int max_degree) {
    ZonalField f;
    for (int k = 0; k < terms; ++k) {
      double a[3];
      rng.unit_vector(a);
      f.axes.emplace_back(a[0], a[1], a[2]);
      f.degrees.push_back(min_degree + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_degree - min_degree + 1))));
      f.weights.push_back(rng.normal());
    }
    return f;
  }

  std::vector<double> evaluate(std::span<const Vec3> directions) const {
    std::vector<double> out(directions.size(), 0.0);
    for (std::size_t i = 0; i < directions.size(); ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < axes.size(); ++k) s += weights[k] * legendre(degrees[k], directions[i].dot(axes[k]));
      out[i] = s;
    }
    return out;
  }
};

void scale_to_rms(std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v * v;
  const double rms = std::sqrt(sum / static_cast<double>(values.size()));
  if (rms > 0.0) {
    for (double& v : values) v /= rms;
  }
}

void scale_to_max(std::vector<double>& values) {
  double peak = 0.0;
  for (double v : values) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : values) v /= peak;
  }
}

struct AffineMap {
  Eigen::Matrix3d linear;
  Vec3 translation;
};

std::array<AffineMap, 2> population_affines(const CohortSpec& spec) {
  Rng rng(derive_seed(spec.seed, kAffineStream));
  std::array<AffineMap, 2> maps;
  for (int t = 0; t < 2; ++t) {
    Eigen::Matrix3d b;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) b(i, j) = i == j ? 1.0 + rng.uniform(-0.25, 0.25) : rng.uniform(-0.15, 0.15);
    }
    maps[t].linear = Eigen::Matrix3d::Identity() + spec.growth.affine_strength[t] * b;
    for (int i = 0; i < 3; ++i) maps[t].translation[i] = rng.uniform(-0.5, 0.5);
  }
  return maps;
}

std::vector<Vec3> transform_points(const AffineMap& map, std::span<const Vec3> points) {
  std::vector<Vec3> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = map.linear * points[i] + map.translation;
  return out;
}

double max_step(std::span<const Vec3> a, std::span<const Vec3> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (b[i] - a[i]).norm());
  return m;
}

std::string join(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_double(values[i]);
  return out;
}

template <std::size_t N>
std::array<double, N> get_array(const Config& c, const std::string& key, const std::array<double, N>& fallback) {
  const auto list = c.get_double_list(key, std::vector<double>(fallback.begin(), fallback.end()));
  if (list.size() != N) throw ConfigError(key + " needs " + std::to_string(N) + " comma-separated values");
  std::array<double, N> out{};
  std::copy(list.begin(), list.end(), out.begin());
  return out;
}

}  // namespace

void GrowthModel::validate() const {
  if (!(base_radius > 0.0)) throw ConfigError("base_radius must be positive");
  if (!(radius_spread >= 0.0 && radius_spread < 0.3)) throw ConfigError("radius_spread must lie in [0, 0.3)");
  if (!(std::abs(anisotropy) < 0.5)) throw ConfigError("anisotropy must lie in (-0.5, 0.5)");
  for (double e : expansion) {
    if (!(e > 0.0)) throw ConfigError("expansion factors must be positive");
  }
  if (!(regional > -1.0 && regional < 2.0)) throw ConfigError("regional must lie in (-1, 2)");
  for (double s : sulcation) {
    if (!(s >= 0.0 && s < 0.2)) throw ConfigError("sulcation amplitudes must lie in [0, 0.2)");
  }
  if (sulcation_terms < 0 || min_degree < 1 || max_degree < min_degree) throw ConfigError("invalid sulcation band");
  for (double t : thickness) {
    if (!(t > 0.0)) throw ConfigError("thickness profile must be positive");
  }
  if (!(thickness_variation >= 0.0 && thickness_variation < 1.0)) {
    throw ConfigError("thickness_variation must lie in [0, 1)");
  }
  for (double f : fold_thickness) {
    if (!(f >= 0.0 && f < 1.0)) throw ConfigError("fold_thickness values must lie in [0, 1)");
  }
  if (!(max_growth > 0.0)) throw ConfigError("max_growth must be positive");
}

void CohortSpec::validate() const {
  if (subjects < 1) throw ConfigError("subject count must be positive");
  if (complete < 0 || missing6 < 0 || missing3 < 0 || complete + missing6 + missing3 != subjects) {
    throw ConfigError("availability split " + std::to_string(complete) + "/" + std::to_string(missing6) + "/" +
                      std::to_string(missing3) + " does not sum to " + std::to_string(subjects) + " subjects");
  }
  if (level < 0 || level > 7) throw ConfigError("mesh level must lie in [0, 7]");
  growth.validate();
}

const std::vector<std::string>& CohortSpec::keys() {
  static const std::vector<std::string> k = {
      "subjects", "split", "level", "cohort_seed", "growth_mode", "base_radius", "radius_spread", "anisotropy",
      "expansion", "catch_up", "regional", "sulcation", "sulcation_terms", "min_degree", "max_degree",
      "thickness", "thickness_variation", "fold_thickness", "affine_strength", "max_growth"};
  return k;
}

Config CohortSpec::to_config() const {
  Config c;
  c.set("subjects", std::to_string(subjects));
  c.set("split", std::to_string(complete) + "/" + std::to_string(missing6) + "/" + std::to_string(missing3));
  c.set("level", std::to_string(level));
  c.set("cohort_seed", std::to_string(seed));
  const GrowthModel& g = growth;
  c.set("growth_mode", g.mode == GrowthMode::Affine ? "affine" : "nonlinear");
  c.set("base_radius", format_double(g.base_radius));
  c.set("radius_spread", format_double(g.radius_spread));
  c.set("anisotropy", format_double(g.anisotropy));
  c.set("expansion", join(g.expansion));
  c.set("catch_up", format_double(g.catch_up));
  c.set("regional", format_double(g.regional));
  c.set("sulcation", join(g.sulcation));
  c.set("sulcation_terms", std::to_string(g.sulcation_terms));
  c.set("min_degree", std::to_string(g.min_degree));
  c.set("max_degree", std::to_string(g.max_degree));
  c.set("thickness", join(g.thickness));
  c.set("thickness_variation", format_double(g.thickness_variation));
  c.set("fold_thickness", join(g.fold_thickness));
  c.set("affine_strength", join(g.affine_strength));
  c.set("max_growth", format_double(g.max_growth));
  return c;
}

CohortSpec CohortSpec::from_config(const Config& c) {
  CohortSpec s;
  s.subjects = static_cast<int>(c.get_int("subjects", s.subjects));
  if (c.has("split")) {
    char slash1 = 0, slash2 = 0;
    std::istringstream in(c.get("split", ""));
    if (!(in >> s.complete >> slash1 >> s.missing6 >> slash2 >> s.missing3) || slash1 != '/' || slash2 != '/' ||
        !(in >> std::ws).eof()) {
      throw ConfigError("split must look like complete/missing6/missing3, got '" + c.get("split", "") + "'");
    }
  } else if (c.has("subjects")) {
    // Keep the default proportions when only the count changes.
    s.complete = s.subjects - s.missing6 - s.missing3;
    if (s.complete < 0) {
      s.complete = s.subjects;
      s.missing6 = s.missing3 = 0;
    }
  }
  s.level = static_cast<int>(c.get_int("level", s.level));
  s.seed = c.get_u64("cohort_seed", c.get_u64("seed", s.seed));
  GrowthModel& g = s.growth;
  const std::string mode = c.get("growth_mode", "nonlinear");
  if (mode == "nonlinear") {
    g.mode = GrowthMode::Nonlinear;
  } else if (mode == "affine") {
    g.mode = GrowthMode::Affine;
  } else {
    throw ConfigError("growth_mode must be nonlinear or affine, got '" + mode + "'");
  }
  g.base_radius = c.get_double("base_radius", g.base_radius);
  g.radius_spread = c.get_double("radius_spread", g.radius_spread);
  g.anisotropy = c.get_double("anisotropy", g.anisotropy);
  g.expansion = get_array(c, "expansion", g.expansion);
  g.catch_up = c.get_double("catch_up", g.catch_up);
  g.regional = c.get_double("regional", g.regional);
  g.sulcation = get_array(c, "sulcation", g.sulcation);
  g.sulcation_terms = static_cast<int>(c.get_int("sulcation_terms", g.sulcation_terms));
  g.min_degree = static_cast<int>(c.get_int("min_degree", g.min_degree));
  g.max_degree = static_cast<int>(c.get_int("max_degree", g.max_degree));
  g.thickness = get_array(c, "thickness", g.thickness);
  g.thickness_variation = c.get_double("thickness_variation", g.thickness_variation);
  g.fold_thickness = get_array(c, "fold_thickness", g.fold_thickness);
  g.affine_strength = get_array(c, "affine_strength", g.affine_strength);
  g.max_growth = c.get_double("max_growth", g.max_growth);
  return s;
}

std::string subject_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "subj%03zu", index);
  return buf;
}

std::array<SurfacePair, 3> generate_subject(const CohortSpec& spec, const TriangleMesh& sphere, std::uint64_t seed) {
  const GrowthModel& g = spec.growth;
  const auto dirs = sphere.positions();
  const std::size_t n = dirs.size();
  Rng rng(seed);

  const double spread = std::clamp(rng.normal(), -3.0, 3.0);
  const double radius = g.base_radius * (1.0 + g.radius_spread * spread);
  const double rate = std::pow(g.base_radius / radius, g.catch_up);
  std::vector<double> folds = ZonalField::random(rng, g.sulcation_terms, g.min_degree, g.max_degree).evaluate(dirs);
  scale_to_rms(folds);
  std::vector<double> profile = ZonalField::random(rng, 3, 1, 3).evaluate(dirs);
  scale_to_max(profile);

  std::array<std::vector<Vec3>, 3> inner, outer;
  const int months = g.mode == GrowthMode::Affine ? 1 : 3;
  for (int m = 0; m < months; ++m) {
    const double growth = (g.expansion[m] - 1.0) * rate;
    inner[m].resize(n);
    outer[m].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3& u = dirs[i];
      const double zonal = legendre(2, u.z());
      const double r = radius * (1.0 + g.anisotropy * zonal) * (1.0 + growth * (1.0 + g.regional * zonal)) *
                       (1.0 + g.sulcation[m] * folds[i]);
      const double t = g.thickness[m] * (1.0 + g.thickness_variation * profile[i]) *
                       (1.0 + g.fold_thickness[m] * std::tanh(folds[i]));
      inner[m][i] = r * u;
      outer[m][i] = (r + t) * u;
    }
    inner[m] = quantize_positions(inner[m]);
    outer[m] = quantize_positions(outer[m]);
  }
  if (g.mode == GrowthMode::Affine) {
    const auto maps = population_affines(spec);
    for (int m = 1; m < 3; ++m) {
      inner[m] = quantize_positions(transform_points(maps[m - 1], inner[m - 1]));
      outer[m] = quantize_positions(transform_points(maps[m - 1], outer[m - 1]));
    }
  }

  TriangleMesh base = TriangleMesh::create(inner[0], std::vector<Face>(sphere.topology().faces().begin(),
                                                                       sphere.topology().faces().end()));
  std::array<SurfacePair, 3> pairs = {
      SurfacePair{base, base.with_positions(std::move(outer[0]))},
      SurfacePair{base.with_positions(std::move(inner[1])), base.with_positions(std::move(outer[1]))},
      SurfacePair{base.with_positions(std::move(inner[2])), base.with_positions(std::move(outer[2]))},
  };
  for (const SurfacePair& p : pairs) {
    p.inner.validate_geometry();
    p.outer.validate_geometry();
  }
  return pairs;
}

GeneratedCohort generate_cohort(const CohortSpec& spec, unsigned threads) {
  spec.validate();
  const TriangleMesh sphere = make_icosphere(spec.level, 1.0);
  const auto count = static_cast<std::size_t>(spec.subjects);

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(derive_seed(spec.seed, kSplitStream));
  shuffle(order.begin(), order.end(), split_rng);
  std::vector<int> kind(count);  // 0 complete, 1 missing month 6, 2 missing month 3
  for (std::size_t k = 0; k < count; ++k) {
    const auto pos = static_cast<int>(k);
    kind[order[k]] = pos < spec.complete ? 0 : pos < spec.complete + spec.missing6 ? 1 : 2;
  }

  GeneratedCohort cohort;
  cohort.spec = spec;
  cohort.seeds.resize(count);
  cohort.growth.resize(count);
  std::vector<std::optional<LongitudinalSample>> slots(count);
  std::vector<std::string> failures(count);

  auto work = [&](std::size_t s) {
    try {
      const std::uint64_t seed = derive_seed(spec.seed, s);
      auto pairs = generate_subject(spec, sphere, seed);
      const std::string id = subject_name(s);
      for (int m = 1; m < 3; ++m) {
        const double step = std::max(max_step(pairs[m - 1].inner.positions(), pairs[m].inner.positions()),
                                     max_step(pairs[m - 1].outer.positions(), pairs[m].outer.positions()));
        if (step > spec.growth.max_growth) {
          failures[s] = "subject " + id + ": growth from " + kMonthNames[m - 1] + " to " + kMonthNames[m] + " reaches " +
                        format_double(step) + " mm, above max_growth " + format_double(spec.growth.max_growth);
          return;
        }
      }
      GrowthMaps& gm = cohort.growth[s];
      for (int c = 0; c < 2; ++c) {
        auto pos = [&](int m) { return c == 0 ? pairs[m].inner.positions() : pairs[m].outer.positions(); };
        std::vector<Vec3> o3(pos(0).size()), o6(pos(0).size());
        for (std::size_t i = 0; i < o3.size(); ++i) {
          o3[i] = pos(1)[i] - pos(0)[i];
          o6[i] = pos(2)[i] - pos(1)[i];
        }
        gm.month3[c] = std::move(o3);
        gm.month6[c] = std::move(o6);
      }
      LongitudinalSample sample{id, std::move(pairs[0]), std::nullopt, std::nullopt};
      if (kind[s] != 2) sample.month3 = std::move(pairs[1]);
      if (kind[s] != 1) sample.month6 = std::move(pairs[2]);
      cohort.seeds[s] = seed;
      slots[s] = std::move(sample);
    } catch (const std::exception& e) {
      failures[s] = "subject " + subject_name(s) + ": " + e.what();
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (workers == 1) {
    for (std::size_t s = 0; s < count; ++s) work(s);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t s = w; s < count; s += workers) work(s);
      });
    }
  }
  for (const std::string& f : failures) {
    if (!f.empty()) throw ConfigError(f);
  }
  for (auto& slot : slots) cohort.samples.push_back(std::move(*slot));
  return cohort;
}

// Report --------------------------------------------------------------------

CohortReport cohort_report(std::span<const LongitudinalSample> samples) {
  CohortReport r;
  r.subjects = samples.size();
  std::array<double, 3> thick{}, disp{};
  for (const LongitudinalSample& s : samples) {
    if (s.flag3() && s.flag6()) ++r.complete;
    if (s.flag3() && !s.flag6()) ++r.only3;
    if (!s.flag3() && s.flag6()) ++r.only6;
    const SurfacePair* pairs[3] = {&s.month1, s.month3 ? &*s.month3 : nullptr, s.month6 ? &*s.month6 : nullptr};
    for (int m = 0; m < 3; ++m) {
      if (!pairs[m]) continue;
      ++r.months[m].available;
      const auto t = thickness(*pairs[m]);
      thick[m] += std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
      double d = 0.0;
      const std::size_t n = t.size();
      for (std::size_t i = 0; i < n; ++i) {
        d += (pairs[m]->inner.position(i) - s.month1.inner.position(i)).norm();
        d += (pairs[m]->outer.position(i) - s.month1.outer.position(i)).norm();
      }
      disp[m] += d / static_cast<double>(2 * n);
    }
  }
  for (int m = 0; m < 3; ++m) {
    if (r.months[m].available == 0) continue;
    r.months[m].mean_thickness = thick[m] / static_cast<double>(r.months[m].available);
    r.months[m].mean_displacement = disp[m] / static_cast<double>(r.months[m].available);
  }
  return r;
}

std::string CohortReport::format() const {
  std::ostringstream out;
  out << "subjects " << subjects << " (complete " << complete << ", month 3 only " << only3 << ", month 6 only "
      << only6 << ")\n";
  out << "month  available  mean_thickness_mm  mean_displacement_mm\n";
  const int labels[3] = {1, 3, 6};
  char line[128];
  for (int m = 0; m < 3; ++m) {
    std::snprintf(line, sizeof line, "%5d  %9zu  %17.4f  %20.4f\n", labels[m], months[m].available,
                  months[m].mean_thickness, months[m].mean_displacement);
    out << line;
  }
  return out.str();
}

// Disk ----------------------------------------------------------------------

void save_cohort(const std::filesystem::path& dir, const GeneratedCohort& cohort) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / kManifest);
  if (!manifest) throw IoError("cannot write " + (dir / kManifest).string());
  manifest << "# synthetic longitudinal cohort\n";
  const Config spec = cohort.spec.to_config();
  for (const auto& [k, v] : spec.items()) manifest << "# " << k << '=' << v << '\n';
  manifest << "# subject flag3 flag6 seed\n";
  for (std::size_t s = 0; s < cohort.samples.size(); ++s) {
    const LongitudinalSample& sample = cohort.samples[s];
    const fs::path sub = dir / sample.subject_id;
    fs::create_directories(sub, ec);
    if (ec) throw IoError("cannot create " + sub.string() + ": " + ec.message());
    const SurfacePair* pairs[3] = {&sample.month1, sample.month3 ? &*sample.month3 : nullptr,
                                   sample.month6 ? &*sample.month6 : nullptr};
    for (int m = 0; m < 3; ++m) {
      const fs::path inner = sub / ("inner_" + std::string(kMonthNames[m]) + ".off");
      const fs::path outer = sub / ("outer_" + std::string(kMonthNames[m]) + ".off");
      if (pairs[m]) {
        save_mesh(inner, pairs[m]->inner);
        save_mesh(outer, pairs[m]->outer);
      } else {
        fs::remove(inner, ec);
        fs::remove(outer, ec);
      }
    }
    manifest << sample.subject_id << ' ' << sample.flag3() << ' ' << sample.flag6() << ' ' << cohort.seeds[s] << '\n';
  }
  manifest.close();
  if (!manifest) throw IoError("failed writing " + (dir / kManifest).string());
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifest;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    int f3 = -1, f6 = -1;
    if (!(ls >> e.subject_id >> f3 >> f6 >> e.seed) || (f3 != 0 && f3 != 1) || (f6 != 0 && f6 != 1)) {
      throw ParseError(path.string() + ":" + std::to_string(number) + ": expected 'subject flag3 flag6 seed'");
    }
    e.flag3 = f3 == 1;
    e.flag6 = f6 == 1;
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw ParseError(path.string() + ": no subjects listed");
  return entries;
}

LongitudinalSample load_subject(const std::filesystem::path& dir, const ManifestEntry& entry) {
  const auto sub = dir / entry.subject_id;
  auto load_pair = [&](int m, const std::optional<TriangleMesh>& base) {
    TriangleMesh inner = load_mesh(sub / ("inner_" + std::string(kMonthNames[m]) + ".off"));
    TriangleMesh outer = load_mesh(sub / ("outer_" + std::string(kMonthNames[m]) + ".off"));
    const TriangleMesh& ref = base ? *base : inner;
    if (!same_connectivity(ref, inner) || !same_connectivity(ref, outer)) {
      throw ValidationError("subject " + entry.subject_id + ": " + kMonthNames[m] +
                            " meshes do not share the baseline connectivity");
    }
    // Rebind every time point to one shared connectivity.
    return SurfacePair{ref.with_positions(std::vector<Vec3>(inner.positions().begin(), inner.positions().end())),
                       ref.with_positions(std::vector<Vec3>(outer.positions().begin(), outer.positions().end()))};
  };
  LongitudinalSample sample{entry.subject_id, load_pair(0, std::nullopt), std::nullopt, std::nullopt};
  if (entry.flag3) sample.month3 = load_pair(1, sample.month1.inner);
  if (entry.flag6) sample.month6 = load_pair(2, sample.month1.inner);
  sample.validate();
  return sample;
}

std::vector<LongitudinalSample> load_cohort(const std::filesystem::path& dir) {
  std::vector<LongitudinalSample> samples;
  for (const ManifestEntry& e : load_manifest(dir)) samples.push_back(load_subject(dir, e));
  return samples;
}

}  // namespace gcnnlp::synth
