#include "gcnnlp/model.hpp"

#include "gcnnlp/random.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gcnnlp::net {
namespace {

constexpr std::uint64_t kShuffleStream = 0x7368756666ULL;

struct RmsAccumulator {
  double sum = 0.0;
  std::size_t count = 0;

  void add(const Vec3& d) {
    sum += d.squaredNorm();
    count += 3;
  }
  double rms() const { return count ? std::sqrt(sum / static_cast<double>(count)) : 0.0; }
};

double usable(double scale) { return scale > 0.0 && std::isfinite(scale) ? scale : 1.0; }

bool finite_gradients(GcnnModel& model, std::string& where) {
  for (Parameter* p : model.parameters()) {
    for (double g : p->grad.values()) {
      if (!std::isfinite(g)) {
        where = p->name;
        return false;
      }
    }
  }
  return true;
}

}  // namespace

bool eligible(Variant variant, const LongitudinalSample& sample) {
  switch (variant) {
    case Variant::LP: return sample.flag3() || sample.flag6();
    case Variant::IP3: return sample.flag3();
    case Variant::IP6: return sample.flag6();
  }
  return false;
}

IoScales fit_scales(Variant variant, const NetworkConfig& config, std::span<const LongitudinalSample> samples,
                    std::span<const NetworkInputs> inputs) {
  IoScales scales;
  if (!config.normalize_io) return scales;
  RmsAccumulator in, g3, g6;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const LongitudinalSample& sample = samples[s];
    if (!eligible(variant, sample)) continue;
    for (const ChannelInput& ch : inputs[s].channels) {
      for (double f : ch.features.values()) {
        in.sum += f * f;
        ++in.count;
      }
    }
    const std::array<const TriangleMesh*, 2> m1 = {&sample.month1.inner, &sample.month1.outer};
    for (int c = 0; c < 2; ++c) {
      if (sample.month3) {
        const TriangleMesh& m3 = c == 0 ? sample.month3->inner : sample.month3->outer;
        for (VertexId v = 0; v < m3.vertex_count(); ++v) g3.add(m3.position(v) - m1[c]->position(v));
      }
      if (sample.month6) {
        const TriangleMesh& m6 = c == 0 ? sample.month6->inner : sample.month6->outer;
        if (variant == Variant::IP6) {
          for (VertexId v = 0; v < m6.vertex_count(); ++v) g6.add(m6.position(v) - m1[c]->position(v));
        } else if (sample.month3) {
          const TriangleMesh& m3 = c == 0 ? sample.month3->inner : sample.month3->outer;
          for (VertexId v = 0; v < m6.vertex_count(); ++v) g6.add(m6.position(v) - m3.position(v));
        }
      }
    }
  }
  scales.input = 1.0 / usable(in.rms());
  scales.month3 = usable(g3.rms());
  scales.month6 = usable(g6.rms());
  return scales;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t epoch, std::size_t eligible_count) {
  std::vector<std::size_t> order(eligible_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(derive_seed(seed, kShuffleStream), epoch));
  shuffle(order.begin(), order.end(), rng);
  return order;
}

TrainResult train(Variant variant, const NetworkConfig& config, std::span<const LongitudinalSample> samples,
                  std::span<const NetworkInputs> inputs, const TrainOptions& options) {
  config.validate();
  if (samples.size() != inputs.size()) throw Error("one input set per training sample is required");
  if (samples.empty()) throw Error("training cohort is empty");
  std::vector<std::size_t> pool;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    if (eligible(variant, samples[s])) pool.push_back(s);
  }
  if (pool.empty()) throw Error("no training sample has a month predicted by " + variant_name(variant));
  const std::size_t vertex_count = inputs[pool.front()].vertex_count();
  for (std::size_t s : pool) {
    if (inputs[s].vertex_count() != vertex_count) throw ValidationError("training meshes differ in vertex count");
  }

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  std::uint64_t start = 0;
  if (options.resume) {
    const Checkpoint& from = *options.resume;
    if (from.model.variant != variant) throw ConfigError("cannot resume a " + variant_name(from.model.variant) + " checkpoint");
    if (!from.adam) throw ConfigError("resumed checkpoint carries no optimizer state");
    if (from.updates > config.max_updates) throw ConfigError("checkpoint is already past max_updates");
    if (from.vertex_count != vertex_count) throw ValidationError("checkpoint vertex count differs from the cohort");
    ck = from;
    ck.model.config = config;
    start = from.updates;
  } else {
    ck.model = make_model(variant, config);
    ck.model.scales = fit_scales(variant, config, samples, inputs);
    ck.adam = ad::make_adam_state(ck.model.parameters());
  }
  ck.vertex_count = vertex_count;
  ck.echo = config.to_config();
  ck.echo.set("variant", variant_name(variant));

  GcnnModel& model = ck.model;
  const std::vector<Parameter*> params = model.parameters();
  std::vector<std::size_t> order;
  std::uint64_t order_epoch = ~std::uint64_t{0};
  double previous = std::nan("");
  for (std::uint64_t update = start + 1; update <= config.max_updates; ++update) {
    const std::uint64_t epoch = (update - 1) / pool.size();
    if (epoch != order_epoch) {
      order = epoch_order(config.seed, epoch, pool.size());
      order_epoch = epoch;
    }
    const std::size_t index = pool[order[(update - 1) % pool.size()]];
    const LongitudinalSample& sample = samples[index];
    const double loss = loss_and_gradient(model, inputs[index], sample, options.threads);
    const double lr = config.learning_rate_at(update);
    std::string where;
    if (!std::isfinite(loss) || !finite_gradients(model, where)) {
      std::ostringstream msg;
      msg << "training diverged at update " << update << " on subject " << sample.subject_id << ": ";
      if (!std::isfinite(loss)) {
        msg << "loss " << loss;
      } else {
        msg << "non-finite gradient in " << where << " (loss " << loss << ")";
      }
      msg << ", lr " << lr << ", previous loss " << previous;
      throw DivergenceError(msg.str());
    }
    ad::adam_step(params, *ck.adam, lr, config.adam);
    const LossRecord record{update, loss, lr, index};
    result.curve.push_back(record);
    if (options.on_update) options.on_update(record);
    previous = loss;
  }
  ck.updates = config.max_updates;
  for (Parameter* p : params) p->zero_grad();
  if (!options.keep_adam) ck.adam.reset();
  return result;
}

void write_loss_curve(std::ostream& out, std::span<const LossRecord> curve) {
  for (const LossRecord& r : curve) out << r.update << ' ' << format_double(r.loss) << ' ' << format_double(r.learning_rate) << '\n';
}

void save_loss_curve(const std::filesystem::path& path, std::span<const LossRecord> curve) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_loss_curve(out, curve);
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace gcnnlp::net
