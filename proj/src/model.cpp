#include "gcnnlp/model.hpp"

#include "gcnnlp/ops.hpp"
#include "gcnnlp/random.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace gcnnlp::net {
namespace {

std::uint64_t conv_stream(int channel, std::size_t layer) { return 1000u * static_cast<unsigned>(channel) + layer; }
std::uint64_t head_stream(int channel, int month) { return 1000u * static_cast<unsigned>(channel) + 100u + month; }

Tensor to_tensor(std::span<const Vec3> points) {
  Tensor t({points.size(), 3});
  for (std::size_t i = 0; i < points.size(); ++i) {
    t[3 * i] = points[i].x();
    t[3 * i + 1] = points[i].y();
    t[3 * i + 2] = points[i].z();
  }
  return t;
}

std::vector<Vec3> to_points(const Tensor& t) {
  std::vector<Vec3> out(t.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = Vec3(t[3 * i], t[3 * i + 1], t[3 * i + 2]);
  return out;
}

Tensor to_tensor(std::span<const double> values) {
  return Tensor({values.size()}, std::vector<double>(values.begin(), values.end()));
}

std::string join(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

// Runs f(0) on a worker and f(1) here when threads > 1, else both in order.
template <typename F>
void for_each_channel(unsigned threads, F&& f) {
  if (threads > 1) {
    std::exception_ptr failure;
    {
      std::jthread worker([&] {
        try {
          f(1);
        } catch (...) {
          failure = std::current_exception();
        }
      });
      f(0);
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    f(0);
    f(1);
  }
}

}  // namespace

std::string variant_name(Variant variant) {
  switch (variant) {
    case Variant::LP: return "gcnn-lp";
    case Variant::IP3: return "gcnn-ip3";
    case Variant::IP6: return "gcnn-ip6";
  }
  throw ConfigError("unknown variant");
}

Variant parse_variant(const std::string& name) {
  if (name == "gcnn-lp" || name == "lp") return Variant::LP;
  if (name == "gcnn-ip3" || name == "ip3") return Variant::IP3;
  if (name == "gcnn-ip6" || name == "ip6") return Variant::IP6;
  throw ConfigError("unknown network variant '" + name + "'");
}

bool predicts_month3(Variant variant) { return variant != Variant::IP6; }
bool predicts_month6(Variant variant) { return variant != Variant::IP3; }

// NetworkConfig ---------------------------------------------------------------

void NetworkConfig::validate() const {
  if (channels.empty()) throw ConfigError("channels must not be empty");
  for (int c : channels) {
    if (c < 1) throw ConfigError("channel sizes must be positive");
  }
  if (head3_after < 1 || head3_after >= static_cast<int>(channels.size())) {
    throw ConfigError("head3_after must lie in [1, " + std::to_string(channels.size() - 1) + "]");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  grid.validate();
  if (!(learning_rate > 0.0) || !(late_learning_rate > 0.0)) throw ConfigError("learning rates must be positive");
  if (max_updates < 1) throw ConfigError("max_updates must be at least 1");
  if (schedule_switch > max_updates) throw ConfigError("lr_switch must not exceed max_updates");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.epsilon > 0.0)) {
    throw ConfigError("invalid Adam constants");
  }
}

double NetworkConfig::learning_rate_at(std::uint64_t update) const {
  return update <= schedule_switch ? learning_rate : late_learning_rate;
}

const std::vector<std::string>& NetworkConfig::keys() {
  static const std::vector<std::string> k = {
      "channels", "head3_after", "alpha", "radius", "n_rho", "n_theta", "lr", "lr_late", "lr_switch",
      "max_updates", "seed", "activation", "bias", "normalize_weights", "normalize_io", "adam_beta1",
      "adam_beta2", "adam_epsilon"};
  return k;
}

Config NetworkConfig::to_config() const {
  Config c;
  c.set("channels", join(channels));
  c.set("head3_after", std::to_string(head3_after));
  c.set("alpha", format_double(alpha));
  c.set("radius", format_double(grid.radius));
  c.set("n_rho", std::to_string(grid.n_rho));
  c.set("n_theta", std::to_string(grid.n_theta));
  c.set("lr", format_double(learning_rate));
  c.set("lr_late", format_double(late_learning_rate));
  c.set("lr_switch", std::to_string(schedule_switch));
  c.set("max_updates", std::to_string(max_updates));
  c.set("seed", std::to_string(seed));
  c.set("activation", activation == Activation::Relu ? "relu" : "tanh");
  c.set("bias", use_bias ? "true" : "false");
  c.set("normalize_weights", normalize_weights ? "true" : "false");
  c.set("normalize_io", normalize_io ? "true" : "false");
  c.set("adam_beta1", format_double(adam.beta1));
  c.set("adam_beta2", format_double(adam.beta2));
  c.set("adam_epsilon", format_double(adam.epsilon));
  return c;
}

NetworkConfig NetworkConfig::from_config(const Config& c) {
  NetworkConfig n;
  n.channels = c.get_int_list("channels", n.channels);
  n.head3_after = static_cast<int>(c.get_int("head3_after", n.head3_after));
  n.alpha = c.get_double("alpha", n.alpha);
  n.grid.radius = c.get_double("radius", n.grid.radius);
  n.grid.n_rho = static_cast<int>(c.get_int("n_rho", n.grid.n_rho));
  n.grid.n_theta = static_cast<int>(c.get_int("n_theta", n.grid.n_theta));
  n.learning_rate = c.get_double("lr", n.learning_rate);
  n.late_learning_rate = c.get_double("lr_late", n.late_learning_rate);
  n.max_updates = c.get_u64("max_updates", n.max_updates);
  n.schedule_switch = c.get_u64("lr_switch", std::min(n.schedule_switch, n.max_updates));
  n.seed = c.get_u64("seed", n.seed);
  const std::string act = c.get("activation", "relu");
  if (act == "relu") {
    n.activation = Activation::Relu;
  } else if (act == "tanh") {
    n.activation = Activation::Tanh;
  } else {
    throw ConfigError("activation must be relu or tanh, got '" + act + "'");
  }
  n.use_bias = c.get_bool("bias", n.use_bias);
  n.normalize_weights = c.get_bool("normalize_weights", n.normalize_weights);
  n.normalize_io = c.get_bool("normalize_io", n.normalize_io);
  n.adam.beta1 = c.get_double("adam_beta1", n.adam.beta1);
  n.adam.beta2 = c.get_double("adam_beta2", n.adam.beta2);
  n.adam.epsilon = c.get_double("adam_epsilon", n.adam.epsilon);
  return n;
}

// Model -----------------------------------------------------------------------

std::size_t GcnnModel::depth() const { return channels[0].convs.size(); }

std::vector<Parameter*> GcnnModel::channel_parameters(int channel) {
  std::vector<Parameter*> out;
  Channel& ch = channels.at(static_cast<std::size_t>(channel));
  for (auto& conv : ch.convs) {
    for (Parameter* p : conv.parameters()) out.push_back(p);
  }
  if (ch.head3) {
    for (Parameter* p : ch.head3->parameters()) out.push_back(p);
  }
  if (ch.head6) {
    for (Parameter* p : ch.head6->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<Parameter*> GcnnModel::parameters() {
  std::vector<Parameter*> out = channel_parameters(0);
  for (Parameter* p : channel_parameters(1)) out.push_back(p);
  return out;
}

std::size_t GcnnModel::parameter_count() const {
  std::size_t n = 0;
  for (const Channel& ch : channels) {
    for (const auto& conv : ch.convs) n += conv.parameter_count();
    if (ch.head3) n += ch.head3->parameter_count();
    if (ch.head6) n += ch.head6->parameter_count();
  }
  return n;
}

int conv_input_width(Variant variant, const NetworkConfig& config, std::size_t layer) {
  if (layer == 0) return 3;
  int width = config.channels.at(layer - 1);
  if (variant == Variant::LP && layer == static_cast<std::size_t>(config.head3_after)) width += 3;
  return width;
}

namespace {

std::size_t variant_depth(Variant variant, const NetworkConfig& config) {
  return variant == Variant::IP3 ? static_cast<std::size_t>(config.head3_after) : config.channels.size();
}

}  // namespace

std::size_t expected_parameter_count(Variant variant, const NetworkConfig& config) {
  const std::size_t k = static_cast<std::size_t>(config.grid.n_rho * config.grid.n_theta);
  const std::size_t depth = variant_depth(variant, config);
  std::size_t per_channel = 0;
  for (std::size_t i = 0; i < depth; ++i) {
    const auto in = static_cast<std::size_t>(conv_input_width(variant, config, i));
    const auto out = static_cast<std::size_t>(config.channels[i]);
    per_channel += 4 * k + out * in * k + out;
  }
  if (predicts_month3(variant)) per_channel += static_cast<std::size_t>(config.channels[config.head3_after - 1]) * 3 + 3;
  if (predicts_month6(variant)) per_channel += static_cast<std::size_t>(config.channels.back()) * 3 + 3;
  return 2 * per_channel;
}

GcnnModel make_model(Variant variant, const NetworkConfig& config) {
  config.validate();
  GcnnModel model;
  model.variant = variant;
  model.config = config;
  const std::size_t depth = variant_depth(variant, config);
  for (int c = 0; c < 2; ++c) {
    Channel& ch = model.channels[static_cast<std::size_t>(c)];
    const std::string prefix = c == 0 ? "inner." : "outer.";
    for (std::size_t i = 0; i < depth; ++i) {
      Rng rng(derive_seed(config.seed, conv_stream(c, i)));
      ch.convs.push_back(layers::make_conv_layer(conv_input_width(variant, config, i), config.channels[i], config.grid,
                                                 rng, prefix + "conv" + std::to_string(i + 1)));
    }
    if (predicts_month3(variant)) {
      Rng rng(derive_seed(config.seed, head_stream(c, 3)));
      ch.head3 = layers::make_linear_head(config.channels[config.head3_after - 1], 3, rng, prefix + "head3");
    }
    if (predicts_month6(variant)) {
      Rng rng(derive_seed(config.seed, head_stream(c, 6)));
      ch.head6 = layers::make_linear_head(config.channels.back(), 3, rng, prefix + "head6");
    }
  }
  return model;
}

// Inputs ----------------------------------------------------------------------

NetworkInputs build_inputs(const SurfacePair& baseline, const geodesic::LocalParameterization& inner,
                           const geodesic::LocalParameterization& outer) {
  baseline.validate();
  geodesic::check_compatible(inner, baseline.inner);
  geodesic::check_compatible(outer, baseline.outer);
  NetworkInputs inputs;
  const TriangleMesh* meshes[2] = {&baseline.inner, &baseline.outer};
  const geodesic::LocalParameterization* params[2] = {&inner, &outer};
  for (int c = 0; c < 2; ++c) {
    ChannelInput& in = inputs.channels[static_cast<std::size_t>(c)];
    in.features = to_tensor(neighborhood_difference_map(*meshes[c]));
    in.patches = layers::PatchTable::from(*params[c]);
    in.baseline.assign(meshes[c]->positions().begin(), meshes[c]->positions().end());
  }
  return inputs;
}

NetworkInputs build_inputs(const LongitudinalSample& sample, const geodesic::LocalParameterization& inner,
                           const geodesic::LocalParameterization& outer) {
  return build_inputs(sample.month1, inner, outer);
}

// Forward ---------------------------------------------------------------------

ChannelOutputs forward_channel(Tape& tape, GcnnModel& model, int channel, const ChannelInput& input) {
  Channel& ch = model.channels.at(static_cast<std::size_t>(channel));
  const NetworkConfig& cfg = model.config;
  if (input.features.rank() != 2 || input.features.dim(1) != 3 ||
      input.features.dim(0) != input.patches->vertex_count()) {
    throw ShapeError("network input " + ad::shape_string(input.features.shape()) + " for a parameterization of " +
                     std::to_string(input.patches->vertex_count()) + " vertices");
  }
  const layers::ConvOptions options{cfg.use_bias, cfg.normalize_weights, true};
  const std::size_t last = cfg.channels.size() - 1;

  ChannelOutputs out;
  Var x = ad::scale(tape.constant(input.features), model.scales.input);
  out.widths.push_back(x.value().dim(1));
  Var raw3;
  for (std::size_t i = 0; i < ch.convs.size(); ++i) {
    if (raw3.valid() && i == static_cast<std::size_t>(cfg.head3_after)) {
      x = ad::concat({x, raw3}, 1);
      out.widths.push_back(x.value().dim(1));
    }
    x = layers::spatial_conv(tape, x, ch.convs[i], input.patches, options);
    if (i != last) x = cfg.activation == Activation::Relu ? ad::relu(x) : ad::tanh(x);
    out.widths.push_back(x.value().dim(1));
    if (ch.head3 && i + 1 == static_cast<std::size_t>(cfg.head3_after)) {
      out.hidden3 = x;
      raw3 = layers::linear_head(tape, x, *ch.head3, cfg.use_bias);
      out.month3 = ad::scale(raw3, model.scales.month3);
      out.widths.push_back(raw3.value().dim(1));
    }
  }
  if (ch.head6) {
    Var raw6 = layers::linear_head(tape, x, *ch.head6, cfg.use_bias);
    out.month6 = ad::scale(raw6, model.scales.month6);
    out.widths.push_back(raw6.value().dim(1));
  }
  return out;
}

ForwardResult forward(const GcnnModel& model, const NetworkInputs& inputs) {
  // Parameters are only read: no backward pass runs on these tapes.
  auto& mutable_model = const_cast<GcnnModel&>(model);
  ForwardResult result;
  for (int c = 0; c < 2; ++c) {
    Tape tape;
    ChannelOutputs out = forward_channel(tape, mutable_model, c, inputs.channels[static_cast<std::size_t>(c)]);
    if (out.month3.valid()) result.growth.month3[c] = to_points(out.month3.value());
    if (out.month6.valid()) result.growth.month6[c] = to_points(out.month6.value());
    result.widths[c] = std::move(out.widths);
  }
  return result;
}

// Surfaces and losses ---------------------------------------------------------

Var surface_loss(Tape& tape, Var inner, Var outer, const SurfacePair& truth, double alpha) {
  const std::size_t n = truth.inner.vertex_count();
  if (inner.value().shape() != ad::Shape{n, 3} || outer.value().shape() != ad::Shape{n, 3}) {
    throw ShapeError("predicted surfaces do not match a truth of " + std::to_string(n) + " vertices");
  }
  Var ti = tape.constant(to_tensor(truth.inner.positions()));
  Var to = tape.constant(to_tensor(truth.outer.positions()));
  Var disp = ad::add(ad::sum_all(ad::squared_norm_rows(ad::sub(inner, ti))),
                     ad::sum_all(ad::squared_norm_rows(ad::sub(outer, to))));
  Var th_pred = ad::sqrt(ad::squared_norm_rows(ad::sub(outer, inner)));
  Var th_true = tape.constant(to_tensor(std::span<const double>(thickness(truth))));
  Var thick = ad::sum_all(ad::abs(ad::sub(th_pred, th_true)));
  return ad::add(ad::scale(disp, alpha), ad::scale(thick, 1.0 - alpha));
}

namespace {

Var sum_terms(const std::vector<Var>& terms) {
  Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return total;
}

}  // namespace

double total_loss(const Prediction& predicted, const LongitudinalSample& sample, double alpha) {
  Tape tape;
  std::vector<Var> terms;
  auto add_term = [&](const std::optional<SurfacePair>& pred, const std::optional<SurfacePair>& truth) {
    if (!pred || !truth) return;
    terms.push_back(surface_loss(tape, tape.constant(to_tensor(pred->inner.positions())),
                                 tape.constant(to_tensor(pred->outer.positions())), *truth, alpha));
  };
  add_term(predicted.month3, sample.month3);
  add_term(predicted.month6, sample.month6);
  return terms.empty() ? 0.0 : sum_terms(terms).value()[0];
}

double loss_and_gradient(GcnnModel& model, const NetworkInputs& inputs, const LongitudinalSample& sample,
                         unsigned threads) {
  for (Parameter* p : model.parameters()) p->zero_grad();
  if (inputs.vertex_count() != sample.month1.inner.vertex_count()) {
    throw ShapeError("inputs do not belong to sample " + sample.subject_id);
  }

  std::array<Tape, 2> tapes;
  std::array<ChannelOutputs, 2> outs;
  for_each_channel(threads, [&](int c) { outs[c] = forward_channel(tapes[c], model, c, inputs.channels[c]); });

  // The loss couples the channels through thickness; it lives on its own
  // tape whose leaves stand in for the channel outputs.
  Tape tape;
  std::array<Parameter, 2> leaf3, leaf6;
  std::array<Var, 2> pos3, pos6;
  for (int c = 0; c < 2; ++c) {
    Var base = tape.constant(to_tensor(inputs.channels[c].baseline));
    if (outs[c].month3.valid()) {
      leaf3[c] = Parameter("o3", outs[c].month3.value());
      pos3[c] = ad::add(base, tape.parameter(leaf3[c]));
    }
    if (outs[c].month6.valid()) {
      leaf6[c] = Parameter("o6", outs[c].month6.value());
      pos6[c] = ad::add(pos3[c].valid() ? pos3[c] : base, tape.parameter(leaf6[c]));
    }
  }
  std::vector<Var> terms;
  if (pos3[0].valid() && sample.month3) terms.push_back(surface_loss(tape, pos3[0], pos3[1], *sample.month3, model.config.alpha));
  if (pos6[0].valid() && sample.month6) terms.push_back(surface_loss(tape, pos6[0], pos6[1], *sample.month6, model.config.alpha));
  if (terms.empty()) return 0.0;
  Var total = sum_terms(terms);
  tape.backward(total);

  auto flowed = [](const Parameter& leaf) {
    for (double g : leaf.grad.values()) {
      if (g != 0.0) return true;
    }
    return false;
  };
  for_each_channel(threads, [&](int c) {
    std::vector<Var> outputs;
    std::vector<Tensor> seeds;
    if (outs[c].month3.valid() && flowed(leaf3[c])) {
      outputs.push_back(outs[c].month3);
      seeds.push_back(leaf3[c].grad);
    }
    if (outs[c].month6.valid() && flowed(leaf6[c])) {
      outputs.push_back(outs[c].month6);
      seeds.push_back(leaf6[c].grad);
    }
    if (!outputs.empty()) tapes[c].backward(outputs, seeds);
  });
  return total.value()[0];
}

}  // namespace gcnnlp::net
