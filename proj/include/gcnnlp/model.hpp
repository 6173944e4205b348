#pragma once

#include "gcnnlp/adam.hpp"
#include "gcnnlp/autodiff.hpp"
#include "gcnnlp/config.hpp"
#include "gcnnlp/geodesics.hpp"
#include "gcnnlp/layers.hpp"
#include "gcnnlp/mesh.hpp"
#include "gcnnlp/surfaces.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gcnnlp::net {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using gcnnlp::GrowthMaps;
using gcnnlp::Prediction;

/// LP predicts months 3 and 6 jointly; IP3 and IP6 are the single-month
/// ablations.
enum class Variant : std::uint8_t { LP = 0, IP3 = 1, IP6 = 2 };

std::string variant_name(Variant variant);  // gcnn-lp, gcnn-ip3, gcnn-ip6
Variant parse_variant(const std::string& name);
bool predicts_month3(Variant variant);
bool predicts_month6(Variant variant);

enum class Activation : std::uint8_t { Relu = 0, Tanh = 1 };

struct NetworkConfig {
  std::vector<int> channels{36, 72, 36, 18, 9, 3};
  int head3_after = 3;  // number of conv layers before the month-3 head
  double alpha = 0.5;
  geodesic::GridSpec grid;
  double learning_rate = 1e-4;
  double late_learning_rate = 1e-5;
  std::uint64_t schedule_switch = 5000;  // last update run at learning_rate
  std::uint64_t max_updates = 25000;
  std::uint64_t seed = 1;
  Activation activation = Activation::Relu;
  bool use_bias = true;
  bool normalize_weights = false;
  bool normalize_io = true;
  ad::AdamConfig adam;

  /// Throws ConfigError on an invalid combination.
  void validate() const;
  /// Learning rate of 1-based update `update`.
  double learning_rate_at(std::uint64_t update) const;

  /// Every field as key=value. from_config ignores keys it does not know;
  /// when lr_switch is absent it defaults to min(5000, max_updates).
  Config to_config() const;
  static NetworkConfig from_config(const Config& config);
  static const std::vector<std::string>& keys();
};

struct Channel {
  std::vector<layers::ConvLayer> convs;
  std::optional<layers::LinearHead> head3;
  std::optional<layers::LinearHead> head6;
};

/// Input features are multiplied by input_scale; head outputs by the
/// per-month output scale to give millimetres.
struct IoScales {
  double input = 1.0;
  double month3 = 1.0;
  double month6 = 1.0;
};

class GcnnModel {
 public:
  Variant variant = Variant::LP;
  NetworkConfig config;
  IoScales scales;
  std::array<Channel, 2> channels;

  /// Fixed order: channel, then conv layers (means, logvars, gamma, bias),
  /// then month-3 head, then month-6 head (weight, bias).
  std::vector<Parameter*> parameters();
  std::vector<Parameter*> channel_parameters(int channel);
  std::size_t parameter_count() const;
  /// Number of conv layers per channel for this variant.
  std::size_t depth() const;
};

/// Fresh model. Each conv layer and head draws from its own stream derived
/// from (seed, channel, position), so IP3 starts from LP's first layers.
GcnnModel make_model(Variant variant, const NetworkConfig& config);

/// Closed-form parameter count from the channel sizes and grid.
std::size_t expected_parameter_count(Variant variant, const NetworkConfig& config);

/// Conv input width of layer i (0-based).
int conv_input_width(Variant variant, const NetworkConfig& config, std::size_t layer);

// Inputs ----------------------------------------------------------------------

struct ChannelInput {
  Tensor features;  // |V| x 3 neighborhood differences, unscaled
  layers::Patches patches;
  std::vector<Vec3> baseline;  // month-1 positions
};

struct NetworkInputs {
  std::array<ChannelInput, 2> channels;
  std::size_t vertex_count() const { return channels[0].baseline.size(); }
};

/// Throws ValidationError when a parameterization does not fit its mesh.
NetworkInputs build_inputs(const SurfacePair& baseline, const geodesic::LocalParameterization& inner,
                           const geodesic::LocalParameterization& outer);
NetworkInputs build_inputs(const LongitudinalSample& sample, const geodesic::LocalParameterization& inner,
                           const geodesic::LocalParameterization& outer);

// Forward -------------------------------------------------------------------

/// Differentiable outputs of one channel, in mm. Absent months are invalid
/// Vars. widths lists the per-vertex width after the input and each layer,
/// heads in their position.
struct ChannelOutputs {
  Var month3;
  Var month6;
  Var hidden3;  // features fed to the month-3 head
  std::vector<std::size_t> widths;
};

ChannelOutputs forward_channel(Tape& tape, GcnnModel& model, int channel, const ChannelInput& input);

struct ForwardResult {
  GrowthMaps growth;
  std::array<std::vector<std::size_t>, 2> widths;
};

ForwardResult forward(const GcnnModel& model, const NetworkInputs& inputs);

// Surfaces and losses ---------------------------------------------------------

/// alpha * sum of squared position errors over both surfaces plus
/// (1 - alpha) * sum of absolute thickness errors. Positions are |V| x 3.
Var surface_loss(Tape& tape, Var inner, Var outer, const SurfacePair& truth, double alpha);

/// Sum over predicted months whose ground truth is present. A missing
/// month adds no term at all.
double total_loss(const Prediction& predicted, const LongitudinalSample& sample, double alpha);

/// Loss and gradient for one sample. Parameter grads are overwritten.
/// Channels run on separate tapes, concurrently when threads > 1; the
/// result does not depend on the thread count.
double loss_and_gradient(GcnnModel& model, const NetworkInputs& inputs, const LongitudinalSample& sample,
                         unsigned threads = 1);

// Training ------------------------------------------------------------------

/// Whether a sample contributes any loss term to `variant`.
bool eligible(Variant variant, const LongitudinalSample& sample);

/// RMS-based scales from the training samples; all ones when
/// config.normalize_io is false.
IoScales fit_scales(Variant variant, const NetworkConfig& config, std::span<const LongitudinalSample> samples,
                    std::span<const NetworkInputs> inputs);

struct LossRecord {
  std::uint64_t update = 0;  // 1-based
  double loss = 0.0;         // before the update's step
  double learning_rate = 0.0;
  std::size_t sample = 0;  // index into the training list
};

struct Checkpoint {
  GcnnModel model;
  Config echo;  // NetworkConfig plus any extra provenance keys
  std::uint64_t vertex_count = 0;
  std::uint64_t updates = 0;
  std::optional<ad::AdamState> adam;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

struct TrainOptions {
  unsigned threads = 1;
  bool keep_adam = true;
  std::function<void(const LossRecord&)> on_update;
  /// Continue from this checkpoint; it must carry Adam state.
  const Checkpoint* resume = nullptr;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> curve;
};

/// Adam with batch size one. Eligible samples are visited in epochs, each
/// epoch a shuffle seeded by (seed, epoch). Throws DivergenceError when a
/// loss or gradient is not finite.
TrainResult train(Variant variant, const NetworkConfig& config, std::span<const LongitudinalSample> samples,
                  std::span<const NetworkInputs> inputs, const TrainOptions& options = {});

/// Sample order of one epoch.
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::uint64_t epoch, std::size_t eligible_count);

void write_loss_curve(std::ostream& out, std::span<const LossRecord> curve);
void save_loss_curve(const std::filesystem::path& path, std::span<const LossRecord> curve);

// Prediction and persistence -------------------------------------------------

/// Throws ValidationError when the baseline size differs from the
/// checkpoint's vertex count.
Prediction predict(const Checkpoint& checkpoint, const SurfacePair& baseline,
                   const geodesic::LocalParameterization& inner, const geodesic::LocalParameterization& outer);

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Human-readable metadata: variant, sizes, parameter counts, config echo.
std::string describe_checkpoint(const Checkpoint& checkpoint);

}  // namespace gcnnlp::net
