#pragma once

#include "gcnnlp/autodiff.hpp"
#include "gcnnlp/geodesics.hpp"
#include "gcnnlp/random.hpp"

#include <memory>
#include <vector>

namespace gcnnlp::layers {

using ad::Parameter;
using ad::Tape;
using ad::Tensor;
using ad::Var;

/// Theta reduced to [0, 2*pi) by an exact floating-point remainder.
double wrap_angle(double theta);

/// Gaussian interpolation weight of a local coordinate (rho, theta) for one
/// kernel with diagonal covariance given as log-variances. The angular
/// residual is taken after reducing theta to [0, 2*pi) and then wrapped to
/// (-pi, pi].
double kernel_weight(double rho, double theta, double mean_rho, double mean_theta, double logvar_rho,
                     double logvar_theta);

/// Flat copy of a parameterization, laid out for the convolution kernels.
struct PatchTable {
  geodesic::GridSpec spec;
  std::vector<std::uint32_t> offsets;  // per center, size |V| + 1
  std::vector<std::uint32_t> columns;  // member vertex per entry
  std::vector<double> rho;
  std::vector<double> theta;  // already in [0, 2*pi)

  std::size_t vertex_count() const { return offsets.size() - 1; }
  std::size_t entries() const { return columns.size(); }
  std::size_t kernel_count() const { return static_cast<std::size_t>(spec.n_rho * spec.n_theta); }

  static std::shared_ptr<const PatchTable> from(const geodesic::LocalParameterization& param);
};

using Patches = std::shared_ptr<const PatchTable>;

/// [entries x K] interpolation weights of every patch member for every
/// kernel. means and logvars are [K x 2], columns (rho, theta).
Var kernel_weights(const Patches& patches, Var means, Var logvars);

/// Rescales weights so that, per center and kernel, they sum to one.
Var normalize_weights(const Patches& patches, Var weights);

/// Virtual-vertex features [|V| x C*K], column c*K + kl holding
/// sum over members of weight(member, kl) * f(member, c).
Var uniformize_patch(const Patches& patches, Var features, Var weights);

/// Fused uniformization and filter: out(v, o) = sum over c, kl of
/// virtual(v, c*K + kl) * gamma(o, c*K + kl), without materializing the
/// virtual features for all vertices at once. gamma is [C_out x C_in*K].
Var patch_convolution(const Patches& patches, Var features, Var weights, Var gamma);

/// Learnable parameters of one uniformization + convolution sub-layer.
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  Parameter means;    // [K x 2]
  Parameter logvars;  // [K x 2]
  Parameter gamma;    // [C_out x C_in*K]
  Parameter bias;     // [C_out]

  std::vector<Parameter*> parameters() { return {&means, &logvars, &gamma, &bias}; }
  std::size_t parameter_count() const {
    return means.value.size() + logvars.value.size() + gamma.value.size() + bias.value.size();
  }
};

/// Kernel means on the grid-cell centers jittered by up to 20% of a bin,
/// log-variances making one standard deviation one bin wide, gamma Glorot
/// uniform over fans C*K, zero bias.
ConvLayer make_conv_layer(int in_channels, int out_channels, const geodesic::GridSpec& spec, Rng& rng,
                          const std::string& name = "conv");

struct ConvOptions {
  bool use_bias = true;
  bool normalize_weights = false;
  bool fused = true;
};

/// One spatial convolution: kernel weights, uniformization, filter and bias.
Var spatial_conv(Tape& tape, Var features, ConvLayer& layer, const Patches& patches, const ConvOptions& options = {});

/// Pointwise linear head x [n x in] * weight [in x out] + bias [out].
struct LinearHead {
  Parameter weight;
  Parameter bias;

  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
  std::size_t parameter_count() const { return weight.value.size() + bias.value.size(); }
};

LinearHead make_linear_head(int in, int out, Rng& rng, const std::string& name = "head");
Var linear_head(Tape& tape, Var x, LinearHead& head, bool use_bias = true);

}  // namespace gcnnlp::layers
