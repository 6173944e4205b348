#include "gcnnlp/layers.hpp"

#include "gcnnlp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gcnnlp::layers {
namespace {

using ad::BackwardContext;
using ad::Shape;

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Vertices per block in the fused convolution; keeps the virtual-feature
// block in cache-friendly sizes for the widest layers.
constexpr std::size_t kChunkRows = 64;

void check_inputs(const PatchTable& patches, const Tensor& features, const Tensor& weights, const char* op) {
  const std::size_t k = patches.kernel_count();
  if (features.rank() != 2 || features.dim(0) != patches.vertex_count()) {
    throw ShapeError(std::string(op) + ": features " + ad::shape_string(features.shape()) + " for " +
                     std::to_string(patches.vertex_count()) + " vertices");
  }
  if (weights.rank() != 2 || weights.dim(0) != patches.entries() || weights.dim(1) != k) {
    throw ShapeError(std::string(op) + ": weights " + ad::shape_string(weights.shape()) + " for " +
                     std::to_string(patches.entries()) + " patch entries and " + std::to_string(k) + " kernels");
  }
}

// Dot product with eight fixed partial sums, so the compiler can vectorize
// it without reassociating (the summation order is part of the contract).
inline double dot(const double* a, const double* b, std::size_t n) {
  double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t j = 0; j < 8; ++j) lanes[j] += a[i + j] * b[i + j];
  }
  for (std::size_t j = 0; i < n; ++i, ++j) lanes[j] += a[i] * b[i];
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
}

// Writes the virtual features of centers [begin, end) into `block`, row
// v - begin. Each 60-wide channel segment is accumulated over the patch
// members while it stays in L1.
void build_virtual(const PatchTable& p, const Tensor& features, const Tensor& weights, std::size_t begin,
                   std::size_t end, double* block) {
  const std::size_t k = p.kernel_count();
  const std::size_t channels = features.dim(1);
  const std::size_t width = channels * k;
  for (std::size_t v = begin; v < end; ++v) {
    double* row = block + (v - begin) * width;
    std::fill(row, row + width, 0.0);
    const std::uint32_t e0 = p.offsets[v];
    const std::uint32_t e1 = p.offsets[v + 1];
    for (std::size_t c = 0; c < channels; ++c) {
      double* dst = row + c * k;
      for (std::uint32_t e = e0; e < e1; ++e) {
        const double fc = features.data()[static_cast<std::size_t>(p.columns[e]) * channels + c];
        if (fc == 0.0) continue;
        const double* w = weights.data() + static_cast<std::size_t>(e) * k;
        for (std::size_t kl = 0; kl < k; ++kl) dst[kl] += fc * w[kl];
      }
    }
  }
}

// Pulls a block of virtual-feature adjoints back to features and weights.
void scatter_virtual_grad(const PatchTable& p, const Tensor& features, const Tensor& weights, std::size_t begin,
                          std::size_t end, const double* grad_block, Tensor* grad_features, Tensor* grad_weights) {
  const std::size_t k = p.kernel_count();
  const std::size_t channels = features.dim(1);
  const std::size_t width = channels * k;
  for (std::size_t v = begin; v < end; ++v) {
    const double* gv = grad_block + (v - begin) * width;
    const std::uint32_t e0 = p.offsets[v];
    const std::uint32_t e1 = p.offsets[v + 1];
    for (std::size_t c = 0; c < channels; ++c) {
      const double* g = gv + c * k;
      for (std::uint32_t e = e0; e < e1; ++e) {
        const std::size_t at = static_cast<std::size_t>(p.columns[e]) * channels + c;
        if (grad_features) grad_features->data()[at] += dot(g, weights.data() + static_cast<std::size_t>(e) * k, k);
        if (grad_weights) {
          const double fc = features.data()[at];
          if (fc == 0.0) continue;
          double* gw = grad_weights->data() + static_cast<std::size_t>(e) * k;
          for (std::size_t kl = 0; kl < k; ++kl) gw[kl] += fc * g[kl];
        }
      }
    }
  }
}

// Angular residual theta - mean folded into (-pi, pi], both arguments
// already in [0, 2*pi).
inline double fold(double r) {
  const double up = r <= -std::numbers::pi ? kTwoPi : 0.0;
  const double down = r > std::numbers::pi ? kTwoPi : 0.0;
  return (r + up) - down;
}

double wrap_angle_impl(double theta) {
  theta = std::fmod(theta, kTwoPi);
  if (theta < 0.0) theta += kTwoPi;
  return theta >= kTwoPi ? 0.0 : theta;
}

// Per-kernel constants in structure-of-arrays form.
struct KernelTerms {
  std::vector<double> mean_rho, mean_theta, inv_var_rho, inv_var_theta;

  KernelTerms(const Tensor& means, const Tensor& logvars) {
    const std::size_t k = means.dim(0);
    mean_rho.resize(k);
    mean_theta.resize(k);
    inv_var_rho.resize(k);
    inv_var_theta.resize(k);
    for (std::size_t kl = 0; kl < k; ++kl) {
      mean_rho[kl] = means[2 * kl];
      mean_theta[kl] = wrap_angle_impl(means[2 * kl + 1]);
      inv_var_rho[kl] = 1.0 / std::exp(logvars[2 * kl]);
      inv_var_theta[kl] = 1.0 / std::exp(logvars[2 * kl + 1]);
    }
  }
};

}  // namespace

double wrap_angle(double theta) { return wrap_angle_impl(theta); }

double kernel_weight(double rho, double theta, double mean_rho, double mean_theta, double logvar_rho,
                     double logvar_theta) {
  const double dr = rho - mean_rho;
  const double dt = fold(wrap_angle(theta) - wrap_angle(mean_theta));
  return std::exp(-0.5 * (dr * dr / std::exp(logvar_rho) + dt * dt / std::exp(logvar_theta)));
}

std::shared_ptr<const PatchTable> PatchTable::from(const geodesic::LocalParameterization& param) {
  auto table = std::make_shared<PatchTable>();
  table->spec = param.spec();
  table->offsets.assign(param.row_offsets().begin(), param.row_offsets().end());
  const auto entries = param.entries();
  table->columns.reserve(entries.size());
  table->rho.reserve(entries.size());
  table->theta.reserve(entries.size());
  for (const auto& p : entries) {
    table->columns.push_back(p.vertex);
    table->rho.push_back(p.rho);
    table->theta.push_back(wrap_angle(p.theta));
  }
  return table;
}

Var kernel_weights(const Patches& patches, Var means, Var logvars) {
  const std::size_t k = patches->kernel_count();
  const Shape kernel_shape{k, 2};
  if (means.value().shape() != kernel_shape || logvars.value().shape() != kernel_shape) {
    throw ShapeError("kernel parameters must be " + ad::shape_string(kernel_shape));
  }
  const std::size_t n = patches->entries();
  const KernelTerms terms(means.value(), logvars.value());
  Tensor w({n, k});
  for (std::size_t e = 0; e < n; ++e) {
    const double rho = patches->rho[e];
    const double theta = patches->theta[e];
    double* row = w.data() + e * k;
    for (std::size_t kl = 0; kl < k; ++kl) {
      const double dr = rho - terms.mean_rho[kl];
      const double dt = fold(theta - terms.mean_theta[kl]);
      row[kl] = -0.5 * (dr * dr * terms.inv_var_rho[kl] + dt * dt * terms.inv_var_theta[kl]);
    }
  }
  // Eigen's packet exp keeps this vectorized; it is deterministic.
  w.matrix() = w.matrix().array().exp().matrix();

  return means.tape()->record(std::move(w), {means, logvars}, [patches, k, n](const BackwardContext& c) {
    const KernelTerms terms(*c.inputs[0], *c.inputs[1]);
    std::vector<double> g_mr(k, 0.0), g_mt(k, 0.0), g_lr(k, 0.0), g_lt(k, 0.0);
    for (std::size_t e = 0; e < n; ++e) {
      const double rho = patches->rho[e];
      const double theta = patches->theta[e];
      const double* wrow = c.output.data() + e * k;
      const double* grow = c.output_grad.data() + e * k;
      for (std::size_t kl = 0; kl < k; ++kl) {
        const double gw = grow[kl] * wrow[kl];
        const double dr = rho - terms.mean_rho[kl];
        const double dt = fold(theta - terms.mean_theta[kl]);
        const double zr = dr * terms.inv_var_rho[kl];
        const double zt = dt * terms.inv_var_theta[kl];
        g_mr[kl] += gw * zr;
        g_mt[kl] += gw * zt;
        g_lr[kl] += gw * 0.5 * zr * dr;
        g_lt[kl] += gw * 0.5 * zt * dt;
      }
    }
    if (Tensor* g = c.input_grads[0]) {
      for (std::size_t kl = 0; kl < k; ++kl) {
        (*g)[2 * kl] += g_mr[kl];
        (*g)[2 * kl + 1] += g_mt[kl];
      }
    }
    if (Tensor* g = c.input_grads[1]) {
      for (std::size_t kl = 0; kl < k; ++kl) {
        (*g)[2 * kl] += g_lr[kl];
        (*g)[2 * kl + 1] += g_lt[kl];
      }
    }
  });
}

Var normalize_weights(const Patches& patches, Var weights) {
  const std::size_t k = patches->kernel_count();
  const Tensor& w = weights.value();
  if (w.rank() != 2 || w.dim(0) != patches->entries() || w.dim(1) != k) {
    throw ShapeError("normalize_weights: weights " + ad::shape_string(w.shape()));
  }
  const std::size_t vertices = patches->vertex_count();
  std::vector<double> sums(vertices * k, 0.0);
  Tensor out(w.shape());
  for (std::size_t v = 0; v < vertices; ++v) {
    double* s = sums.data() + v * k;
    for (std::uint32_t e = patches->offsets[v]; e < patches->offsets[v + 1]; ++e) {
      for (std::size_t kl = 0; kl < k; ++kl) s[kl] += w[e * k + kl];
    }
    for (std::uint32_t e = patches->offsets[v]; e < patches->offsets[v + 1]; ++e) {
      for (std::size_t kl = 0; kl < k; ++kl) out[e * k + kl] = w[e * k + kl] / s[kl];
    }
  }
  return weights.tape()->record(
      std::move(out), {weights}, [patches, k, vertices, sums = std::move(sums)](const BackwardContext& c) {
        Tensor& g = *c.input_grads[0];
        std::vector<double> dot(k);
        for (std::size_t v = 0; v < vertices; ++v) {
          std::fill(dot.begin(), dot.end(), 0.0);
          for (std::uint32_t e = patches->offsets[v]; e < patches->offsets[v + 1]; ++e) {
            for (std::size_t kl = 0; kl < k; ++kl) dot[kl] += c.output_grad[e * k + kl] * c.output[e * k + kl];
          }
          const double* s = sums.data() + v * k;
          for (std::uint32_t e = patches->offsets[v]; e < patches->offsets[v + 1]; ++e) {
            for (std::size_t kl = 0; kl < k; ++kl) g[e * k + kl] += (c.output_grad[e * k + kl] - dot[kl]) / s[kl];
          }
        }
      });
}

Var uniformize_patch(const Patches& patches, Var features, Var weights) {
  check_inputs(*patches, features.value(), weights.value(), "uniformize_patch");
  const std::size_t vertices = patches->vertex_count();
  const std::size_t width = features.value().dim(1) * patches->kernel_count();
  Tensor out({vertices, width});
  build_virtual(*patches, features.value(), weights.value(), 0, vertices, out.data());
  return features.tape()->record(std::move(out), {features, weights}, [patches, vertices](const BackwardContext& c) {
    scatter_virtual_grad(*patches, *c.inputs[0], *c.inputs[1], 0, vertices, c.output_grad.data(), c.input_grads[0],
                         c.input_grads[1]);
  });
}

Var patch_convolution(const Patches& patches, Var features, Var weights, Var gamma) {
  const Tensor& f = features.value();
  check_inputs(*patches, f, weights.value(), "patch_convolution");
  const Tensor& g = gamma.value();
  const std::size_t width = f.dim(1) * patches->kernel_count();
  if (g.rank() != 2 || g.dim(1) != width) {
    throw ShapeError("patch_convolution: filter " + ad::shape_string(g.shape()) + " for " + std::to_string(width) +
                     " virtual features per vertex");
  }
  const std::size_t vertices = patches->vertex_count();
  const std::size_t out_channels = g.dim(0);

  Tensor out({vertices, out_channels});
  ad::RowMatrix block(static_cast<Eigen::Index>(kChunkRows), static_cast<Eigen::Index>(width));
  for (std::size_t begin = 0; begin < vertices; begin += kChunkRows) {
    const std::size_t end = std::min(vertices, begin + kChunkRows);
    const auto n = static_cast<Eigen::Index>(end - begin);
    build_virtual(*patches, f, weights.value(), begin, end, block.data());
    out.matrix().middleRows(static_cast<Eigen::Index>(begin), n).noalias() =
        block.topRows(n) * g.matrix().transpose();
  }

  // Backward rebuilds each block of virtual features instead of keeping
  // all of them alive between the passes.
  return features.tape()->record(
      std::move(out), {features, weights, gamma}, [patches, vertices, width](const BackwardContext& c) {
        const Tensor& f = *c.inputs[0];
        const Tensor& w = *c.inputs[1];
        const auto gmat = c.inputs[2]->matrix();
        const auto gout = c.output_grad.matrix();
        Tensor* grad_f = c.input_grads[0];
        Tensor* grad_w = c.input_grads[1];
        Tensor* grad_gamma = c.input_grads[2];
        ad::RowMatrix block(static_cast<Eigen::Index>(kChunkRows), static_cast<Eigen::Index>(width));
        ad::RowMatrix grad_block(static_cast<Eigen::Index>(kChunkRows), static_cast<Eigen::Index>(width));
        for (std::size_t begin = 0; begin < vertices; begin += kChunkRows) {
          const std::size_t end = std::min(vertices, begin + kChunkRows);
          const auto n = static_cast<Eigen::Index>(end - begin);
          const auto rows = gout.middleRows(static_cast<Eigen::Index>(begin), n);
          if (grad_gamma) {
            build_virtual(*patches, f, w, begin, end, block.data());
            grad_gamma->matrix().noalias() += rows.transpose() * block.topRows(n);
          }
          if (grad_f || grad_w) {
            grad_block.topRows(n).noalias() = rows * gmat;
            scatter_virtual_grad(*patches, f, w, begin, end, grad_block.data(), grad_f, grad_w);
          }
        }
      });
}

ConvLayer make_conv_layer(int in_channels, int out_channels, const geodesic::GridSpec& spec, Rng& rng,
                          const std::string& name) {
  spec.validate();
  if (in_channels < 1 || out_channels < 1) throw ConfigError("channel counts must be positive");
  const auto k = static_cast<std::size_t>(spec.n_rho * spec.n_theta);
  const double bin_rho = spec.radius / spec.n_rho;
  const double bin_theta = kTwoPi / spec.n_theta;

  ConvLayer layer;
  layer.in_channels = in_channels;
  layer.out_channels = out_channels;
  Tensor means({k, 2});
  Tensor logvars({k, 2});
  for (int r = 0; r < spec.n_rho; ++r) {
    for (int t = 0; t < spec.n_theta; ++t) {
      const std::size_t kl = static_cast<std::size_t>(r * spec.n_theta + t);
      means[2 * kl] = (r + 0.5 + rng.uniform(-0.2, 0.2)) * bin_rho;
      means[2 * kl + 1] = (t + 0.5 + rng.uniform(-0.2, 0.2)) * bin_theta;
      logvars[2 * kl] = 2.0 * std::log(bin_rho);
      logvars[2 * kl + 1] = 2.0 * std::log(bin_theta);
    }
  }
  const std::size_t width = static_cast<std::size_t>(in_channels) * k;
  const double limit = std::sqrt(6.0 / static_cast<double>((in_channels + out_channels) * k));
  Tensor gamma({static_cast<std::size_t>(out_channels), width});
  for (std::size_t i = 0; i < gamma.size(); ++i) gamma[i] = rng.uniform(-limit, limit);

  layer.means = Parameter(name + ".means", std::move(means));
  layer.logvars = Parameter(name + ".logvars", std::move(logvars));
  layer.gamma = Parameter(name + ".gamma", std::move(gamma));
  layer.bias = Parameter(name + ".bias", Tensor({static_cast<std::size_t>(out_channels)}));
  return layer;
}

Var spatial_conv(Tape& tape, Var features, ConvLayer& layer, const Patches& patches, const ConvOptions& options) {
  if (features.value().rank() != 2 || features.value().dim(1) != static_cast<std::size_t>(layer.in_channels)) {
    throw ShapeError("spatial_conv: input " + ad::shape_string(features.value().shape()) + " for a layer with " +
                     std::to_string(layer.in_channels) + " input channels");
  }
  Var w = kernel_weights(patches, tape.parameter(layer.means), tape.parameter(layer.logvars));
  if (options.normalize_weights) w = normalize_weights(patches, w);
  Var gamma = tape.parameter(layer.gamma);
  Var out = options.fused ? patch_convolution(patches, features, w, gamma)
                          : ad::matmul(uniformize_patch(patches, features, w), ad::transpose(gamma));
  if (options.use_bias) out = ad::add_row_bias(out, tape.parameter(layer.bias));
  return out;
}

LinearHead make_linear_head(int in, int out, Rng& rng, const std::string& name) {
  if (in < 1 || out < 1) throw ConfigError("head sizes must be positive");
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor weight({static_cast<std::size_t>(in), static_cast<std::size_t>(out)});
  for (std::size_t i = 0; i < weight.size(); ++i) weight[i] = rng.uniform(-limit, limit);
  LinearHead head;
  head.weight = Parameter(name + ".weight", std::move(weight));
  head.bias = Parameter(name + ".bias", Tensor({static_cast<std::size_t>(out)}));
  return head;
}

Var linear_head(Tape& tape, Var x, LinearHead& head, bool use_bias) {
  Var y = ad::matmul(x, tape.parameter(head.weight));
  if (use_bias) y = ad::add_row_bias(y, tape.parameter(head.bias));
  return y;
}

}  // namespace gcnnlp::layers
