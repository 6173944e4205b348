#include "gcnnlp/model.hpp"

#include "binary_io.hpp"

#include <fstream>
#include <sstream>

namespace gcnnlp::net {
namespace {

constexpr std::string_view kMagic = "GCNN";
constexpr std::uint32_t kVersion = 1;

void put_tensor(std::ostream& out, const Tensor& t) {
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) binary::put<std::uint64_t>(out, d);
  for (double v : t.values()) binary::put<double>(out, v);
}

Tensor get_tensor(std::istream& in, const std::string& what) {
  const auto rank = binary::get<std::uint32_t>(in, what.c_str());
  if (rank > 4) throw ParseError("implausible tensor rank in " + what);
  ad::Shape shape(rank);
  std::uint64_t size = 1;
  for (auto& d : shape) {
    d = binary::get<std::uint64_t>(in, what.c_str());
    if (d > (1ULL << 32)) throw ParseError("implausible tensor size in " + what);
    size *= d;
  }
  if (size > (1ULL << 32)) throw ParseError("implausible tensor size in " + what);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = binary::get<double>(in, what.c_str());
  return t;
}

void read_into(std::istream& in, Tensor& target, const std::string& name) {
  Tensor t = get_tensor(in, name);
  if (t.shape() != target.shape()) {
    throw ParseError("parameter " + name + " has shape " + ad::shape_string(t.shape()) + ", expected " +
                     ad::shape_string(target.shape()));
  }
  target = std::move(t);
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  using namespace binary;
  put_magic(out, kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(ck.model.variant));
  Config echo = ck.echo;
  for (const auto& [k, v] : ck.model.config.to_config().items()) echo.set(k, v);
  echo.set("variant", variant_name(ck.model.variant));
  put_string(out, echo.dump());
  put<std::uint64_t>(out, ck.vertex_count);
  put<std::uint64_t>(out, ck.updates);
  put<double>(out, ck.model.scales.input);
  put<double>(out, ck.model.scales.month3);
  put<double>(out, ck.model.scales.month6);

  auto& model = const_cast<GcnnModel&>(ck.model);
  const std::vector<Parameter*> params = model.parameters();
  put<std::uint64_t>(out, params.size());
  for (const Parameter* p : params) {
    put_string(out, p->name);
    put_tensor(out, p->value);
  }
  put<std::uint8_t>(out, ck.adam ? 1 : 0);
  if (ck.adam) {
    put<std::uint64_t>(out, ck.adam->step);
    for (std::size_t i = 0; i < params.size(); ++i) {
      put_tensor(out, ck.adam->first.at(i));
      put_tensor(out, ck.adam->second.at(i));
    }
  }
  if (!out) throw IoError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  using namespace binary;
  expect_magic(in, kMagic);
  const auto version = get<std::uint32_t>(in, "checkpoint version");
  if (version != kVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto tag = get<std::uint8_t>(in, "variant");
  if (tag > 2) throw ParseError("unknown variant tag " + std::to_string(tag));
  const auto variant = static_cast<Variant>(tag);

  Checkpoint ck;
  std::istringstream echo_text(get_string(in, "config echo"));
  ck.echo = Config::parse(echo_text, "checkpoint config");
  NetworkConfig config;
  try {
    config = NetworkConfig::from_config(ck.echo);
    ck.model = make_model(variant, config);
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint config: ") + e.what());
  }
  ck.vertex_count = get<std::uint64_t>(in, "vertex count");
  ck.updates = get<std::uint64_t>(in, "update count");
  ck.model.scales.input = get<double>(in, "input scale");
  ck.model.scales.month3 = get<double>(in, "month-3 scale");
  ck.model.scales.month6 = get<double>(in, "month-6 scale");

  const std::vector<Parameter*> params = ck.model.parameters();
  const auto count = get<std::uint64_t>(in, "parameter count");
  if (count != params.size()) {
    throw ParseError("checkpoint holds " + std::to_string(count) + " parameter arrays, the architecture needs " +
                     std::to_string(params.size()));
  }
  for (Parameter* p : params) {
    const std::string name = get_string(in, "parameter name");
    if (name != p->name) throw ParseError("expected parameter " + p->name + ", found " + name);
    read_into(in, p->value, name);
    p->zero_grad();
  }
  const auto has_adam = get<std::uint8_t>(in, "optimizer flag");
  if (has_adam > 1) throw ParseError("bad optimizer flag");
  if (has_adam) {
    ad::AdamState state = ad::make_adam_state(params);
    state.step = get<std::uint64_t>(in, "optimizer step");
    for (std::size_t i = 0; i < params.size(); ++i) {
      read_into(in, state.first[i], params[i]->name + " first moment");
      read_into(in, state.second[i], params[i]->name + " second moment");
    }
    ck.adam = std::move(state);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after checkpoint");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_checkpoint(out, checkpoint);
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return read_checkpoint(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

Prediction predict(const Checkpoint& checkpoint, const SurfacePair& baseline,
                   const geodesic::LocalParameterization& inner, const geodesic::LocalParameterization& outer) {
  if (baseline.inner.vertex_count() != checkpoint.vertex_count) {
    throw ValidationError("baseline has " + std::to_string(baseline.inner.vertex_count()) +
                          " vertices, the checkpoint was trained on " + std::to_string(checkpoint.vertex_count));
  }
  const NetworkInputs inputs = build_inputs(baseline, inner, outer);
  return reconstruct_surfaces(baseline, forward(checkpoint.model, inputs).growth);
}

std::string describe_checkpoint(const Checkpoint& ck) {
  std::ostringstream out;
  const GcnnModel& m = ck.model;
  out << "format: GCNN v" << kVersion << '\n';
  out << "variant: " << variant_name(m.variant) << '\n';
  out << "vertices: " << ck.vertex_count << '\n';
  out << "updates: " << ck.updates << '\n';
  out << "parameters: " << m.parameter_count() << '\n';
  out << "conv layers per channel: " << m.depth() << '\n';
  out << "input scale: " << format_double(m.scales.input) << '\n';
  out << "output scales: " << format_double(m.scales.month3) << ' ' << format_double(m.scales.month6) << '\n';
  out << "optimizer state: " << (ck.adam ? "yes (step " + std::to_string(ck.adam->step) + ")" : std::string("no")) << '\n';
  out << "config:\n";
  for (const auto& [k, v] : ck.echo.items()) out << "  " << k << '=' << v << '\n';
  return out.str();
}

}  // namespace gcnnlp::net
