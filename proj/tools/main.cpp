#include "gcnnlp/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using gcnnlp::Config;
using gcnnlp::pipeline::Experiment;

struct Overrides {
  std::string config_path;
  std::vector<std::string> assignments;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool verbose = false;
  std::vector<std::pair<std::string, std::string>> command_keys;
};

Experiment load_experiment(const Overrides& o) {
  Config c = o.config_path.empty() ? Config{} : Config::load(o.config_path);
  for (const auto& a : o.assignments) c.set_assignment(a);
  for (const auto& [k, v] : o.command_keys) c.set(k, v);
  if (o.seed) c.set("seed", std::to_string(*o.seed));
  if (o.threads) c.set("threads", std::to_string(*o.threads));
  if (o.verbose) c.set("verbose", "true");
  return Experiment::from_config(c);
}

// Adds an option whose value, when given, becomes config key `key`.
template <typename T>
void bind(CLI::App* cmd, Overrides& o, const std::string& flag, const std::string& key, const std::string& help) {
  cmd->add_option_function<T>(
      flag, [&o, key](const T& v) {
        if constexpr (std::is_same_v<T, std::string>) {
          o.command_keys.emplace_back(key, v);
        } else {
          o.command_keys.emplace_back(key, std::to_string(v));
        }
      },
      help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Longitudinal cortical surface prediction with geometric CNNs"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config_path, "key=value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "master seed for the cohort and the networks");
  app.add_option("--threads", o.threads, "worker threads");
  app.add_flag("--verbose", o.verbose, "progress output");
  app.add_option("--set", o.assignments, "override one configuration key, key=value")->allow_extra_args(false);

  auto* generate = app.add_subcommand("generate", "write a synthetic cohort");
  bind<int>(generate, o, "--subjects", "subjects", "number of subjects");
  bind<std::string>(generate, o, "--split", "split", "complete/missing6/missing3 counts");
  bind<int>(generate, o, "--level", "level", "icosphere subdivision level");
  bind<std::string>(generate, o, "--out", "cohort_dir", "cohort directory");

  auto* parametrize = app.add_subcommand("parametrize", "cache geodesic polar grids of month-1 surfaces");
  bind<double>(parametrize, o, "--radius", "radius", "disc radius in mm");

  auto* train = app.add_subcommand("train", "train a network or fit the affine baseline");
  bind<std::string>(train, o, "--method", "method", "gcnn-lp, gcnn-ip3, gcnn-ip6 or affine");
  bind<std::uint64_t>(train, o, "--max-updates", "max_updates", "number of updates");
  bind<std::string>(train, o, "--out", "checkpoint", "checkpoint path");

  auto* predict = app.add_subcommand("predict", "predict month-3/6 surfaces of the test subjects");
  bind<std::string>(predict, o, "--method", "method", "gcnn-lp, gcnn-ip3, gcnn-ip6 or affine");
  bind<std::string>(predict, o, "--checkpoint", "checkpoint", "checkpoint path");

  auto* evaluate = app.add_subcommand("evaluate", "score predictions and write error maps");
  bind<std::string>(evaluate, o, "--methods", "methods", "comma-separated methods to score");

  auto* inspect = app.add_subcommand("inspect", "print checkpoint metadata");
  std::string inspect_path;
  inspect->add_option("checkpoint", inspect_path, "checkpoint file (default: the configured method's)");
  bind<std::string>(inspect, o, "--method", "method", "method whose checkpoint to show");

  for (auto* cmd : {generate, parametrize, train, predict, evaluate, inspect}) cmd->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    const Experiment ex = load_experiment(o);
    std::ostream& log = std::cout;
    if (*generate) {
      gcnnlp::pipeline::cmd_generate(ex, log);
    } else if (*parametrize) {
      gcnnlp::pipeline::cmd_parametrize(ex, log);
    } else if (*train) {
      gcnnlp::pipeline::cmd_train(ex, log);
    } else if (*predict) {
      gcnnlp::pipeline::cmd_predict(ex, log);
    } else if (*evaluate) {
      const auto report = gcnnlp::pipeline::cmd_evaluate(ex, log);
      if (!ex.verbose) log << report.format();
    } else if (*inspect) {
      log << gcnnlp::pipeline::cmd_inspect(inspect_path.empty() ? ex.checkpoint_for(ex.method) : std::filesystem::path(inspect_path));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
