#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfl/acceptance.hpp"
#include "mfl/config.hpp"
#include "mfl/experiment.hpp"

namespace {

struct Source {
  std::vector<std::string> presets;
  std::vector<std::string> configs;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
};

void add_source_flags(CLI::App* cmd, Source& s) {
  cmd->add_option("--preset", s.presets, "Preset name (see `mfl presets`)");
  cmd->add_option("--config", s.configs, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", s.sets, "Override, e.g. --set rate.test_scale=1e-4");
  cmd->add_option("--seed", s.seed, "Seed override");
  cmd->add_option("--out", s.out, "Output directory");
  cmd->add_option("--data", s.data, "LIBSVM file (sets data.path)");
}

// A preset, then a config file on top, then the overrides.
mfl::RunConfig resolve(const std::string& preset, const std::string& config_path, const Source& s) {
  mfl::RunConfig c;
  if (!preset.empty()) c = mfl::parse_config(mfl::preset_text(preset));
  if (!config_path.empty()) c = mfl::load_config_file(config_path, c);
  if (!s.data.empty()) c.path = s.data;
  for (const auto& a : s.sets) mfl::apply_override(c, a);
  if (s.seed) c.seed = *s.seed;
  if (!s.out.empty()) c.out_dir = s.out;
  return c;
}

int run(const Source& s) {
  if (s.presets.size() > 1 || s.configs.size() > 1) {
    throw mfl::ConfigError("run takes at most one --preset and one --config");
  }
  const auto c = resolve(s.presets.empty() ? "" : s.presets[0],
                         s.configs.empty() ? "" : s.configs[0], s);
  const auto r = mfl::run_and_write(c);
  std::printf("%s-%s T=%d seed=%llu: mean loss %.6f", mfl::to_string(c.mode).c_str(),
              mfl::to_string(c.algo).c_str(), c.horizon, static_cast<unsigned long long>(c.seed),
              r.mean_loss);
  if (r.mean_accuracy) std::printf(", mean accuracy %.4f", *r.mean_accuracy);
  if (r.regret) std::printf(", regret %.6f", r.regret->total());
  std::printf(", restarts %zu -> %s\n", r.run.restart_rounds.size(), c.out_dir.c_str());
  return 0;
}

int compare(const Source& s) {
  std::vector<mfl::RunConfig> configs;
  for (const auto& p : s.presets) configs.push_back(resolve(p, "", s));
  for (const auto& f : s.configs) configs.push_back(resolve("", f, s));
  if (configs.empty()) throw mfl::ConfigError("compare needs --preset or --config");
  if (configs.size() == 1) {
    // one definition: Master-FL against its single-instance baseline
    auto base = configs[0];
    configs[0].mode = mfl::RunMode::master;
    base.mode = mfl::RunMode::baseline;
    configs.push_back(base);
  }
  const auto table = mfl::compare(configs);
  const std::string out_dir = s.out.empty() ? configs[0].out_dir : s.out;
  std::filesystem::create_directories(out_dir);
  const auto path = std::filesystem::path(out_dir) / "comparison.json";
  std::ofstream(path, std::ios::binary) << table.dump(2) << '\n';
  std::cout << table.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online federated learning under concept drift"};
  app.require_subcommand(1);
  Source source;

  auto* run_cmd = app.add_subcommand("run", "Run one experiment, write rounds.csv and summary.json");
  add_source_flags(run_cmd, source);
  auto* compare_cmd = app.add_subcommand("compare", "Run several methods on the same data");
  add_source_flags(compare_cmd, source);
  auto* accept_cmd = app.add_subcommand("accept", "Run the acceptance suite");
  std::vector<int> only;
  accept_cmd->add_option("--only", only, "Criterion ids to run")->delimiter(',');
  auto* presets_cmd = app.add_subcommand("presets", "List presets, or print one");
  std::string show;
  presets_cmd->add_option("name", show, "Preset to print");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return run(source);
    if (*compare_cmd) return compare(source);
    if (*accept_cmd) {
      const auto results = mfl::run_acceptance(only, std::cout);
      for (const auto& r : results) {
        if (!r.passed && !r.skipped) return 1;
      }
      return 0;
    }
    if (*presets_cmd) {
      if (show.empty()) {
        for (const auto& n : mfl::preset_names()) std::cout << n << '\n';
      } else {
        std::cout << mfl::preset_text(show);
      }
      return 0;
    }
  } catch (const mfl::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const mfl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const mfl::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
