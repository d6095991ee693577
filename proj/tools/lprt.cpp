#include <CLI11.hpp>

#include <iostream>

#include "lprt/errors.hpp"
#include "lprt/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Verification harness for the stationary transport equation in weighted Lp spaces"};
  app.require_subcommand(1);

  lprt::RunOptions options;
  std::string stages;
  std::uint64_t seed = 0;
  CLI::App* run = app.add_subcommand("run", "Run the requested stages on every scenario of a config file");
  run->add_option("--scenario", options.scenario_path, "Scenario config (YAML)")->required();
  run->add_option("--stages", stages, "Comma-separated: validate,solve,bounds,spectral,sharpness")->required();
  run->add_option("--out", options.out_dir, "Output directory (LPRT_OUT overrides the default)");
  run->add_option("--refine", options.refine, "Resolution multiplier")->check(CLI::PositiveNumber);
  run->add_option("--jobs", options.jobs, "Scenarios run in parallel")->check(CLI::PositiveNumber);
  CLI::Option* seed_opt = run->add_option("--seed", seed, "Override every scenario seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    options.stages = lprt::parse_stages(stages);
  } catch (const lprt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  if (*seed_opt) options.seed = seed;
  return lprt::run(options, std::cerr);
}
