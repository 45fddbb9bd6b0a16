#include "mmfitz/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Solve and verify differential inclusions driven by maximal monotone operators"};
  app.set_version_flag("--version", mmfitz::cli::kVersion);
  app.require_subcommand(1);

  mmfitz::cli::RunRequest request;
  std::string out_dir;
  std::uint64_t seed = 0;
  CLI::App* run = app.add_subcommand("run", "Run the experiment described by a config file or a manifest");
  run->add_option("config", request.config_path, "Config file, or manifest.txt of an earlier run")->required();
  CLI::Option* out_opt = run->add_option("--out", out_dir, "Output directory (default: [experiment] out, then $" +
                                                              std::string(mmfitz::cli::kOutDirEnv) + ", then ./mmfitz_out)");
  CLI::Option* seed_opt = run->add_option("--seed", seed, "Seed override");

  std::string manifest_a;
  std::string manifest_b;
  double tolerance = 0.0;
  CLI::App* compare = app.add_subcommand("compare", "Per-metric differences between two run manifests");
  compare->add_option("m1", manifest_a, "First manifest")->required();
  compare->add_option("m2", manifest_b, "Second manifest")->required();
  compare->add_option("--tolerance", tolerance, "Absolute drift allowed per metric")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mmfitz::cli::kExitConfigError;
  }

  if (*run) {
    if (*out_opt) request.out_dir = out_dir;
    if (*seed_opt) request.seed = seed;
    return mmfitz::cli::run_command(request, std::cout, std::cerr);
  }
  return mmfitz::cli::compare_command(manifest_a, manifest_b, tolerance, std::cout, std::cerr);
}
