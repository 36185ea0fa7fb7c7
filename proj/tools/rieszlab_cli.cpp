// Command-line runner for the experiment registry.
// Exit codes: 0 pass, 1 verdict fail, 2 usage/config error, 3 internal error.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rieszlab/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Riesz transform numerical laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  int threads = 1;
  std::int64_t seed = -1;

  CLI::App* run_cmd = app.add_subcommand("run", "run an experiment config");
  run_cmd->add_option("config", config_path, "config file path")->required();
  run_cmd->add_option("--out", out_dir, "output directory (default ./out)");
  run_cmd->add_option("--threads", threads, "worker threads (default 1)");
  run_cmd->add_option("--seed", seed, "override the config seed");

  CLI::App* list_cmd = app.add_subcommand("list", "print the experiment registry");

  std::string validate_path;
  CLI::App* val_cmd = app.add_subcommand("validate", "check a config without running");
  val_cmd->add_option("config", validate_path, "config file path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (list_cmd->parsed()) {
      for (const std::string& id : riesz::registry()) std::cout << id << "\n";
      return 0;
    }
    if (val_cmd->parsed()) {
      try {
        riesz::validate(riesz::parse_config_file(validate_path));
      } catch (const std::invalid_argument& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return 2;
      }
      std::cout << "ok\n";
      return 0;
    }
    // run
    riesz::ExperimentConfig cfg;
    try {
      cfg = riesz::parse_config_file(config_path);
      if (seed >= 0) cfg.values["seed"] = std::to_string(seed);
      if (threads > 0) cfg.values["threads"] = std::to_string(threads);
      riesz::validate(cfg);
    } catch (const std::invalid_argument& e) {
      std::cerr << "invalid config: " << e.what() << "\n";
      return 2;
    }
    const riesz::ExperimentReport rep = riesz::run(cfg, out_dir);
    for (const riesz::Verdict& v : rep.verdicts)
      std::cout << (v.pass ? "PASS " : "FAIL ") << v.name << ": " << v.measured
                << " (" << v.relation << " " << v.threshold << ")\n";
    for (const std::string& err : rep.errors) std::cout << "ERROR " << err << "\n";
    std::cout << (rep.passed() ? "PASS" : "FAIL") << " " << rep.id << " in "
              << rep.wall_seconds << " s\n";
    return rep.passed() ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
