#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "sharp/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"sharp expectation bounds from moment constraints"};
  app.require_subcommand(1);

  bool no_timestamp = false;
  bool verbose = false;
  app.add_flag("--no-timestamp", no_timestamp,
               "omit timestamp and timing so identical runs produce identical bytes");
  app.add_flag("--verbose", verbose, "progress details on standard error");

  std::string config_path;
  std::string out_path;

  auto* bound = app.add_subcommand("bound", "solve one problem and write a JSON report");
  bound->add_option("config", config_path, "problem configuration (JSON)")->required();
  bound->add_option("--out", out_path, "write the report to this file instead of stdout");

  auto* sweep =
      app.add_subcommand("sweep", "solve over a parameter range and write a CSV curve");
  sharp::SweepSpec spec;
  sweep->add_option("config", config_path, "problem configuration (JSON)")->required();
  sweep->add_option("--param", spec.param, "name of the parameter to vary")->required();
  sweep->add_option("--from", spec.from, "first parameter value")->required();
  sweep->add_option("--to", spec.to, "last parameter value")->required();
  sweep->add_option("--steps", spec.steps, "number of evenly spaced values")->required();
  sweep->add_option("--out", out_path, "write the CSV to this file instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    const sharp::RunConfig cfg = sharp::load_config(config_path);
    const sharp::RunFlags flags{!no_timestamp, verbose};

    std::ofstream file;
    std::ostream* os = &std::cout;
    if (!out_path.empty()) {
      file.open(out_path, std::ios::binary);
      if (!file) {
        std::cerr << "error: cannot open output file: " << out_path << "\n";
        return 1;
      }
      os = &file;
    }

    if (bound->parsed()) return sharp::run_bound(cfg, *os, flags);
    return sharp::run_sweep(cfg, spec, *os, flags);
  } catch (const sharp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
