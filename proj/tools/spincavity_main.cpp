// Command-line front end: spincavity <command> --config <file> --out <dir>.
// Exit codes: 0 success, 2 bad input or configuration, 3 numerical failure.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "spincavity/errors.hpp"
#include "spincavity/scenario.hpp"

int main(int argc, char** argv) {
  CLI::App app{"giant-spin / cavity simulation toolkit"};
  std::string command;
  std::string config_path;
  std::string out_dir;
  unsigned long seed = 0;
  app.add_option("command", command,
                 "levels | crossings | hysteresis | fit | dynamics | maser | "
                 "t0scan | peaks")
      ->required();
  app.add_option("--config", config_path,
                 "scenario file: key = value lines under [section] headers");
  app.add_option("--out", out_dir, "output directory for the data files")
      ->required();
  auto* seed_opt =
      app.add_option("--seed", seed, "override the scenario's [run] seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    std::string text;
    if (!config_path.empty()) {
      std::ifstream in(config_path, std::ios::binary);
      if (!in)
        throw spincavity::ValidationError("cannot open config file " +
                                          config_path);
      std::ostringstream buf;
      buf << in.rdbuf();
      text = buf.str();
    }
    spincavity::Scenario scenario = spincavity::parse_scenario(text, command);
    if (seed_opt->count() > 0) scenario.seed = seed;
    const auto files = spincavity::run_scenario(scenario, out_dir);
    std::cout << command << ": wrote " << files.size() << " data file"
              << (files.size() == 1 ? "" : "s") << " to " << out_dir << "\n";
    for (const auto& name : files) std::cout << "  " << name << "\n";
    return 0;
  } catch (const spincavity::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const spincavity::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}
