#include "cstarlab/scenario.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
  CLI::App app{"cstarlab: localization checks for operators on Hilbert C*-modules over C(X)"};
  std::string scenario, out = "out";
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;
  app.add_option("--scenario", scenario, "scenario JSON file")->required();
  app.add_option("--out", out, "output directory for report.json and CSV series");
  app.add_option("--threads", threads, "worker threads for per-state checks")->check(CLI::Range(1u, 256u));
  app.add_option("--seed", seed, "override the scenario seed");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 3;
  }
  return cstarlab::run_scenario_file(scenario, out, threads, seed);
}
