// qgemm-lab: pack synthetic GPTQ weights, run the kernel-variant benchmark
// matrix on the SIMT simulator, verify against the oracles, and re-render
// stored reports.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qgemm/bench.hpp"
#include "qgemm/errors.hpp"

namespace {

qgemm::bench::RunConfig build_config(const std::string& config_path,
                                     const std::optional<std::uint64_t>& seed,
                                     const std::string& out_dir) {
  auto config = config_path.empty()
                    ? qgemm::bench::default_config()
                    : qgemm::bench::load_config_file(config_path);
  if (seed) config.seed = *seed;
  if (!out_dir.empty()) config.output_dir = out_dir;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GPTQ 4-bit GEMM kernel optimization lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool strict = false;
  app.add_option("--config", config_path, "JSON run configuration")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "override the configured seed");
  app.add_option("--out", out_dir, "override the configured output directory");
  app.add_flag("--strict", strict, "treat tolerance warnings as errors");

  auto* pack = app.add_subcommand("pack", "write seeded GQ4S weight files");
  auto* run = app.add_subcommand(
      "run", "run the shape x variant matrix; write CSV and JSON reports");
  std::optional<std::string> weights_dir;
  run->add_option("--weights", weights_dir,
                  "load GQ4S files written by pack instead of regenerating")
      ->check(CLI::ExistingDirectory);
  auto* verify =
      app.add_subcommand("verify", "run the invariant and oracle suite");
  std::optional<double> tolerance_override;
  verify->add_option("--tolerance", tolerance_override,
                     "override the max |C - oracle| bound");
  auto* report =
      app.add_subcommand("report", "re-render the CSV from a stored report");
  std::string report_path;
  report->add_option("report_file", report_path, "report.json from a run")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (report->parsed()) {
      const std::string dir = out_dir.empty() ? "qgemm-out" : out_dir;
      return qgemm::bench::cmd_report(report_path, dir, std::cout);
    }
    const auto config = build_config(config_path, seed, out_dir);
    if (pack->parsed()) return qgemm::bench::cmd_pack(config, std::cout);
    if (run->parsed())
      return qgemm::bench::cmd_run(config, strict, std::cout, weights_dir);
    if (verify->parsed())
      return qgemm::bench::cmd_verify(config, tolerance_override, strict,
                                      std::cout);
  } catch (const qgemm::ShapeError& e) {
    std::cerr << "error: ShapeError: " << e.what() << "\n";
    return 2;
  } catch (const qgemm::RangeError& e) {
    std::cerr << "error: RangeError: " << e.what() << "\n";
    return 2;
  } catch (const qgemm::PermError& e) {
    std::cerr << "error: PermError: " << e.what() << "\n";
    return 2;
  } catch (const qgemm::FormatError& e) {
    std::cerr << "error: FormatError: " << e.what() << "\n";
    return 2;
  } catch (const qgemm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
