// Scenario-driven fleet simulator CLI.
//
//   sim run      --scenario <file> --out <file> [--seed N] [--csv <file>]
//   sim compare  --a <report> --b <report> --metric <name>
//   sim validate --scenario <file>
//
// Exit codes: 0 success, 2 validation error, 3 runtime error.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "grapecm/harness.hpp"
#include "grapecm/node_agent.hpp"
#include "grapecm/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

int do_run(const std::string& scenario_path, const std::string& out_path,
           std::uint64_t seed_override, bool has_seed, const std::string& csv_path,
           const std::string& event_log_path) {
  auto scenario = grapecm::load_scenario_file(scenario_path);
  if (!scenario.ok()) {
    std::cerr << "error: " << scenario.error().what << "\n";
    return kExitValidation;
  }
  grapecm::Scenario s = std::move(scenario).value();
  if (has_seed) {
    s.seed = seed_override;
    s.raw["seed"] = seed_override;
  }
  auto violations = s.validate();
  if (!violations.empty()) {
    for (const auto& v : violations) std::cerr << "invalid scenario: " << v << "\n";
    return kExitValidation;
  }

  grapecm::Expected<grapecm::RunOutput> output =
      grapecm::run_scenario(s, event_log_path);
  if (!output.ok()) {
    std::cerr << "error: " << output.error().what << "\n";
    return kExitRuntime;
  }

  std::string serialized = grapecm::report_to_string(output.value().report);
  if (out_path.empty() || out_path == "-") {
    std::cout << serialized;
  } else {
    std::ofstream out(out_path);
    if (!out) {
      std::cerr << "error: cannot write " << out_path << "\n";
      return kExitRuntime;
    }
    out << serialized;
  }
  if (!csv_path.empty()) {
    if (output.value().histogram_csv.empty()) {
      std::cerr << "error: scenario pipeline produces no histogram\n";
      return kExitRuntime;
    }
    std::ofstream csv(csv_path);
    if (!csv) {
      std::cerr << "error: cannot write " << csv_path << "\n";
      return kExitRuntime;
    }
    csv << output.value().histogram_csv;
  }
  return kExitOk;
}

int do_compare(const std::string& a_path, const std::string& b_path,
               const std::string& metric) {
  auto load = [](const std::string& path) -> grapecm::Expected<nlohmann::json> {
    std::ifstream in(path);
    if (!in) return grapecm::make_error("cannot open report: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) return grapecm::make_error("malformed report: " + path);
    return j;
  };
  auto a = load(a_path);
  if (!a.ok()) {
    std::cerr << "error: " << a.error().what << "\n";
    return kExitValidation;
  }
  auto b = load(b_path);
  if (!b.ok()) {
    std::cerr << "error: " << b.error().what << "\n";
    return kExitValidation;
  }
  auto delta = grapecm::compare_reports(a.value(), b.value(), metric);
  if (!delta.ok()) {
    std::cerr << "error: " << delta.error().what << "\n";
    return kExitValidation;
  }
  std::cout << delta.value().dump(2) << "\n";
  return kExitOk;
}

int do_validate(const std::string& scenario_path) {
  auto scenario = grapecm::load_scenario_file(scenario_path);
  if (!scenario.ok()) {
    std::cerr << "invalid: " << scenario.error().what << "\n";
    return kExitValidation;
  }
  auto violations = scenario.value().validate();
  if (!violations.empty()) {
    for (const auto& v : violations) std::cerr << "invalid: " << v << "\n";
    return kExitValidation;
  }
  std::cout << "ok: " << scenario.value().name << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grapecm fleet simulator"};
  app.require_subcommand(1);

  std::string scenario_path, out_path, csv_path, event_log_path;
  std::uint64_t seed = 0;
  auto* run = app.add_subcommand("run", "execute a scenario and write its report");
  run->add_option("--scenario", scenario_path, "scenario JSON file")->required();
  run->add_option("--out", out_path, "report output path ('-' for stdout)");
  auto* seed_opt = run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--csv", csv_path, "also export the latency histogram as CSV");
  run->add_option("--event-log", event_log_path,
                  "append the CM's event log (NDJSON) to this file");

  std::string a_path, b_path, metric;
  auto* compare = app.add_subcommand("compare", "delta between two reports");
  compare->add_option("--a", a_path, "first report")->required();
  compare->add_option("--b", b_path, "second (baseline) report")->required();
  compare->add_option("--metric", metric, "stat name or dotted path");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "check a scenario file");
  validate->add_option("--scenario", validate_path, "scenario JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return do_run(scenario_path, out_path, seed, seed_opt->count() > 0,
                    csv_path, event_log_path);
    }
    if (compare->parsed()) return do_compare(a_path, b_path, metric);
    if (validate->parsed()) return do_validate(validate_path);
  } catch (const grapecm::SimulationError& e) {
    std::cerr << "simulation error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
