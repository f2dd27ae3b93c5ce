#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lll/simulator.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

nlohmann::json read_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw lll::ScenarioError("cannot open scenario file " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw lll::ScenarioError(path + ": " + e.what());
  }
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-harvesting LoRa network simulator"};
  app.require_subcommand(1);

  std::string scenario;
  std::uint64_t seed = 0;
  std::string protocol;
  std::string out_path;
  std::string log_path;
  auto* run = app.add_subcommand("run", "Run one simulation");
  run->add_option("--scenario", scenario, "Scenario JSON file")->required();
  run->add_option("--seed", seed, "RNG seed (overrides the file)")->required();
  run->add_option("--protocol", protocol, "lorawan or lll")
      ->required()
      ->check(CLI::IsMember({"lorawan", "lll"}));
  run->add_option("--out", out_path, "Metrics JSON output")->required();
  run->add_option("--log", log_path, "Event log (JSON lines)");

  std::string param;
  std::string values;
  std::string seeds;
  std::string protocols = "lorawan,lll";
  auto* sw = app.add_subcommand("sweep", "Sweep one scenario field");
  sw->add_option("--scenario", scenario, "Scenario JSON file")->required();
  sw->add_option("--param", param, "Dotted field path, e.g. traffic.high_rate_fraction")
      ->required();
  sw->add_option("--values", values, "Comma-separated values")->required();
  sw->add_option("--seeds", seeds, "Comma-separated seeds")->required();
  sw->add_option("--protocols", protocols, "Comma-separated protocols");
  sw->add_option("--out", out_path, "CSV output")->required();

  auto* validate = app.add_subcommand("validate", "Check a scenario file");
  validate->add_option("--scenario", scenario, "Scenario JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      nlohmann::json doc = read_document(scenario);
      doc["seed"] = seed;
      doc["protocol"] = protocol;
      const lll::ScenarioConfig config = lll::load_scenario(doc);
      const lll::RunResult result = lll::run_simulation(config, !log_path.empty());
      write_file(out_path, lll::to_json(result.metrics).dump(2) + "\n");
      if (!log_path.empty()) {
        std::ofstream out(log_path);
        if (!out) throw std::runtime_error("cannot write " + log_path);
        result.log.write(out);
      }
      std::cout << "lifetime_s=" << result.metrics.lifetime_s
                << " throughput_Bps=" << result.metrics.throughput_bytes_per_s << "\n";
    } else if (*sw) {
      const nlohmann::json doc = read_document(scenario);
      std::vector<std::uint64_t> seed_list;
      for (const auto& s : split_list(seeds)) seed_list.push_back(std::stoull(s));
      std::vector<lll::Protocol> protocol_list;
      for (const auto& p : split_list(protocols)) {
        protocol_list.push_back(lll::protocol_from_string(p));
      }
      const auto rows = lll::sweep(doc, param, split_list(values), seed_list, protocol_list);
      std::ofstream out(out_path);
      if (!out) throw std::runtime_error("cannot write " + out_path);
      lll::write_sweep_csv(out, rows);
    } else if (*validate) {
      lll::load_scenario(read_document(scenario));
      std::cout << "ok\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
