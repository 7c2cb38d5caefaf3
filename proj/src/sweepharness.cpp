#include "maskrgg/sweepharness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "maskrgg/matrix.hpp"

#ifndef MASKRGG_VERSION
#define MASKRGG_VERSION "0.0.0"
#endif

namespace maskrgg {

std::string_view version() { return MASKRGG_VERSION; }

std::vector<int> SweepConfig::d_grid() const {
  if (!d_values.empty()) return d_values;
  std::vector<int> out;
  for (double a : d_exponents) {
    out.push_back(static_cast<int>(std::llround(std::pow(static_cast<double>(n), a))));
  }
  return out;
}

std::vector<double> SweepConfig::q_grid() const {
  if (!q_values.empty()) return q_values;
  std::vector<double> out;
  for (double b : q_exponents) out.push_back(std::pow(static_cast<double>(n), -b));
  return out;
}

void SweepConfig::validate() const {
  ModelParams base{n, m, p, 1.0, 1};
  base.validate();
  const auto ds = d_grid();
  const auto qs = q_grid();
  if (ds.empty()) throw std::invalid_argument("sweep config: d grid is empty");
  if (qs.empty()) throw std::invalid_argument("sweep config: q grid is empty");
  for (int d : ds) {
    if (d < 1) throw std::invalid_argument("sweep config: every d must be >= 1");
  }
  for (double q : qs) {
    if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("sweep config: every q must lie in [0, 1]");
  }
  if (statistics.empty()) throw std::invalid_argument("sweep config: no statistics listed");
  for (const auto& name : statistics) {
    const Statistic s = parse_statistic(name);
    if (requires_mask(s) && mask_mode == MaskMode::kUnknown) {
      throw std::invalid_argument("sweep config: " + name + " needs mask_mode \"known\"");
    }
  }
  if (trials < 1) throw std::invalid_argument("sweep config: trials must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("sweep config: alpha must lie in (0, 1)");
  if (static_cast<double>(null_trials) * alpha < 100.0 - 1e-9) {
    throw std::invalid_argument("sweep config: null_trials must be >= 100 / alpha");
  }
}

SweepConfig sweep_config_from_json(const nlohmann::json& json) {
  if (!json.is_object()) throw std::invalid_argument("sweep config: expected a JSON object");
  static const std::vector<std::string> known = {
      "n",           "m",          "p",      "d_values",  "d_exponents",
      "q_values",    "q_exponents", "statistics", "mask_mode", "trials",
      "null_trials", "alpha",      "seed",   "output"};
  for (const auto& item : json.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw std::invalid_argument("sweep config: unknown field \"" + item.key() + "\"");
    }
  }
  SweepConfig c;
  try {
    c.n = json.value("n", c.n);
    c.m = json.value("m", c.m);
    c.p = json.value("p", c.p);
    c.d_values = json.value("d_values", c.d_values);
    c.d_exponents = json.value("d_exponents", c.d_exponents);
    c.q_values = json.value("q_values", c.q_values);
    c.q_exponents = json.value("q_exponents", c.q_exponents);
    c.statistics = json.value("statistics", c.statistics);
    c.mask_mode = parse_mask_mode(json.value("mask_mode", std::string("unknown")));
    c.trials = json.value("trials", c.trials);
    c.null_trials = json.value("null_trials", c.null_trials);
    c.alpha = json.value("alpha", c.alpha);
    c.seed = json.value("seed", c.seed);
    c.output = json.value("output", c.output);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("sweep config: ") + e.what());
  }
  c.validate();
  return c;
}

SweepConfig load_sweep_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open sweep config " + path.string());
  nlohmann::json json;
  try {
    in >> json;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("sweep config " + path.string() + ": " + e.what());
  }
  return sweep_config_from_json(json);
}

nlohmann::json to_json(const SweepConfig& c) {
  nlohmann::json out = {{"n", c.n},
                        {"m", c.m},
                        {"p", c.p},
                        {"statistics", c.statistics},
                        {"mask_mode", mask_mode_name(c.mask_mode)},
                        {"trials", c.trials},
                        {"null_trials", c.null_trials},
                        {"alpha", c.alpha},
                        {"seed", c.seed}};
  if (!c.d_values.empty()) out["d_values"] = c.d_values;
  if (!c.d_exponents.empty()) out["d_exponents"] = c.d_exponents;
  if (!c.q_values.empty()) out["q_values"] = c.q_values;
  if (!c.q_exponents.empty()) out["q_exponents"] = c.q_exponents;
  if (!c.output.empty()) out["output"] = c.output;
  return out;
}

SweepResult run_sweep(const SweepConfig& config, unsigned threads) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto ds = config.d_grid();
  const auto qs = config.q_grid();
  std::vector<Statistic> stats;
  for (const auto& name : config.statistics) stats.push_back(parse_statistic(name));

  const StreamSeed root(config.seed);
  const StreamSeed null_root = root.child(0);
  const StreamSeed cell_root = root.child(1);

  // Null law depends on (n, m, p, statistic) and, for masked statistics, on q.
  std::map<std::pair<std::size_t, std::size_t>, NullInterval> nulls;
  auto null_for = [&](std::size_t s, std::size_t qi) -> const NullInterval& {
    const std::size_t q_key = requires_mask(stats[s]) ? qi + 1 : 0;
    const auto key = std::make_pair(s, q_key);
    auto it = nulls.find(key);
    if (it == nulls.end()) {
      const ModelParams params{config.n, config.m, config.p, qs[qi], 1};
      it = nulls
               .emplace(key, calibrate_null(stats[s], params, config.null_trials, config.alpha,
                                            null_root.child(s).child(q_key), threads))
               .first;
    }
    return it->second;
  };

  SweepResult result;
  result.config = config;
  result.version = std::string(version());
  for (std::size_t di = 0; di < ds.size(); ++di) {
    const Calibration cal = calibrate(config.p, ds[di]);
    for (std::size_t qi = 0; qi < qs.size(); ++qi) {
      const std::size_t cell = di * qs.size() + qi;
      const ModelParams params{config.n, config.m, config.p, qs[qi], ds[di]};
      const StreamSeed stream = cell_root.child(cell);
      const auto values = simulate_statistics(stats, Hypothesis::kAlternative, params, &cal,
                                              config.trials, stream, threads);
      for (std::size_t s = 0; s < stats.size(); ++s) {
        const NullInterval& interval = null_for(s, qi);
        const PowerEstimate power = power_from_samples(values[s], interval);
        SweepCell c;
        c.d = ds[di];
        c.q = qs[qi];
        c.statistic = config.statistics[s];
        c.power = power.power;
        c.power_se = power.std_error;
        c.null_lo = interval.lower;
        c.null_hi = interval.upper;
        c.h1_mean = power.h1_mean;
        c.seed = stream.key();
        result.cells.push_back(c);
      }
    }
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells) {
  out << kSweepCsvHeader << '\n';
  for (const auto& c : cells) {
    out << c.d << ',' << format_double(c.q) << ',' << c.statistic << ','
        << format_double(c.power) << ',' << format_double(c.power_se) << ','
        << format_double(c.null_lo) << ',' << format_double(c.null_hi) << ','
        << format_double(c.h1_mean) << ',' << c.seed << '\n';
  }
}

std::vector<SweepCell> read_sweep_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kSweepCsvHeader) {
    throw std::invalid_argument("sweep CSV: missing or unexpected header");
  }
  std::vector<SweepCell> cells;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 9) {
      throw std::invalid_argument("sweep CSV row " + std::to_string(row) + ": expected 9 fields");
    }
    try {
      SweepCell c;
      c.d = std::stoi(fields[0]);
      c.q = std::stod(fields[1]);
      c.statistic = fields[2];
      c.power = std::stod(fields[3]);
      c.power_se = std::stod(fields[4]);
      c.null_lo = std::stod(fields[5]);
      c.null_hi = std::stod(fields[6]);
      c.h1_mean = std::stod(fields[7]);
      c.seed = std::stoull(fields[8]);
      if (!(c.power >= 0.0 && c.power <= 1.0)) throw std::invalid_argument("power outside [0, 1]");
      cells.push_back(c);
    } catch (const std::exception& e) {
      throw std::invalid_argument("sweep CSV row " + std::to_string(row) + ": " + e.what());
    }
  }
  return cells;
}

nlohmann::json results_json(const SweepResult& result) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : result.cells) {
    cells.push_back({{"d", c.d},
                     {"q", c.q},
                     {"stat", c.statistic},
                     {"power", c.power},
                     {"power_se", c.power_se},
                     {"null_lo", c.null_lo},
                     {"null_hi", c.null_hi},
                     {"h1_mean", c.h1_mean},
                     {"seed", c.seed}});
  }
  return {{"version", result.version}, {"config", to_json(result.config)}, {"cells", cells}};
}

SweepResult results_from_json(const nlohmann::json& json) {
  SweepResult result;
  try {
    result.version = json.at("version").get<std::string>();
    result.config = sweep_config_from_json(json.at("config"));
    for (const auto& c : json.at("cells")) {
      SweepCell cell;
      cell.d = c.at("d").get<int>();
      cell.q = c.at("q").get<double>();
      cell.statistic = c.at("stat").get<std::string>();
      cell.power = c.at("power").get<double>();
      cell.power_se = c.at("power_se").get<double>();
      cell.null_lo = c.at("null_lo").get<double>();
      cell.null_hi = c.at("null_hi").get<double>();
      cell.h1_mean = c.at("h1_mean").get<double>();
      cell.seed = c.at("seed").get<std::uint64_t>();
      result.cells.push_back(cell);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("sweep results: ") + e.what());
  }
  return result;
}

nlohmann::json sidecar_json(const SweepResult& result) {
  return {{"version", result.version},
          {"config", to_json(result.config)},
          {"wall_seconds", result.wall_seconds},
          {"cells", result.cells.size()}};
}

OutputFormat parse_output_format(std::string_view name) {
  if (name == "csv") return OutputFormat::kCsv;
  if (name == "json") return OutputFormat::kJson;
  throw std::invalid_argument("unknown output format: " + std::string(name));
}

void write_sweep_outputs(const std::filesystem::path& path, const SweepResult& result,
                         OutputFormat format) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    if (format == OutputFormat::kCsv) {
      write_sweep_csv(out, result.cells);
    } else {
      out << results_json(result).dump(2) << '\n';
    }
    if (!out) throw std::runtime_error("error while writing " + path.string());
  }
  std::filesystem::path meta = path;
  meta += ".meta.json";
  std::ofstream out(meta, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + meta.string());
  out << sidecar_json(result).dump(2) << '\n';
}

}  // namespace maskrgg
