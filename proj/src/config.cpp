#include "freqcert/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "freqcert/errors.hpp"

namespace freqcert {

namespace pt = boost::property_tree;

void ExperimentConfig::validate() const {
  try {
    grid.validate();
    detector.validate();
    if (!amplitudes.empty()) {
      if (amplitudes.size() != grid.d) throw std::invalid_argument("source.amplitudes needs one value per mode");
      (void)source_state();
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (!std::isfinite(c2)) throw ConfigError("source.c2 must be finite");
  if (!(coherence >= 0.0 && coherence <= 1.0)) throw ConfigError("source.coherence must lie in [0, 1]");
  if (!(target_car >= 0.0)) throw ConfigError("apparatus.target_car must be >= 0");
  if (!(crosstalk >= 0.0 && crosstalk <= 1.0)) throw ConfigError("apparatus.crosstalk must lie in [0, 1]");
  if (!(fringe_time > 0.0)) throw ConfigError("apparatus.fringe_time_s must be positive");
  if (modulation_index && !(*modulation_index >= 0.0)) throw ConfigError("apparatus.modulation_index must be >= 0");
  if (points_per_period < 4) throw ConfigError("scan.points_per_period must be at least 4");
  if (samples_per_extremum < 1) throw ConfigError("scan.samples_per_extremum must be positive");
  if (neighbors.empty()) throw ConfigError("certify.neighbors is empty");
  for (auto i : neighbors)
    if (i == 0 || i >= grid.d) throw ConfigError("certify.neighbors entries must lie in 1..d-1");
  if (!(conservative_sigma >= 0.0)) throw ConfigError("certify.conservative_sigma must be >= 0");
  if (dmax == 1) throw ConfigError("certify.dmax must be 0 (all modes) or at least 2");
}

DetectorModel ExperimentConfig::effective_detector() const {
  if (target_car == 0.0) return detector;
  return calibrate_pair_rate(detector, grid.d, target_car);
}

BiphotonState ExperimentConfig::source_state() const {
  BiphotonState base = amplitudes.empty()
                           ? make_maximally_entangled(grid)
                           : make_state(grid, std::vector<Complex>(amplitudes.begin(), amplitudes.end()));
  return c2 == 0.0 ? base : apply_dispersion(base, c2);
}

std::vector<std::size_t> parse_index_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError("empty entry in list '" + text + "'");
    item = item.substr(b, e - b + 1);
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || item.front() == '-') throw ConfigError("not a non-negative integer: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

SubspaceOrder subspace_order_from_string(const std::string& name) {
  if (name == "first") return SubspaceOrder::FirstModes;
  if (name == "window") return SubspaceOrder::ContiguousWindow;
  if (name == "greedy") return SubspaceOrder::Greedy;
  throw ConfigError("unknown subspace order '" + name + "' (first|window|greedy)");
}

TraceNormalization normalization_from_string(const std::string& name) {
  if (name == "share") return TraceNormalization::BucketShare;
  if (name == "full") return TraceNormalization::BucketFull;
  if (name == "correlated") return TraceNormalization::CorrelatedOnly;
  throw ConfigError("unknown normalization '" + name + "' (share|full|correlated)");
}

const char* to_string(SubspaceOrder order) {
  switch (order) {
    case SubspaceOrder::FirstModes: return "first";
    case SubspaceOrder::ContiguousWindow: return "window";
    case SubspaceOrder::Greedy: return "greedy";
  }
  return "?";
}

const char* to_string(TraceNormalization norm) {
  switch (norm) {
    case TraceNormalization::BucketShare: return "share";
    case TraceNormalization::BucketFull: return "full";
    case TraceNormalization::CorrelatedOnly: return "correlated";
  }
  return "?";
}

namespace {

template <typename T>
T get(const pt::ptree& section, const std::string& key, T fallback) {
  const auto v = section.get_optional<std::string>(key);
  if (!v) return fallback;
  std::istringstream ss(*v);
  T out{};
  ss >> out;
  if (ss.fail() || !(ss >> std::ws).eof()) throw ConfigError("cannot parse value '" + *v + "' for key " + key);
  return out;
}

std::vector<double> parse_amplitudes(const std::string& text) {
  if (text == "uniform") return {};
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("bad amplitude '" + item + "'");
    }
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
  // read_ini only knows whole-line comments; drop trailing "; ..." and "# ..." first.
  std::stringstream cleaned;
  for (std::string line; std::getline(in, line);) {
    for (std::size_t k = 1; k < line.size(); ++k)
      if ((line[k] == ';' || line[k] == '#') && std::isspace(static_cast<unsigned char>(line[k - 1]))) {
        line.erase(k);
        break;
      }
    cleaned << line << '\n';
  }
  pt::ptree tree;
  try {
    pt::read_ini(cleaned, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  static const std::map<std::string, std::set<std::string>> known{
      {"grid", {"d", "fsr_ghz", "bandwidth_ghz", "center_thz"}},
      {"source", {"amplitudes", "c2", "coherence"}},
      {"apparatus",
       {"pair_rate", "efficiency", "window_s", "background_cps", "target_car", "crosstalk", "corr_time_s",
        "fringe_time_s", "modulation_index"}},
      {"scan", {"points_per_period", "samples_per_extremum", "bell_center", "assumed_c2"}},
      {"certify", {"neighbors", "mc", "seed", "conservative_sigma", "dmax", "order", "normalization"}},
  };
  for (const auto& [name, section] : tree) {
    const auto it = known.find(name);
    if (it == known.end()) throw ConfigError("unknown config section [" + name + "]");
    for (const auto& [key, value] : section)
      if (!it->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + name + "]");
  }
  const pt::ptree empty;
  auto section = [&](const char* name) -> const pt::ptree& {
    const auto child = tree.get_child_optional(name);
    return child ? *child : empty;
  };

  ExperimentConfig c;
  const auto& g = section("grid");
  c.grid.d = get(g, "d", c.grid.d);
  c.grid.fsr_ghz = get(g, "fsr_ghz", c.grid.fsr_ghz);
  c.grid.bin_bandwidth_ghz = get(g, "bandwidth_ghz", c.grid.bin_bandwidth_ghz);
  c.grid.center_thz = get(g, "center_thz", c.grid.center_thz);

  const auto& s = section("source");
  if (auto a = s.get_optional<std::string>("amplitudes")) c.amplitudes = parse_amplitudes(*a);
  c.c2 = get(s, "c2", c.c2);
  c.coherence = get(s, "coherence", c.coherence);

  const auto& a = section("apparatus");
  c.detector.pair_rate = get(a, "pair_rate", c.detector.pair_rate);
  c.detector.system_efficiency = get(a, "efficiency", c.detector.system_efficiency);
  c.detector.coincidence_window = get(a, "window_s", c.detector.coincidence_window);
  c.detector.singles_background = get(a, "background_cps", c.detector.singles_background);
  c.detector.integration_time = get(a, "corr_time_s", c.detector.integration_time);
  c.target_car = get(a, "target_car", c.target_car);
  c.crosstalk = get(a, "crosstalk", c.crosstalk);
  c.fringe_time = get(a, "fringe_time_s", c.fringe_time);
  if (a.count("modulation_index")) c.modulation_index = get(a, "modulation_index", 0.0);

  const auto& sc = section("scan");
  c.points_per_period = get(sc, "points_per_period", c.points_per_period);
  c.samples_per_extremum = get(sc, "samples_per_extremum", c.samples_per_extremum);
  if (sc.count("bell_center")) {
    const auto one_based = get<std::size_t>(sc, "bell_center", 6);
    if (one_based == 0) throw ConfigError("scan.bell_center is 1-based");
    c.bell_center = one_based - 1;
  }
  if (sc.count("assumed_c2")) c.assumed_c2 = get(sc, "assumed_c2", 0.0);

  const auto& ce = section("certify");
  if (auto n = ce.get_optional<std::string>("neighbors")) c.neighbors = parse_index_list(*n);
  c.mc_samples = get(ce, "mc", c.mc_samples);
  c.seed = get(ce, "seed", c.seed);
  c.conservative_sigma = get(ce, "conservative_sigma", c.conservative_sigma);
  c.dmax = get(ce, "dmax", c.dmax);
  if (auto o = ce.get_optional<std::string>("order")) c.fidelity.order = subspace_order_from_string(*o);
  if (auto n = ce.get_optional<std::string>("normalization")) c.fidelity.normalization = normalization_from_string(*n);

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in);
}

}  // namespace freqcert
