// freqcert command-line tool: simulate datasets, run Bell-type phase scans,
// certify entanglement dimensionality and calibrate dispersion.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "freqcert/config.hpp"
#include "freqcert/errors.hpp"
#include "freqcert/experiment.hpp"
#include "freqcert/io.hpp"

namespace fs = std::filesystem;
using namespace freqcert;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kInvalidConfig = 2, kIncompleteDataset = 3, kNumericalFailure = 4 };

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> d;
  std::optional<double> c2;
  std::optional<double> coherence;
  std::optional<double> target_car;
  bool noiseless = false;
};

struct CertifyOptions {
  std::string data_dir;
  std::string diagonal_path;
  std::string visibility_path;
  std::string out_path;
  std::optional<std::string> neighbors;
  std::optional<std::size_t> mc;
  std::optional<std::size_t> dmax;
  std::optional<double> conservative_sigma;
  std::optional<std::string> order;
  std::optional<std::string> normalization;
  bool reference = false;
};

ExperimentConfig resolve_config(const GlobalOptions& g, bool validate = true) {
  ExperimentConfig c = g.config_path.empty() ? ExperimentConfig{} : load_config(g.config_path);
  if (g.seed) c.seed = *g.seed;
  if (g.d) c.grid.d = *g.d;
  if (g.c2) c.c2 = *g.c2;
  if (g.coherence) c.coherence = *g.coherence;
  if (g.target_car) c.target_car = *g.target_car;
  if (c.amplitudes.size() != c.grid.d) c.amplitudes.clear();
  // The built-in separations are clipped on small grids; explicit lists are not.
  if (c.neighbors == ExperimentConfig{}.neighbors) std::erase_if(c.neighbors, [&](std::size_t i) { return i >= c.grid.d; });
  if (validate) c.validate();
  return c;
}

void apply(const CertifyOptions& o, ExperimentConfig& c) {
  if (o.neighbors) c.neighbors = parse_index_list(*o.neighbors);
  if (o.mc) c.mc_samples = *o.mc;
  if (o.dmax) c.dmax = *o.dmax;
  if (o.conservative_sigma) c.conservative_sigma = *o.conservative_sigma;
  if (o.order) c.fidelity.order = subspace_order_from_string(*o.order);
  if (o.normalization) c.fidelity.normalization = normalization_from_string(*o.normalization);
  c.validate();
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IncompleteDatasetError("cannot read " + path.string());
  return in;
}

void emit_json(const nlohmann::ordered_json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    auto out = open_output(path);
    out << j.dump(2) << '\n';
  }
}

int cmd_simulate(const GlobalOptions& g, const std::string& out_dir, bool reference) {
  const auto c = resolve_config(g);
  fs::create_directories(out_dir);
  if (reference) {
    const auto in = reference_inputs(c.grid.d, reference_visibilities());
    auto diag = open_output(fs::path(out_dir) / "diagonal.csv");
    io::write_diagonal(diag, in.diagonal);
    auto vis = open_output(fs::path(out_dir) / "visibility.csv");
    io::write_visibilities(vis, in.visibilities);
    std::cerr << "wrote reference diagonal (" << in.diagonal.dimension() << " modes) and "
              << in.visibilities.size() << " visibilities to " << out_dir << '\n';
    return kOk;
  }
  const auto data = simulate_dataset(c, c.seed, g.noiseless);
  auto out = open_output(fs::path(out_dir) / "measurements.csv");
  io::write_measurements(out, data.records);
  std::cerr << "d = " << data.d << ": " << data.diagonal_settings() << " diagonal settings, " << data.fringe_groups()
            << " fringe-extremum setting groups, " << data.records.size() << " rows\n";
  return kOk;
}

int cmd_belltest(const GlobalOptions& g, std::size_t dim, const std::string& out_dir) {
  const auto c = resolve_config(g);
  const auto run = run_belltest(c, dim, c.seed, g.noiseless);
  const auto j = io::to_json(run);
  if (!out_dir.empty()) {
    auto csv = open_output(fs::path(out_dir) / ("fringe_d" + std::to_string(dim) + ".csv"));
    io::write_fringe(csv, run.scan);
    emit_json(j, (fs::path(out_dir) / ("verdict_d" + std::to_string(dim) + ".json")).string());
  }
  std::cout << j.dump(2) << '\n';
  return kOk;
}

int cmd_certify(const GlobalOptions& g, const CertifyOptions& o) {
  auto c = resolve_config(g, false);
  apply(o, c);

  CertificationInputs inputs;
  std::vector<std::string> assumptions{
      "coherence phases aligned: measured and bounded magnitudes enter the fidelity as non-negative reals",
      "uncorrelated elements <j,k|rho|j',k'> (j != k) contribute zero to the fidelity",
  };
  if (o.reference) {
    inputs = reference_inputs(c.grid.d, reference_visibilities());
    assumptions.push_back("uniform diagonal probabilities 1/d (per-mode spectrum not available)");
  } else if (!o.diagonal_path.empty() || !o.visibility_path.empty()) {
    if (o.diagonal_path.empty() || o.visibility_path.empty())
      throw IncompleteDatasetError("--diagonal and --visibility must be given together");
    auto din = open_input(o.diagonal_path);
    auto vin = open_input(o.visibility_path);
    inputs.diagonal = io::read_diagonal(din);
    inputs.visibilities = io::read_visibilities(vin);
  } else {
    Dataset data;
    if (!o.data_dir.empty()) {
      const fs::path path = fs::is_directory(o.data_dir) ? fs::path(o.data_dir) / "measurements.csv" : fs::path(o.data_dir);
      auto in = open_input(path);
      data.records = io::read_measurements(in);
      for (const auto& r : data.records) data.d = std::max(data.d, r.setting.mode + r.setting.separation + 1);
    } else {
      data = simulate_dataset(c, c.seed, g.noiseless);
      assumptions.push_back("dataset simulated in memory from the configuration");
    }
    inputs = inputs_from_dataset(data, c);
  }
  inputs = select_neighbors(inputs, c.neighbors);
  inputs.conservative_sigma = c.conservative_sigma;
  inputs.fidelity = c.fidelity;
  const auto full_d = inputs.diagonal.dimension();
  if (c.dmax) inputs = restrict_inputs(inputs, c.dmax);

  assumptions.push_back(c.conservative_sigma > 0.0
                            ? "measured coherences reduced by " + std::to_string(c.conservative_sigma) + " sigma"
                            : "measured coherences enter at their central values");
  assumptions.push_back(std::string("d' block trace normalization: ") + to_string(c.fidelity.normalization));

  CoherenceBoundMatrix filled({1.0, 1.0});
  auto result = certify(inputs, &filled);
  if (c.mc_samples > 0) result.monte_carlo = monte_carlo(inputs, c.mc_samples, c.seed);

  io::CertificationReport report;
  report.d = full_d;
  report.neighbors = c.neighbors;
  report.dmax = c.dmax;
  report.conservative_sigma = c.conservative_sigma;
  report.fidelity = c.fidelity;
  report.result = result;
  report.matrix = &filled;
  report.assumptions = assumptions;
  emit_json(io::to_json(report), o.out_path);
  std::cerr << "certified entanglement dimensionality k* = " << result.k_star << " (first reached at d' = "
            << result.k_star_at << ")";
  if (result.monte_carlo) std::cerr << ", Monte Carlo " << result.monte_carlo->mean << " +- " << result.monte_carlo->sigma;
  std::cerr << '\n';
  return kOk;
}

int cmd_calibrate(const GlobalOptions& g, std::size_t separation, const std::string& modes_text,
                  const std::string& scans_path, const std::string& out_path) {
  const auto c = resolve_config(g);
  std::vector<FringePhase> phases;
  double truth = std::numeric_limits<double>::quiet_NaN();
  if (!scans_path.empty()) {
    auto in = open_input(scans_path);
    phases = io::read_scan_phases(in);
  } else {
    std::vector<std::size_t> modes;
    if (modes_text.empty()) {
      for (std::size_t j = 0; j + separation < c.grid.d; j += 10) modes.push_back(j);
    } else {
      for (auto label : parse_index_list(modes_text)) {
        if (label == 0) throw ConfigError("--modes are 1-based");
        modes.push_back(label - 1);
      }
    }
    phases = simulate_dispersion_scans(c, separation, modes, c.seed, g.noiseless);
    truth = c.c2;
  }
  emit_json(io::to_json(dispersion_calibrate(phases), truth), out_path);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-bin entanglement simulation and dimensionality certification"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_path, "Experiment config file ([grid] [source] [apparatus] [scan] [certify])");
  app.add_option("--seed", g.seed, "Master seed")->envname("FREQCERT_SEED");
  app.add_option("--d", g.d, "Number of frequency modes per photon");
  app.add_option("--c2", g.c2, "Quadratic dispersion coefficient (rad per mode index squared)");
  app.add_option("--coherence", g.coherence, "Coherent weight of the source state");
  app.add_option("--target-car", g.target_car, "Calibrate the pair rate to this CAR (0 keeps pair_rate)");
  app.add_flag("--noiseless", g.noiseless, "Expected counts only: no accidentals, background or shot noise");

  std::string sim_out;
  bool sim_reference = false;
  auto* sim = app.add_subcommand("simulate", "Write a simulated measurement dataset");
  sim->add_option("--out", sim_out, "Output directory")->required();
  sim->add_flag("--reference", sim_reference, "Write uniform diagonals and the reference visibilities instead");

  std::size_t bell_d = 0;
  std::string bell_out;
  auto* bell = app.add_subcommand("belltest", "Phase-scan Bell-type test for d = 2, 3, 5 or 7");
  bell->add_option("dimension", bell_d, "Superposition dimension")->required();
  bell->add_option("--out", bell_out, "Directory for fringe CSV and verdict JSON");

  CertifyOptions co, mo;
  auto add_certify_options = [](CLI::App* sub, CertifyOptions& o) {
    sub->add_option("--data", o.data_dir, "measurements.csv, or the directory holding it");
    sub->add_option("--diagonal", o.diagonal_path, "Diagonal CSV (j,p,sigma_p)");
    sub->add_option("--visibility", o.visibility_path, "Visibility CSV (j,i,V,sigma_V)");
    sub->add_flag("--reference", o.reference, "Use uniform diagonals and the reference visibilities");
    sub->add_option("--neighbors", o.neighbors, "Subspace separations to use, e.g. 1,2,6");
    sub->add_option("--mc", o.mc, "Monte Carlo samples (0 disables)");
    sub->add_option("--dmax", o.dmax, "Restrict the data to the first D modes");
    sub->add_option("--conservative-sigma", o.conservative_sigma, "Shift measured coherences down by n sigma");
    sub->add_option("--order", o.order, "Subspace order for the d' scan: first|window|greedy");
    sub->add_option("--normalization", o.normalization, "Block trace: share|full|correlated");
    sub->add_option("--out", o.out_path, "Result JSON path (default stdout)");
  };
  auto* cert = app.add_subcommand("certify", "Lower-bound the density matrix and certify the Schmidt number");
  add_certify_options(cert, co);
  auto* mc = app.add_subcommand("mc", "certify with Monte Carlo error propagation (default 200 samples)");
  add_certify_options(mc, mo);

  std::size_t cal_sep = 1;
  std::string cal_modes, cal_scans, cal_out;
  auto* cal = app.add_subcommand("calibrate-dispersion", "Fit the quadratic dispersion from fringe phases");
  cal->add_option("--separation", cal_sep, "Subspace separation i for simulated scans");
  cal->add_option("--modes", cal_modes, "1-based modes j to scan, e.g. 1,11,21");
  cal->add_option("--scans", cal_scans, "CSV of measured scans (j,i,theta_rad,coincidences[,time_s])");
  cal->add_option("--out", cal_out, "Result JSON path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalidConfig;
  }

  try {
    if (*sim) return cmd_simulate(g, sim_out, sim_reference);
    if (*bell) return cmd_belltest(g, bell_d, bell_out);
    if (*cert) return cmd_certify(g, co);
    if (*mc) {
      if (!mo.mc) mo.mc = 200;
      return cmd_certify(g, mo);
    }
    if (*cal) return cmd_calibrate(g, cal_sep, cal_modes, cal_scans, cal_out);
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const UnsupportedDimensionError& e) {
    std::cerr << "unsupported dimension: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const IncompleteDatasetError& e) {
    std::cerr << "incomplete dataset: " << e.what() << '\n';
    return kIncompleteDataset;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
