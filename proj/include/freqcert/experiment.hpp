#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "freqcert/apparatus.hpp"
#include "freqcert/belltest.hpp"
#include "freqcert/certify.hpp"
#include "freqcert/config.hpp"

namespace freqcert {

struct Dataset {
  std::size_t d = 0;
  std::vector<MeasurementRecord> records;

  std::size_t diagonal_settings() const;
  /// Distinct (fringe_max | fringe_min, j, i) combinations.
  std::size_t fringe_groups() const;
};

/// Computational-basis settings (correlated + bucket per mode) and the
/// extremum settings of every {j, j+i} subspace for i in config.neighbors.
/// Extremum phases are placed using config.assumed_c2 (default: the true c2).
Dataset simulate_dataset(const ExperimentConfig& config, std::uint64_t seed, bool noiseless);

/// Analyzer settings, noise and detection geometry for the simulated setup.
NoiseModel noise_model(const ExperimentConfig& config, bool noiseless);

struct BellRun {
  std::size_t d = 0;
  FringeScan scan;
  Visibility visibility;
  double threshold = 0.0;
  BellVerdict verdict = BellVerdict::Inconclusive;
  double modulation_index = 0.0;
};

/// Throws UnsupportedDimensionError before simulating when d is not tabulated.
BellRun run_belltest(const ExperimentConfig& config, std::size_t d, std::uint64_t seed, bool noiseless,
                     const BellThresholdTable& table = {});

CertificationInputs inputs_from_dataset(const Dataset& data, const ExperimentConfig& config);

/// Uniform diagonals 1/d and constant visibilities per separation.
CertificationInputs reference_inputs(std::size_t d, const std::map<std::size_t, Estimate>& visibility_by_separation);

/// Default constants of the reference dataset: V_1 = 0.9685(7),
/// V_2 = 0.9794(5), V_6 = 0.968(1).
std::map<std::size_t, Estimate> reference_visibilities();

/// Simulated full phase scans of {j, j+i} for each listed j, reduced to
/// fringe phases.
std::vector<FringePhase> simulate_dispersion_scans(const ExperimentConfig& config, std::size_t separation,
                                                   std::span<const std::size_t> modes, std::uint64_t seed,
                                                   bool noiseless);

}  // namespace freqcert
