#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "freqcert/apparatus.hpp"
#include "freqcert/certify.hpp"
#include "freqcert/state.hpp"

namespace freqcert {

/// Everything needed to simulate and certify one experiment. Loaded from a
/// sectioned key = value file; every key is optional and command-line flags
/// override whatever the file sets.
///
///   [grid]      d, fsr_ghz, bandwidth_ghz, center_thz
///   [source]    amplitudes (uniform | comma list), c2, coherence
///   [apparatus] pair_rate, efficiency, window_s, background_cps, target_car,
///               crosstalk, corr_time_s, fringe_time_s, modulation_index
///   [scan]      points_per_period, samples_per_extremum, bell_center, assumed_c2
///   [certify]   neighbors, mc, seed, conservative_sigma, dmax, order, normalization
struct ExperimentConfig {
  BinGrid grid;
  std::vector<double> amplitudes;  // empty: uniform spectrum
  double c2 = 0.0;
  double coherence = 0.97;

  DetectorModel detector;
  double target_car = 1400.0;  // 0 keeps detector.pair_rate as given
  double crosstalk = 0.0;
  double fringe_time = 0.1;    // s per extremum sample
  std::optional<double> modulation_index;

  std::size_t points_per_period = 100;
  std::size_t samples_per_extremum = 60;
  std::size_t bell_center = 5;  // 0-based (the 6th mode)
  std::optional<double> assumed_c2;

  std::vector<std::size_t> neighbors{1, 2, 6};
  std::size_t mc_samples = 0;
  std::uint64_t seed = 1;
  double conservative_sigma = 0.0;
  std::size_t dmax = 0;
  FidelityOptions fidelity;

  /// Re-checks every module-level invariant; throws ConfigError.
  void validate() const;

  /// Detector with pair_rate calibrated to target_car on this grid.
  DetectorModel effective_detector() const;

  /// Source state including dispersion.
  BiphotonState source_state() const;
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);

/// "1,2,6" -> {1, 2, 6}; throws ConfigError on malformed lists.
std::vector<std::size_t> parse_index_list(const std::string& text);

SubspaceOrder subspace_order_from_string(const std::string& name);
TraceNormalization normalization_from_string(const std::string& name);
const char* to_string(SubspaceOrder order);
const char* to_string(TraceNormalization norm);

}  // namespace freqcert
