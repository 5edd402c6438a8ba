#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "freqcert/apparatus.hpp"
#include "freqcert/state.hpp"

namespace freqcert {

/// Minimal visibility needed to violate local realism for a d-mode phase scan.
struct BellThresholdTable {
  std::map<std::size_t, double> thresholds{{2, 0.707}, {3, 0.775}, {5, 0.846}, {7, 0.883}};

  /// Throws UnsupportedDimensionError for untabulated d.
  double threshold(std::size_t d) const;
  bool supports(std::size_t d) const { return thresholds.count(d) != 0; }
  void validate() const;
};

enum class BellVerdict { Violates, Inconclusive };

const char* to_string(BellVerdict verdict);

/// Noise applied on top of the ideal analyzer.
struct NoiseModel {
  DetectorModel detector;
  double coherence = 0.97;   // weight of the coherent part of the source
  double crosstalk = 0.0;    // DEMUX leakage from adjacent bins
  bool noiseless = false;    // expected true coincidences only
};

/// Shaper + modulator configuration that folds a set of grid modes into one
/// detected bin for both photons, with the shaper equalizing the Bessel weights.
struct SuperpositionAnalyzer {
  std::vector<std::size_t> modes;   // grid indices, increasing
  std::size_t detect_mode = 0;
  EomSettings eom;
  std::vector<double> attenuation;  // per entry of `modes`

  /// Modulation index defaults to the one maximizing the weakest used sideband.
  static SuperpositionAnalyzer make(std::vector<std::size_t> modes, std::size_t detect_mode,
                                    std::optional<double> modulation_index = std::nullopt);

  /// Mask exp(i (j - modes[0]) theta) on each open mode, scaled by the attenuation.
  ShaperMask mask(std::size_t d, double theta_s, double theta_i) const;
};

/// `d` consecutive modes around `center`; for even d the extra mode sits above.
std::vector<std::size_t> centered_modes(std::size_t d, std::size_t center, std::size_t grid_d);

/// Uniform grid on [0, pi) with at least `points_per_period` points and a
/// point count divisible by d, so the fringe zeros at pi*k/d are sampled.
std::vector<double> theta_grid(std::size_t d, std::size_t points_per_period = 100);

struct FringeScan {
  std::size_t d = 0;
  std::size_t center_mode = 0;
  std::vector<double> theta;
  std::vector<double> coincidences;
  std::vector<double> singles_s;
  std::vector<double> singles_i;
  std::vector<double> integration_time;
  bool noiseless = false;

  void validate() const;
};

/// Scans theta_s = theta_i = theta and records coincidences at
/// (detect_mode, detect_mode). Point k uses derive_seed(seed, k).
FringeScan phase_scan(const BiphotonState& state, const SuperpositionAnalyzer& analyzer,
                      const NoiseModel& noise, std::span<const double> theta, std::uint64_t seed);

struct Visibility {
  double value = 0.0;
  double sigma = 0.0;
};

/// (max - min) / (max + min) with Poisson propagation from the two count totals.
Visibility visibility_from_extrema(double max_rate, double max_counts, double min_rate, double min_counts);

/// Raw grid extrema, no fitting and no accidental subtraction. Noiseless scans
/// report sigma = 0.
Visibility visibility(const FringeScan& scan);

BellVerdict bell_check(double visibility, std::size_t d, const BellThresholdTable& table = {});

/// Phase phi of the fringe component C ~ a + b cos(2 separation theta + phi),
/// from the discrete Fourier coefficient over the scan (full periods assumed).
double fringe_phase(const FringeScan& scan, std::size_t separation);

/// Expected fringe phase of a noiseless two-mode analyzer, from four samples.
double model_fringe_phase(const BiphotonState& state, const SuperpositionAnalyzer& analyzer, std::size_t separation);

/// Two-mode analyzer for the subspace {j, j + separation}, detected at j + separation/2.
SuperpositionAnalyzer pair_analyzer(std::size_t j, std::size_t separation, std::size_t grid_d);

}  // namespace freqcert
