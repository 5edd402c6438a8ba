#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "freqcert/state.hpp"

namespace freqcert {

/// Per-mode complex transmission of the pulse shaper, one entry per grid mode
/// for each photon. |t| is the amplitude attenuation, arg(t) the applied phase.
struct ShaperMask {
  std::vector<Complex> signal;
  std::vector<Complex> idler;

  static ShaperMask identity(std::size_t d);
  /// All modes blocked; callers open the ones they need.
  static ShaperMask closed(std::size_t d);

  void validate(std::size_t d) const;
};

/// Phase modulation at the grid spacing. Sideband n of a photon picks up
/// J_n(beta) * exp(i n rf_phase).
struct EomSettings {
  double modulation_index = 0.0;
  double rf_phase = 0.0;
  int truncation_order = 20;

  static int minimum_order(double beta);
  static EomSettings with_index(double beta, double rf_phase = 0.0);
  void validate() const;
};

struct DetectorModel {
  double pair_rate = 7.0e7;           // pairs/s entering the analyzer
  double system_efficiency = 0.15;    // per photon
  double coincidence_window = 1e-9;   // s
  double singles_background = 1000.0; // counts/s per detector and per filtered bin
  double integration_time = 1.0;      // s

  void validate() const;
};

/// Power transmission of a detection filter over grid modes.
struct Filter {
  std::vector<std::pair<std::size_t, double>> passband;

  /// DEMUX channel at `mode`, leaking `crosstalk` of the neighbouring bins.
  static Filter narrow(std::size_t mode, std::size_t d, double crosstalk = 0.0);
  /// Flat broadband filter over the listed modes (bucket detection).
  static Filter broadband(std::span<const std::size_t> modes);

  /// Equivalent number of bins, used to scale the background.
  double bins() const;
};

struct Detection {
  Filter signal;
  Filter idler;
};

struct DetectionProbabilities {
  double coincidence = 0.0;   // both photons pass their filters
  double signal = 0.0;        // marginal for the signal detector
  double idler = 0.0;
  double signal_bins = 1.0;
  double idler_bins = 1.0;
};

enum class SettingType { Correlated, Bucket, FringeMax, FringeMin, Scan };

std::string to_string(SettingType type);
SettingType setting_type_from_string(const std::string& name);

/// Describes the analyzer configuration a record was taken with. Mode indices
/// are 0-based grid indices; `separation` is the subspace distance i for
/// fringe settings and 0 otherwise.
struct SettingDescriptor {
  SettingType type = SettingType::Correlated;
  std::size_t mode = 0;
  std::size_t separation = 0;
  double theta = 0.0;
  double modulation_index = 0.0;
  std::size_t sample = 0;
};

struct MeasurementRecord {
  SettingDescriptor setting;
  std::int64_t coincidences = 0;
  std::int64_t singles_s = 0;
  std::int64_t singles_i = 0;
  double accidentals_estimate = 0.0;
  double integration_time = 0.0;
};

struct ExpectedCounts {
  double true_coincidences = 0.0;
  double accidentals = 0.0;
  double singles_s = 0.0;
  double singles_i = 0.0;

  double coincidences() const { return true_coincidences + accidentals; }
};

/// Sideband amplitudes w_n = J_n(beta) exp(i n rf_phase) for n = -order..order,
/// stored at index n + order. Bessel values come from Miller's downward
/// recurrence normalized with J_0 + 2 sum J_2k = 1.
std::vector<Complex> bessel_weights(double beta, int order, double rf_phase = 0.0);

/// J_n(beta) for n = 0..order.
std::vector<double> bessel_j_table(double beta, int order);

/// Two-photon amplitude for landing in grid modes (signal, idler) after the
/// shaper and the modulator.
Complex output_mode_amplitude(const BiphotonState& state, const ShaperMask& mask,
                              const EomSettings& eom, std::size_t signal_mode,
                              std::size_t idler_mode);

/// Coincidence and singles probabilities for a detection setting. The source
/// is a mixture `coherence * |psi><psi| + (1 - coherence) * dephased(psi)`.
DetectionProbabilities detection_probabilities(const BiphotonState& state, const ShaperMask& mask,
                                               const EomSettings& eom, const Detection& detection,
                                               double coherence = 1.0);

/// Attenuation per used sideband so that every contributing mode reaches the
/// detected mode with weight min_n |J_n(beta)|. Keys are sideband orders.
std::map<int, double> equalize_contributions(const EomSettings& eom, std::span<const int> used_sidebands);

/// Modulation index in (0, beta_max] maximizing min |J_n| over `used_sidebands`.
double best_modulation_index(std::span<const int> used_sidebands, double beta_max = 8.0);

ExpectedCounts expected_counts(const DetectionProbabilities& probs, const DetectorModel& det);

/// Poisson-sampled record. Coincidences include accidentals from the singles
/// product; the accidental expectation is stored separately.
MeasurementRecord simulate_counts(const DetectionProbabilities& probs, const DetectorModel& det,
                                  std::uint64_t seed, SettingDescriptor setting = {});

/// Record with the expected true coincidences rounded and no accidentals.
MeasurementRecord noiseless_record(const DetectionProbabilities& probs, const DetectorModel& det,
                                   SettingDescriptor setting = {});

/// Coincidence-to-accidental ratio of a correlated setting on a uniform d-mode
/// state, computed from the detector model alone.
double analytic_car(const DetectorModel& det, std::size_t d);

/// Copy of `det` with pair_rate chosen so analytic_car(det, d) == target_car
/// (high-rate branch). Throws NumericalError if the target is unreachable.
DetectorModel calibrate_pair_rate(DetectorModel det, std::size_t d, double target_car);

}  // namespace freqcert
