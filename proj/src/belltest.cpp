#include "freqcert/belltest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "freqcert/errors.hpp"
#include "freqcert/seeding.hpp"

namespace freqcert {

double BellThresholdTable::threshold(std::size_t d) const {
  const auto it = thresholds.find(d);
  if (it == thresholds.end())
    throw UnsupportedDimensionError("no Bell visibility threshold tabulated for d = " + std::to_string(d));
  return it->second;
}

void BellThresholdTable::validate() const {
  double prev = 0.0;
  for (const auto& [d, v] : thresholds) {
    if (!(v > prev) || v > 1.0) throw std::invalid_argument("BellThresholdTable: thresholds must increase with d");
    prev = v;
  }
}

const char* to_string(BellVerdict verdict) {
  return verdict == BellVerdict::Violates ? "violates" : "inconclusive";
}

SuperpositionAnalyzer SuperpositionAnalyzer::make(std::vector<std::size_t> modes, std::size_t detect_mode,
                                                  std::optional<double> modulation_index) {
  if (modes.empty()) throw std::invalid_argument("SuperpositionAnalyzer: no modes");
  std::sort(modes.begin(), modes.end());
  std::vector<int> used;
  for (auto j : modes) used.push_back(static_cast<int>(detect_mode) - static_cast<int>(j));
  const double beta = modulation_index ? *modulation_index : best_modulation_index(used);
  SuperpositionAnalyzer a;
  a.eom = EomSettings::with_index(beta);
  const auto att = equalize_contributions(a.eom, used);
  for (int n : used) a.attenuation.push_back(att.at(n));
  a.modes = std::move(modes);
  a.detect_mode = detect_mode;
  return a;
}

ShaperMask SuperpositionAnalyzer::mask(std::size_t d, double theta_s, double theta_i) const {
  auto m = ShaperMask::closed(d);
  for (std::size_t k = 0; k < modes.size(); ++k) {
    if (modes[k] >= d) throw std::out_of_range("SuperpositionAnalyzer: mode outside grid");
    const double rel = static_cast<double>(modes[k] - modes.front());
    m.signal[modes[k]] = std::polar(attenuation[k], rel * theta_s);
    m.idler[modes[k]] = std::polar(attenuation[k], rel * theta_i);
  }
  return m;
}

std::vector<std::size_t> centered_modes(std::size_t d, std::size_t center, std::size_t grid_d) {
  if (d == 0) throw std::invalid_argument("centered_modes: d must be positive");
  const std::size_t below = (d - 1) / 2;
  if (center < below || center - below + d > grid_d)
    throw std::out_of_range("centered_modes: window does not fit in the grid");
  std::vector<std::size_t> out(d);
  for (std::size_t k = 0; k < d; ++k) out[k] = center - below + k;
  return out;
}

std::vector<double> theta_grid(std::size_t d, std::size_t points_per_period) {
  if (d == 0 || points_per_period == 0) throw std::invalid_argument("theta_grid: empty grid");
  const std::size_t n = (points_per_period + d - 1) / d * d;
  std::vector<double> t(n);
  for (std::size_t k = 0; k < n; ++k) t[k] = std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
  return t;
}

void FringeScan::validate() const {
  const auto n = theta.size();
  if (n < 2) throw std::invalid_argument("FringeScan: need at least two points");
  if (coincidences.size() != n || singles_s.size() != n || singles_i.size() != n || integration_time.size() != n)
    throw std::invalid_argument("FringeScan: column lengths differ");
  for (std::size_t k = 1; k < n; ++k)
    if (!(theta[k] > theta[k - 1])) throw std::invalid_argument("FringeScan: theta grid must increase strictly");
}

FringeScan phase_scan(const BiphotonState& state, const SuperpositionAnalyzer& analyzer, const NoiseModel& noise,
                      std::span<const double> theta, std::uint64_t seed) {
  const auto d = state.grid().d;
  if (analyzer.detect_mode >= d) throw std::out_of_range("phase_scan: detect mode outside grid");
  FringeScan scan;
  scan.d = analyzer.modes.size();
  scan.center_mode = analyzer.detect_mode;
  scan.noiseless = noise.noiseless;
  const Detection det{Filter::narrow(analyzer.detect_mode, d, noise.noiseless ? 0.0 : noise.crosstalk),
                      Filter::narrow(analyzer.detect_mode, d, noise.noiseless ? 0.0 : noise.crosstalk)};
  const double coherence = noise.noiseless ? 1.0 : noise.coherence;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const auto mask = analyzer.mask(d, theta[k], theta[k]);
    const auto probs = detection_probabilities(state, mask, analyzer.eom, det, coherence);
    scan.theta.push_back(theta[k]);
    scan.integration_time.push_back(noise.detector.integration_time);
    if (noise.noiseless) {
      DetectorModel ideal = noise.detector;
      ideal.singles_background = 0.0;
      const auto mean = expected_counts(probs, ideal);
      scan.coincidences.push_back(mean.true_coincidences);
      scan.singles_s.push_back(mean.singles_s);
      scan.singles_i.push_back(mean.singles_i);
    } else {
      SettingDescriptor setting{SettingType::Scan, analyzer.detect_mode, 0, theta[k], analyzer.eom.modulation_index, k};
      const auto rec = simulate_counts(probs, noise.detector, derive_seed(seed, k), setting);
      scan.coincidences.push_back(static_cast<double>(rec.coincidences));
      scan.singles_s.push_back(static_cast<double>(rec.singles_s));
      scan.singles_i.push_back(static_cast<double>(rec.singles_i));
    }
  }
  scan.validate();
  return scan;
}

Visibility visibility_from_extrema(double max_rate, double max_counts, double min_rate, double min_counts) {
  const double sum = max_rate + min_rate;
  if (!(sum > 0.0)) throw NumericalError("visibility: all-zero counts");
  Visibility v;
  v.value = std::clamp((max_rate - min_rate) / sum, 0.0, 1.0);
  // Rates carry relative Poisson error 1/sqrt(counts).
  const double s_max = max_counts > 0.0 ? max_rate / std::sqrt(max_counts) : 0.0;
  const double s_min = min_counts > 0.0 ? min_rate / std::sqrt(min_counts) : 0.0;
  const double d_max = 2.0 * min_rate / (sum * sum);
  const double d_min = 2.0 * max_rate / (sum * sum);
  v.sigma = std::hypot(d_max * s_max, d_min * s_min);
  return v;
}

Visibility visibility(const FringeScan& scan) {
  scan.validate();
  std::size_t hi = 0, lo = 0;
  std::vector<double> rate(scan.theta.size());
  for (std::size_t k = 0; k < rate.size(); ++k) {
    rate[k] = scan.integration_time[k] > 0.0 ? scan.coincidences[k] / scan.integration_time[k] : scan.coincidences[k];
    if (rate[k] > rate[hi]) hi = k;
    if (rate[k] < rate[lo]) lo = k;
  }
  if (scan.noiseless) {
    const double sum = rate[hi] + rate[lo];
    if (!(sum > 0.0)) throw NumericalError("visibility: all-zero counts");
    return {(rate[hi] - rate[lo]) / sum, 0.0};
  }
  return visibility_from_extrema(rate[hi], scan.coincidences[hi], rate[lo], scan.coincidences[lo]);
}

BellVerdict bell_check(double visibility, std::size_t d, const BellThresholdTable& table) {
  return visibility > table.threshold(d) ? BellVerdict::Violates : BellVerdict::Inconclusive;
}

double fringe_phase(const FringeScan& scan, std::size_t separation) {
  scan.validate();
  if (separation == 0) throw std::invalid_argument("fringe_phase: separation must be positive");
  const double w = 2.0 * static_cast<double>(separation);
  Complex acc{0.0, 0.0};
  for (std::size_t k = 0; k < scan.theta.size(); ++k) {
    const double rate = scan.integration_time[k] > 0.0 ? scan.coincidences[k] / scan.integration_time[k] : scan.coincidences[k];
    acc += rate * std::polar(1.0, -w * scan.theta[k]);
  }
  if (std::abs(acc) == 0.0) throw NumericalError("fringe_phase: no oscillating component");
  return std::arg(acc);
}

double model_fringe_phase(const BiphotonState& state, const SuperpositionAnalyzer& analyzer, std::size_t separation) {
  if (separation == 0) throw std::invalid_argument("model_fringe_phase: separation must be positive");
  const auto d = state.grid().d;
  const Detection det{Filter::narrow(analyzer.detect_mode, d), Filter::narrow(analyzer.detect_mode, d)};
  double p[4];
  for (int q = 0; q < 4; ++q) {
    const double theta = q * (std::numbers::pi / 2.0) / (2.0 * static_cast<double>(separation));
    p[q] = detection_probabilities(state, analyzer.mask(d, theta, theta), analyzer.eom, det).coincidence;
  }
  return std::atan2(p[3] - p[1], p[0] - p[2]);
}

SuperpositionAnalyzer pair_analyzer(std::size_t j, std::size_t separation, std::size_t grid_d) {
  if (separation == 0 || j + separation >= grid_d)
    throw std::out_of_range("pair_analyzer: subspace {j, j+i} outside grid");
  return SuperpositionAnalyzer::make({j, j + separation}, j + separation / 2);
}

}  // namespace freqcert
