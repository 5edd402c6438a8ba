#include "freqcert/apparatus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "freqcert/errors.hpp"

namespace freqcert {

ShaperMask ShaperMask::identity(std::size_t d) {
  return {std::vector<Complex>(d, Complex{1.0, 0.0}), std::vector<Complex>(d, Complex{1.0, 0.0})};
}

ShaperMask ShaperMask::closed(std::size_t d) {
  return {std::vector<Complex>(d), std::vector<Complex>(d)};
}

void ShaperMask::validate(std::size_t d) const {
  if (signal.size() != d || idler.size() != d)
    throw std::invalid_argument("ShaperMask: expected one transmission per grid mode");
  auto bad = [](const Complex& t) { return !(std::abs(t) <= 1.0 + 1e-12); };
  if (std::any_of(signal.begin(), signal.end(), bad) || std::any_of(idler.begin(), idler.end(), bad))
    throw std::invalid_argument("ShaperMask: |t| must not exceed 1");
}

int EomSettings::minimum_order(double beta) { return static_cast<int>(std::ceil(beta)) + 20; }

EomSettings EomSettings::with_index(double beta, double rf_phase) {
  if (!(beta >= 0.0)) throw std::invalid_argument("EomSettings: modulation index must be >= 0");
  return {beta, rf_phase, minimum_order(beta)};
}

void EomSettings::validate() const {
  if (!(modulation_index >= 0.0) || !std::isfinite(modulation_index))
    throw std::invalid_argument("EomSettings: modulation index must be finite and >= 0");
  if (truncation_order < minimum_order(modulation_index))
    throw std::invalid_argument("EomSettings: truncation order must be at least ceil(beta) + 20");
}

void DetectorModel::validate() const {
  const double fields[] = {pair_rate, system_efficiency, coincidence_window, singles_background,
                           integration_time};
  for (double v : fields)
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("DetectorModel: parameters must be finite and >= 0");
  if (system_efficiency > 1.0) throw std::invalid_argument("DetectorModel: efficiency above 1");
}

Filter Filter::narrow(std::size_t mode, std::size_t d, double crosstalk) {
  if (mode >= d) throw std::out_of_range("Filter: mode outside grid");
  if (!(crosstalk >= 0.0 && crosstalk <= 1.0)) throw std::invalid_argument("Filter: crosstalk must lie in [0, 1]");
  Filter f;
  f.passband.emplace_back(mode, 1.0);
  if (crosstalk > 0.0) {
    if (mode > 0) f.passband.emplace_back(mode - 1, crosstalk);
    if (mode + 1 < d) f.passband.emplace_back(mode + 1, crosstalk);
  }
  return f;
}

Filter Filter::broadband(std::span<const std::size_t> modes) {
  Filter f;
  for (auto m : modes) f.passband.emplace_back(m, 1.0);
  return f;
}

double Filter::bins() const {
  double b = 0.0;
  for (const auto& [mode, t] : passband) b += t;
  return b;
}

std::string to_string(SettingType type) {
  switch (type) {
    case SettingType::Correlated: return "corr";
    case SettingType::Bucket: return "bucket";
    case SettingType::FringeMax: return "fringe_max";
    case SettingType::FringeMin: return "fringe_min";
    case SettingType::Scan: return "scan";
  }
  return "unknown";
}

SettingType setting_type_from_string(const std::string& name) {
  if (name == "corr") return SettingType::Correlated;
  if (name == "bucket") return SettingType::Bucket;
  if (name == "fringe_max") return SettingType::FringeMax;
  if (name == "fringe_min") return SettingType::FringeMin;
  if (name == "scan") return SettingType::Scan;
  throw std::invalid_argument("unknown setting_type '" + name + "'");
}

std::vector<double> bessel_j_table(double beta, int order) {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("bessel: beta must be finite and >= 0");
  if (order < 0) throw std::invalid_argument("bessel: negative order");
  std::vector<double> j(static_cast<std::size_t>(order) + 1, 0.0);
  if (beta == 0.0) {
    j[0] = 1.0;
    return j;
  }
  // Miller: start well above both the requested order and beta, recur down.
  const int top = std::max(order, static_cast<int>(std::ceil(beta)));
  int start = top + 16 + static_cast<int>(std::sqrt(40.0 * top));
  start += start % 2;
  double next = 0.0;
  double cur = 1e-300;
  double norm = 0.0;
  for (int k = start; k >= 1; --k) {
    const double prev = (2.0 * k / beta) * cur - next;
    next = cur;
    cur = prev;
    if (k - 1 <= order) j[static_cast<std::size_t>(k - 1)] = cur;
    if ((k - 1) % 2 == 0 && k - 1 > 0) norm += 2.0 * cur;
    if (std::abs(cur) > 1e250) {
      cur *= 1e-250;
      next *= 1e-250;
      norm *= 1e-250;
      for (auto& v : j) v *= 1e-250;
    }
  }
  norm += cur;  // J_0
  for (auto& v : j) v /= norm;
  return j;
}

std::vector<Complex> bessel_weights(double beta, int order, double rf_phase) {
  if (!(beta >= 0.0)) throw std::invalid_argument("bessel_weights: negative modulation index");
  if (order < EomSettings::minimum_order(beta))
    throw std::invalid_argument("bessel_weights: truncation order must be at least ceil(beta) + 20");
  const auto table = bessel_j_table(beta, order);
  std::vector<Complex> w(2 * static_cast<std::size_t>(order) + 1);
  for (int n = -order; n <= order; ++n) {
    const double mag = table[static_cast<std::size_t>(std::abs(n))];
    const double jn = (n < 0 && (-n) % 2 == 1) ? -mag : mag;
    w[static_cast<std::size_t>(n + order)] = std::polar(1.0, n * rf_phase) * jn;
  }
  return w;
}

namespace {

struct Sidebands {
  std::vector<Complex> w;
  int order;

  explicit Sidebands(const EomSettings& eom)
      : w(bessel_weights(eom.modulation_index, eom.truncation_order, eom.rf_phase)),
        order(eom.truncation_order) {}

  Complex operator()(long n) const {
    if (n < -order || n > order) return {0.0, 0.0};
    return w[static_cast<std::size_t>(n + order)];
  }
};

long shift(std::size_t to, std::size_t from) { return static_cast<long>(to) - static_cast<long>(from); }

}  // namespace

Complex output_mode_amplitude(const BiphotonState& state, const ShaperMask& mask, const EomSettings& eom,
                              std::size_t signal_mode, std::size_t idler_mode) {
  const auto d = state.grid().d;
  mask.validate(d);
  eom.validate();
  if (signal_mode >= d || idler_mode >= d) throw std::out_of_range("output_mode_amplitude: detect mode outside grid");
  const Sidebands w(eom);
  Complex total{0.0, 0.0};
  const auto modes = state.modes();
  const auto amps = state.amplitudes();
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const auto j = modes[k];
    total += amps[k] * mask.signal[j] * mask.idler[j] * w(shift(signal_mode, j)) * w(shift(idler_mode, j));
  }
  return total;
}

DetectionProbabilities detection_probabilities(const BiphotonState& state, const ShaperMask& mask,
                                               const EomSettings& eom, const Detection& detection,
                                               double coherence) {
  const auto d = state.grid().d;
  mask.validate(d);
  eom.validate();
  if (!(coherence >= 0.0 && coherence <= 1.0)) throw std::invalid_argument("coherence must lie in [0, 1]");
  for (const auto* f : {&detection.signal, &detection.idler})
    for (const auto& [m, t] : f->passband)
      if (m >= d) throw std::out_of_range("detection filter outside grid");

  const Sidebands w(eom);
  const auto modes = state.modes();
  const auto amps = state.amplitudes();

  // Per source mode, the amplitude that reaches each filtered output bin.
  auto reach = [&](const Filter& f, const std::vector<Complex>& t) {
    std::vector<std::vector<Complex>> r(f.passband.size(), std::vector<Complex>(modes.size()));
    for (std::size_t a = 0; a < f.passband.size(); ++a)
      for (std::size_t k = 0; k < modes.size(); ++k)
        r[a][k] = t[modes[k]] * w(shift(f.passband[a].first, modes[k]));
    return r;
  };
  const auto rs = reach(detection.signal, mask.signal);
  const auto ri = reach(detection.idler, mask.idler);

  DetectionProbabilities out;
  out.signal_bins = detection.signal.bins();
  out.idler_bins = detection.idler.bins();
  for (std::size_t a = 0; a < rs.size(); ++a) {
    const double fa = detection.signal.passband[a].second;
    for (std::size_t k = 0; k < modes.size(); ++k) out.signal += fa * std::norm(amps[k] * rs[a][k]);
  }
  for (std::size_t b = 0; b < ri.size(); ++b) {
    const double fb = detection.idler.passband[b].second;
    for (std::size_t k = 0; k < modes.size(); ++k) out.idler += fb * std::norm(amps[k] * ri[b][k]);
  }
  for (std::size_t a = 0; a < rs.size(); ++a) {
    const double fa = detection.signal.passband[a].second;
    for (std::size_t b = 0; b < ri.size(); ++b) {
      const double fb = detection.idler.passband[b].second;
      Complex coherent{0.0, 0.0};
      double incoherent = 0.0;
      for (std::size_t k = 0; k < modes.size(); ++k) {
        const Complex term = amps[k] * rs[a][k] * ri[b][k];
        coherent += term;
        incoherent += std::norm(term);
      }
      out.coincidence += fa * fb * (coherence * std::norm(coherent) + (1.0 - coherence) * incoherent);
    }
  }
  return out;
}

std::map<int, double> equalize_contributions(const EomSettings& eom, std::span<const int> used_sidebands) {
  eom.validate();
  if (used_sidebands.empty()) throw std::invalid_argument("equalize_contributions: no sidebands given");
  const auto table = bessel_j_table(eom.modulation_index, eom.truncation_order);
  auto mag = [&](int n) {
    const auto idx = static_cast<std::size_t>(std::abs(n));
    return idx < table.size() ? std::abs(table[idx]) : 0.0;
  };
  double floor = std::numeric_limits<double>::infinity();
  for (int n : used_sidebands) {
    if (!(mag(n) > 1e-12))
      throw std::invalid_argument("equalize_contributions: sideband " + std::to_string(n) + " has zero weight");
    floor = std::min(floor, mag(n));
  }
  std::map<int, double> out;
  for (int n : used_sidebands) out[n] = floor / mag(n);
  return out;
}

double best_modulation_index(std::span<const int> used_sidebands, double beta_max) {
  if (used_sidebands.empty()) throw std::invalid_argument("best_modulation_index: no sidebands given");
  int top = 0;
  for (int n : used_sidebands) top = std::max(top, std::abs(n));
  if (top == 0) return 0.0;
  auto score = [&](double beta) {
    const auto t = bessel_j_table(beta, top);
    double m = std::numeric_limits<double>::infinity();
    for (int n : used_sidebands) m = std::min(m, std::abs(t[static_cast<std::size_t>(std::abs(n))]));
    return m;
  };
  // Coarse grid, then golden-section refinement around the best cell.
  const int steps = 4000;
  double best = 0.0, best_score = -1.0;
  for (int s = 1; s <= steps; ++s) {
    const double beta = beta_max * s / steps;
    const double v = score(beta);
    if (v > best_score) best_score = v, best = beta;
  }
  double lo = std::max(0.0, best - beta_max / steps), hi = std::min(beta_max, best + beta_max / steps);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 60; ++it) {
    const double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
    if (score(x1) < score(x2)) lo = x1; else hi = x2;
  }
  return 0.5 * (lo + hi);
}

ExpectedCounts expected_counts(const DetectionProbabilities& probs, const DetectorModel& det) {
  det.validate();
  if (!(probs.coincidence >= -1e-15 && probs.coincidence <= 1.0 + 1e-12))
    throw std::invalid_argument("expected_counts: probability outside [0, 1]");
  const double eta = det.system_efficiency;
  const double rate_s = det.pair_rate * eta * probs.signal + det.singles_background * probs.signal_bins;
  const double rate_i = det.pair_rate * eta * probs.idler + det.singles_background * probs.idler_bins;
  ExpectedCounts c;
  c.true_coincidences = det.pair_rate * eta * eta * std::max(0.0, probs.coincidence) * det.integration_time;
  c.accidentals = rate_s * rate_i * det.coincidence_window * det.integration_time;
  c.singles_s = rate_s * det.integration_time;
  c.singles_i = rate_i * det.integration_time;
  return c;
}

MeasurementRecord simulate_counts(const DetectionProbabilities& probs, const DetectorModel& det,
                                  std::uint64_t seed, SettingDescriptor setting) {
  const auto mean = expected_counts(probs, det);
  std::mt19937_64 rng(seed);
  auto draw = [&rng](double lambda) -> std::int64_t {
    if (!(lambda > 0.0)) return 0;
    return std::poisson_distribution<std::int64_t>(lambda)(rng);
  };
  MeasurementRecord r;
  r.setting = setting;
  r.coincidences = draw(mean.coincidences());
  r.singles_s = draw(mean.singles_s);
  r.singles_i = draw(mean.singles_i);
  r.accidentals_estimate = mean.accidentals;
  r.integration_time = det.integration_time;
  return r;
}

MeasurementRecord noiseless_record(const DetectionProbabilities& probs, const DetectorModel& det,
                                   SettingDescriptor setting) {
  det.validate();
  const double eta = det.system_efficiency;
  MeasurementRecord r;
  r.setting = setting;
  r.coincidences = std::llround(det.pair_rate * eta * eta * std::max(0.0, probs.coincidence) * det.integration_time);
  r.singles_s = std::llround(det.pair_rate * eta * probs.signal * det.integration_time);
  r.singles_i = std::llround(det.pair_rate * eta * probs.idler * det.integration_time);
  r.integration_time = det.integration_time;
  return r;
}

double analytic_car(const DetectorModel& det, std::size_t d) {
  det.validate();
  if (d < 1) throw std::invalid_argument("analytic_car: d must be positive");
  const double p = 1.0 / static_cast<double>(d);
  const double singles = det.pair_rate * det.system_efficiency * p + det.singles_background;
  const double acc = singles * singles * det.coincidence_window;
  if (!(acc > 0.0)) return std::numeric_limits<double>::infinity();
  return det.pair_rate * det.system_efficiency * det.system_efficiency * p / acc;
}

DetectorModel calibrate_pair_rate(DetectorModel det, std::size_t d, double target_car) {
  det.validate();
  if (!(target_car > 0.0)) throw std::invalid_argument("calibrate_pair_rate: target CAR must be positive");
  if (!(det.system_efficiency > 0.0) || !(det.coincidence_window > 0.0))
    throw NumericalError("calibrate_pair_rate: efficiency and window must be positive");
  // x = pair_rate * eta / d solves car * tau * (x + B)^2 = eta * x.
  const double k = det.system_efficiency / (target_car * det.coincidence_window);
  const double b = det.singles_background;
  const double disc = k * k - 4.0 * b * k;
  if (disc < 0.0) throw NumericalError("calibrate_pair_rate: background too high to reach the target CAR");
  const double x = 0.5 * ((k - 2.0 * b) + std::sqrt(disc));
  det.pair_rate = x * static_cast<double>(d) / det.system_efficiency;
  return det;
}

}  // namespace freqcert
