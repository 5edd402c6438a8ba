#include "freqcert/experiment.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <tuple>

#include "freqcert/errors.hpp"
#include "freqcert/seeding.hpp"

namespace freqcert {

std::size_t Dataset::diagonal_settings() const {
  std::set<std::pair<SettingType, std::size_t>> s;
  for (const auto& r : records)
    if (r.setting.type == SettingType::Correlated || r.setting.type == SettingType::Bucket)
      s.insert({r.setting.type, r.setting.mode});
  return s.size();
}

std::size_t Dataset::fringe_groups() const {
  std::set<std::tuple<SettingType, std::size_t, std::size_t>> s;
  for (const auto& r : records)
    if (r.setting.type == SettingType::FringeMax || r.setting.type == SettingType::FringeMin)
      s.insert({r.setting.type, r.setting.mode, r.setting.separation});
  return s.size();
}

NoiseModel noise_model(const ExperimentConfig& config, bool noiseless) {
  NoiseModel n;
  n.detector = config.effective_detector();
  n.coherence = config.coherence;
  n.crosstalk = config.crosstalk;
  n.noiseless = noiseless;
  return n;
}

namespace {

MeasurementRecord measure(const DetectionProbabilities& probs, const NoiseModel& noise, double time,
                          std::uint64_t seed, const SettingDescriptor& setting) {
  DetectorModel det = noise.detector;
  det.integration_time = time;
  if (noise.noiseless) return noiseless_record(probs, det, setting);
  return simulate_counts(probs, det, seed, setting);
}

}  // namespace

Dataset simulate_dataset(const ExperimentConfig& config, std::uint64_t seed, bool noiseless) {
  config.validate();
  const auto d = config.grid.d;
  const auto state = config.source_state();
  const auto noise = noise_model(config, noiseless);
  const double coherence = noiseless ? 1.0 : config.coherence;
  const double crosstalk = noiseless ? 0.0 : config.crosstalk;
  Dataset out;
  out.d = d;
  std::uint64_t counter = 0;

  const auto open = ShaperMask::identity(d);
  const EomSettings off = EomSettings::with_index(0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const Detection corr{Filter::narrow(j, d, crosstalk), Filter::narrow(j, d, crosstalk)};
    out.records.push_back(measure(detection_probabilities(state, open, off, corr, coherence), noise,
                                  noise.detector.integration_time, derive_seed(seed, counter++),
                                  {SettingType::Correlated, j, 0, 0.0, 0.0, 0}));
    std::vector<std::size_t> others;
    for (std::size_t k = 0; k < d; ++k)
      if (k != j) others.push_back(k);
    const Detection bucket{Filter::narrow(j, d, crosstalk), Filter::broadband(others)};
    out.records.push_back(measure(detection_probabilities(state, open, off, bucket, coherence), noise,
                                  noise.detector.integration_time, derive_seed(seed, counter++),
                                  {SettingType::Bucket, j, 0, 0.0, 0.0, 0}));
  }

  // The experimenter places the extrema from the calibrated dispersion.
  const double assumed = config.assumed_c2.value_or(config.c2);
  const auto reference = assumed == 0.0 ? make_maximally_entangled(config.grid)
                                        : apply_dispersion(make_maximally_entangled(config.grid), assumed);
  for (auto i : config.neighbors) {
    if (i >= d) continue;
    const auto beta = pair_analyzer(0, i, d).eom.modulation_index;
    for (std::size_t j = 0; j + i < d; ++j) {
      const auto analyzer = SuperpositionAnalyzer::make({j, j + i}, j + i / 2, beta);
      const double phi = model_fringe_phase(reference, analyzer, i);
      const double w = 2.0 * static_cast<double>(i);
      const double theta_max = -phi / w;
      const double theta_min = theta_max + std::numbers::pi / w;
      const Detection det{Filter::narrow(analyzer.detect_mode, d, crosstalk),
                          Filter::narrow(analyzer.detect_mode, d, crosstalk)};
      for (auto [type, theta] : {std::pair{SettingType::FringeMax, theta_max}, std::pair{SettingType::FringeMin, theta_min}}) {
        const auto probs = detection_probabilities(state, analyzer.mask(d, theta, theta), analyzer.eom, det, coherence);
        for (std::size_t s = 0; s < config.samples_per_extremum; ++s)
          out.records.push_back(measure(probs, noise, config.fringe_time, derive_seed(seed, counter++),
                                        {type, j, i, theta, beta, s}));
      }
    }
  }
  return out;
}

BellRun run_belltest(const ExperimentConfig& config, std::size_t d, std::uint64_t seed, bool noiseless,
                     const BellThresholdTable& table) {
  const double threshold = table.threshold(d);
  config.validate();
  const std::size_t below = (d - 1) / 2;
  if (config.bell_center < below || config.bell_center - below + d > config.grid.d)
    throw ConfigError("scan.bell_center: a " + std::to_string(d) + "-mode window around it does not fit in the grid");
  const auto modes = centered_modes(d, config.bell_center, config.grid.d);
  const auto analyzer = SuperpositionAnalyzer::make(modes, config.bell_center, config.modulation_index);
  const auto theta = theta_grid(d, config.points_per_period);
  BellRun run;
  run.d = d;
  run.scan = phase_scan(config.source_state(), analyzer, noise_model(config, noiseless), theta, seed);
  run.visibility = visibility(run.scan);
  run.threshold = threshold;
  run.verdict = bell_check(run.visibility.value, d, table);
  run.modulation_index = analyzer.eom.modulation_index;
  return run;
}

CertificationInputs inputs_from_dataset(const Dataset& data, const ExperimentConfig& config) {
  CertificationInputs in;
  in.diagonal = diagonal_from_records(data.records, data.d);
  in.visibilities = visibilities_from_records(data.records);
  in.conservative_sigma = config.conservative_sigma;
  in.fidelity = config.fidelity;

  // Every requested subspace must be present.
  std::set<std::pair<std::size_t, std::size_t>> have;
  for (const auto& v : in.visibilities) have.insert({v.mode, v.separation});
  std::string missing;
  std::size_t n_missing = 0;
  for (auto i : config.neighbors)
    for (std::size_t j = 0; j + i < data.d; ++j)
      if (!have.count({j, i})) {
        if (n_missing++ < 20) missing += (missing.empty() ? "" : ", ") + std::string("fringe j=") +
                                         std::to_string(j + 1) + " i=" + std::to_string(i);
      }
  if (n_missing)
    throw IncompleteDatasetError("missing " + std::to_string(n_missing) + " fringe subspaces: " + missing +
                                 (n_missing > 20 ? ", ..." : ""));
  return select_neighbors(in, config.neighbors);
}

CertificationInputs reference_inputs(std::size_t d, const std::map<std::size_t, Estimate>& visibility_by_separation) {
  if (d < 2) throw std::invalid_argument("reference_inputs: d must be at least 2");
  CertificationInputs in;
  in.diagonal.correlated.assign(d, Estimate{1.0 / static_cast<double>(d), 0.0});
  for (const auto& [i, v] : visibility_by_separation)
    for (std::size_t j = 0; j + i < d; ++j) in.visibilities.push_back({j, i, v.value, v.sigma});
  return in;
}

std::map<std::size_t, Estimate> reference_visibilities() {
  return {{1, {0.9685, 0.0007}}, {2, {0.9794, 0.0005}}, {6, {0.968, 0.001}}};
}

std::vector<FringePhase> simulate_dispersion_scans(const ExperimentConfig& config, std::size_t separation,
                                                   std::span<const std::size_t> modes, std::uint64_t seed,
                                                   bool noiseless) {
  config.validate();
  const auto d = config.grid.d;
  const auto state = config.source_state();
  const auto noise = noise_model(config, noiseless);
  const auto beta = pair_analyzer(0, separation, d).eom.modulation_index;
  const auto theta = theta_grid(1, config.points_per_period);
  std::vector<FringePhase> out;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const auto j = modes[k];
    if (j + separation >= d) throw std::out_of_range("simulate_dispersion_scans: subspace outside grid");
    const auto analyzer = SuperpositionAnalyzer::make({j, j + separation}, j + separation / 2, beta);
    const auto scan = phase_scan(state, analyzer, noise, theta, derive_seed(seed, k));
    out.push_back({j, separation, fringe_phase(scan, separation)});
  }
  return out;
}

}  // namespace freqcert
