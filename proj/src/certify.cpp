#include "freqcert/certify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>

#include "freqcert/errors.hpp"
#include "freqcert/seeding.hpp"

namespace freqcert {

void DiagonalData::validate() const {
  if (correlated.empty()) throw std::invalid_argument("DiagonalData: no correlated entries");
  if (!bucket.empty() && bucket.size() != correlated.size())
    throw std::invalid_argument("DiagonalData: bucket and correlated sizes differ");
  double total = 0.0, var = 0.0;
  for (const auto* v : {&correlated, &bucket})
    for (const auto& e : *v)
      if (!(e.value >= 0.0) || !(e.sigma >= 0.0)) throw std::invalid_argument("DiagonalData: negative probability or sigma");
  for (const auto& e : correlated) total += e.value, var += e.sigma * e.sigma;
  if (total > 1.0 + 3.0 * std::sqrt(var) + 1e-9)
    throw std::invalid_argument("DiagonalData: correlated probabilities sum above 1");
}

DiagonalData diagonal_from_records(std::span<const MeasurementRecord> records, std::size_t d) {
  if (d == 0) throw std::invalid_argument("diagonal_from_records: d must be positive");
  struct Acc {
    double counts = 0.0;
    double time = 0.0;
    bool seen = false;
  };
  std::vector<Acc> corr(d), bucket(d);
  for (const auto& r : records) {
    if (r.setting.type != SettingType::Correlated && r.setting.type != SettingType::Bucket) continue;
    if (r.setting.mode >= d) throw std::out_of_range("diagonal_from_records: mode outside 0..d-1");
    if (r.coincidences < 0 || !(r.integration_time > 0.0))
      throw std::invalid_argument("diagonal_from_records: negative counts or non-positive time");
    auto& acc = (r.setting.type == SettingType::Correlated ? corr : bucket)[r.setting.mode];
    acc.counts += static_cast<double>(r.coincidences);
    acc.time += r.integration_time;
    acc.seen = true;
  }
  std::ostringstream missing;
  std::size_t n_missing = 0;
  for (std::size_t j = 0; j < d; ++j) {
    if (!corr[j].seen) missing << (n_missing++ ? ", " : "") << "corr j=" << j + 1;
    if (!bucket[j].seen) missing << (n_missing++ ? ", " : "") << "bucket j=" << j + 1;
  }
  if (n_missing) throw IncompleteDatasetError("missing computational-basis settings: " + missing.str());

  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) total += corr[j].counts / corr[j].time + bucket[j].counts / bucket[j].time;
  if (!(total > 0.0)) throw NumericalError("diagonal_from_records: no counts in any setting");

  DiagonalData out;
  for (std::size_t j = 0; j < d; ++j) {
    for (auto [acc, dst] : {std::pair{&corr[j], &out.correlated}, std::pair{&bucket[j], &out.bucket}}) {
      dst->push_back({acc->counts / acc->time / total, std::sqrt(acc->counts) / acc->time / total});
    }
  }
  return out;
}

std::vector<SubspaceVisibility> visibilities_from_records(std::span<const MeasurementRecord> records) {
  struct Acc {
    double counts = 0.0;
    double time = 0.0;
  };
  std::map<std::pair<std::size_t, std::size_t>, std::pair<std::optional<Acc>, std::optional<Acc>>> groups;
  for (const auto& r : records) {
    const bool is_max = r.setting.type == SettingType::FringeMax;
    if (!is_max && r.setting.type != SettingType::FringeMin) continue;
    if (r.setting.separation == 0) throw std::invalid_argument("fringe record with separation 0");
    if (!(r.integration_time > 0.0)) throw std::invalid_argument("fringe record with non-positive time");
    auto& slot = groups[{r.setting.mode, r.setting.separation}];
    auto& acc = is_max ? slot.first : slot.second;
    if (!acc) acc = Acc{};
    acc->counts += static_cast<double>(r.coincidences);
    acc->time += r.integration_time;
  }
  std::vector<SubspaceVisibility> out;
  std::ostringstream missing;
  std::size_t n_missing = 0;
  for (const auto& [key, slot] : groups) {
    if (!slot.first || !slot.second) {
      missing << (n_missing++ ? ", " : "") << (slot.first ? "fringe_min" : "fringe_max") << " j=" << key.first + 1
              << " i=" << key.second;
      continue;
    }
    const auto v = visibility_from_extrema(slot.first->counts / slot.first->time, slot.first->counts,
                                           slot.second->counts / slot.second->time, slot.second->counts);
    out.push_back({key.first, key.second, v.value, v.sigma});
  }
  if (n_missing) throw IncompleteDatasetError("unpaired fringe settings: " + missing.str());
  return out;
}

Estimate coherence_from_visibility(Estimate p_jj, Estimate p_kk, Estimate v) {
  if (!(p_jj.value > 0.0) || !(p_kk.value > 0.0))
    throw std::invalid_argument("coherence_from_visibility: diagonal probabilities must be positive");
  if (!(v.value >= 0.0 && v.value <= 1.0)) throw std::invalid_argument("coherence_from_visibility: V outside [0, 1]");
  const double mean_p = 0.5 * (p_jj.value + p_kk.value);
  const double var = std::pow(mean_p * v.sigma, 2) +
                     std::pow(0.5 * v.value, 2) * (p_jj.sigma * p_jj.sigma + p_kk.sigma * p_kk.sigma);
  return {v.value * mean_p, std::sqrt(var)};
}

const char* to_string(EntryTag tag) {
  switch (tag) {
    case EntryTag::Diagonal: return "D";
    case EntryTag::Measured: return "M";
    case EntryTag::LowerBounded: return "L";
    case EntryTag::Unknown: return "U";
  }
  return "?";
}

CoherenceBoundMatrix::CoherenceBoundMatrix(std::vector<double> diagonal, std::vector<double> uncorrelated)
    : diag_(std::move(diagonal)), uncorrelated_(std::move(uncorrelated)) {
  const auto d = diag_.size();
  if (d < 2) throw std::invalid_argument("CoherenceBoundMatrix: need at least two modes");
  if (!uncorrelated_.empty() && uncorrelated_.size() != d)
    throw std::invalid_argument("CoherenceBoundMatrix: uncorrelated list must match the diagonal");
  for (double p : diag_)
    if (!(p >= 0.0)) throw std::invalid_argument("CoherenceBoundMatrix: negative diagonal");
  for (double u : uncorrelated_)
    if (!(u >= 0.0)) throw std::invalid_argument("CoherenceBoundMatrix: negative uncorrelated weight");
  mag_.assign(d * d, 0.0);
  sigma_.assign(d * d, 0.0);
  tags_.assign(d * d, EntryTag::Unknown);
  for (std::size_t j = 0; j < d; ++j) {
    mag_[j * d + j] = diag_[j];
    tags_[j * d + j] = EntryTag::Diagonal;
  }
}

std::size_t CoherenceBoundMatrix::index(std::size_t a, std::size_t c) const {
  const auto d = diag_.size();
  if (a >= d || c >= d) throw std::out_of_range("CoherenceBoundMatrix: index outside matrix");
  return a * d + c;
}

EntryTag CoherenceBoundMatrix::tag(std::size_t a, std::size_t c) const { return tags_[index(a, c)]; }

void CoherenceBoundMatrix::set_measured(std::size_t a, std::size_t c, double magnitude, double sigma) {
  if (a == c) throw std::invalid_argument("set_measured: diagonal entries come from the constructor");
  if (!(magnitude >= 0.0) || !(sigma >= 0.0)) throw std::invalid_argument("set_measured: negative magnitude or sigma");
  for (auto idx : {index(a, c), index(c, a)}) {
    mag_[idx] = magnitude;
    sigma_[idx] = sigma;
    tags_[idx] = EntryTag::Measured;
  }
}

void CoherenceBoundMatrix::raise_bound(std::size_t a, std::size_t c, double bound) {
  if (a == c) throw std::invalid_argument("raise_bound: diagonal entry");
  const auto idx = index(a, c);
  if (tags_[idx] == EntryTag::Measured) return;
  const double v = std::max(mag_[idx], std::max(0.0, bound));
  for (auto k : {idx, index(c, a)}) {
    mag_[k] = v;
    tags_[k] = EntryTag::LowerBounded;
  }
}

std::size_t CoherenceBoundMatrix::measured_count() const {
  return static_cast<std::size_t>(std::count(tags_.begin(), tags_.end(), EntryTag::Measured)) / 2;
}

CoherenceBoundMatrix build_matrix(const DiagonalData& diagonal, std::span<const SubspaceVisibility> visibilities,
                                  double conservative_sigma) {
  diagonal.validate();
  if (!(conservative_sigma >= 0.0)) throw std::invalid_argument("build_matrix: conservative sigma must be >= 0");
  const auto d = diagonal.dimension();
  std::vector<double> p(d), u;
  for (std::size_t j = 0; j < d; ++j) p[j] = diagonal.correlated[j].value;
  for (const auto& b : diagonal.bucket) u.push_back(b.value);
  CoherenceBoundMatrix m(std::move(p), std::move(u));
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& v : visibilities) {
    const auto a = v.mode, c = v.mode + v.separation;
    if (v.separation == 0 || c >= d) throw std::out_of_range("build_matrix: visibility subspace outside the matrix");
    if (!seen.insert({a, c}).second)
      throw std::invalid_argument("build_matrix: duplicate visibility for j=" + std::to_string(a + 1) +
                                  " i=" + std::to_string(v.separation));
    if (!(diagonal.correlated[a].value > 0.0) || !(diagonal.correlated[c].value > 0.0)) continue;
    const auto e = coherence_from_visibility(diagonal.correlated[a], diagonal.correlated[c], {v.visibility, v.sigma});
    m.set_measured(a, c, std::max(0.0, e.value - conservative_sigma * e.sigma), e.sigma);
  }
  return m;
}

double subdeterminant_bound(double p_a, double p_b, double p_c, double m_ab, double m_bc) {
  if (!(p_b > 0.0)) return 0.0;
  const double lead = m_ab * m_bc / p_b;
  const double ra = std::max(0.0, p_a - m_ab * m_ab / p_b);
  const double rc = std::max(0.0, p_c - m_bc * m_bc / p_b);
  // The 2x2 ceiling keeps rounding on near rank-one inputs from feeding back through the sweeps.
  return std::clamp(lead - std::sqrt(ra * rc), 0.0, std::sqrt(p_a * p_c));
}

CoherenceBoundMatrix psd_fill(CoherenceBoundMatrix matrix, PsdFillStats* stats) {
  const auto d = matrix.dimension();
  if (matrix.measured_count() == 0) throw std::invalid_argument("psd_fill: no measured coherences");
  constexpr double kTolerance = 1e-15;
  constexpr std::size_t kMaxSweeps = 100000;

  // Dense working copy; tags decide which entries may move.
  std::vector<double> mag(d * d);
  std::vector<char> fixed(d * d, 0);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t c = 0; c < d; ++c) {
      mag[a * d + c] = matrix.magnitude(a, c);
      const auto t = matrix.tag(a, c);
      fixed[a * d + c] = t == EntryTag::Measured || t == EntryTag::Diagonal;
    }

  PsdFillStats local;
  for (;;) {
    double change = 0.0;
    for (std::size_t dist = 1; dist < d; ++dist) {
      for (std::size_t a = 0; a + dist < d; ++a) {
        const std::size_t c = a + dist;
        if (fixed[a * d + c]) continue;
        double best = mag[a * d + c];
        const double* row_a = &mag[a * d];
        const double* row_c = &mag[c * d];
        for (std::size_t b = 0; b < d; ++b) {
          if (b == a || b == c) continue;
          const double m_ab = row_a[b], m_bc = row_c[b];
          if (m_ab == 0.0 || m_bc == 0.0) continue;
          const double p_b = mag[b * d + b];
          if (m_ab * m_bc / p_b <= best) continue;  // cannot beat the current bound
          best = std::max(best, subdeterminant_bound(mag[a * d + a], p_b, mag[c * d + c], m_ab, m_bc));
        }
        const double delta = best - mag[a * d + c];
        if (delta > 0.0) {
          change = std::max(change, delta);
          mag[a * d + c] = mag[c * d + a] = best;
        }
      }
    }
    ++local.sweeps;
    local.last_change = change;
    if (change <= kTolerance) break;
    if (local.sweeps >= kMaxSweeps) throw NumericalError("psd_fill: no fixpoint after the sweep limit");
  }

  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t c = a + 1; c < d; ++c)
      if (!fixed[a * d + c]) matrix.raise_bound(a, c, mag[a * d + c]);
  if (stats) *stats = local;
  return matrix;
}

namespace {

double block_score(const CoherenceBoundMatrix& m, std::span<const std::size_t> modes, TraceNormalization norm) {
  const auto d = m.dimension();
  const auto n = modes.size();
  double sum = 0.0, trace = 0.0;
  for (auto a : modes) {
    trace += m.diagonal(a);
    for (auto c : modes) sum += m.magnitude(a, c);
  }
  if (!m.uncorrelated().empty()) {
    double bucket = 0.0;
    for (auto a : modes) bucket += m.uncorrelated()[a];
    if (norm == TraceNormalization::BucketFull) trace += bucket;
    if (norm == TraceNormalization::BucketShare)
      trace += bucket * static_cast<double>(n - 1) / static_cast<double>(d - 1);
  }
  if (!(trace > 0.0)) return 0.0;
  return sum / (static_cast<double>(n) * trace);
}

std::vector<std::size_t> greedy_order(const CoherenceBoundMatrix& m, TraceNormalization norm) {
  const auto d = m.dimension();
  std::vector<std::size_t> order;
  double best = -1.0;
  std::pair<std::size_t, std::size_t> seed{0, 1};
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t c = a + 1; c < d; ++c) {
      const std::size_t pair[] = {a, c};
      const double f = block_score(m, pair, norm);
      if (f > best) best = f, seed = {a, c};
    }
  order = {seed.first, seed.second};
  std::vector<char> used(d, 0);
  used[seed.first] = used[seed.second] = 1;
  while (order.size() < d) {
    std::size_t pick = d;
    double pick_score = -1.0;
    for (std::size_t k = 0; k < d; ++k) {
      if (used[k]) continue;
      order.push_back(k);
      const double f = block_score(m, order, norm);
      order.pop_back();
      if (f > pick_score) pick_score = f, pick = k;
    }
    used[pick] = 1;
    order.push_back(pick);
  }
  return order;
}

}  // namespace

double fidelity_lower_bound(const CoherenceBoundMatrix& matrix, std::size_t d_prime, FidelityOptions options) {
  const auto d = matrix.dimension();
  if (d_prime < 1 || d_prime > d) throw std::invalid_argument("fidelity_lower_bound: d' outside 1..d");
  std::vector<std::size_t> modes(d_prime);
  switch (options.order) {
    case SubspaceOrder::FirstModes:
      std::iota(modes.begin(), modes.end(), std::size_t{0});
      return std::min(1.0, block_score(matrix, modes, options.normalization));
    case SubspaceOrder::ContiguousWindow: {
      double best = 0.0;
      for (std::size_t start = 0; start + d_prime <= d; ++start) {
        std::iota(modes.begin(), modes.end(), start);
        best = std::max(best, block_score(matrix, modes, options.normalization));
      }
      return std::min(1.0, best);
    }
    case SubspaceOrder::Greedy: {
      auto order = greedy_order(matrix, options.normalization);
      order.resize(d_prime);
      return std::min(1.0, block_score(matrix, order, options.normalization));
    }
  }
  return 0.0;
}

std::size_t certified_dimension(double fidelity, std::size_t d_prime) {
  if (d_prime == 0) throw std::invalid_argument("certified_dimension: d' must be positive");
  const double scaled = fidelity * static_cast<double>(d_prime) - 1e-9;
  if (!(scaled > 1.0)) return 1;
  const auto k = static_cast<std::size_t>(std::ceil(scaled));
  return std::min(k, d_prime);
}

CertificationResult certify_dimension(const CoherenceBoundMatrix& filled, std::size_t d_max, FidelityOptions options) {
  const auto d = filled.dimension();
  if (d_max == 0 || d_max > d) d_max = d;
  CertificationResult r;
  std::vector<std::size_t> greedy;
  if (options.order == SubspaceOrder::Greedy) greedy = greedy_order(filled, options.normalization);
  for (std::size_t dp = 2; dp <= d_max; ++dp) {
    double f;
    if (options.order == SubspaceOrder::Greedy) {
      f = std::min(1.0, block_score(filled, std::span(greedy).first(dp), options.normalization));
    } else {
      f = fidelity_lower_bound(filled, dp, options);
    }
    const auto k = certified_dimension(f, dp);
    r.d_prime.push_back(dp);
    r.fidelity.push_back(f);
    r.certified.push_back(k);
    r.threshold.push_back(static_cast<double>(k - 1) / static_cast<double>(dp));
    r.best_score = std::max(r.best_score, f * static_cast<double>(dp));
    if (k > r.k_star) r.k_star = k, r.k_star_at = dp;
  }
  return r;
}

CertificationInputs restrict_inputs(const CertificationInputs& inputs, std::size_t d_max) {
  const auto d = inputs.diagonal.dimension();
  if (d_max < 2) throw std::invalid_argument("restrict_inputs: need at least two modes");
  if (d_max >= d) return inputs;
  CertificationInputs out = inputs;
  out.diagonal.correlated.resize(d_max);
  if (!out.diagonal.bucket.empty()) out.diagonal.bucket.resize(d_max);
  double total = 0.0;
  for (const auto& e : out.diagonal.correlated) total += e.value;
  for (const auto& e : out.diagonal.bucket) total += e.value;
  if (!(total > 0.0)) throw NumericalError("restrict_inputs: no probability left in the first modes");
  for (auto* v : {&out.diagonal.correlated, &out.diagonal.bucket})
    for (auto& e : *v) e.value /= total, e.sigma /= total;
  std::erase_if(out.visibilities, [&](const SubspaceVisibility& v) { return v.mode + v.separation >= d_max; });
  return out;
}

CertificationInputs select_neighbors(const CertificationInputs& inputs, std::span<const std::size_t> separations) {
  CertificationInputs out = inputs;
  std::erase_if(out.visibilities, [&](const SubspaceVisibility& v) {
    return std::find(separations.begin(), separations.end(), v.separation) == separations.end();
  });
  return out;
}

CertificationResult certify(const CertificationInputs& inputs, CoherenceBoundMatrix* filled_out) {
  auto filled = psd_fill(build_matrix(inputs.diagonal, inputs.visibilities, inputs.conservative_sigma));
  auto result = certify_dimension(filled, 0, inputs.fidelity);
  if (filled_out) *filled_out = std::move(filled);
  return result;
}

namespace {

double truncated_normal(std::mt19937_64& rng, double mean, double sigma, double lo, double hi) {
  if (sigma == 0.0) return std::clamp(mean, lo, hi);
  std::normal_distribution<double> dist(mean, sigma);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double x = dist(rng);
    if (x >= lo && x <= hi) return x;
  }
  return std::clamp(mean, lo, hi);
}

CertificationInputs resample(const CertificationInputs& in, std::mt19937_64& rng) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  CertificationInputs out = in;
  for (auto* v : {&out.diagonal.correlated, &out.diagonal.bucket})
    for (auto& e : *v) e.value = truncated_normal(rng, e.value, e.sigma, 0.0, inf);
  for (auto& v : out.visibilities) v.visibility = truncated_normal(rng, v.visibility, v.sigma, 0.0, 1.0);
  return out;
}

}  // namespace

MonteCarloSummary monte_carlo(const CertificationInputs& inputs, std::size_t samples, std::uint64_t seed,
                              unsigned threads) {
  if (samples < 2) throw std::invalid_argument("monte_carlo: need at least two samples");
  for (const auto* v : {&inputs.diagonal.correlated, &inputs.diagonal.bucket})
    for (const auto& e : *v)
      if (!(e.sigma >= 0.0)) throw std::invalid_argument("monte_carlo: every diagonal needs a sigma >= 0");
  for (const auto& v : inputs.visibilities)
    if (!(v.sigma >= 0.0)) throw std::invalid_argument("monte_carlo: every visibility needs a sigma >= 0");

  MonteCarloSummary s;
  s.samples = samples;
  s.seed = seed;
  s.k_star.assign(samples, 0);
  s.best_score.assign(samples, 0.0);

  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      std::mt19937_64 rng(derive_seed(seed, k));
      const auto r = certify(resample(inputs, rng));
      s.k_star[k] = r.k_star;
      s.best_score[k] = r.best_score;
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, samples));
  if (threads <= 1) {
    run(0, samples);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (samples + threads - 1) / threads;
    for (std::size_t b = 0; b < samples; b += chunk) pool.emplace_back(run, b, std::min(samples, b + chunk));
  }

  double sum = 0.0;
  for (auto k : s.k_star) sum += static_cast<double>(k);
  s.mean = sum / static_cast<double>(samples);
  double var = 0.0;
  for (auto k : s.k_star) var += std::pow(static_cast<double>(k) - s.mean, 2);
  s.sigma = std::sqrt(var / static_cast<double>(samples - 1));
  return s;
}

DispersionFit dispersion_calibrate(std::span<const FringePhase> phases) {
  std::map<std::size_t, std::vector<FringePhase>> by_sep;
  std::set<std::size_t> distinct_modes;
  for (const auto& p : phases) {
    if (p.separation == 0) throw std::invalid_argument("dispersion_calibrate: separation must be positive");
    if (!std::isfinite(p.phase)) throw std::invalid_argument("dispersion_calibrate: non-finite phase");
    by_sep[p.separation].push_back(p);
    distinct_modes.insert(p.mode);
  }
  if (distinct_modes.size() < 3) throw std::invalid_argument("dispersion_calibrate: need scans at three distinct j");

  // Per separation: unwrap along j, then center x and y so each group keeps its own constant.
  struct Point {
    double x, y;
  };
  std::vector<std::vector<Point>> groups;
  for (auto& [sep, list] : by_sep) {
    std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.mode < b.mode; });
    std::vector<Point> g;
    double prev = 0.0, offset = 0.0;
    for (std::size_t k = 0; k < list.size(); ++k) {
      double y = list[k].phase;
      if (k > 0) {
        const double raw = y + offset;
        offset += -2.0 * std::numbers::pi * std::round((raw - prev) / (2.0 * std::numbers::pi));
        y += offset;
      }
      prev = y;
      const double j = static_cast<double>(list[k].mode), i = static_cast<double>(sep);
      g.push_back({2.0 * j * i + i * i, y});
    }
    groups.push_back(std::move(g));
  }
  double sxy = 0.0, sxx = 0.0;
  std::size_t n = 0;
  for (auto& g : groups) {
    double mx = 0.0, my = 0.0;
    for (const auto& p : g) mx += p.x, my += p.y;
    mx /= static_cast<double>(g.size());
    my /= static_cast<double>(g.size());
    for (auto& p : g) {
      p.x -= mx;
      p.y -= my;
      sxy += p.x * p.y;
      sxx += p.x * p.x;
    }
    n += g.size();
  }
  if (!(sxx > 0.0)) throw NumericalError("dispersion_calibrate: degenerate fit (no spread in j within a separation)");
  DispersionFit fit;
  fit.c2 = sxy / sxx;
  fit.points = n;
  double rss = 0.0;
  for (const auto& g : groups)
    for (const auto& p : g) rss += std::pow(p.y - fit.c2 * p.x, 2);
  fit.residual_rms = std::sqrt(rss / static_cast<double>(n));
  const std::size_t dof = n > groups.size() + 1 ? n - groups.size() - 1 : 0;
  fit.c2_sigma = dof > 0 ? std::sqrt(rss / static_cast<double>(dof) / sxx) : 0.0;
  return fit;
}

}  // namespace freqcert
