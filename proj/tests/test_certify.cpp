#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "freqcert/certify.hpp"
#include "freqcert/errors.hpp"
#include "freqcert/experiment.hpp"

using namespace freqcert;

namespace {

// Smallest |x| keeping [[pa, mab, x], [mab, pb, mbc], [x*, mbc, pc]] PSD, found by
// scanning the magnitude and phase of x and checking the smallest eigenvalue.
double brute_force_bound(double pa, double pb, double pc, double mab, double mbc) {
  const int n_r = 4000, n_phi = 90;
  const double r_max = std::sqrt(pa * pc);
  for (int ir = 0; ir <= n_r; ++ir) {
    const double r = r_max * ir / n_r;
    for (int ip = 0; ip < n_phi; ++ip) {
      const std::complex<double> x = std::polar(r, 2.0 * std::numbers::pi * ip / n_phi);
      Eigen::Matrix3cd m;
      m << pa, mab, x, mab, pb, mbc, std::conj(x), mbc, pc;
      if (Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd>(m, Eigen::EigenvaluesOnly).eigenvalues()(0) >= -1e-12)
        return r;
    }
  }
  return r_max;
}

CertificationInputs reference(std::size_t d) { return reference_inputs(d, reference_visibilities()); }

}  // namespace

TEST_CASE("coherence from visibility") {
  CHECK(coherence_from_visibility({0.5, 0}, {0.5, 0}, {1.0, 0}).value == doctest::Approx(0.5));
  CHECK(coherence_from_visibility({0.5, 0}, {0.5, 0}, {0.0, 0}).value == 0.0);
  const auto m = coherence_from_visibility({1.0 / 102, 0}, {1.0 / 102, 0}, {0.9685, 0});
  CHECK(m.value == doctest::Approx(9.495e-3).epsilon(1e-3));
  const auto e = coherence_from_visibility({0.2, 0.01}, {0.4, 0.02}, {0.9, 0.05});
  CHECK(e.sigma == doctest::Approx(std::sqrt(std::pow(0.3 * 0.05, 2) + std::pow(0.45, 2) * (1e-4 + 4e-4))));
  CHECK_THROWS_AS(coherence_from_visibility({0.0, 0}, {0.5, 0}, {0.5, 0}), std::invalid_argument);
  CHECK_THROWS_AS(coherence_from_visibility({0.5, 0}, {0.5, 0}, {1.2, 0}), std::invalid_argument);
}

TEST_CASE("visibility recovers an injected coherence") {
  // Pair {40, 41} of a uniform 102-mode source mixed to coherence 0.9685 has
  // |<jj|rho|kk>| = 0.9685 / 102.
  BinGrid g;
  const auto state = make_maximally_entangled(g);
  const auto an = pair_analyzer(40, 1, g.d);
  const Detection det{Filter::narrow(an.detect_mode, g.d), Filter::narrow(an.detect_mode, g.d)};
  double hi = 0.0, lo = 1.0;
  for (int k = 0; k < 200; ++k) {
    const double theta = std::numbers::pi * k / 200.0;
    const double p = detection_probabilities(state, an.mask(g.d, theta, theta), an.eom, det, 0.9685).coincidence;
    hi = std::max(hi, p), lo = std::min(lo, p);
  }
  const double v = (hi - lo) / (hi + lo);
  CHECK(v == doctest::Approx(0.9685).epsilon(1e-9));
  CHECK(coherence_from_visibility({1.0 / 102, 0}, {1.0 / 102, 0}, {v, 0}).value ==
        doctest::Approx(0.9685 / 102).epsilon(1e-9));
}

TEST_CASE("3x3 subdeterminant bound") {
  CHECK(subdeterminant_bound(1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0 / 3) == doctest::Approx(1.0 / 3));
  CHECK(subdeterminant_bound(1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0, 0.0) == 0.0);
  CHECK(subdeterminant_bound(0.3, 0.0, 0.3, 0.1, 0.1) == 0.0);

  SUBCASE("matches the eigenvalue brute force") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.05, 1.0), f(0.0, 1.0);
    for (int trial = 0; trial < 25; ++trial) {
      const double pa = u(rng), pb = u(rng), pc = u(rng);
      const double mab = f(rng) * std::sqrt(pa * pb), mbc = (0.6 + 0.4 * f(rng)) * std::sqrt(pb * pc);
      const double exact = subdeterminant_bound(pa, pb, pc, mab, mbc);
      const double brute = brute_force_bound(pa, pb, pc, mab, mbc);
      CHECK(std::abs(exact - brute) <= 2.0 * std::sqrt(pa * pc) / 4000 + 1e-9);
    }
  }
}

TEST_CASE("psd_fill on small chains") {
  SUBCASE("rank-one chain forces maximal coherence") {
    CoherenceBoundMatrix m({1.0 / 3, 1.0 / 3, 1.0 / 3});
    m.set_measured(0, 1, 1.0 / 3);
    m.set_measured(1, 2, 1.0 / 3);
    const auto f = psd_fill(m);
    CHECK(f.magnitude(0, 2) == doctest::Approx(1.0 / 3));
    CHECK(f.tag(0, 2) == EntryTag::LowerBounded);
    CHECK(f.tag(0, 1) == EntryTag::Measured);
  }
  SUBCASE("incoherent chain clamps at zero") {
    CoherenceBoundMatrix m({1.0 / 3, 1.0 / 3, 1.0 / 3});
    m.set_measured(0, 1, 0.0);
    m.set_measured(1, 2, 0.0);
    CHECK(psd_fill(m).magnitude(0, 2) == 0.0);
  }
  SUBCASE("empty intermediary is skipped") {
    CoherenceBoundMatrix m({0.5, 0.0, 0.5});
    m.set_measured(0, 1, 0.0);
    m.set_measured(1, 2, 0.0);
    CHECK(psd_fill(m).magnitude(0, 2) == 0.0);
  }
  SUBCASE("needs at least one measurement") {
    CHECK_THROWS_AS(psd_fill(CoherenceBoundMatrix({0.5, 0.5})), std::invalid_argument);
  }
}

TEST_CASE("psd_fill never exceeds the true magnitudes of random states") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t bounded = 0, violations = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    const int d = 3 + static_cast<int>(rng() % 6);
    const int rank = 1 + static_cast<int>(rng() % d);
    Eigen::MatrixXcd g(d, rank);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < rank; ++c) g(r, c) = {n(rng), n(rng)};
    Eigen::MatrixXcd rho = g * g.adjoint();
    rho /= rho.trace().real();
    REQUIRE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(rho).eigenvalues().minCoeff() > -1e-12);

    std::vector<double> p(d);
    for (int j = 0; j < d; ++j) p[j] = rho(j, j).real();
    CoherenceBoundMatrix m(p);
    for (int a = 0; a < d; ++a)
      for (int c = a + 1; c < d; ++c)
        if (u(rng) < 0.5) m.set_measured(a, c, std::abs(rho(a, c)));
    if (m.measured_count() == 0) m.set_measured(0, 1, std::abs(rho(0, 1)));
    const auto f = psd_fill(m);
    for (int a = 0; a < d; ++a)
      for (int c = a + 1; c < d; ++c)
        if (f.tag(a, c) == EntryTag::LowerBounded) {
          ++bounded;
          if (f.magnitude(a, c) > std::abs(rho(a, c)) + 1e-12) ++violations;
        }
  }
  CHECK(bounded > 10000);
  CHECK(violations == 0);
}

TEST_CASE("reference dataset") {
  const auto in = reference(102);
  CoherenceBoundMatrix filled({1.0, 1.0});
  const auto r = certify(in, &filled);

  SUBCASE("measured entries are kept and far entries fall to zero") {
    CHECK(filled.tag(10, 11) == EntryTag::Measured);
    CHECK(filled.magnitude(10, 11) == doctest::Approx(0.9685 / 102));
    CHECK(filled.magnitude(10, 12) == doctest::Approx(0.9794 / 102));
    CHECK(filled.magnitude(10, 16) == doctest::Approx(0.968 / 102));
    CHECK(filled.magnitude(0, 3) > filled.magnitude(0, 30));
    CHECK(filled.magnitude(0, 60) == 0.0);
    std::size_t zeros = 0;
    for (std::size_t a = 0; a < 102; ++a)
      for (std::size_t c = a + 1; c < 102; ++c) zeros += filled.magnitude(a, c) == 0.0;
    CHECK(zeros > 2000);
  }

  SUBCASE("fixpoint") {
    PsdFillStats stats;
    const auto again = psd_fill(filled, &stats);
    double change = 0.0;
    for (std::size_t a = 0; a < 102; ++a)
      for (std::size_t c = 0; c < 102; ++c) change = std::max(change, std::abs(again.magnitude(a, c) - filled.magnitude(a, c)));
    CHECK(change <= 1e-12);
    CHECK(stats.sweeps == 1);
  }

  SUBCASE("fidelity and certification") {
    CHECK(fidelity_lower_bound(filled, 102) > 32.0 / 102);
    CHECK(r.k_star >= 33);
    CHECK(r.k_star <= 35);
    CHECK(r.certified.size() == 101);
    CHECK(r.d_prime.front() == 2);
    for (std::size_t k = 0; k < 10; ++k) CHECK(r.certified[k] == k + 2);  // d' = 2..11 certify fully
  }

  SUBCASE("restricted to eleven modes") {
    const auto r11 = certify(restrict_inputs(in, 11));
    CHECK(r11.k_star == 11);
    CHECK(r11.certified.back() == 11);
  }

  SUBCASE("more subspaces never hurt") {
    const std::vector<std::size_t> s1{1}, s12{1, 2}, s126{1, 2, 6};
    CoherenceBoundMatrix f1({1.0, 1.0}), f12({1.0, 1.0}), f126({1.0, 1.0});
    const auto k1 = certify(select_neighbors(in, s1), &f1).k_star;
    const auto k12 = certify(select_neighbors(in, s12), &f12).k_star;
    const auto k126 = certify(select_neighbors(in, s126), &f126).k_star;
    CHECK(k1 <= k12);
    CHECK(k12 <= k126);
    CHECK(k1 < k126);
    for (std::size_t a = 0; a < 102; ++a)
      for (std::size_t c = 0; c < 102; ++c) {
        CHECK(f1.magnitude(a, c) <= f12.magnitude(a, c) + 1e-15);
        CHECK(f12.magnitude(a, c) <= f126.magnitude(a, c) + 1e-15);
      }
  }

  SUBCASE("alternative subspace orders certify at least as much") {
    FidelityOptions window{SubspaceOrder::ContiguousWindow, TraceNormalization::BucketShare};
    CHECK(certify_dimension(filled, 0, window).k_star >= r.k_star);
    FidelityOptions greedy{SubspaceOrder::Greedy, TraceNormalization::BucketShare};
    CHECK(certify_dimension(filled, 0, greedy).k_star >= 2);
  }

  SUBCASE("conservative mode lowers the bound") {
    auto cons = in;
    cons.conservative_sigma = 3.0;
    CHECK(certify(cons).k_star <= r.k_star);
  }
}

TEST_CASE("fidelity edge cases") {
  for (std::size_t d : {4u, 8u, 16u}) {
    std::vector<double> p(d, 1.0 / d);
    CoherenceBoundMatrix perfect(p), diag(p);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t c = a + 1; c < d; ++c) perfect.set_measured(a, c, 1.0 / d);
    for (std::size_t dp = 1; dp <= d; ++dp) {
      CHECK(fidelity_lower_bound(perfect, dp) == 1.0);
      CHECK(fidelity_lower_bound(diag, dp) == 1.0 / static_cast<double>(dp));
    }
    CHECK(certify_dimension(psd_fill(perfect)).k_star == d);
  }
  std::vector<double> p3(3, 1.0 / 3);
  CoherenceBoundMatrix perfect3(p3);
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t c = a + 1; c < 3; ++c) perfect3.set_measured(a, c, 1.0 / 3);
  CHECK(std::abs(fidelity_lower_bound(perfect3, 3) - 1.0) < 1e-15);

  SUBCASE("bucket normalization") {
    CoherenceBoundMatrix m({0.25, 0.25}, {0.05, 0.05});
    m.set_measured(0, 1, 0.2);
    CHECK(fidelity_lower_bound(m, 2, {SubspaceOrder::FirstModes, TraceNormalization::CorrelatedOnly}) ==
          doctest::Approx(0.9));
    CHECK(fidelity_lower_bound(m, 2, {SubspaceOrder::FirstModes, TraceNormalization::BucketFull}) ==
          doctest::Approx(0.9 * 0.5 / 0.6));
  }
}

TEST_CASE("certified dimension follows the strict threshold") {
  CHECK(certified_dimension(3.5 / 10, 10) == 4);
  CHECK(certified_dimension(0.75, 4) == 3);  // F d' = 3 exactly: 3 > 2, not 3 > 3
  CHECK(certified_dimension(0.1, 10) == 1);
  CHECK(certified_dimension(1.0, 7) == 7);
  CHECK(certified_dimension(0.5, 2) == 1);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20000; ++trial) {
    const std::size_t dp = 2 + rng() % 120;
    const double f = u(rng);
    const double scaled = f * static_cast<double>(dp);
    if (std::abs(scaled - std::round(scaled)) < 1e-8) continue;
    std::size_t brute = 1;
    for (std::size_t k = 1; k < dp; ++k)
      if (f > static_cast<double>(k) / static_cast<double>(dp)) brute = k + 1;
    CHECK(certified_dimension(f, dp) == brute);
    const auto expected = static_cast<std::size_t>(std::max(1.0, std::ceil(scaled)));
    CHECK(certified_dimension(f, dp) == expected);
  }
}

TEST_CASE("Monte Carlo") {
  SUBCASE("zero sigma is deterministic") {
    auto in = reference(40);
    for (auto& v : in.visibilities) v.sigma = 0.0;
    const auto det = certify(in).k_star;
    const auto mc = monte_carlo(in, 8, 1);
    CHECK(mc.mean == static_cast<double>(det));
    CHECK(mc.sigma == 0.0);
  }
  SUBCASE("reproducible and independent of thread count") {
    const auto in = reference(40);
    const auto a = monte_carlo(in, 12, 77, 1), b = monte_carlo(in, 12, 77, 4);
    CHECK(a.k_star == b.k_star);
    CHECK(a.best_score == b.best_score);
  }
  SUBCASE("larger input noise spreads the certification statistic") {
    // k* itself is integer-valued and saturates; the underlying max F d' is not.
    auto in = reference(60);
    auto doubled = in;
    for (auto& v : doubled.visibilities) v.sigma *= 2.0;
    auto spread = [](const std::vector<double>& x) {
      double m = 0.0, s = 0.0;
      for (double v : x) m += v;
      m /= static_cast<double>(x.size());
      for (double v : x) s += (v - m) * (v - m);
      return std::sqrt(s / static_cast<double>(x.size() - 1));
    };
    const auto base = monte_carlo(in, 200, 3), wide = monte_carlo(doubled, 200, 3);
    CHECK(spread(wide.best_score) >= spread(base.best_score));
  }
  CHECK_THROWS_AS(monte_carlo(reference(10), 1, 0), std::invalid_argument);
}

TEST_CASE("diagonal data from records") {
  ExperimentConfig cfg;
  cfg.grid.d = 4;
  cfg.bell_center = 1;
  cfg.neighbors = {1, 2};
  const auto data = simulate_dataset(cfg, 5, true);
  const auto diag = diagonal_from_records(data.records, 4);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(diag.correlated[j].value == doctest::Approx(0.25));
    CHECK(diag.bucket[j].value == 0.0);
  }

  SUBCASE("dead mode") {
    cfg.amplitudes = {0.5, 0.0, 0.5, 0.5};
    const auto dead = diagonal_from_records(simulate_dataset(cfg, 5, true).records, 4);
    CHECK(dead.correlated[1].value == 0.0);
    CHECK(dead.correlated[0].value == doctest::Approx(1.0 / 3));
  }

  SUBCASE("missing settings are listed") {
    auto records = data.records;
    std::erase_if(records, [](const MeasurementRecord& r) {
      return r.setting.type == SettingType::Bucket && r.setting.mode == 2;
    });
    try {
      (void)diagonal_from_records(records, 4);
      FAIL("expected an incomplete-dataset error");
    } catch (const IncompleteDatasetError& e) {
      CHECK(std::string(e.what()).find("bucket j=3") != std::string::npos);
    }
  }
}

TEST_CASE("noisy simulation reproduces CAR and visibility scale") {
  ExperimentConfig cfg;
  const auto data = simulate_dataset(cfg, 9, false);
  const auto diag = diagonal_from_records(data.records, cfg.grid.d);
  double ratio = 0.0;
  for (std::size_t j = 0; j < cfg.grid.d; ++j)
    ratio += diag.correlated[j].value / (diag.bucket[j].value / static_cast<double>(cfg.grid.d - 1));
  ratio /= static_cast<double>(cfg.grid.d);
  CHECK(ratio == doctest::Approx(1400.0).epsilon(0.05));
  const auto vis = visibilities_from_records(data.records);
  CHECK(vis.size() == 3 * 102 - 9);
  double mean = 0.0;
  for (const auto& v : vis) mean += v.visibility;
  mean /= static_cast<double>(vis.size());
  CHECK(mean > 0.95);
  CHECK(mean < 0.98);
}

TEST_CASE("dispersion calibration") {
  ExperimentConfig cfg;
  cfg.c2 = 0.004;
  std::vector<std::size_t> modes;
  for (std::size_t j = 0; j < 95; j += 8) modes.push_back(j);

  SUBCASE("round trip through the simulator") {
    for (bool noiseless : {true, false}) {
      const auto fit = dispersion_calibrate(simulate_dispersion_scans(cfg, 1, modes, 4, noiseless));
      CHECK(std::abs(fit.c2 - 0.004) < 1e-4);
    }
    auto both = simulate_dispersion_scans(cfg, 1, modes, 4, true);
    const auto six = simulate_dispersion_scans(cfg, 6, modes, 5, true);
    both.insert(both.end(), six.begin(), six.end());
    CHECK(dispersion_calibrate(both).c2 == doctest::Approx(0.004).epsilon(1e-6));
  }

  SUBCASE("no dispersion gives flat offsets") {
    cfg.c2 = 0.0;
    const auto phases = simulate_dispersion_scans(cfg, 2, modes, 4, true);
    for (const auto& p : phases) CHECK(std::abs(std::remainder(p.phase - phases.front().phase, 2 * std::numbers::pi)) < 1e-9);
    CHECK(std::abs(dispersion_calibrate(phases).c2) < 1e-12);
  }

  SUBCASE("separation two drifts twice as fast along j") {
    const auto p1 = simulate_dispersion_scans(cfg, 1, modes, 4, true);
    const auto p2 = simulate_dispersion_scans(cfg, 2, modes, 4, true);
    auto slope = [](const std::vector<FringePhase>& p) {
      double s = 0.0;
      for (std::size_t k = 1; k < p.size(); ++k)
        s += std::remainder(p[k].phase - p[k - 1].phase, 2 * std::numbers::pi) /
             static_cast<double>(p[k].mode - p[k - 1].mode);
      return s / static_cast<double>(p.size() - 1);
    };
    CHECK(slope(p2) / slope(p1) == doctest::Approx(2.0).epsilon(1e-6));
  }

  SUBCASE("degenerate inputs") {
    const std::vector<FringePhase> same{{5, 1, 0.1}, {5, 1, 0.2}, {5, 1, 0.3}};
    CHECK_THROWS_AS(dispersion_calibrate(same), std::invalid_argument);
    const std::vector<FringePhase> split{{1, 1, 0.1}, {2, 2, 0.2}, {3, 6, 0.3}};
    CHECK_THROWS_AS(dispersion_calibrate(split), NumericalError);
  }
}
