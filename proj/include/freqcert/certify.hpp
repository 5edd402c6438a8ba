#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "freqcert/apparatus.hpp"
#include "freqcert/belltest.hpp"

namespace freqcert {

struct Estimate {
  double value = 0.0;
  double sigma = 0.0;
};

/// Computational-basis data: correlated probabilities <j,j|rho|j,j> and bucket
/// sums over the uncorrelated partners of each signal mode.
struct DiagonalData {
  std::vector<Estimate> correlated;
  std::vector<Estimate> bucket;  // may be empty when only correlated data exist

  std::size_t dimension() const { return correlated.size(); }
  void validate() const;
};

/// Two-mode interference result for the subspace {mode, mode + separation}.
struct SubspaceVisibility {
  std::size_t mode = 0;
  std::size_t separation = 0;
  double visibility = 0.0;
  double sigma = 0.0;
};

/// Normalizes over the total rate of all 2d computational-basis settings.
/// Throws IncompleteDatasetError naming every missing setting.
DiagonalData diagonal_from_records(std::span<const MeasurementRecord> records, std::size_t d);

/// Pairs fringe_max/fringe_min records per subspace and forms visibilities.
std::vector<SubspaceVisibility> visibilities_from_records(std::span<const MeasurementRecord> records);

/// |<jj|rho|kk>| = V (p_jj + p_kk) / 2 with first-order error propagation.
Estimate coherence_from_visibility(Estimate p_jj, Estimate p_kk, Estimate v);

enum class EntryTag { Diagonal, Measured, LowerBounded, Unknown };

const char* to_string(EntryTag tag);

/// Magnitudes |<j,j|rho|k,k>| over the correlated subspace. Symmetric; Unknown
/// entries read as zero.
class CoherenceBoundMatrix {
 public:
  explicit CoherenceBoundMatrix(std::vector<double> diagonal, std::vector<double> uncorrelated = {});

  std::size_t dimension() const { return diag_.size(); }
  double diagonal(std::size_t j) const { return diag_.at(j); }
  std::span<const double> uncorrelated() const { return uncorrelated_; }

  double magnitude(std::size_t a, std::size_t c) const { return mag_[index(a, c)]; }
  double sigma(std::size_t a, std::size_t c) const { return sigma_[index(a, c)]; }
  EntryTag tag(std::size_t a, std::size_t c) const;

  void set_measured(std::size_t a, std::size_t c, double magnitude, double sigma = 0.0);
  /// Raises the bound of a non-measured entry; lower values are ignored.
  void raise_bound(std::size_t a, std::size_t c, double bound);

  std::size_t measured_count() const;

 private:
  std::size_t index(std::size_t a, std::size_t c) const;

  std::vector<double> diag_;
  std::vector<double> uncorrelated_;
  std::vector<double> mag_;
  std::vector<double> sigma_;
  std::vector<EntryTag> tags_;
};

/// Builds the matrix from diagonals and visibilities. Measured magnitudes are
/// shifted down by `conservative_sigma` standard deviations (clamped at 0).
/// Visibilities touching a mode with zero diagonal are left unknown.
CoherenceBoundMatrix build_matrix(const DiagonalData& diagonal, std::span<const SubspaceVisibility> visibilities,
                                  double conservative_sigma = 0.0);

/// Smallest |m_ac| compatible with a PSD 3x3 block {a, b, c} given the two
/// known couplings through b; zero when b is empty or the bound is negative.
double subdeterminant_bound(double p_a, double p_b, double p_c, double m_ab, double m_bc);

struct PsdFillStats {
  std::size_t sweeps = 0;
  double last_change = 0.0;
};

/// Raises every non-measured entry to the largest 3x3 subdeterminant bound
/// over all intermediaries, sweeping by increasing |a - c| until no entry
/// moves by more than 1e-15. Afterwards all non-measured entries are tagged
/// LowerBounded.
CoherenceBoundMatrix psd_fill(CoherenceBoundMatrix matrix, PsdFillStats* stats = nullptr);

enum class SubspaceOrder { FirstModes, ContiguousWindow, Greedy };
enum class TraceNormalization { CorrelatedOnly, BucketShare, BucketFull };

struct FidelityOptions {
  SubspaceOrder order = SubspaceOrder::FirstModes;
  TraceNormalization normalization = TraceNormalization::BucketShare;
};

/// Worst-case fidelity with the maximally entangled state on d' modes:
/// sum of all entries of the d' block over d' times the block trace. The block
/// trace adds the uncorrelated share selected by `normalization`.
double fidelity_lower_bound(const CoherenceBoundMatrix& matrix, std::size_t d_prime, FidelityOptions options = {});

/// Largest k + 1 with F > k / d' (k >= 1), or 1. Values of F * d' within 1e-9
/// above an integer n count as n.
std::size_t certified_dimension(double fidelity, std::size_t d_prime);

struct MonteCarloSummary {
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  double mean = 0.0;
  double sigma = 0.0;
  std::vector<std::size_t> k_star;
  std::vector<double> best_score;  // max over d' of F(d') * d' per sample
};

struct CertificationResult {
  std::vector<std::size_t> d_prime;    // 2..d
  std::vector<double> fidelity;
  std::vector<double> threshold;       // (certified - 1) / d', the bound exceeded
  std::vector<std::size_t> certified;
  std::size_t k_star = 1;
  std::size_t k_star_at = 0;           // smallest d' reaching k_star
  double best_score = 0.0;
  std::optional<MonteCarloSummary> monte_carlo;
};

CertificationResult certify_dimension(const CoherenceBoundMatrix& filled, std::size_t d_max = 0,
                                      FidelityOptions options = {});

struct CertificationInputs {
  DiagonalData diagonal;
  std::vector<SubspaceVisibility> visibilities;
  double conservative_sigma = 0.0;
  FidelityOptions fidelity;
};

/// Keeps the first `d_max` modes and the visibilities inside them; diagonals
/// are renormalized to unit trace over what remains.
CertificationInputs restrict_inputs(const CertificationInputs& inputs, std::size_t d_max);

/// Keeps only visibilities whose separation is listed.
CertificationInputs select_neighbors(const CertificationInputs& inputs, std::span<const std::size_t> separations);

/// build_matrix + psd_fill + certify_dimension.
CertificationResult certify(const CertificationInputs& inputs, CoherenceBoundMatrix* filled_out = nullptr);

/// Resamples every measured quantity from a normal distribution truncated to
/// its physical range and reruns the certification. Sample s uses
/// derive_seed(seed, s); `threads` = 0 picks the hardware concurrency.
MonteCarloSummary monte_carlo(const CertificationInputs& inputs, std::size_t samples, std::uint64_t seed,
                              unsigned threads = 0);

struct FringePhase {
  std::size_t mode = 0;
  std::size_t separation = 0;
  double phase = 0.0;  // radians, any branch
};

struct DispersionFit {
  double c2 = 0.0;
  double c2_sigma = 0.0;
  double residual_rms = 0.0;
  std::size_t points = 0;
};

/// Least-squares fit of phase(j; i) = c2 (2 j i + i^2) + const_i after
/// unwrapping each separation's phases along j.
DispersionFit dispersion_calibrate(std::span<const FringePhase> phases);

}  // namespace freqcert
