#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace freqcert {

using Complex = std::complex<double>;

/// Discretized frequency space shared by signal and idler photons.
///
/// Mode j (0-based) sits at center_thz + j * fsr_ghz for the signal photon and
/// at the mirrored position for the idler photon.
struct BinGrid {
  std::size_t d = 102;
  double fsr_ghz = 25.0;
  double bin_bandwidth_ghz = 25.0;
  double center_thz = 193.67;

  /// Throws std::invalid_argument when d < 2 or bins overlap.
  void validate() const;
};

/// Pure two-photon state sum_j alpha_j |j>_s |j>_i over a set of grid modes.
///
/// `modes` holds the grid index of each amplitude, so a state produced by
/// subspace() still knows where its modes came from (dispersion phases and
/// detection modes are expressed in grid indices).
class BiphotonState {
 public:
  BiphotonState(BinGrid grid, std::vector<std::size_t> modes, std::vector<Complex> amplitudes,
                double dispersion_coeff = 0.0);

  const BinGrid& grid() const { return grid_; }
  std::size_t dimension() const { return amplitudes_.size(); }
  std::span<const std::size_t> modes() const { return modes_; }
  std::span<const Complex> amplitudes() const { return amplitudes_; }
  double dispersion_coeff() const { return dispersion_coeff_; }

  /// Amplitude of the pair living in grid mode `grid_mode`, zero if absent.
  Complex amplitude_at(std::size_t grid_mode) const;

  double norm_squared() const;

 private:
  BinGrid grid_;
  std::vector<std::size_t> modes_;
  std::vector<Complex> amplitudes_;
  double dispersion_coeff_ = 0.0;
};

/// alpha_j = 1/sqrt(d) on every grid mode.
BiphotonState make_maximally_entangled(const BinGrid& grid);

/// Arbitrary spectrum on the full grid; amplitudes are normalized.
BiphotonState make_state(const BinGrid& grid, std::vector<Complex> amplitudes);

/// Multiplies each pair amplitude by exp(i c2 j^2), j the grid index.
BiphotonState apply_dispersion(const BiphotonState& state, double c2);

/// Restricts to `positions` (indices into state.modes()) and renormalizes.
BiphotonState subspace(const BiphotonState& state, std::span<const std::size_t> positions);

}  // namespace freqcert
