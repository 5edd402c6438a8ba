#include "freqcert/state.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace freqcert {

void BinGrid::validate() const {
  if (d < 2) throw std::invalid_argument("BinGrid: need at least 2 modes, got " + std::to_string(d));
  if (!(fsr_ghz > 0.0)) throw std::invalid_argument("BinGrid: free spectral range must be positive");
  if (!(bin_bandwidth_ghz > 0.0) || bin_bandwidth_ghz > fsr_ghz)
    throw std::invalid_argument("BinGrid: bin bandwidth must lie in (0, fsr]");
}

namespace {

std::vector<Complex> normalized(std::vector<Complex> amplitudes) {
  double norm = 0.0;
  for (const auto& a : amplitudes) norm += std::norm(a);
  if (!(norm > 0.0) || !std::isfinite(norm))
    throw std::invalid_argument("BiphotonState: amplitudes have zero or non-finite norm");
  const double scale = 1.0 / std::sqrt(norm);
  for (auto& a : amplitudes) a *= scale;
  return amplitudes;
}

}  // namespace

BiphotonState::BiphotonState(BinGrid grid, std::vector<std::size_t> modes,
                             std::vector<Complex> amplitudes, double dispersion_coeff)
    : grid_(grid), modes_(std::move(modes)), amplitudes_(std::move(amplitudes)),
      dispersion_coeff_(dispersion_coeff) {
  grid_.validate();
  if (modes_.empty() || modes_.size() != amplitudes_.size())
    throw std::invalid_argument("BiphotonState: mode list and amplitude list must be non-empty and equal length");
  for (auto m : modes_)
    if (m >= grid_.d) throw std::out_of_range("BiphotonState: mode index outside grid");
  auto sorted = modes_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("BiphotonState: duplicate mode index");
  amplitudes_ = normalized(std::move(amplitudes_));
}

Complex BiphotonState::amplitude_at(std::size_t grid_mode) const {
  for (std::size_t k = 0; k < modes_.size(); ++k)
    if (modes_[k] == grid_mode) return amplitudes_[k];
  return {0.0, 0.0};
}

double BiphotonState::norm_squared() const {
  double n = 0.0;
  for (const auto& a : amplitudes_) n += std::norm(a);
  return n;
}

BiphotonState make_maximally_entangled(const BinGrid& grid) {
  grid.validate();
  std::vector<std::size_t> modes(grid.d);
  std::iota(modes.begin(), modes.end(), std::size_t{0});
  std::vector<Complex> amps(grid.d, Complex{1.0 / std::sqrt(static_cast<double>(grid.d)), 0.0});
  return BiphotonState(grid, std::move(modes), std::move(amps));
}

BiphotonState make_state(const BinGrid& grid, std::vector<Complex> amplitudes) {
  grid.validate();
  if (amplitudes.size() != grid.d)
    throw std::invalid_argument("make_state: expected " + std::to_string(grid.d) + " amplitudes, got " +
                                std::to_string(amplitudes.size()));
  std::vector<std::size_t> modes(grid.d);
  std::iota(modes.begin(), modes.end(), std::size_t{0});
  return BiphotonState(grid, std::move(modes), std::move(amplitudes));
}

BiphotonState apply_dispersion(const BiphotonState& state, double c2) {
  if (!std::isfinite(c2)) throw std::invalid_argument("apply_dispersion: non-finite coefficient");
  std::vector<Complex> amps(state.amplitudes().begin(), state.amplitudes().end());
  const auto modes = state.modes();
  for (std::size_t k = 0; k < amps.size(); ++k) {
    const double j = static_cast<double>(modes[k]);
    amps[k] *= std::polar(1.0, c2 * j * j);
  }
  return BiphotonState(state.grid(), {modes.begin(), modes.end()}, std::move(amps),
                       state.dispersion_coeff() + c2);
}

BiphotonState subspace(const BiphotonState& state, std::span<const std::size_t> positions) {
  if (positions.empty()) throw std::invalid_argument("subspace: empty mode list");
  std::vector<std::size_t> modes;
  std::vector<Complex> amps;
  modes.reserve(positions.size());
  amps.reserve(positions.size());
  for (auto p : positions) {
    if (p >= state.dimension())
      throw std::out_of_range("subspace: index " + std::to_string(p) + " outside 0.." +
                              std::to_string(state.dimension() - 1));
    modes.push_back(state.modes()[p]);
    amps.push_back(state.amplitudes()[p]);
  }
  return BiphotonState(state.grid(), std::move(modes), std::move(amps), state.dispersion_coeff());
}

}  // namespace freqcert
