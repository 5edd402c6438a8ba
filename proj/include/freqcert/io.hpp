#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "freqcert/apparatus.hpp"
#include "freqcert/belltest.hpp"
#include "freqcert/certify.hpp"
#include "freqcert/experiment.hpp"

namespace freqcert::io {

// CSV files carry a header row, comma separators and 1-based mode labels.

/// setting_type,j,i,counts,time_s
void write_measurements(std::ostream& out, const std::vector<MeasurementRecord>& records);
std::vector<MeasurementRecord> read_measurements(std::istream& in);

/// j,p,sigma_p  (plus optional bucket,sigma_bucket columns)
void write_diagonal(std::ostream& out, const DiagonalData& diagonal);
DiagonalData read_diagonal(std::istream& in);

/// j,i,V,sigma_V
void write_visibilities(std::ostream& out, const std::vector<SubspaceVisibility>& visibilities);
std::vector<SubspaceVisibility> read_visibilities(std::istream& in);

/// theta_rad,coincidences,singles_s,singles_i,normalized
void write_fringe(std::ostream& out, const FringeScan& scan);

/// j,i,theta_rad,coincidences[,time_s] -> one fringe phase per (j, i).
std::vector<FringePhase> read_scan_phases(std::istream& in);

struct CertificationReport {
  std::size_t d = 0;
  std::vector<std::size_t> neighbors;
  std::size_t dmax = 0;
  double conservative_sigma = 0.0;
  FidelityOptions fidelity;
  CertificationResult result;
  const CoherenceBoundMatrix* matrix = nullptr;
  std::vector<std::string> assumptions;
};

nlohmann::ordered_json to_json(const CertificationReport& report);
nlohmann::ordered_json to_json(const BellRun& run);
nlohmann::ordered_json to_json(const DispersionFit& fit, double true_c2);

inline constexpr int kSchemaVersion = 1;

}  // namespace freqcert::io
