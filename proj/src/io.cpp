#include "freqcert/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string_view>

#include "freqcert/config.hpp"
#include "freqcert/errors.hpp"

namespace freqcert::io {

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  return out;
}

/// Header-indexed CSV reader.
class Table {
 public:
  Table(std::istream& in, std::initializer_list<const char*> required) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("CSV: missing header row");
    const auto header = split(line);
    for (std::size_t k = 0; k < header.size(); ++k) columns_[header[k]] = k;
    for (const char* name : required)
      if (!columns_.count(name)) throw std::invalid_argument(std::string("CSV: missing column '") + name + "'");
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      rows_.push_back(split(line));
      if (rows_.back().size() != header.size())
        throw std::invalid_argument("CSV: row " + std::to_string(rows_.size() + 1) + " has wrong column count");
    }
  }

  std::size_t size() const { return rows_.size(); }
  bool has(const std::string& name) const { return columns_.count(name) != 0; }
  const std::string& text(std::size_t row, const std::string& name) const { return rows_[row][columns_.at(name)]; }

  double real(std::size_t row, const std::string& name) const {
    const auto& s = text(row, name);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
      throw std::invalid_argument("CSV: bad number '" + s + "' in column " + name);
    return v;
  }

  long long integer(std::size_t row, const std::string& name) const {
    const auto& s = text(row, name);
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
      throw std::invalid_argument("CSV: bad integer '" + s + "' in column " + name);
    return v;
  }

  std::size_t label(std::size_t row, const std::string& name) const {
    const auto v = integer(row, name);
    if (v < 1) throw std::invalid_argument("CSV: mode labels are 1-based, got " + std::to_string(v));
    return static_cast<std::size_t>(v - 1);
  }

 private:
  std::map<std::string, std::size_t> columns_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace

void write_measurements(std::ostream& out, const std::vector<MeasurementRecord>& records) {
  out << "setting_type,j,i,counts,time_s\n";
  for (const auto& r : records)
    out << to_string(r.setting.type) << ',' << r.setting.mode + 1 << ',' << r.setting.separation << ','
        << r.coincidences << ',' << num(r.integration_time) << '\n';
}

std::vector<MeasurementRecord> read_measurements(std::istream& in) {
  Table t(in, {"setting_type", "j", "i", "counts", "time_s"});
  std::vector<MeasurementRecord> out;
  for (std::size_t r = 0; r < t.size(); ++r) {
    MeasurementRecord rec;
    rec.setting.type = setting_type_from_string(t.text(r, "setting_type"));
    rec.setting.mode = t.label(r, "j");
    const auto i = t.integer(r, "i");
    if (i < 0) throw std::invalid_argument("CSV: negative separation");
    rec.setting.separation = static_cast<std::size_t>(i);
    rec.coincidences = t.integer(r, "counts");
    if (rec.coincidences < 0) throw std::invalid_argument("CSV: negative counts");
    rec.integration_time = t.real(r, "time_s");
    out.push_back(rec);
  }
  return out;
}

void write_diagonal(std::ostream& out, const DiagonalData& diagonal) {
  const bool bucket = !diagonal.bucket.empty();
  out << "j,p,sigma_p" << (bucket ? ",bucket,sigma_bucket" : "") << '\n';
  for (std::size_t j = 0; j < diagonal.correlated.size(); ++j) {
    out << j + 1 << ',' << num(diagonal.correlated[j].value) << ',' << num(diagonal.correlated[j].sigma);
    if (bucket) out << ',' << num(diagonal.bucket[j].value) << ',' << num(diagonal.bucket[j].sigma);
    out << '\n';
  }
}

DiagonalData read_diagonal(std::istream& in) {
  Table t(in, {"j", "p", "sigma_p"});
  const bool bucket = t.has("bucket") && t.has("sigma_bucket");
  DiagonalData out;
  std::vector<char> seen;
  for (std::size_t r = 0; r < t.size(); ++r) {
    const auto j = t.label(r, "j");
    if (j >= out.correlated.size()) {
      out.correlated.resize(j + 1, {-1.0, 0.0});
      if (bucket) out.bucket.resize(j + 1);
    }
    out.correlated[j] = {t.real(r, "p"), t.real(r, "sigma_p")};
    if (bucket) out.bucket[j] = {t.real(r, "bucket"), t.real(r, "sigma_bucket")};
  }
  std::string missing;
  for (std::size_t j = 0; j < out.correlated.size(); ++j)
    if (out.correlated[j].value < 0.0) missing += (missing.empty() ? "" : ", ") + std::string("j=") + std::to_string(j + 1);
  if (!missing.empty()) throw IncompleteDatasetError("diagonal CSV lacks modes: " + missing);
  out.validate();
  return out;
}

void write_visibilities(std::ostream& out, const std::vector<SubspaceVisibility>& visibilities) {
  out << "j,i,V,sigma_V\n";
  for (const auto& v : visibilities)
    out << v.mode + 1 << ',' << v.separation << ',' << num(v.visibility) << ',' << num(v.sigma) << '\n';
}

std::vector<SubspaceVisibility> read_visibilities(std::istream& in) {
  Table t(in, {"j", "i", "V", "sigma_V"});
  std::vector<SubspaceVisibility> out;
  for (std::size_t r = 0; r < t.size(); ++r) {
    SubspaceVisibility v;
    v.mode = t.label(r, "j");
    const auto i = t.integer(r, "i");
    if (i < 1) throw std::invalid_argument("CSV: separation must be positive");
    v.separation = static_cast<std::size_t>(i);
    v.visibility = t.real(r, "V");
    v.sigma = t.real(r, "sigma_V");
    if (!(v.visibility >= 0.0 && v.visibility <= 1.0) || !(v.sigma >= 0.0))
      throw std::invalid_argument("CSV: visibility outside [0, 1] or negative sigma");
    out.push_back(v);
  }
  return out;
}

void write_fringe(std::ostream& out, const FringeScan& scan) {
  double peak = 0.0;
  for (double c : scan.coincidences) peak = std::max(peak, c);
  out << "theta_rad,coincidences,singles_s,singles_i,normalized\n";
  for (std::size_t k = 0; k < scan.theta.size(); ++k)
    out << num(scan.theta[k]) << ',' << num(scan.coincidences[k]) << ',' << num(scan.singles_s[k]) << ','
        << num(scan.singles_i[k]) << ',' << num(peak > 0.0 ? scan.coincidences[k] / peak : 0.0) << '\n';
}

std::vector<FringePhase> read_scan_phases(std::istream& in) {
  Table t(in, {"j", "i", "theta_rad", "coincidences"});
  std::map<std::pair<std::size_t, std::size_t>, FringeScan> scans;
  for (std::size_t r = 0; r < t.size(); ++r) {
    const auto i = t.integer(r, "i");
    if (i < 1) throw std::invalid_argument("CSV: separation must be positive");
    auto& s = scans[{t.label(r, "j"), static_cast<std::size_t>(i)}];
    s.theta.push_back(t.real(r, "theta_rad"));
    s.coincidences.push_back(t.real(r, "coincidences"));
    s.singles_s.push_back(0.0);
    s.singles_i.push_back(0.0);
    s.integration_time.push_back(t.has("time_s") ? t.real(r, "time_s") : 1.0);
  }
  std::vector<FringePhase> out;
  for (const auto& [key, scan] : scans) out.push_back({key.first, key.second, fringe_phase(scan, key.second)});
  return out;
}

nlohmann::ordered_json to_json(const CertificationReport& report) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["d"] = report.d;
  j["neighbors"] = report.neighbors;
  j["dmax"] = report.dmax;
  j["conservative_sigma"] = report.conservative_sigma;
  j["subspace_order"] = to_string(report.fidelity.order);
  j["trace_normalization"] = to_string(report.fidelity.normalization);
  if (report.matrix) {
    const auto& m = *report.matrix;
    nlohmann::ordered_json mags = nlohmann::ordered_json::array(), tags = nlohmann::ordered_json::array();
    for (std::size_t a = 0; a < m.dimension(); ++a) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array(), trow = nlohmann::ordered_json::array();
      for (std::size_t c = 0; c <= a; ++c) {
        row.push_back(m.magnitude(a, c));
        trow.push_back(to_string(m.tag(a, c)));
      }
      mags.push_back(std::move(row));
      tags.push_back(std::move(trow));
    }
    j["matrix"] = {{"dimension", m.dimension()}, {"lower_triangle", std::move(mags)}, {"tags", std::move(tags)}};
  }
  const auto& r = report.result;
  j["d_prime"] = r.d_prime;
  j["fidelity"] = r.fidelity;
  j["threshold"] = r.threshold;
  j["certified"] = r.certified;
  j["k_star"] = r.k_star;
  j["k_star_at"] = r.k_star_at;
  if (!r.certified.empty()) {
    j["certified_at_full_d"] = r.certified.back();
    if (r.certified.size() >= 2) j["certified_at_d_minus_1"] = r.certified[r.certified.size() - 2];
  }
  if (r.monte_carlo) {
    const auto& mc = *r.monte_carlo;
    std::map<std::size_t, std::size_t> hist;
    for (auto k : mc.k_star) ++hist[k];
    nlohmann::ordered_json h = nlohmann::ordered_json::object();
    for (const auto& [k, n] : hist) h[std::to_string(k)] = n;
    j["monte_carlo"] = {{"samples", mc.samples}, {"seed", mc.seed}, {"mean", mc.mean}, {"sigma", mc.sigma},
                        {"histogram", std::move(h)}};
  }
  j["assumptions"] = report.assumptions;
  return j;
}

nlohmann::ordered_json to_json(const BellRun& run) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["d"] = run.d;
  j["visibility"] = run.visibility.value;
  j["sigma_visibility"] = run.visibility.sigma;
  j["threshold"] = run.threshold;
  j["verdict"] = to_string(run.verdict);
  j["noiseless"] = run.scan.noiseless;
  j["modulation_index"] = run.modulation_index;
  j["center_mode"] = run.scan.center_mode + 1;
  j["points"] = run.scan.theta.size();
  return j;
}

nlohmann::ordered_json to_json(const DispersionFit& fit, double true_c2) {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["c2"] = fit.c2;
  j["c2_sigma"] = fit.c2_sigma;
  j["residual_rms_rad"] = fit.residual_rms;
  j["points"] = fit.points;
  if (std::isfinite(true_c2)) j["simulated_c2"] = true_c2;
  return j;
}

}  // namespace freqcert::io
