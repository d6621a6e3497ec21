// SPDX-License-Identifier: Apache-2.0
#include "gpcn/dose.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gpcn/tensor.hpp"

namespace gpcn::dose {

namespace {

void require_positive(double v, const char* field) {
  if (!std::isfinite(v) || !(v > 0.0)) {
    throw ValidationError(std::string(field) + " must be positive and finite, got " + std::to_string(v));
  }
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, '\t')) out.push_back(cell);
  return out;
}

double parse_number(const std::string& s, int lineno, const char* field) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw ValidationError("line " + std::to_string(lineno) + ": " + field + " is not a number: '" + s + "'");
  }
  return v;
}

std::string trim_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

DoseRecord compute_dose(double ctdi_vol, double scan_length, double k_factor, std::string age_band) {
  require_positive(ctdi_vol, "ctdi_vol");
  require_positive(scan_length, "scan_length");
  require_positive(k_factor, "k_factor");
  DoseRecord r;
  r.ctdi_vol = ctdi_vol;
  r.scan_length = scan_length;
  r.k_factor = k_factor;
  r.dlp = ctdi_vol * scan_length;
  r.effective_dose = r.dlp * k_factor;
  r.age_band = std::move(age_band);
  return r;
}

DoseSummary aggregate(const std::vector<DoseRecord>& records) {
  if (records.empty()) throw ValidationError("aggregate: no dose records");
  std::vector<double> e;
  e.reserve(records.size());
  for (const auto& r : records) e.push_back(r.effective_dose);
  std::sort(e.begin(), e.end());
  DoseSummary s;
  s.count = e.size();
  double sum = 0.0;
  for (double v : e) sum += v;
  s.mean = sum / static_cast<double>(e.size());
  const std::size_t mid = e.size() / 2;
  s.median = e.size() % 2 == 1 ? e[mid] : 0.5 * (e[mid - 1] + e[mid]);
  s.min = e.front();
  s.max = e.back();
  return s;
}

double KTable::at(const std::string& age_band) const {
  const auto it = factors.find(age_band);
  if (it == factors.end()) throw ValidationError("no k factor for age band '" + age_band + "'");
  return it->second;
}

KTable parse_k_table(const std::string& text) {
  KTable t;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  bool saw_marker = false;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim_cr(line);
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.find("non-authoritative") != std::string::npos) saw_marker = true;
      continue;
    }
    const auto cells = split_tabs(line);
    if (cells.size() != 2) throw ValidationError("k table line " + std::to_string(lineno) + ": expected 2 columns");
    if (cells[0] == "age_band") continue;
    const double k = parse_number(cells[1], lineno, "k_factor");
    require_positive(k, "k_factor");
    if (!t.factors.emplace(cells[0], k).second) {
      throw ValidationError("k table line " + std::to_string(lineno) + ": duplicate age band '" + cells[0] + "'");
    }
  }
  if (t.factors.empty()) throw ValidationError("k table is empty");
  t.authoritative = !saw_marker;
  return t;
}

std::vector<ExamRow> parse_exams(const std::string& text) {
  std::vector<ExamRow> rows;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_tabs(line);
    if (cells.size() != 3) throw ValidationError("exam line " + std::to_string(lineno) + ": expected 3 columns");
    if (cells[0] == "ctdi_vol") continue;
    rows.push_back({parse_number(cells[0], lineno, "ctdi_vol"), parse_number(cells[1], lineno, "scan_length"),
                    cells[2]});
  }
  return rows;
}

std::string records_csv(const std::vector<DoseRecord>& records) {
  std::ostringstream os;
  os << "index,age_band,ctdi_vol_mGy,scan_length_cm,k_factor,dlp_mGy_cm,effective_dose_mSv\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    os << i << ',' << r.age_band << ',' << fmt(r.ctdi_vol) << ',' << fmt(r.scan_length) << ',' << fmt(r.k_factor)
       << ',' << fmt(r.dlp) << ',' << fmt(r.effective_dose) << '\n';
  }
  return os.str();
}

std::string summary_csv(const DoseSummary& s, bool authoritative) {
  std::ostringstream os;
  os << "count,mean_mSv,median_mSv,min_mSv,max_mSv,k_table\n";
  os << s.count << ',' << fmt(s.mean) << ',' << fmt(s.median) << ',' << fmt(s.min) << ',' << fmt(s.max) << ','
     << (authoritative ? "user-supplied" : "non-authoritative example") << '\n';
  return os.str();
}

}  // namespace gpcn::dose
