// SPDX-License-Identifier: Apache-2.0
//
// CT effective dose: DLP = CTDIvol * L, E = DLP * k.
#pragma once

#include <map>
#include <string>
#include <vector>

namespace gpcn::dose {

struct DoseRecord {
  double ctdi_vol = 0.0;        // mGy
  double scan_length = 0.0;     // cm
  double k_factor = 0.0;        // mSv / (mGy cm)
  double dlp = 0.0;             // mGy cm
  double effective_dose = 0.0;  // mSv
  std::string age_band;
};

/// Throws ValidationError naming the offending field when an input is not
/// strictly positive and finite.
DoseRecord compute_dose(double ctdi_vol, double scan_length, double k_factor, std::string age_band = {});

struct DoseSummary {
  double mean = 0.0;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

/// Statistics of effective dose; an even count takes the mean of the two middle values.
DoseSummary aggregate(const std::vector<DoseRecord>& records);

struct KTable {
  std::map<std::string, double> factors;  // age band -> k
  bool authoritative = false;             // false unless the file says otherwise
  double at(const std::string& age_band) const;
};

/// Tab-separated "age_band<TAB>k_factor" with an optional header and '#' comments.
/// A comment containing "non-authoritative" marks the table as an example.
KTable parse_k_table(const std::string& text);

struct ExamRow {
  double ctdi_vol = 0.0;
  double scan_length = 0.0;
  std::string age_band;
};

/// Tab-separated "ctdi_vol<TAB>scan_length<TAB>age_band" with a header row.
std::vector<ExamRow> parse_exams(const std::string& text);

std::string records_csv(const std::vector<DoseRecord>& records);
std::string summary_csv(const DoseSummary& summary, bool authoritative);

}  // namespace gpcn::dose
