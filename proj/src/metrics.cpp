#include "ctlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ctlab/csv.hpp"

namespace ctlab {

ThresholdMeasures compute_measures(std::span<const SubjectRoundRecord> records) {
  if (records.empty()) throw Error(ErrorCode::NoData, "no records for subject");
  ThresholdMeasures m;
  m.subject_id = records.front().subject_id;
  std::vector<int> ranks;
  for (const auto& r : records) {
    if (r.subject_id != m.subject_id) {
      throw Error(ErrorCode::SchemaError, "records for more than one subject");
    }
    ++m.rounds_played;
    if (r.rank) {
      ranks.push_back(*r.rank);
      if (*r.rank == 1) ++m.starts;
    }
  }
  m.propensity_to_start = static_cast<double>(m.starts) / m.rounds_played;
  if (ranks.empty()) return m;

  std::sort(ranks.begin(), ranks.end());
  const auto k = ranks.size();
  m.min_rank = ranks.front();
  m.median_rank = k % 2 ? ranks[k / 2] : 0.5 * (ranks[k / 2 - 1] + ranks[k / 2]);
  const double mean = std::accumulate(ranks.begin(), ranks.end(), 0.0) / static_cast<double>(k);
  m.mean_rank = mean;
  if (k >= 2) {
    double ss = 0.0;
    for (int r : ranks) ss += (r - mean) * (r - mean);
    m.sd_rank = std::sqrt(ss / static_cast<double>(k - 1));
  }
  return m;
}

std::vector<ThresholdMeasures> compute_all_measures(std::span<const SubjectRoundRecord> records) {
  if (records.empty()) throw Error(ErrorCode::NoData, "no records");
  std::map<SubjectId, std::vector<SubjectRoundRecord>> by_subject;
  for (const auto& r : records) by_subject[r.subject_id].push_back(r);
  std::vector<ThresholdMeasures> out;
  out.reserve(by_subject.size());
  for (const auto& [id, rs] : by_subject) out.push_back(compute_measures(rs));
  return out;
}

ConsistencyTable consistency_table(std::span<const ThresholdMeasures> measures) {
  ConsistencyTable t;
  double low = 0.0, mid = 0.0, high = 0.0;
  for (const auto& m : measures) {
    if (!m.sd_rank || !m.mean_rank) continue;
    t.points.push_back({m.subject_id, *m.mean_rank, *m.sd_rank});
    if (*m.mean_rank <= 4.0) {
      ++t.low.subjects;
      low += *m.sd_rank;
    } else if (*m.mean_rank <= 6.0) {
      ++t.mid.subjects;
      mid += *m.sd_rank;
    } else {
      ++t.high.subjects;
      high += *m.sd_rank;
    }
  }
  if (t.low.subjects) t.low.mean_sd = low / t.low.subjects;
  if (t.mid.subjects) t.mid.mean_sd = mid / t.mid.subjects;
  if (t.high.subjects) t.high.mean_sd = high / t.high.subjects;
  return t;
}

std::vector<HistogramBin> histogram(std::span<const double> values, double lo, double hi,
                                    double width) {
  if (!(width > 0.0) || !(hi > lo)) throw Error(ErrorCode::ConfigError, "bad histogram range");
  const int n = static_cast<int>(std::ceil((hi - lo) / width - 1e-9));
  std::vector<HistogramBin> bins(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    bins[i].lower = lo + i * width;
    bins[i].upper = std::min(hi, lo + (i + 1) * width);
  }
  for (double v : values) {
    if (v < lo || v > hi) continue;
    int i = static_cast<int>(std::floor((v - lo) / width + 1e-12));
    bins[static_cast<std::size_t>(std::clamp(i, 0, n - 1))].count++;
  }
  return bins;
}

namespace {
const std::vector<std::string> kMeasureColumns = {
    "subject_id", "min_rank", "median_rank", "mean_rank", "sd_rank",
    "starts", "rounds_played", "propensity_to_start"};
}

std::string measures_csv(std::span<const ThresholdMeasures> measures) {
  CsvTable t;
  t.header = kMeasureColumns;
  for (const auto& m : measures) {
    t.rows.push_back({m.subject_id,
                      m.min_rank ? std::to_string(*m.min_rank) : "",
                      format_optional(m.median_rank),
                      format_optional(m.mean_rank),
                      format_optional(m.sd_rank),
                      std::to_string(m.starts),
                      std::to_string(m.rounds_played),
                      format_number(m.propensity_to_start)});
  }
  return write_csv(t);
}

std::vector<ThresholdMeasures> parse_measures_csv(const std::string& text) {
  const auto t = parse_csv(text);
  std::vector<std::size_t> idx;
  for (const auto& c : kMeasureColumns) idx.push_back(t.column(c));
  std::vector<ThresholdMeasures> out;
  for (const auto& row : t.rows) {
    ThresholdMeasures m;
    m.subject_id = row[idx[0]];
    if (!row[idx[1]].empty()) m.min_rank = parse_int(row[idx[1]], "min_rank");
    m.median_rank = parse_optional_number(row[idx[2]], "median_rank");
    m.mean_rank = parse_optional_number(row[idx[3]], "mean_rank");
    m.sd_rank = parse_optional_number(row[idx[4]], "sd_rank");
    m.starts = parse_int(row[idx[5]], "starts");
    m.rounds_played = parse_int(row[idx[6]], "rounds_played");
    m.propensity_to_start = parse_number(row[idx[7]], "propensity_to_start");
    out.push_back(std::move(m));
  }
  return out;
}

std::string histogram_csv(std::span<const HistogramBin> bins) {
  CsvTable t;
  t.header = {"bin_lower", "bin_upper", "count"};
  for (const auto& b : bins) {
    t.rows.push_back({format_number(b.lower), format_number(b.upper), std::to_string(b.count)});
  }
  return write_csv(t);
}

}  // namespace ctlab
