#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctlab/core.hpp"

namespace ctlab {

struct ThresholdMeasures {
  SubjectId subject_id;
  std::optional<int> min_rank;
  std::optional<double> median_rank;
  std::optional<double> mean_rank;
  std::optional<double> sd_rank;
  int starts = 0;
  int rounds_played = 0;
  double propensity_to_start = 0.0;

  bool operator==(const ThresholdMeasures&) const = default;
};

/// Measures for one subject from all of that subject's round records. Rounds
/// without a rank (pass or abstention) still count as played.
ThresholdMeasures compute_measures(std::span<const SubjectRoundRecord> records);

/// Groups records by subject and computes each subject's measures, ordered by
/// subject id.
std::vector<ThresholdMeasures> compute_all_measures(std::span<const SubjectRoundRecord> records);

struct ConsistencyPoint {
  SubjectId subject_id;
  double mean_rank = 0.0;
  double sd_rank = 0.0;
};

struct RankBandSummary {
  int subjects = 0;
  std::optional<double> mean_sd;
};

struct ConsistencyTable {
  std::vector<ConsistencyPoint> points;
  RankBandSummary low;   // mean rank <= 4
  RankBandSummary mid;   // 4 < mean rank <= 6
  RankBandSummary high;  // mean rank > 6
};

ConsistencyTable consistency_table(std::span<const ThresholdMeasures> measures);

struct HistogramBin {
  double lower = 0.0;
  double upper = 0.0;
  int count = 0;
};

/// Fixed-width bins [lower, lower + width) covering [lo, hi]; the final bin
/// is closed on the right.
std::vector<HistogramBin> histogram(std::span<const double> values, double lo, double hi,
                                    double width);

std::string measures_csv(std::span<const ThresholdMeasures> measures);
std::vector<ThresholdMeasures> parse_measures_csv(const std::string& text);
std::string histogram_csv(std::span<const HistogramBin> bins);

}  // namespace ctlab
