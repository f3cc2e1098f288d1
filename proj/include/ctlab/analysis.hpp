#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctlab/core.hpp"
#include "ctlab/metrics.hpp"
#include "ctlab/stats.hpp"

namespace ctlab {

/// One subject's outcome measures joined with their questionnaire scores.
struct SubjectRow {
  ThresholdMeasures measures;
  std::optional<PersonalityProfile> profile;
  std::optional<double> mean_importance;
};

std::vector<SubjectRow> subject_rows(std::span<const SubjectRoundRecord> records,
                                     const std::map<SubjectId, Subject>& subjects);

/// One group-round collapsed for the funded regressions.
struct RoundRow {
  RoundId round_id;
  bool funded = false;
  double first_contribution = 0.0;
  std::optional<double> mean_importance;
  std::optional<double> mean_extravert;
  std::optional<double> min_extravert;
};

/// Rounds in order of first appearance in `records`. Extraversion summaries
/// are missing when any member lacks a profile.
std::vector<RoundRow> round_rows(std::span<const SubjectRoundRecord> records,
                                 const std::map<SubjectId, Subject>& subjects);

struct ModelColumn {
  std::string label;
  stats::FitResult fit;
};

struct RegressionTable {
  std::string name;
  std::vector<ModelColumn> columns;
};

/// Rank outcomes (mean, median, min) censored at [1, rank_upper] and
/// propensity censored at [0, 1], regressed on Importance and Rotter.
RegressionTable fit_table2a(std::span<const SubjectRow> rows, double rank_upper = 10.0);
/// Same outcomes on Importance and the five trait scores.
RegressionTable fit_table2b(std::span<const SubjectRow> rows, double rank_upper = 10.0);

enum class BinaryModel { Logit, Probit };
BinaryModel binary_model_from_string(std::string_view s);
std::string_view to_string(BinaryModel m);

/// Funded on FirstContribution, MeanImportance and MeanExtravert (first
/// column) or MinExtravert (second column).
RegressionTable fit_table3(std::span<const RoundRow> rows, BinaryModel model = BinaryModel::Logit);

struct CorrelationTable {
  std::vector<std::string> names;
  Eigen::MatrixXd r;
  int n = 0;
};

/// Trait, Rotter and SVO-dummy correlations across subjects with a profile.
CorrelationTable fit_table1(std::span<const SubjectRow> rows);

struct DistributionShape {
  int n = 0;
  double g1 = 0.0;
  double G1 = 0.0;
  double b1 = 0.0;
  stats::TestResult jarque_bera;
  stats::TestResult dagostino_k2;
};

DistributionShape propensity_shape(std::span<const SubjectRow> rows);

struct AnalysisOptions {
  BinaryModel model = BinaryModel::Logit;
  int n_boot = 500;
  std::uint64_t seed = 0;
  double lowess_fraction = 2.0 / 3.0;
};

struct AnalysisResult {
  std::vector<SubjectRow> rows;
  CorrelationTable table1;
  RegressionTable table2a;
  RegressionTable table2b;
  RegressionTable table3;
  DistributionShape propensity;
  ConsistencyTable consistency;
  std::optional<stats::LowessBand> band;
  std::map<std::string, std::vector<HistogramBin>> histograms;  // keyed by file stem
  double rank_upper = 10.0;
};

/// Runs every table and figure. Throws NoData on empty records.
AnalysisResult analyze(std::span<const SubjectRoundRecord> records,
                       const std::map<SubjectId, Subject>& subjects, const AnalysisOptions& options);

// --- output files ------------------------------------------------------------

std::string correlation_csv(const CorrelationTable& t);
/// Long format: outcome, term, coefficient, std_error, p_value, stars, n.
std::string regression_csv(const RegressionTable& t);
std::string fig4_csv(const AnalysisResult& a);
std::string descriptives_csv(const AnalysisResult& a);

/// Writes measures.csv, table1.csv, table2a.csv, table2b.csv, table3.csv,
/// fig3_*.csv, fig4.csv, descriptives.csv, analysis.json and report.txt.
void write_analysis(const AnalysisResult& a, const AnalysisOptions& options,
                    const std::map<std::string, std::string>& input_hashes, const std::string& dir);

/// Renders report.txt from the CSV outputs in `dir`. Rejects regression
/// tables whose stars disagree with their p-values (SchemaError).
std::string render_report(const std::string& dir);

/// Re-renders report.txt and writes manifest.json with output hashes.
void write_report(const std::string& dir);

}  // namespace ctlab
