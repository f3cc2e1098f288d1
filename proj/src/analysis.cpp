#include "ctlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <set>

#include "ctlab/csv.hpp"
#include "ctlab/hash.hpp"

namespace ctlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::string_view kVersion = "0.1.0";

double or_nan(const std::optional<double>& v) { return v ? *v : kNaN; }

using Columns = std::vector<std::pair<std::string, std::vector<double>>>;

stats::FitResult tobit_column(const Columns& regressors, const std::vector<double>& outcome,
                              double lower, double upper) {
  const auto design = stats::DesignMatrix::from_columns(regressors, true);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(outcome.data(),
                                                              static_cast<Eigen::Index>(outcome.size()));
  const auto [x, yy] = stats::listwise_delete(design, y);
  if (x.rows() == 0) throw Error(ErrorCode::NoData, "no complete rows for regression");
  return stats::tobit_fit(x, yy, lower, upper);
}

RegressionTable fit_table2(std::string name, std::span<const SubjectRow> rows, const Columns& regressors,
                           double rank_upper) {
  std::vector<double> mean, median, min, propensity;
  for (const auto& r : rows) {
    mean.push_back(or_nan(r.measures.mean_rank));
    median.push_back(or_nan(r.measures.median_rank));
    min.push_back(r.measures.min_rank ? static_cast<double>(*r.measures.min_rank) : kNaN);
    propensity.push_back(r.measures.propensity_to_start);
  }
  RegressionTable t;
  t.name = std::move(name);
  t.columns.push_back({"MeanRank", tobit_column(regressors, mean, 1.0, rank_upper)});
  t.columns.push_back({"MedianRank", tobit_column(regressors, median, 1.0, rank_upper)});
  t.columns.push_back({"MinRank", tobit_column(regressors, min, 1.0, rank_upper)});
  t.columns.push_back({"Propensity", tobit_column(regressors, propensity, 0.0, 1.0)});
  return t;
}

std::vector<double> trait(std::span<const SubjectRow> rows, double PersonalityProfile::*field) {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r.profile ? (*r.profile).*field : kNaN);
  return out;
}

std::vector<double> importance(std::span<const SubjectRow> rows) {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(or_nan(r.mean_importance));
  return out;
}

}  // namespace

std::vector<SubjectRow> subject_rows(std::span<const SubjectRoundRecord> records,
                                     const std::map<SubjectId, Subject>& subjects) {
  std::map<SubjectId, std::pair<double, int>> imp;
  for (const auto& r : records) {
    if (!r.importance) continue;
    auto& [sum, n] = imp[r.subject_id];
    sum += *r.importance;
    ++n;
  }
  std::vector<SubjectRow> out;
  for (auto& m : compute_all_measures(records)) {
    SubjectRow row;
    if (const auto s = subjects.find(m.subject_id); s != subjects.end()) row.profile = s->second.profile;
    if (const auto i = imp.find(m.subject_id); i != imp.end()) {
      row.mean_importance = i->second.first / i->second.second;
    }
    row.measures = std::move(m);
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<RoundRow> round_rows(std::span<const SubjectRoundRecord> records,
                                 const std::map<SubjectId, Subject>& subjects) {
  std::vector<RoundId> order;
  std::map<RoundId, std::vector<const SubjectRoundRecord*>> by_round;
  for (const auto& r : records) {
    auto& v = by_round[r.round_id];
    if (v.empty()) order.push_back(r.round_id);
    v.push_back(&r);
  }
  std::vector<RoundRow> out;
  for (const auto& id : order) {
    const auto& members = by_round.at(id);
    RoundRow row;
    row.round_id = id;
    row.funded = members.front()->funded;
    row.first_contribution = members.front()->first_contribution_amount;

    double imp_sum = 0.0;
    bool imp_complete = true;
    double e_sum = 0.0;
    double e_min = std::numeric_limits<double>::infinity();
    bool e_complete = true;
    for (const auto* r : members) {
      if (r->importance) {
        imp_sum += *r->importance;
      } else {
        imp_complete = false;
      }
      const auto s = subjects.find(r->subject_id);
      if (s == subjects.end() || !s->second.profile) {
        e_complete = false;
        continue;
      }
      const double e = s->second.profile->extraversion;
      e_sum += e;
      e_min = std::min(e_min, e);
    }
    const double n = static_cast<double>(members.size());
    if (imp_complete) row.mean_importance = imp_sum / n;
    if (e_complete) {
      row.mean_extravert = e_sum / n;
      row.min_extravert = e_min;
    }
    out.push_back(std::move(row));
  }
  return out;
}

RegressionTable fit_table2a(std::span<const SubjectRow> rows, double rank_upper) {
  const Columns regressors = {{"Importance", importance(rows)},
                              {"Rotter", trait(rows, &PersonalityProfile::rotter_internal)}};
  return fit_table2("table2a", rows, regressors, rank_upper);
}

RegressionTable fit_table2b(std::span<const SubjectRow> rows, double rank_upper) {
  const Columns regressors = {
      {"Importance", importance(rows)},
      {"Extravert", trait(rows, &PersonalityProfile::extraversion)},
      {"Agreeable", trait(rows, &PersonalityProfile::agreeableness)},
      {"Conscientious", trait(rows, &PersonalityProfile::conscientiousness)},
      {"EmotionallyStable", trait(rows, &PersonalityProfile::emotional_stability)},
      {"Open", trait(rows, &PersonalityProfile::openness)}};
  return fit_table2("table2b", rows, regressors, rank_upper);
}

BinaryModel binary_model_from_string(std::string_view s) {
  if (s == "logit") return BinaryModel::Logit;
  if (s == "probit") return BinaryModel::Probit;
  throw Error(ErrorCode::ConfigError, "model must be logit or probit, got '" + std::string(s) + "'");
}

std::string_view to_string(BinaryModel m) { return m == BinaryModel::Logit ? "logit" : "probit"; }

RegressionTable fit_table3(std::span<const RoundRow> rows, BinaryModel model) {
  std::vector<double> funded, first, imp, mean_e, min_e;
  for (const auto& r : rows) {
    funded.push_back(r.funded ? 1.0 : 0.0);
    first.push_back(r.first_contribution);
    imp.push_back(or_nan(r.mean_importance));
    mean_e.push_back(or_nan(r.mean_extravert));
    min_e.push_back(or_nan(r.min_extravert));
  }
  const Eigen::VectorXd y =
      Eigen::Map<const Eigen::VectorXd>(funded.data(), static_cast<Eigen::Index>(funded.size()));
  auto fit = [&](const std::string& name, const std::vector<double>& extravert) {
    const auto design = stats::DesignMatrix::from_columns(
        {{"FirstContribution", first}, {"MeanImportance", imp}, {name, extravert}}, true);
    const auto [x, yy] = stats::listwise_delete(design, y);
    if (x.rows() == 0) throw Error(ErrorCode::NoData, "no complete rounds for regression");
    return model == BinaryModel::Logit ? stats::logit_fit(x, yy) : stats::probit_fit(x, yy);
  };
  RegressionTable t;
  t.name = "table3";
  t.columns.push_back({"Funded:MeanExtravert", fit("MeanExtravert", mean_e)});
  t.columns.push_back({"Funded:MinExtravert", fit("MinExtravert", min_e)});
  return t;
}

CorrelationTable fit_table1(std::span<const SubjectRow> rows) {
  Columns cols = {{"Extravert", {}}, {"Agreeable", {}},     {"Conscientious", {}},
                  {"EmotionallyStable", {}}, {"Open", {}}, {"Rotter", {}},
                  {"ProSelf", {}},   {"ProSocial", {}}};
  for (const auto& r : rows) {
    if (!r.profile) continue;
    const auto& p = *r.profile;
    const double values[] = {p.extraversion,
                             p.agreeableness,
                             p.conscientiousness,
                             p.emotional_stability,
                             p.openness,
                             p.rotter_internal,
                             p.svo == Svo::ProSelf ? 1.0 : 0.0,
                             p.svo == Svo::ProSocial ? 1.0 : 0.0};
    for (std::size_t k = 0; k < cols.size(); ++k) cols[k].second.push_back(values[k]);
  }
  if (cols.front().second.size() < 3) throw Error(ErrorCode::NoData, "too few profiles for correlations");
  CorrelationTable t;
  const auto design = stats::DesignMatrix::from_columns(cols, false);
  t.names = design.names;
  t.r = stats::pearson_matrix(design);
  t.n = static_cast<int>(design.rows());
  return t;
}

DistributionShape propensity_shape(std::span<const SubjectRow> rows) {
  std::vector<double> v;
  for (const auto& r : rows) v.push_back(r.measures.propensity_to_start);
  DistributionShape s;
  s.n = static_cast<int>(v.size());
  s.g1 = stats::skewness(v, stats::SkewnessMethod::g1);
  s.G1 = stats::skewness(v, stats::SkewnessMethod::G1);
  s.b1 = stats::skewness(v, stats::SkewnessMethod::b1);
  s.jarque_bera = stats::normality_test(v, stats::NormalityTest::JarqueBera);
  s.dagostino_k2 = stats::normality_test(v, stats::NormalityTest::DAgostinoK2);
  return s;
}

AnalysisResult analyze(std::span<const SubjectRoundRecord> records,
                       const std::map<SubjectId, Subject>& subjects, const AnalysisOptions& options) {
  if (records.empty()) throw Error(ErrorCode::NoData, "no subject-round records");
  AnalysisResult a;
  a.rank_upper = 0.0;
  for (const auto& r : records) a.rank_upper = std::max(a.rank_upper, static_cast<double>(r.group_size));
  a.rows = subject_rows(records, subjects);
  a.table1 = fit_table1(a.rows);
  a.table2a = fit_table2a(a.rows, a.rank_upper);
  a.table2b = fit_table2b(a.rows, a.rank_upper);
  a.table3 = fit_table3(round_rows(records, subjects), options.model);
  a.propensity = propensity_shape(a.rows);

  std::vector<ThresholdMeasures> measures;
  for (const auto& r : a.rows) measures.push_back(r.measures);
  a.consistency = consistency_table(measures);
  if (a.consistency.points.size() >= 10) {
    std::vector<double> x, y;
    for (const auto& p : a.consistency.points) {
      x.push_back(p.mean_rank);
      y.push_back(p.sd_rank);
    }
    a.band = stats::lowess(x, y, options.lowess_fraction, options.n_boot, options.seed);
  }

  std::vector<double> min_r, med_r, mean_r, prop;
  for (const auto& m : measures) {
    if (m.min_rank) min_r.push_back(*m.min_rank);
    if (m.median_rank) med_r.push_back(*m.median_rank);
    if (m.mean_rank) mean_r.push_back(*m.mean_rank);
    prop.push_back(m.propensity_to_start);
  }
  a.histograms["fig3_min_rank"] = histogram(min_r, 1.0, a.rank_upper, 1.0);
  a.histograms["fig3_median_rank"] = histogram(med_r, 1.0, a.rank_upper, 1.0);
  a.histograms["fig3_mean_rank"] = histogram(mean_r, 1.0, a.rank_upper, 1.0);
  a.histograms["fig3_propensity"] = histogram(prop, 0.0, 1.0, 0.1);
  return a;
}

// --- output files ------------------------------------------------------------

std::string correlation_csv(const CorrelationTable& t) {
  CsvTable csv;
  csv.header.push_back("variable");
  csv.header.insert(csv.header.end(), t.names.begin(), t.names.end());
  for (std::size_t i = 0; i < t.names.size(); ++i) {
    std::vector<std::string> row{t.names[i]};
    for (std::size_t j = 0; j < t.names.size(); ++j) {
      row.push_back(format_fixed(t.r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), 4));
    }
    csv.rows.push_back(std::move(row));
  }
  csv.rows.push_back({"N", std::to_string(t.n)});
  csv.rows.back().resize(csv.header.size());
  return write_csv(csv);
}

std::string regression_csv(const RegressionTable& t) {
  CsvTable csv;
  csv.header = {"outcome", "term", "coefficient", "std_error", "p_value", "stars", "n"};
  for (const auto& col : t.columns) {
    const auto& f = col.fit;
    for (std::size_t k = 0; k < f.names.size(); ++k) {
      const double p = f.p_value(f.names[k]);
      csv.rows.push_back({col.label, f.names[k], format_fixed(f.coefficients(static_cast<Eigen::Index>(k)), 4),
                          format_fixed(f.standard_errors(static_cast<Eigen::Index>(k)), 4),
                          format_number(p), stats::significance_stars(p), std::to_string(f.n)});
    }
    if (f.sigma) {
      csv.rows.push_back({col.label, "Sigma", format_fixed(*f.sigma, 4),
                          f.sigma_se ? format_fixed(*f.sigma_se, 4) : "", "", "", std::to_string(f.n)});
    }
  }
  return write_csv(csv);
}

std::string fig4_csv(const AnalysisResult& a) {
  CsvTable csv;
  csv.header = {"subject_id", "mean_rank", "sd_rank", "lowess", "lower", "upper"};
  for (const auto& p : a.consistency.points) {
    std::vector<std::string> row{p.subject_id, format_number(p.mean_rank), format_number(p.sd_rank)};
    if (a.band) {
      const auto& b = *a.band;
      const auto it = std::lower_bound(b.x.begin(), b.x.end(), p.mean_rank);
      const auto k = static_cast<std::size_t>(it - b.x.begin());
      row.push_back(format_number(b.fitted[k]));
      row.push_back(format_number(b.lower[k]));
      row.push_back(format_number(b.upper[k]));
    } else {
      row.insert(row.end(), 3, "");
    }
    csv.rows.push_back(std::move(row));
  }
  return write_csv(csv);
}

std::string descriptives_csv(const AnalysisResult& a) {
  CsvTable csv;
  csv.header = {"statistic", "value"};
  auto add = [&](std::string key, const std::string& v) { csv.rows.push_back({std::move(key), v}); };
  const auto& s = a.propensity;
  add("propensity_n", std::to_string(s.n));
  add("propensity_skewness_g1", format_fixed(s.g1, 4));
  add("propensity_skewness_G1", format_fixed(s.G1, 4));
  add("propensity_skewness_b1", format_fixed(s.b1, 4));
  add("propensity_jarque_bera", format_fixed(s.jarque_bera.statistic, 4));
  add("propensity_jarque_bera_p", format_number(s.jarque_bera.p_value));
  add("propensity_dagostino_k2", format_fixed(s.dagostino_k2.statistic, 4));
  add("propensity_dagostino_k2_p", format_number(s.dagostino_k2.p_value));
  auto band = [&](const std::string& name, const RankBandSummary& b) {
    add("sd_rank_" + name + "_subjects", std::to_string(b.subjects));
    add("sd_rank_" + name + "_mean", b.mean_sd ? format_fixed(*b.mean_sd, 4) : "");
  };
  band("low", a.consistency.low);
  band("mid", a.consistency.mid);
  band("high", a.consistency.high);
  return write_csv(csv);
}

void write_analysis(const AnalysisResult& a, const AnalysisOptions& options,
                    const std::map<std::string, std::string>& input_hashes, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path d(dir);
  std::vector<ThresholdMeasures> measures;
  for (const auto& r : a.rows) measures.push_back(r.measures);
  write_file((d / "measures.csv").string(), measures_csv(measures));
  write_file((d / "table1.csv").string(), correlation_csv(a.table1));
  write_file((d / "table2a.csv").string(), regression_csv(a.table2a));
  write_file((d / "table2b.csv").string(), regression_csv(a.table2b));
  write_file((d / "table3.csv").string(), regression_csv(a.table3));
  for (const auto& [stem, bins] : a.histograms) {
    write_file((d / (stem + ".csv")).string(), histogram_csv(bins));
  }
  write_file((d / "fig4.csv").string(), fig4_csv(a));
  write_file((d / "descriptives.csv").string(), descriptives_csv(a));

  Json meta{{"model", std::string(to_string(options.model))},
            {"n_boot", options.n_boot},
            {"seed", options.seed},
            {"lowess_fraction", options.lowess_fraction}};
  Json inputs = Json::object();
  for (const auto& [name, hash] : input_hashes) inputs[name] = hash;
  meta["inputs"] = inputs;
  write_file((d / "analysis.json").string(), meta.dump(2) + "\n");
  write_file((d / "report.txt").string(), render_report(dir));
}

// --- report ------------------------------------------------------------------

namespace {

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string render_regression(const std::string& title, const CsvTable& t) {
  const auto c_outcome = t.column("outcome"), c_term = t.column("term"), c_coef = t.column("coefficient"),
             c_se = t.column("std_error"), c_p = t.column("p_value"), c_stars = t.column("stars"),
             c_n = t.column("n");
  std::vector<std::string> outcomes, terms;
  std::map<std::pair<std::string, std::string>, std::string> cells;
  std::map<std::string, std::string> ns;
  for (const auto& row : t.rows) {
    const auto& o = row[c_outcome];
    const auto& term = row[c_term];
    if (std::find(outcomes.begin(), outcomes.end(), o) == outcomes.end()) outcomes.push_back(o);
    if (std::find(terms.begin(), terms.end(), term) == terms.end()) terms.push_back(term);
    if (!row[c_p].empty()) {
      const double p = parse_number(row[c_p], "p_value");
      if (row[c_stars] != stats::significance_stars(p)) {
        throw Error(ErrorCode::SchemaError, title + ": stars '" + row[c_stars] + "' do not match p = " +
                                                row[c_p] + " for " + o + "/" + term);
      }
    } else if (!row[c_stars].empty()) {
      throw Error(ErrorCode::SchemaError, title + ": stars without a p-value for " + o + "/" + term);
    }
    std::string cell = row[c_coef] + row[c_stars];
    if (!row[c_se].empty()) cell += " (" + row[c_se] + ")";
    cells[{term, o}] = cell;
    ns[o] = row[c_n];
  }
  std::size_t first = 4;
  for (const auto& term : terms) first = std::max(first, term.size());
  std::size_t width = 0;
  for (const auto& o : outcomes) width = std::max(width, o.size());
  for (const auto& [k, v] : cells) width = std::max(width, v.size());
  first += 2;
  width += 2;

  std::string out = title + "\n";
  out += pad("", first);
  for (const auto& o : outcomes) out += pad(o, width);
  out += "\n";
  for (const auto& term : terms) {
    out += pad(term, first);
    for (const auto& o : outcomes) {
      const auto it = cells.find({term, o});
      out += pad(it == cells.end() ? "" : it->second, width);
    }
    out += "\n";
  }
  out += pad("N", first);
  for (const auto& o : outcomes) out += pad(ns[o], width);
  out += "\n* p < 0.05, ** p < 0.01, *** p < 0.001\n";
  return out;
}

std::string render_matrix(const std::string& title, const CsvTable& t) {
  std::size_t width = 8;
  for (const auto& h : t.header) width = std::max(width, h.size() + 2);
  std::string out = title + "\n";
  for (const auto& h : t.header) out += pad(h == "variable" ? "" : h, width);
  out += "\n";
  for (const auto& row : t.rows) {
    for (const auto& cell : row) out += pad(cell, width);
    out += "\n";
  }
  return out;
}

}  // namespace

std::string render_report(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path d(dir);
  auto load = [&](const char* name) { return parse_csv(read_file((d / name).string())); };
  const auto t1 = load("table1.csv");
  const auto t2a = load("table2a.csv");
  const auto t2b = load("table2b.csv");
  const auto t3 = load("table3.csv");
  const auto desc = load("descriptives.csv");

  std::string out = "Threshold measures and personality: analysis report\n\n";
  out += render_matrix("Table 1. Correlations between personality measures", t1) + "\n";
  out += render_regression("Table 2a. Tobit regressions of threshold measures on Importance and Rotter", t2a) +
         "\n";
  out += render_regression("Table 2b. Tobit regressions of threshold measures on Importance and Big-5 traits",
                           t2b) +
         "\n";
  out += render_regression("Table 3. Round-level regressions of Funded", t3) + "\n";
  out += "Descriptives\n";
  const auto c_stat = desc.column("statistic"), c_val = desc.column("value");
  for (const auto& row : desc.rows) out += "  " + pad(row[c_stat], 30) + row[c_val] + "\n";
  return out;
}

void write_report(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path d(dir);
  const std::string report = render_report(dir);
  write_file((d / "report.txt").string(), report);

  Json manifest{{"tool", "ctlab"}, {"version", std::string(kVersion)}};
  const auto meta_path = d / "analysis.json";
  if (fs::exists(meta_path)) {
    try {
      manifest["analysis"] = Json::parse(read_file(meta_path.string()));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::SchemaError, std::string("analysis.json: ") + ex.what());
    }
  }
  std::set<std::string> names;
  for (const auto& entry : fs::directory_iterator(d)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (name != "manifest.json") names.insert(name);
  }
  Json files = Json::object();
  for (const auto& name : names) files[name] = sha256_hex(read_file((d / name).string()));
  manifest["files"] = files;
  write_file((d / "manifest.json").string(), manifest.dump(2) + "\n");
}

}  // namespace ctlab
