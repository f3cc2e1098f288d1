#pragma once

// Independent reference computations for the test suites. Nothing here calls
// the library code it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "ctlab/core.hpp"
#include "ctlab/metrics.hpp"

namespace ctlab::oracle {

struct Ols {
  Eigen::VectorXd beta;
  double sigma_mle = 0.0;
};

inline Ols ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  Ols out;
  out.beta = (x.transpose() * x).ldlt().solve(x.transpose() * y);
  const Eigen::VectorXd r = y - x * out.beta;
  out.sigma_mle = std::sqrt(r.squaredNorm() / static_cast<double>(y.size()));
  return out;
}

inline double phi_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

struct TobitInstance {
  std::vector<double> x;
  Eigen::VectorXd y;
  double lower = 0.0;
  double upper = 0.0;
};

inline TobitInstance censored_sample(std::uint64_t seed, int n, double b0, double b1, double sigma,
                                     double lower, double upper) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> xd(5.0, 3.0), e(0.0, sigma);
  TobitInstance t;
  t.lower = lower;
  t.upper = upper;
  t.x.resize(static_cast<std::size_t>(n));
  t.y.resize(n);
  for (int i = 0; i < n; ++i) {
    t.x[i] = xd(rng) / 2.0;
    t.y(i) = std::clamp(b0 + b1 * t.x[i] + e(rng), lower, upper);
  }
  return t;
}

inline TobitInstance small_tobit_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  TobitInstance t;
  t.lower = 0.0;
  t.upper = 3.0;
  t.x.resize(25);
  t.y.resize(25);
  for (int i = 0; i < 25; ++i) {
    t.x[i] = n01(rng);
    t.y(i) = std::clamp(1.0 + 1.5 * t.x[i] + n01(rng), t.lower, t.upper);
  }
  return t;
}

inline double tobit_loglik(const std::vector<double>& x, const Eigen::VectorXd& y, double lower, double upper,
                           double b0, double b1, double sigma) {
  double ll = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double mu = b0 + b1 * x[i];
    const double yi = y(static_cast<Eigen::Index>(i));
    if (yi <= lower) {
      ll += std::log(phi_cdf((lower - mu) / sigma));
    } else if (yi >= upper) {
      ll += std::log(phi_cdf((mu - upper) / sigma));
    } else {
      const double z = (yi - mu) / sigma;
      ll += -0.5 * z * z - 0.5 * std::log(2 * M_PI) - std::log(sigma);
    }
  }
  return ll;
}

/// Best loglik on a 200 x 200 x 50 grid spanning a box around (b0, b1, sigma).
inline double tobit_grid_max(const TobitInstance& t, double b0, double b1, double sigma) {
  double best = -INFINITY;
  for (int i = 0; i < 200; ++i) {
    const double g0 = b0 - 2.0 + 4.0 * i / 199.0;
    for (int j = 0; j < 200; ++j) {
      const double g1 = b1 - 2.0 + 4.0 * j / 199.0;
      for (int k = 0; k < 50; ++k) {
        const double s = sigma * (0.5 + 1.5 * k / 49.0);
        best = std::max(best, tobit_loglik(t.x, t.y, t.lower, t.upper, g0, g1, s));
      }
    }
  }
  return best;
}

inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& at) {
  Eigen::VectorXd g(at.size());
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(at(i)));
    Eigen::VectorXd a = at, b = at;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

inline double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

/// Threshold measures recomputed straight from a session log: every settled
/// attempt of a round, members from its RoundStarted, ranks by (at_ms, seq).
inline std::vector<ThresholdMeasures> measures_from_events(const std::vector<GameEvent>& events) {
  struct Attempt {
    std::vector<SubjectId> members;
    std::vector<std::pair<std::pair<Millis, std::int64_t>, SubjectId>> contributions;
  };
  std::map<RoundId, Attempt> open;
  std::map<SubjectId, std::vector<int>> ranks;
  std::map<SubjectId, int> played;
  for (const auto& e : events) {
    switch (e.kind) {
      case EventKind::RoundStarted:
        open[e.round_id] = Attempt{*e.members, {}};
        break;
      case EventKind::Contributed:
        open[e.round_id].contributions.push_back({{e.at_ms, e.seq}, *e.subject_id});
        break;
      case EventKind::RoundEnded: {
        auto& a = open[e.round_id];
        std::sort(a.contributions.begin(), a.contributions.end());
        for (const auto& m : a.members) ++played[m];
        for (std::size_t i = 0; i < a.contributions.size(); ++i) {
          ranks[a.contributions[i].second].push_back(static_cast<int>(i) + 1);
        }
        open.erase(e.round_id);
        break;
      }
      default:
        break;
    }
  }
  std::vector<ThresholdMeasures> out;
  for (const auto& [id, n] : played) {
    ThresholdMeasures m;
    m.subject_id = id;
    m.rounds_played = n;
    auto r = ranks[id];
    m.starts = static_cast<int>(std::count(r.begin(), r.end(), 1));
    m.propensity_to_start = static_cast<double>(m.starts) / n;
    if (!r.empty()) {
      std::sort(r.begin(), r.end());
      m.min_rank = r.front();
      const auto k = r.size();
      m.median_rank = k % 2 ? r[k / 2] : (r[k / 2 - 1] + r[k / 2]) / 2.0;
      m.mean_rank = std::accumulate(r.begin(), r.end(), 0) / static_cast<double>(k);
      if (k > 1) {
        double ss = 0.0;
        for (int v : r) ss += (v - *m.mean_rank) * (v - *m.mean_rank);
        m.sd_rank = std::sqrt(ss / static_cast<double>(k - 1));
      }
    }
    out.push_back(m);
  }
  return out;
}

/// Exact on ranks, starts and propensity; sd only to rounding.
inline bool same_measures(const ThresholdMeasures& a, const ThresholdMeasures& b) {
  if (a.subject_id != b.subject_id || a.min_rank != b.min_rank || a.median_rank != b.median_rank ||
      a.mean_rank != b.mean_rank || a.starts != b.starts || a.rounds_played != b.rounds_played ||
      a.propensity_to_start != b.propensity_to_start || a.sd_rank.has_value() != b.sd_rank.has_value()) {
    return false;
  }
  return !a.sd_rank || std::abs(*a.sd_rank - *b.sd_rank) < 1e-12;
}

/// Smallest r >= r0 with |{t <= r}| == r, found by scanning every r.
inline int scan_fixed_point(const std::vector<int>& t) {
  const int n = static_cast<int>(t.size());
  const int r0 = static_cast<int>(std::count(t.begin(), t.end(), 0));
  for (int r = r0; r <= n; ++r) {
    if (std::count_if(t.begin(), t.end(), [r](int x) { return x <= r; }) == r) return r;
  }
  return n;
}

}  // namespace ctlab::oracle
