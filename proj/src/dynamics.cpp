#include "ctlab/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace ctlab {

Rng make_rng(std::uint64_t seed, std::initializer_list<std::string_view> labels) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  for (auto label : labels) {
    words.push_back(0xfeedu);
    for (unsigned char ch : label) words.push_back(ch);
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

Millis draw_latency(const LatencyLaw& law, Rng& rng) {
  if (law.sd_ms <= 0.0) return static_cast<Millis>(std::llround(std::max(law.mean_ms, law.floor_ms)));
  std::normal_distribution<double> normal(law.mean_ms, law.sd_ms);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double d = normal(rng);
    if (d >= law.floor_ms) return static_cast<Millis>(std::llround(d));
  }
  return static_cast<Millis>(std::llround(law.floor_ms));
}

void to_json(Json& j, const ThresholdAgent& a) {
  j = Json{{"subject_id", a.subject_id},
           {"threshold", a.threshold},
           {"never_start", a.never_start},
           {"latency_mean_ms", a.latency.mean_ms},
           {"latency_sd_ms", a.latency.sd_ms},
           {"latency_floor_ms", a.latency.floor_ms},
           {"contribution_amount", a.contribution_amount},
           {"importance", a.importance},
           {"threshold_round_sd", a.threshold_round_sd}};
}

void from_json(const Json& j, ThresholdAgent& a) {
  a.subject_id = j.at("subject_id").get<std::string>();
  a.threshold = j.at("threshold").get<int>();
  a.never_start = j.at("never_start").get<bool>();
  a.latency.mean_ms = j.at("latency_mean_ms").get<double>();
  a.latency.sd_ms = j.at("latency_sd_ms").get<double>();
  a.latency.floor_ms = j.at("latency_floor_ms").get<double>();
  a.contribution_amount = j.at("contribution_amount").get<int>();
  a.importance = j.at("importance").get<double>();
  a.threshold_round_sd = j.value("threshold_round_sd", 0.0);
}

CascadeResult cascade(std::span<const int> thresholds) {
  auto joined_at = [&](int r) {
    return static_cast<int>(
        std::count_if(thresholds.begin(), thresholds.end(), [r](int t) { return t <= r; }));
  };
  CascadeResult out;
  int r = static_cast<int>(std::count(thresholds.begin(), thresholds.end(), 0));
  out.trajectory.push_back(r);
  for (;;) {
    const int next = joined_at(r);
    if (next == r) break;
    r = next;
    out.trajectory.push_back(r);
  }
  out.final_count = r;
  return out;
}

ParticipationCurve ParticipationCurve::from_thresholds(std::span<const int> thresholds) {
  std::vector<int> sorted(thresholds.begin(), thresholds.end());
  std::sort(sorted.begin(), sorted.end());
  const int n = static_cast<int>(sorted.size());
  ParticipationCurve curve;
  curve.population = n;
  curve.joining = [sorted = std::move(sorted), n](double x) {
    if (n == 0) return 0.0;
    const double expected = x * n;
    const auto joined = std::upper_bound(sorted.begin(), sorted.end(), expected + 1e-9) - sorted.begin();
    return static_cast<double>(joined) / n;
  };
  return curve;
}

int ParticipationCurve::joining_count(int expected) const {
  if (population <= 0) return 0;
  const double x = std::clamp(static_cast<double>(expected) / population, 0.0, 1.0);
  return static_cast<int>(std::lround(joining(x) * population));
}

namespace {

constexpr double kZeroTol = 1e-12;

double slope_at(const std::function<double(double)>& f, double x) {
  constexpr double h = 1e-6;
  const double lo = std::max(0.0, x - h);
  const double hi = std::min(1.0, x + h);
  return (f(hi) - f(lo)) / (hi - lo);
}

}  // namespace

EquilibriumSet equilibria(const ParticipationCurve& curve, int grid_resolution) {
  if (grid_resolution < 100) throw Error(ErrorCode::ConfigError, "grid_resolution must be >= 100");
  if (!curve.joining) throw Error(ErrorCode::InvalidCurve, "empty curve");
  const auto& F = curve.joining;
  const int n = grid_resolution;

  std::vector<double> xs(n + 1), fs(n + 1), gs(n + 1);
  for (int i = 0; i <= n; ++i) {
    xs[i] = static_cast<double>(i) / n;
    fs[i] = F(xs[i]);
    if (!(fs[i] >= -kZeroTol && fs[i] <= 1.0 + kZeroTol)) {
      throw Error(ErrorCode::InvalidCurve, "F(x) outside [0,1]");
    }
    if (i > 0 && fs[i] < fs[i - 1] - kZeroTol) {
      throw Error(ErrorCode::InvalidCurve, "F is not nondecreasing");
    }
    gs[i] = fs[i] - xs[i];
  }

  EquilibriumSet out;
  if (std::all_of(gs.begin(), gs.end(), [](double g) { return std::abs(g) < kZeroTol; })) {
    out.degenerate_continuum = true;
    return out;
  }

  auto classify = [&](double x) {
    const double s = slope_at(F, x);
    return Equilibrium{x, s < 1.0 ? Stability::Stable : Stability::Unstable, s};
  };

  for (int i = 0; i <= n; ++i) {
    if (std::abs(gs[i]) < kZeroTol) {
      out.points.push_back(classify(xs[i]));
      continue;
    }
    if (i == n || std::abs(gs[i + 1]) < kZeroTol || (gs[i] > 0) == (gs[i + 1] > 0)) continue;
    double lo = xs[i], hi = xs[i + 1];
    const bool lo_positive = gs[i] > 0;
    double mid = 0.5 * (lo + hi);
    for (int iter = 0; iter < 200; ++iter) {
      mid = 0.5 * (lo + hi);
      const double g = F(mid) - mid;
      if (std::abs(g) < 1e-9 && hi - lo < 1e-9) break;
      if ((g > 0) == lo_positive) {
        lo = mid;
      } else {
        hi = mid;
      }
      if (hi - lo < 1e-15) break;
    }
    out.points.push_back(classify(mid));
  }
  return out;
}

MappingParams MappingParams::personality_blind() const {
  MappingParams m = *this;
  m.b_E = m.b_A = m.b_L = 0.0;
  m.never_start_slope = 0.0;
  return m;
}

void to_json(Json& j, const MappingParams& m) {
  j = Json{{"a", m.a},
           {"b_E", m.b_E},
           {"b_A", m.b_A},
           {"b_L", m.b_L},
           {"noise_sd", m.noise_sd},
           {"never_start_base", m.never_start_base},
           {"never_start_slope", m.never_start_slope},
           {"latency_mean_ms", m.latency_mean_ms},
           {"latency_sd_ms", m.latency_sd_ms},
           {"latency_floor_ms", m.latency_floor_ms},
           {"latency_mean_log_sd", m.latency_mean_log_sd},
           {"threshold_round_sd", m.threshold_round_sd}};
}

void from_json(const Json& j, MappingParams& m) {
  const MappingParams d;
  m.a = j.value("a", d.a);
  m.b_E = j.value("b_E", d.b_E);
  m.b_A = j.value("b_A", d.b_A);
  m.b_L = j.value("b_L", d.b_L);
  m.noise_sd = j.value("noise_sd", d.noise_sd);
  m.never_start_base = j.value("never_start_base", d.never_start_base);
  m.never_start_slope = j.value("never_start_slope", d.never_start_slope);
  m.latency_mean_ms = j.value("latency_mean_ms", d.latency_mean_ms);
  m.latency_sd_ms = j.value("latency_sd_ms", d.latency_sd_ms);
  m.latency_floor_ms = j.value("latency_floor_ms", d.latency_floor_ms);
  m.latency_mean_log_sd = j.value("latency_mean_log_sd", d.latency_mean_log_sd);
  m.threshold_round_sd = j.value("threshold_round_sd", d.threshold_round_sd);
  if (m.b_E < 0 || m.b_A < 0 || m.b_L < 0 || m.noise_sd < 0 || m.latency_mean_log_sd < 0 ||
      m.threshold_round_sd < 0) {
    throw Error(ErrorCode::ConfigError, "mapping slopes and dispersions must be non-negative");
  }
  if (!(m.never_start_base >= 0.0 && m.never_start_base <= 1.0)) {
    throw Error(ErrorCode::ConfigError, "never_start_base must be a probability");
  }
}

double standardize_big5(double score) { return (score - 4.0) / 3.0; }
double standardize_rotter(double internal_fraction) { return (internal_fraction - 0.5) / 0.5; }

double expected_latent_threshold(const PersonalityProfile& p, const MappingParams& m) {
  return m.a - m.b_E * standardize_big5(p.extraversion) + m.b_A * standardize_big5(p.agreeableness) -
         m.b_L * standardize_rotter(p.rotter_internal);
}

double never_start_probability(const PersonalityProfile& p, const MappingParams& m) {
  if (m.never_start_base <= 0.0) return 0.0;
  if (m.never_start_base >= 1.0) return 1.0;
  const double base_logit = std::log(m.never_start_base / (1.0 - m.never_start_base));
  const double eta = base_logit - m.never_start_slope * standardize_big5(p.extraversion);
  return 1.0 / (1.0 + std::exp(-eta));
}

ThresholdDraw personality_to_threshold(const PersonalityProfile& profile,
                                       const MappingParams& mapping, int max_group_size, Rng& rng) {
  double latent = expected_latent_threshold(profile, mapping);
  if (mapping.noise_sd > 0.0) {
    std::normal_distribution<double> noise(0.0, mapping.noise_sd);
    latent += noise(rng);
  }
  std::bernoulli_distribution never(never_start_probability(profile, mapping));
  ThresholdDraw out;
  out.threshold =
      std::clamp(static_cast<int>(std::lround(latent)), 0, std::max(0, max_group_size - 1));
  out.never_start = never(rng);
  return out;
}

Decision agent_decide(const ThresholdAgent& agent, int observed_count, Millis /*elapsed*/, Rng& rng) {
  if (observed_count < agent.effective_threshold()) return {};
  Decision d;
  d.kind = Decision::Kind::ContributeNow;
  d.amount = agent.contribution_amount;
  d.delay_ms = draw_latency(agent.latency, rng);
  return d;
}

bool draw_abstention(double importance, Rng& rng) {
  std::bernoulli_distribution abstain(std::clamp(1.0 - importance, 0.0, 1.0));
  return abstain(rng);
}

AgentPolicy::AgentPolicy(ThresholdAgent agent, Rng rng, int max_threshold) : agent_(std::move(agent)), rng_(rng) {
  abstains_ = draw_abstention(agent_.importance, rng_);
  if (agent_.threshold_round_sd > 0.0) {
    std::normal_distribution<double> shift(0.0, agent_.threshold_round_sd);
    agent_.threshold = std::max(0, static_cast<int>(std::lround(agent_.threshold + shift(rng_))));
  }
  agent_.threshold = std::min(agent_.threshold, std::max(0, max_threshold));
}

std::optional<ScheduledContribution> AgentPolicy::observe(int observed_count, Millis now_ms) {
  if (abstains_ || committed_) return std::nullopt;
  const Decision d = agent_decide(agent_, observed_count, now_ms, rng_);
  if (d.kind == Decision::Kind::Wait) return std::nullopt;
  committed_ = true;
  return ScheduledContribution{now_ms + d.delay_ms, d.amount};
}

}  // namespace ctlab
