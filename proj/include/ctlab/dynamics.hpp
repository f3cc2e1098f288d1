#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ctlab/core.hpp"

namespace ctlab {

using Rng = std::mt19937_64;

/// Independent, reproducible stream for one (seed, label...) combination.
Rng make_rng(std::uint64_t seed, std::initializer_list<std::string_view> labels);

struct LatencyLaw {
  double mean_ms = 3000.0;
  double sd_ms = 2000.0;
  double floor_ms = 250.0;

  bool operator==(const LatencyLaw&) const = default;
};

/// Draws a reaction delay from a normal truncated below at the floor.
Millis draw_latency(const LatencyLaw& law, Rng& rng);

struct ThresholdAgent {
  SubjectId subject_id;
  int threshold = 0;
  bool never_start = false;
  LatencyLaw latency;
  int contribution_amount = 10;
  double importance = 1.0;
  /// Sd of the per-round shift around `threshold` (0: the same every round).
  double threshold_round_sd = 0.0;

  /// Observed contributors required before this agent will join.
  int effective_threshold() const { return never_start ? std::max(threshold, 1) : threshold; }

  bool operator==(const ThresholdAgent&) const = default;
};

void to_json(Json& j, const ThresholdAgent& a);
void from_json(const Json& j, ThresholdAgent& a);

// --- Granovetter cascade ---------------------------------------------------

struct CascadeResult {
  int final_count = 0;
  std::vector<int> trajectory;  // r0, r1, ..., fixed point
};

/// Iterates r -> |{i : t_i <= r}| from r0 = |{i : t_i = 0}| to its fixed point.
CascadeResult cascade(std::span<const int> thresholds);

// --- Schelling participation curve -----------------------------------------

struct ParticipationCurve {
  std::function<double(double)> joining;  // x in [0,1] -> fraction joining
  int population = 0;

  /// Empirical curve of a threshold population: F(x) = |{t_i <= x N}| / N.
  static ParticipationCurve from_thresholds(std::span<const int> thresholds);

  /// Joining count when `expected` members are expected to participate.
  int joining_count(int expected) const;
};

enum class Stability { Stable, Unstable };

struct Equilibrium {
  double x = 0.0;
  Stability stability = Stability::Stable;
  double slope = 0.0;
};

struct EquilibriumSet {
  /// True when F(x) = x along the whole grid (no isolated fixed points).
  bool degenerate_continuum = false;
  std::vector<Equilibrium> points;
};

/// Fixed points of F(x) = x, bracketed on a grid and refined by bisection.
EquilibriumSet equilibria(const ParticipationCurve& curve, int grid_resolution = 1000);

// --- Personality -> threshold ----------------------------------------------

struct MappingParams {
  double a = 0.04;
  double b_E = 13.5;
  double b_A = 4.5;
  double b_L = 5.5;
  double noise_sd = 0.34;
  double never_start_base = 0.034;
  /// Log-odds decrease of the never-start probability per unit z(extraversion).
  double never_start_slope = 4.26;
  double latency_mean_ms = 3000.0;
  double latency_sd_ms = 2000.0;
  double latency_floor_ms = 250.0;
  /// Each agent's own mean latency is latency_mean_ms times a mean-one
  /// lognormal factor with this log-scale sd; the within-agent sd stays
  /// latency_sd_ms.
  double latency_mean_log_sd = 0.94;
  /// Each round the agent acts on round(threshold + N(0, sd)), kept within
  /// 0..group size - 1.
  double threshold_round_sd = 1.96;

  /// Same latency law and base rates, with every personality effect removed.
  MappingParams personality_blind() const;

  bool operator==(const MappingParams&) const = default;
};

void to_json(Json& j, const MappingParams& m);
void from_json(const Json& j, MappingParams& m);

/// Centres a 1..7 instrument score on its midpoint and scales to [-1, 1].
double standardize_big5(double score);
/// Same for the [0,1] locus-of-control score.
double standardize_rotter(double internal_fraction);

struct ThresholdDraw {
  int threshold = 0;
  bool never_start = false;
};

/// Mean of the latent threshold before rounding, clamping and noise.
double expected_latent_threshold(const PersonalityProfile& profile, const MappingParams& mapping);
double never_start_probability(const PersonalityProfile& profile, const MappingParams& mapping);

ThresholdDraw personality_to_threshold(const PersonalityProfile& profile,
                                       const MappingParams& mapping, int max_group_size, Rng& rng);

// --- Agent decisions -------------------------------------------------------

struct Decision {
  enum class Kind { ContributeNow, Wait };
  Kind kind = Kind::Wait;
  int amount = 0;
  Millis delay_ms = 0;
};

/// Threshold rule: contribute (after a latency draw) once enough others have.
Decision agent_decide(const ThresholdAgent& agent, int observed_count, Millis elapsed, Rng& rng);

/// Per-round abstention gate: true with probability 1 - importance.
bool draw_abstention(double importance, Rng& rng);

struct ScheduledContribution {
  Millis at_ms = 0;
  int amount = 0;
};

/// One agent's behaviour over one round: the abstention gate is drawn at
/// construction and the agent commits to at most one contribution.
class AgentPolicy {
 public:
  /// `max_threshold` caps the round's shifted threshold (group size - 1).
  AgentPolicy(ThresholdAgent agent, Rng rng, int max_threshold = std::numeric_limits<int>::max());

  bool abstains() const { return abstains_; }
  bool committed() const { return committed_; }
  /// The agent as it plays this round (threshold already shifted).
  const ThresholdAgent& agent() const { return agent_; }

  /// Called whenever the agent's view changes. Returns the contribution the
  /// agent commits to, the first time its threshold is met.
  std::optional<ScheduledContribution> observe(int observed_count, Millis now_ms);

 private:
  ThresholdAgent agent_;
  Rng rng_;
  bool abstains_ = false;
  bool committed_ = false;
};

}  // namespace ctlab
