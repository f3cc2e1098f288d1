#pragma once

#include <array>
#include <string>
#include <vector>

#include "ctlab/core.hpp"

namespace ctlab {

enum class Big5Trait { Extraversion, Agreeableness, Conscientiousness, EmotionalStability, Openness };

struct TipiKeyItem {
  std::string text;
  Big5Trait trait = Big5Trait::Extraversion;
  bool reverse = false;
};

struct RotterItem {
  std::string option_a;
  std::string option_b;
  int internal_option = 0;  // 0 = a, 1 = b
};

enum class SvoChoice { Prosocial, Individualistic, Competitive };

struct SvoOption {
  int self = 0;
  int other = 0;
  SvoChoice orientation = SvoChoice::Prosocial;
};

struct SvoItem {
  std::array<SvoOption, 3> options;
};

/// Item text and scoring key for all three instruments. The server hands the
/// same document to clients, so rendering and scoring share one source.
struct InstrumentSet {
  std::vector<TipiKeyItem> tipi;
  std::vector<RotterItem> rotter;
  std::vector<SvoItem> svo;
};

const InstrumentSet& default_instruments();
InstrumentSet load_instruments(const Json& j);
Json instruments_to_json(const InstrumentSet& set);

struct TipiResponse {
  std::array<int, 10> items{};
};

struct RotterResponse {
  std::vector<int> choices;  // chosen option per item, 0 = a, 1 = b
};

struct SvoResponse {
  std::array<SvoChoice, 9> choices{};
};

struct Big5Scores {
  double extraversion = 4.0;
  double agreeableness = 4.0;
  double conscientiousness = 4.0;
  double emotional_stability = 4.0;
  double openness = 4.0;

  bool operator==(const Big5Scores&) const = default;
};

/// Each trait is the mean of its two items, reverse-keyed items scored 8 - raw.
Big5Scores score_tipi(const TipiResponse& r, const InstrumentSet& key = default_instruments());

/// Fraction of internal-keyed choices.
double score_rotter(const RotterResponse& r, const InstrumentSet& key = default_instruments());

/// Triple-dominance rule: 6 of 9 consistent choices.
Svo classify_svo(const SvoResponse& r);

/// Maps chosen option indices (0..2) onto orientations using the key.
SvoResponse svo_response_from_options(const std::vector<int>& option_indices,
                                      const InstrumentSet& key = default_instruments());

/// Parses and scores a QuestionnaireAnswer payload for one instrument, writing
/// the result into `profile`.
void apply_questionnaire_answer(std::string_view instrument, const Json& payload,
                                PersonalityProfile& profile,
                                const InstrumentSet& key = default_instruments());

/// A payload that scores back to `profile` (traits to the nearest half point,
/// Rotter to the nearest item). Used by bot clients.
Json synthetic_answer(std::string_view instrument, const PersonalityProfile& profile,
                      const InstrumentSet& key = default_instruments());

}  // namespace ctlab
