#include "ctlab/questionnaires.hpp"

#include <algorithm>
#include <cmath>

namespace ctlab {

namespace {

std::string_view trait_name(Big5Trait t) {
  switch (t) {
    case Big5Trait::Extraversion: return "extraversion";
    case Big5Trait::Agreeableness: return "agreeableness";
    case Big5Trait::Conscientiousness: return "conscientiousness";
    case Big5Trait::EmotionalStability: return "emotional_stability";
    case Big5Trait::Openness: return "openness";
  }
  return "extraversion";
}

Big5Trait trait_from_name(std::string_view s) {
  for (auto t : {Big5Trait::Extraversion, Big5Trait::Agreeableness, Big5Trait::Conscientiousness,
                 Big5Trait::EmotionalStability, Big5Trait::Openness}) {
    if (trait_name(t) == s) return t;
  }
  throw Error(ErrorCode::SchemaError, "unknown trait '" + std::string(s) + "'");
}

char svo_letter(SvoChoice c) {
  switch (c) {
    case SvoChoice::Prosocial: return 'P';
    case SvoChoice::Individualistic: return 'I';
    case SvoChoice::Competitive: return 'C';
  }
  return 'P';
}

SvoChoice svo_from_letter(std::string_view s) {
  if (s == "P") return SvoChoice::Prosocial;
  if (s == "I") return SvoChoice::Individualistic;
  if (s == "C") return SvoChoice::Competitive;
  throw Error(ErrorCode::InvalidResponse, "svo choice must be P, I or C");
}

InstrumentSet build_default() {
  using T = Big5Trait;
  InstrumentSet set;
  set.tipi = {
      {"Extraverted, enthusiastic.", T::Extraversion, false},
      {"Critical, quarrelsome.", T::Agreeableness, true},
      {"Dependable, self-disciplined.", T::Conscientiousness, false},
      {"Anxious, easily upset.", T::EmotionalStability, true},
      {"Open to new experiences, complex.", T::Openness, false},
      {"Reserved, quiet.", T::Extraversion, true},
      {"Sympathetic, warm.", T::Agreeableness, false},
      {"Disorganized, careless.", T::Conscientiousness, true},
      {"Calm, emotionally stable.", T::EmotionalStability, false},
      {"Conventional, uncreative.", T::Openness, true},
  };
  set.rotter = {
      {"Much of what happens to me is a matter of luck.",
       "What happens to me is mostly my own doing.", 1},
      {"Getting ahead depends on hard work; luck has little to do with it.",
       "Getting a good job depends mainly on being in the right place at the right time.", 0},
      {"Ordinary people can influence decisions made by those in power.",
       "The world is run by a few powerful people and there is little we can do about it.", 0},
      {"When I make plans, I am almost certain I can make them work.",
       "It is not wise to plan too far ahead because things turn out to be a matter of fortune.", 0},
      {"Many times I feel I have little influence over the things that happen to me.",
       "I can generally shape the course my life takes.", 1},
      {"People are lonely because they do not try to be friendly.",
       "There is not much use in trying to please people; if they like you, they like you.", 0},
      {"Whether people vote or not makes little difference to what government does.",
       "By taking an active part in public affairs, people can change what government does.", 1},
      {"Being a success is a matter of hard work.",
       "Success is mostly a matter of getting the right breaks.", 0},
      {"Most misfortunes result from lack of ability, ignorance or laziness.",
       "Most misfortunes are the result of bad luck.", 0},
      {"Who gets to be in charge often depends on who was lucky enough to be there first.",
       "Getting people to do the right thing depends on ability; luck has little to do with it.", 1},
  };
  using C = SvoChoice;
  auto item = [](SvoOption a, SvoOption b, SvoOption c) { return SvoItem{{a, b, c}}; };
  set.svo = {
      item({480, 80, C::Competitive}, {540, 280, C::Individualistic}, {480, 480, C::Prosocial}),
      item({560, 300, C::Individualistic}, {500, 500, C::Prosocial}, {500, 100, C::Competitive}),
      item({520, 520, C::Prosocial}, {520, 120, C::Competitive}, {580, 320, C::Individualistic}),
      item({500, 100, C::Competitive}, {560, 300, C::Individualistic}, {490, 490, C::Prosocial}),
      item({560, 300, C::Individualistic}, {500, 500, C::Prosocial}, {490, 90, C::Competitive}),
      item({500, 500, C::Prosocial}, {500, 100, C::Competitive}, {570, 300, C::Individualistic}),
      item({510, 510, C::Prosocial}, {560, 300, C::Individualistic}, {510, 110, C::Competitive}),
      item({550, 300, C::Individualistic}, {500, 100, C::Competitive}, {500, 500, C::Prosocial}),
      item({480, 100, C::Competitive}, {490, 490, C::Prosocial}, {540, 300, C::Individualistic}),
  };
  return set;
}

}  // namespace

const InstrumentSet& default_instruments() {
  static const InstrumentSet set = build_default();
  return set;
}

Json instruments_to_json(const InstrumentSet& set) {
  Json tipi = Json::array();
  for (const auto& it : set.tipi) {
    tipi.push_back(Json{{"text", it.text}, {"trait", std::string(trait_name(it.trait))},
                        {"reverse", it.reverse}});
  }
  Json rotter = Json::array();
  for (const auto& it : set.rotter) {
    rotter.push_back(Json{{"a", it.option_a}, {"b", it.option_b},
                          {"internal", it.internal_option == 0 ? "a" : "b"}});
  }
  Json svo = Json::array();
  for (const auto& it : set.svo) {
    Json options = Json::array();
    for (const auto& o : it.options) {
      options.push_back(Json{{"self", o.self}, {"other", o.other},
                             {"orientation", std::string(1, svo_letter(o.orientation))}});
    }
    svo.push_back(Json{{"options", options}});
  }
  return Json{{"tipi", {{"scale", {1, 7}}, {"items", tipi}}},
              {"rotter", {{"items", rotter}}},
              {"svo", {{"items", svo}}},
              {"importance", {{"scale", {1, 5}}}}};
}

InstrumentSet load_instruments(const Json& j) {
  InstrumentSet set;
  try {
    for (const auto& it : j.at("tipi").at("items")) {
      set.tipi.push_back({it.at("text").get<std::string>(),
                          trait_from_name(it.at("trait").get<std::string>()),
                          it.at("reverse").get<bool>()});
    }
    for (const auto& it : j.at("rotter").at("items")) {
      const auto side = it.at("internal").get<std::string>();
      if (side != "a" && side != "b") throw Error(ErrorCode::SchemaError, "internal must be a|b");
      set.rotter.push_back({it.at("a").get<std::string>(), it.at("b").get<std::string>(),
                            side == "a" ? 0 : 1});
    }
    for (const auto& it : j.at("svo").at("items")) {
      const auto& opts = it.at("options");
      if (opts.size() != 3) throw Error(ErrorCode::SchemaError, "svo items need 3 options");
      SvoItem item;
      for (std::size_t k = 0; k < 3; ++k) {
        item.options[k] = {opts[k].at("self").get<int>(), opts[k].at("other").get<int>(),
                           svo_from_letter(opts[k].at("orientation").get<std::string>())};
      }
      set.svo.push_back(item);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::SchemaError, std::string("instrument file: ") + ex.what());
  }
  if (set.tipi.size() != 10) throw Error(ErrorCode::SchemaError, "tipi needs 10 items");
  if (set.svo.size() != 9) throw Error(ErrorCode::SchemaError, "svo needs 9 items");
  for (auto t : {Big5Trait::Extraversion, Big5Trait::Agreeableness, Big5Trait::Conscientiousness,
                 Big5Trait::EmotionalStability, Big5Trait::Openness}) {
    const auto n = std::count_if(set.tipi.begin(), set.tipi.end(),
                                 [t](const TipiKeyItem& i) { return i.trait == t; });
    if (n != 2) throw Error(ErrorCode::SchemaError, "each trait needs exactly two tipi items");
  }
  return set;
}

Big5Scores score_tipi(const TipiResponse& r, const InstrumentSet& key) {
  std::array<double, 5> sums{};
  std::array<int, 5> counts{};
  for (std::size_t i = 0; i < r.items.size(); ++i) {
    const int raw = r.items[i];
    if (raw < 1 || raw > 7) throw Error(ErrorCode::InvalidResponse, "tipi item outside 1..7");
    const auto& k = key.tipi.at(i);
    const auto t = static_cast<std::size_t>(k.trait);
    sums[t] += k.reverse ? 8 - raw : raw;
    ++counts[t];
  }
  auto mean = [&](Big5Trait t) {
    const auto i = static_cast<std::size_t>(t);
    return sums[i] / counts[i];
  };
  return {mean(Big5Trait::Extraversion), mean(Big5Trait::Agreeableness),
          mean(Big5Trait::Conscientiousness), mean(Big5Trait::EmotionalStability),
          mean(Big5Trait::Openness)};
}

double score_rotter(const RotterResponse& r, const InstrumentSet& key) {
  if (r.choices.size() != key.rotter.size()) {
    throw Error(ErrorCode::InvalidResponse, "expected " + std::to_string(key.rotter.size()) +
                                                " rotter choices, got " +
                                                std::to_string(r.choices.size()));
  }
  int internal = 0;
  for (std::size_t i = 0; i < r.choices.size(); ++i) {
    if (r.choices[i] != 0 && r.choices[i] != 1) {
      throw Error(ErrorCode::InvalidResponse, "rotter choice must be 0 or 1");
    }
    internal += r.choices[i] == key.rotter[i].internal_option;
  }
  return static_cast<double>(internal) / static_cast<double>(r.choices.size());
}

Svo classify_svo(const SvoResponse& r) {
  int p = 0, ind = 0, comp = 0;
  for (auto c : r.choices) {
    p += c == SvoChoice::Prosocial;
    ind += c == SvoChoice::Individualistic;
    comp += c == SvoChoice::Competitive;
  }
  if (p >= 6) return Svo::ProSocial;
  if (ind >= 6 || comp >= 6) return Svo::ProSelf;
  // Mixed self-regarding choices count only when one motive clearly leads.
  if (ind + comp >= 6 && ind != comp) return Svo::ProSelf;
  return Svo::Unclassified;
}

SvoResponse svo_response_from_options(const std::vector<int>& option_indices,
                                      const InstrumentSet& key) {
  if (option_indices.size() != 9 || key.svo.size() != 9) {
    throw Error(ErrorCode::InvalidResponse, "svo needs 9 answers");
  }
  SvoResponse r;
  for (std::size_t i = 0; i < 9; ++i) {
    const int k = option_indices[i];
    if (k < 0 || k > 2) throw Error(ErrorCode::InvalidResponse, "svo option must be 0..2");
    r.choices[i] = key.svo[i].options[static_cast<std::size_t>(k)].orientation;
  }
  return r;
}

void apply_questionnaire_answer(std::string_view instrument, const Json& payload,
                                PersonalityProfile& profile, const InstrumentSet& key) {
  try {
    if (instrument == "tipi") {
      const auto items = payload.at("items").get<std::vector<int>>();
      if (items.size() != 10) throw Error(ErrorCode::InvalidResponse, "tipi needs 10 items");
      TipiResponse r;
      std::copy(items.begin(), items.end(), r.items.begin());
      const auto s = score_tipi(r, key);
      profile.extraversion = s.extraversion;
      profile.agreeableness = s.agreeableness;
      profile.conscientiousness = s.conscientiousness;
      profile.emotional_stability = s.emotional_stability;
      profile.openness = s.openness;
    } else if (instrument == "rotter") {
      profile.rotter_internal =
          score_rotter(RotterResponse{payload.at("choices").get<std::vector<int>>()}, key);
    } else if (instrument == "svo") {
      SvoResponse r;
      if (payload.contains("options")) {
        r = svo_response_from_options(payload.at("options").get<std::vector<int>>(), key);
      } else {
        const auto letters = payload.at("choices").get<std::vector<std::string>>();
        if (letters.size() != 9) throw Error(ErrorCode::InvalidResponse, "svo needs 9 answers");
        for (std::size_t i = 0; i < 9; ++i) r.choices[i] = svo_from_letter(letters[i]);
      }
      profile.svo = classify_svo(r);
    } else {
      throw Error(ErrorCode::InvalidResponse, "unknown instrument '" + std::string(instrument) + "'");
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::InvalidResponse, ex.what());
  }
}

Json synthetic_answer(std::string_view instrument, const PersonalityProfile& profile, const InstrumentSet& key) {
  if (instrument == "tipi") {
    auto score_of = [&](Big5Trait t) {
      switch (t) {
        case Big5Trait::Extraversion: return profile.extraversion;
        case Big5Trait::Agreeableness: return profile.agreeableness;
        case Big5Trait::Conscientiousness: return profile.conscientiousness;
        case Big5Trait::EmotionalStability: return profile.emotional_stability;
        case Big5Trait::Openness: return profile.openness;
      }
      return 4.0;
    };
    std::vector<int> items(key.tipi.size());
    for (auto t : {Big5Trait::Extraversion, Big5Trait::Agreeableness, Big5Trait::Conscientiousness,
                   Big5Trait::EmotionalStability, Big5Trait::Openness}) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < key.tipi.size(); ++i) {
        if (key.tipi[i].trait == t) idx.push_back(i);
      }
      if (idx.empty()) continue;
      const int k = static_cast<int>(idx.size());
      const int total = std::clamp(static_cast<int>(std::lround(score_of(t) * k)), k, 7 * k);
      for (int j = 0; j < k; ++j) {
        const int keyed = total / k + (j < total % k ? 1 : 0);
        const auto i = idx[static_cast<std::size_t>(j)];
        items[i] = key.tipi[i].reverse ? 8 - keyed : keyed;
      }
    }
    return Json{{"items", items}};
  }
  if (instrument == "rotter") {
    const auto n = key.rotter.size();
    const auto internal = static_cast<std::size_t>(std::lround(profile.rotter_internal * static_cast<double>(n)));
    std::vector<int> choices(n);
    for (std::size_t i = 0; i < n; ++i) {
      choices[i] = i < internal ? key.rotter[i].internal_option : 1 - key.rotter[i].internal_option;
    }
    return Json{{"choices", choices}};
  }
  if (instrument == "svo") {
    std::vector<int> options;
    for (std::size_t i = 0; i < key.svo.size(); ++i) {
      SvoChoice want = SvoChoice::Prosocial;
      if (profile.svo == Svo::ProSelf) want = SvoChoice::Individualistic;
      if (profile.svo == Svo::Unclassified) {
        want = std::array{SvoChoice::Prosocial, SvoChoice::Individualistic, SvoChoice::Competitive}[i % 3];
      }
      const auto& opts = key.svo[i].options;
      const auto it = std::find_if(opts.begin(), opts.end(), [&](const SvoOption& o) { return o.orientation == want; });
      options.push_back(static_cast<int>(it - opts.begin()));
    }
    return Json{{"options", options}};
  }
  throw Error(ErrorCode::InvalidResponse, "unknown instrument '" + std::string(instrument) + "'");
}

}  // namespace ctlab
