// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "ctlab/analysis.hpp"
#include "ctlab/bot_client.hpp"
#include "ctlab/dynamics.hpp"
#include "ctlab/engine.hpp"
#include "ctlab/metrics.hpp"
#include "ctlab/replay.hpp"
#include "ctlab/server.hpp"
#include "ctlab/simulation.hpp"
#include "ctlab/stats.hpp"
#include "oracles.hpp"

using namespace ctlab;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double limit_s, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > limit_s) {
    v.pass = false;
    v.detail += "; over the " + std::to_string(static_cast<int>(limit_s)) + " s limit";
  }
  if (!v.pass) ++failures;
  std::printf("%s %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// --- payoff ordering ---------------------------------------------------------

/// Settles a real round where "x" gives `c` and the other nine either fund the
/// good or hold back; returns x's payoff.
int settled_payoff(int c, bool funded) {
  RoundConfig cfg;
  cfg.group_size = 10;
  std::vector<SubjectId> members = {"x"};
  for (int i = 1; i < 10; ++i) members.push_back("o" + std::to_string(i));
  auto state = new_round(cfg, members, "R01-G1");
  std::int64_t seq = 1;
  auto act = [&](const SubjectId& s, int amount) {
    GameEvent e;
    e.kind = amount > 0 ? EventKind::Contributed : EventKind::Passed;
    e.subject_id = s;
    if (amount > 0) e.amount = amount;
    e.at_ms = 1000 * seq;
    e.seq = ++seq;
    state = apply(state, e).state;
  };
  act("x", c);
  for (int i = 1; i < 10; ++i) act(members[static_cast<std::size_t>(i)], funded ? 10 : 0);
  const auto out = close_and_settle(state, state.deadline_ms);
  if (out.funded != funded) throw std::runtime_error("funding state not as constructed");
  return out.payoffs.at("x");
}

Verdict payoff_ordering() {
  RoundConfig cfg;
  int cases = 0, agree = 0;
  std::map<std::pair<int, bool>, int> p;
  for (int c = 0; c <= cfg.endowment; ++c) {
    for (bool funded : {true, false}) {
      p[{c, funded}] = settled_payoff(c, funded);
      ++cases;
      agree += p[{c, funded}] == payoff(cfg, c, funded);
    }
  }
  const int best = p.at({0, true}), worst = p.at({10, false});
  int best_strict = 0, worst_strict = 0;
  for (const auto& [k, v] : p) {
    if (k != std::pair{0, true}) best_strict += best > v;
    if (k != std::pair{10, false}) worst_strict += worst < v;
  }
  const bool free_ride_best = best_strict == cases - 1;
  const bool all_in_unfunded_worst = worst_strict == cases - 1;
  const bool all_in_funded_beats_nothing_unfunded = p.at({10, true}) > p.at({0, false});
  const bool chain = p.at({0, true}) > p.at({10, true}) && p.at({10, true}) > p.at({0, false}) &&
                     p.at({0, false}) > p.at({10, false});
  return {cases == 22 && agree == 22 && free_ride_best && all_in_unfunded_worst && all_in_funded_beats_nothing_unfunded && chain,
          fmt("%d cases; free-ride+funded best %d/21, all-in+unfunded worst %d/21, %d>%d, engine==payoff() %d/22", cases,
              best_strict, worst_strict, p.at({10, true}), p.at({0, false}), agree)};
}

// --- determinism / replay ----------------------------------------------------

Verdict determinism_replay() {
  int ok = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    ExperimentPlan plan;
    plan.seed = seed;
    const auto a = run_experiment(plan, generate_population(plan));
    const auto b = run_experiment(plan, generate_population(plan));
    const auto live = outcomes_to_jsonl(a.outcomes);
    const auto log_text = events_to_jsonl(a.events);
    const auto rep = replay(parse_event_log(log_text));
    ok += log_text == events_to_jsonl(b.events) && live == outcomes_to_jsonl(b.outcomes) &&
          outcomes_to_jsonl(rep.outcomes) == live && rep.voided.empty();
  }
  return {ok == 50, fmt("%d/50 sessions rerun and replayed byte-identically", ok)};
}

// --- cascade -----------------------------------------------------------------

Verdict cascade_oracle() {
  std::mt19937_64 rng(2024);
  int match = 0;
  for (int k = 0; k < 1000; ++k) {
    const int n = std::uniform_int_distribution<int>(1, 12)(rng);
    std::vector<int> t(static_cast<std::size_t>(n));
    for (auto& v : t) v = std::uniform_int_distribution<int>(0, n)(rng);
    match += cascade(t).final_count == oracle::scan_fixed_point(t);
  }
  std::vector<int> uniform(100);
  std::iota(uniform.begin(), uniform.end(), 0);
  const int all = cascade(uniform).final_count;
  uniform[1] = 2;
  const int one = cascade(uniform).final_count;
  return {match == 1000 && all == 100 && one == 1,
          fmt("%d/1000 vectors match the scan; 0..99 -> %d, raised -> %d", match, all, one)};
}

// --- tobit -------------------------------------------------------------------

stats::DesignMatrix one_covariate(const std::vector<double>& x) {
  return stats::DesignMatrix::from_columns({{"x", x}}, true);
}

Verdict tobit_correctness() {
  // (a) no effective censoring
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  const int n = 300;
  std::vector<double> x1(n), x2(n);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x1[i] = n01(rng);
    x2[i] = n01(rng);
    y(i) = 1.0 + 0.5 * x1[i] - 0.3 * x2[i] + n01(rng);
  }
  const auto x = stats::DesignMatrix::from_columns({{"a", x1}, {"b", x2}}, true);
  const auto fit = stats::tobit_fit(x, y, -1e6, 1e6);
  const auto ols = oracle::ols(x.values, y);
  const double ols_gap = std::max((fit.coefficients - ols.beta).cwiseAbs().maxCoeff(), std::abs(*fit.sigma - ols.sigma_mle));
  const bool a_ok = ols_gap < 1e-6;

  // (b) grid oracle
  const auto inst = oracle::small_tobit_instance(7);
  const auto sf = stats::tobit_fit(one_covariate(inst.x), inst.y, inst.lower, inst.upper);
  const double at_fit = oracle::tobit_loglik(inst.x, inst.y, inst.lower, inst.upper, sf.coefficient("Intercept"),
                                             sf.coefficient("x"), *sf.sigma);
  const double grid = oracle::tobit_grid_max(inst, sf.coefficient("Intercept"), sf.coefficient("x"), *sf.sigma);
  const bool b_ok = at_fit >= grid - 1e-9 && std::abs(at_fit - sf.loglik) < 1e-8;

  // (c) recovery
  int recovered = 0;
  double worst_grad = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto data = oracle::censored_sample(seed, 2000, 2.0, -1.0, 1.0, 0.0, 10.0);
    const auto dm = one_covariate(data.x);
    const auto f = stats::tobit_fit(dm, data.y, 0.0, 10.0);
    recovered += std::abs(f.coefficient("Intercept") - 2.0) < 3 * f.standard_error("Intercept") &&
                 std::abs(f.coefficient("x") + 1.0) < 3 * f.standard_error("x");
    if (seed <= 10) {
      Eigen::VectorXd theta(3);
      theta << f.coefficients(0) + 0.1, f.coefficients(1) - 0.2, *f.sigma * 1.1;
      const Eigen::VectorXd g = stats::tobit_gradient(dm.values, data.y, 0.0, 10.0, theta.head(2), theta(2));
      const Eigen::VectorXd fd = oracle::central_difference(
          [&](const Eigen::VectorXd& t) { return stats::tobit_loglik(dm.values, data.y, 0.0, 10.0, t.head(2), t(2)); },
          theta);
      worst_grad = std::max(worst_grad, oracle::relative_error(g, fd));
    }
  }
  const bool c_ok = recovered >= 95;
  const bool g_ok = worst_grad < 1e-5;
  return {a_ok && b_ok && c_ok && g_ok,
          fmt("OLS gap %.1e; grid %s (fit %.6f, grid %.6f); recovery %d/100; gradient rel err %.1e", ols_gap,
              b_ok ? "ok" : "beaten", at_fit, grid, recovered, worst_grad)};
}

// --- simulated hypotheses ----------------------------------------------------

struct SeedRun {
  std::vector<SubjectRow> rows;
  std::vector<RoundRow> rounds;
};

SeedRun simulate(std::uint64_t seed, bool blind) {
  ExperimentPlan plan;
  plan.seed = seed;
  if (blind) plan.mapping = plan.mapping.personality_blind();
  const auto pop = generate_population(plan);
  const auto res = run_experiment(plan, pop);
  const auto subjects = subjects_by_id(pop);
  return {subject_rows(res.records, subjects), round_rows(res.records, subjects)};
}

Verdict h1() {
  int skew = 0, order = 0, both = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto run = simulate(seed, false);
    const bool s = propensity_shape(run.rows).g1 > 1.0;
    std::vector<ThresholdMeasures> m;
    for (const auto& r : run.rows) m.push_back(r.measures);
    const auto ct = consistency_table(m);
    const bool o = ct.low.mean_sd && ct.mid.mean_sd && ct.high.mean_sd && *ct.mid.mean_sd > *ct.low.mean_sd &&
                   *ct.mid.mean_sd > *ct.high.mean_sd;
    skew += s;
    order += o;
    both += s && o;
  }
  return {both >= 90, fmt("g1 > 1 in %d/100, mid sd_rank above low and high in %d/100, both in %d/100", skew, order, both)};
}

Verdict h2() {
  int e = 0, a = 0, l = 0, all = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto run = simulate(seed, false);
    const auto traits = fit_table2b(run.rows).columns.at(0).fit;
    const auto locus = fit_table2a(run.rows).columns.at(0).fit;
    const bool ei = traits.coefficient("Extravert") < 0 && traits.p_value("Extravert") < 0.05;
    const bool ai = traits.coefficient("Agreeable") > 0 && traits.p_value("Agreeable") < 0.05;
    const bool li = locus.coefficient("Rotter") < 0 && locus.p_value("Rotter") < 0.05;
    e += ei;
    a += ai;
    l += li;
    all += ei && ai && li;
  }
  return {all >= 90,
          fmt("Extravert<0 %d/100, Agreeable>0 %d/100, Rotter<0 %d/100 (all three %d/100)", e, a, l, all)};
}

Verdict h3() {
  int hits = 0, fp = 0, min_rounds = 1 << 30;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto run = simulate(seed, false);
    min_rounds = std::min(min_rounds, static_cast<int>(run.rounds.size()));
    const auto f = fit_table3(run.rounds).columns.at(1).fit;
    hits += f.coefficient("MinExtravert") > 0 && f.p_value("MinExtravert") < 0.05;
    const auto null_run = simulate(seed, true);
    fp += fit_table3(null_run.rounds).columns.at(1).fit.p_value("MinExtravert") < 0.05;
  }
  return {hits >= 90 && fp <= 10 && min_rounds >= 200,
          fmt("MinExtravert>0 at p<.05 in %d/100 (>= %d rounds each); blind control significant in %d/100", hits,
              min_rounds, fp)};
}

// --- metrics oracle ----------------------------------------------------------

Verdict metrics_oracle() {
  int sessions = 0, subjects = 0, equal = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ExperimentPlan plan;
    plan.seed = 500 + seed;
    const auto res = run_experiment(plan, generate_population(plan));
    const auto got = compute_all_measures(res.records);
    const auto want = oracle::measures_from_events(res.events);
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      ++subjects;
      if (oracle::same_measures(got[i], want[i])) {
        ++equal;
      } else {
        same = false;
      }
    }
    sessions += same;
  }
  return {sessions == 20, fmt("%d/20 sessions identical (%d/%d subjects)", sessions, equal, subjects)};
}

// --- server soak -------------------------------------------------------------

Verdict server_soak() {
  ExperimentPlan plan;
  plan.n_subjects = 100;
  plan.n_rounds = 10;
  plan.min_rounds_per_subject = 5;
  plan.max_rounds_per_subject = 10;
  plan.seed = 77;
  const auto dir = std::filesystem::temp_directory_path() / ("ctlab-soak-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);

  ServeOptions opts;
  opts.address = "127.0.0.1";
  opts.port = 0;
  opts.data_dir = dir.string();
  opts.threads = 2;
  Server server(opts);
  server.start();
  const auto created = server.create_session(Json{{"plan", plan}, {"clock", "lockstep"}, {"server_bots", 0}});
  const std::string id = created.at("session_id");
  const auto population = generate_population(plan);

  std::vector<BotClientReport> reports(100);
  std::vector<std::thread> bots;
  int i = 0;
  for (const auto& [subject, token] : created.at("tokens").items()) {
    BotClientConfig cfg;
    cfg.port = server.port();
    cfg.token = token.get<std::string>();
    cfg.population = &population;
    cfg.seed = plan.seed;
    bots.emplace_back([cfg, &out = reports[static_cast<std::size_t>(i++)]] { out = run_bot_client(cfg); });
  }
  for (auto& t : bots) t.join();

  const auto live = http_call("127.0.0.1", server.port(), "GET", "/sessions/" + id + "/outcomes");
  const auto status = Json::parse(http_call("127.0.0.1", server.port(), "GET", "/sessions/" + id).body);
  server.stop();
  std::filesystem::remove_all(dir);

  int monotone = 0, ordered = 0, clean = 0, paid = 0;
  for (const auto& r : reports) {
    monotone += r.social_info_monotone;
    ordered += r.seq_in_order;
    clean += r.errors.empty();
    paid += r.selected_round.has_value();
  }
  const auto sim = run_experiment(plan, population);
  const bool same = live.status == 200 && live.body == outcomes_to_jsonl(sim.outcomes);
  std::set<std::string> round_ids;
  for (const auto& o : sim.outcomes) round_ids.insert(o.round_id.substr(0, o.round_id.find('-')));
  const int rounds = static_cast<int>(round_ids.size());
  const bool done = status.at("phase") == "Done" &&
                    status.at("groups_settled").get<std::size_t>() == sim.outcomes.size();
  return {i == 100 && monotone == 100 && ordered == 100 && clean == 100 && paid == 100 && same && done && rounds == 10,
          fmt("%d clients, %d rounds (%zu group rounds, session %s); monotone %d, in order %d, error-free %d, paid %d; "
              "outcomes %s",
              i, rounds, sim.outcomes.size(), done ? "done" : "not done", monotone, ordered, clean, paid,
              same ? "equal the simulation" : "differ from the simulation")};
}

}  // namespace

int main() {
  criterion("payoff ordering", 1, payoff_ordering);
  criterion("determinism and replay", 30, determinism_replay);
  criterion("cascade oracle", 10, cascade_oracle);
  criterion("tobit correctness", 120, tobit_correctness);
  criterion("H1 propensity skew and mid-rank inconsistency", 300, h1);
  criterion("H2 trait signs on mean rank", 300, h2);
  criterion("H3 min extraversion predicts funding", 300, h3);
  criterion("metrics oracle", 30, metrics_oracle);
  criterion("server soak", 120, server_soak);
  return failures == 0 ? 0 : 1;
}
