#pragma once

// Batch experiment driver: configuration, Monte Carlo harness, attack
// demonstrations and JSON-lines reports. Reports contain no timestamps or
// host data, so identical (config, seed) gives byte-identical output.

#include <boost/math/special_functions/gamma.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "direx/amplify.hpp"
#include "direx/bits.hpp"
#include "direx/devices.hpp"
#include "direx/error.hpp"
#include "direx/nonlocal_test.hpp"
#include "direx/protocol.hpp"
#include "direx/quantum.hpp"

namespace direx {

inline constexpr const char* kVersion = "0.1.0";

inline nlohmann::ordered_json module_versions() {
  nlohmann::ordered_json v;
  for (const char* m : {"bits", "quantum", "tests", "devices", "protocol", "amplify", "cli"}) v[m] = kVersion;
  return v;
}

struct ExperimentConfig {
  std::string strategy = "honest";  // honest | classical | abort-leak | nlbox
  std::size_t k = 1;
  std::size_t input_bits = 300;
  double zeta = 0.01;
  double delta = 0.001;
  double epsilon = 0.0;
  std::string gamma = "heuristic";  // heuristic | zero | <integer>
  std::string mode = "abort";       // abort | tally
  bool include_x1 = true;
  bool trusted = false;
  std::size_t trials = 1;
  std::uint64_t seed = 1;
  std::size_t stages = 2;
  std::string targeted_rounds = "0";  // comma separated, abort-leak only
  std::string leak_mode = "only-all-p";  // only-all-p | except-all-p
  std::size_t threads = 0;  // 0: hardware concurrency
};

struct ConfigIssue {
  std::string field;
  std::string message;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues)
      : Error(ErrorCode::ConfigError, summarize(issues)), issues_(std::move(issues)) {}
  const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

 private:
  static std::string summarize(const std::vector<ConfigIssue>& issues) {
    std::string s;
    for (const auto& i : issues) s += (s.empty() ? "" : "; ") + i.field + ": " + i.message;
    return s;
  }
  std::vector<ConfigIssue> issues_;
};

namespace detail {

inline bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1") return out = true, true;
  if (v == "false" || v == "0") return out = false, true;
  return false;
}

template <class T>
bool parse_number(const std::string& v, T& out) {
  std::istringstream is(v);
  T tmp{};
  is >> tmp;
  if (!is || !is.eof()) return false;
  out = tmp;
  return true;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Sets one field by name; field names use underscores, dashes are accepted.
inline void set_config_field(ExperimentConfig& cfg, std::string key, const std::string& value,
                             std::vector<ConfigIssue>& issues) {
  std::replace(key.begin(), key.end(), '-', '_');
  bool ok = true;
  if (key == "strategy") cfg.strategy = value;
  else if (key == "k") ok = detail::parse_number(value, cfg.k);
  else if (key == "input_bits") ok = detail::parse_number(value, cfg.input_bits);
  else if (key == "zeta") ok = detail::parse_number(value, cfg.zeta);
  else if (key == "delta") ok = detail::parse_number(value, cfg.delta);
  else if (key == "epsilon") ok = detail::parse_number(value, cfg.epsilon);
  else if (key == "gamma") cfg.gamma = value;
  else if (key == "mode") cfg.mode = value;
  else if (key == "include_x1") ok = detail::parse_bool(value, cfg.include_x1);
  else if (key == "trusted") ok = detail::parse_bool(value, cfg.trusted);
  else if (key == "trials") ok = detail::parse_number(value, cfg.trials);
  else if (key == "seed") ok = detail::parse_number(value, cfg.seed);
  else if (key == "stages") ok = detail::parse_number(value, cfg.stages);
  else if (key == "targeted_rounds") cfg.targeted_rounds = value;
  else if (key == "leak_mode") cfg.leak_mode = value;
  else if (key == "threads") ok = detail::parse_number(value, cfg.threads);
  else {
    issues.push_back({key, "unknown key"});
    return;
  }
  if (!ok) issues.push_back({key, "cannot parse '" + value + "'"});
}

/// Flat `key = value` text; '#' starts a comment.
inline void load_config_text(ExperimentConfig& cfg, const std::string& text) {
  std::vector<ConfigIssue> issues;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      issues.push_back({"line " + std::to_string(lineno), "expected key = value"});
      continue;
    }
    set_config_field(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)), issues);
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

inline void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({{"config", "cannot open " + path}});
  std::stringstream ss;
  ss << in.rdbuf();
  load_config_text(cfg, ss.str());
}

inline std::vector<std::size_t> parse_rounds(const std::string& text, std::vector<ConfigIssue>& issues) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t v = 0;
    if (!detail::parse_number(detail::trim(item), v)) issues.push_back({"targeted_rounds", "bad entry '" + item + "'"});
    else out.push_back(v);
  }
  return out;
}

inline ProtocolConfig to_protocol_config(const ExperimentConfig& cfg) {
  ProtocolConfig pc;
  pc.zeta = cfg.zeta;
  pc.delta = cfg.delta;
  pc.epsilon = cfg.epsilon;
  pc.k = cfg.k;
  pc.mode = cfg.mode == "tally" ? RoundMode::Tally : RoundMode::AbortOnFail;
  pc.include_x1_in_hash = cfg.include_x1;
  pc.trusted = cfg.trusted;
  if (cfg.gamma == "heuristic") pc.gamma_policy = GammaPolicy::heuristic();
  else if (cfg.gamma == "zero") pc.gamma_policy = GammaPolicy::zero();
  else pc.gamma_policy = GammaPolicy::explicit_value(std::stoull(cfg.gamma));
  return pc;
}

/// Checks every field against the module preconditions; throws ConfigError
/// listing all problems at once.
inline void validate(const ExperimentConfig& cfg) {
  std::vector<ConfigIssue> issues;
  if (cfg.strategy != "honest" && cfg.strategy != "classical" && cfg.strategy != "abort-leak" &&
      cfg.strategy != "nlbox")
    issues.push_back({"strategy", "expected honest|classical|abort-leak|nlbox"});
  bool k_ok = true;
  try {
    const auto t = make_test(cfg.k);
    if (t.n_devices() > kMaxQubits) issues.push_back({"k", "too many devices to simulate"});
  } catch (const Error& e) {
    k_ok = false;
    issues.push_back({"k", e.what()});
  }
  for (auto [name, v] : {std::pair{"zeta", cfg.zeta}, {"delta", cfg.delta}, {"epsilon", cfg.epsilon}})
    if (!(v >= 0.0 && v <= 1.0)) issues.push_back({name, "must lie in [0, 1]"});
  if (cfg.gamma != "heuristic" && cfg.gamma != "zero") {
    std::size_t g = 0;
    if (!detail::parse_number(cfg.gamma, g)) issues.push_back({"gamma", "expected heuristic|zero|<integer>"});
  }
  if (cfg.gamma == "heuristic" && !cfg.trusted && !(cfg.delta > cfg.epsilon))
    issues.push_back({"delta", "must exceed epsilon under the heuristic gamma"});
  if (cfg.mode != "abort" && cfg.mode != "tally") issues.push_back({"mode", "expected abort|tally"});
  if (cfg.trials == 0) issues.push_back({"trials", "must be positive"});
  if (cfg.stages == 0) issues.push_back({"stages", "must be positive"});
  if (cfg.leak_mode != "only-all-p" && cfg.leak_mode != "except-all-p")
    issues.push_back({"leak_mode", "expected only-all-p|except-all-p"});
  parse_rounds(cfg.targeted_rounds, issues);
  if (k_ok) {
    ProtocolConfig pc;
    pc.k = cfg.k;
    pc.trusted = cfg.trusted;
    const std::size_t unit = input_unit(pc);
    if (cfg.input_bits == 0 || cfg.input_bits % unit != 0)
      issues.push_back({"input_bits", "must be a positive multiple of " + std::to_string(unit)});
    if (cfg.strategy == "nlbox" && cfg.k != 1) issues.push_back({"strategy", "nlbox is defined for k=1 only"});
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

inline StrategySpec make_strategy(const ExperimentConfig& cfg) {
  const NonlocalTest test = make_test(cfg.k);
  if (cfg.strategy == "honest") return {HonestQuantum{}};
  if (cfg.strategy == "classical") {
    // All answers +1: meets every single-P demand, fails only all-P.
    return {ClassicalTable{std::vector<LocalTable>(test.n_devices(), LocalTable{1, 1}), {}}};
  }
  if (cfg.strategy == "abort-leak") {
    std::vector<ConfigIssue> issues;
    const auto rounds = parse_rounds(cfg.targeted_rounds, issues);
    AbortLeak a;
    a.targeted_rounds = {rounds.begin(), rounds.end()};
    a.mode = cfg.leak_mode == "except-all-p" ? AbortLeakMode::ExceptAllP : AbortLeakMode::OnlyAllP;
    return {a};
  }
  return {NlBox{}};
}

struct TrialRecord {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  bool aborted = false;
  std::size_t rounds = 0;
  std::size_t passed = 0;
  std::size_t gamma = 0;
  std::size_t output_bits = 0;
  double ratio = 0;
  std::vector<std::uint64_t> round_values;  // decoded outcome values of passed rounds
  std::size_t eve_predictions = 0;          // outcome predictions Eve could make
  std::size_t eve_correct = 0;
  std::size_t eve_setting_pins = 0;         // rounds whose setting Eve pins exactly
  std::size_t eve_setting_correct = 0;
};

inline nlohmann::ordered_json to_json(const TrialRecord& r) {
  nlohmann::ordered_json j;
  j["kind"] = "trial";
  j["trial"] = r.trial;
  j["seed"] = r.seed;
  j["aborted"] = r.aborted;
  j["rounds"] = r.rounds;
  j["passed"] = r.passed;
  j["gamma"] = r.gamma;
  j["output_bits"] = r.output_bits;
  j["ratio"] = r.ratio;
  j["eve_predictions"] = r.eve_predictions;
  j["eve_correct"] = r.eve_correct;
  j["eve_setting_pins"] = r.eve_setting_pins;
  j["eve_setting_correct"] = r.eve_setting_correct;
  return j;
}

struct UniformityResult {
  double chi_square = 0;
  std::size_t dof = 0;
  double p_value = 1;
};

/// Pearson chi-square of equal-length samples against the uniform
/// distribution on all 2^length values.
inline UniformityResult uniformity_check(const std::vector<BitString>& samples) {
  require(!samples.empty(), ErrorCode::TooFewSamples, "no samples");
  const std::size_t len = samples.front().size();
  require(len >= 1 && len <= 20, ErrorCode::TooLarge, "sample width must be in [1, 20] bits");
  std::vector<std::uint64_t> counts(std::size_t{1} << len, 0);
  for (const auto& s : samples) {
    require(s.size() == len, ErrorCode::LengthMismatch, "samples differ in length");
    ++counts[s.to_index()];
  }
  return [&] {
    const double bins = static_cast<double>(counts.size());
    const double expected = static_cast<double>(samples.size()) / bins;
    require(expected >= 5.0, ErrorCode::TooFewSamples, "expected count per bin below 5");
    UniformityResult res;
    for (auto c : counts) {
      const double d = static_cast<double>(c) - expected;
      res.chi_square += d * d / expected;
    }
    res.dof = counts.size() - 1;
    res.p_value = boost::math::gamma_q(static_cast<double>(res.dof) / 2.0, res.chi_square / 2.0);
    return res;
  }();
}

/// One protocol trial with its own rng derived from (seed + trial).
inline TrialRecord run_trial(const ExperimentConfig& cfg, std::size_t trial) {
  TrialRecord rec;
  rec.trial = trial;
  rec.seed = cfg.seed + trial;
  SeededRng rng(rec.seed);
  const NonlocalTest test = make_test(cfg.k);
  const ProtocolConfig pc = to_protocol_config(cfg);
  const StrategySpec spec = make_strategy(cfg);
  const BitString x = random_bits(rng, cfg.input_bits);
  DeviceEnsemble ens = build_ensemble(spec, test, rng);
  const ProtocolRun run = run_protocol1(x, ens, pc, rng);

  rec.aborted = run.output.aborted;
  rec.rounds = run.transcript.rounds.size();
  rec.passed = run.transcript.passed;
  rec.gamma = run.gamma;
  rec.output_bits = run.ledger.bits_output_final;
  rec.ratio = static_cast<double>(rec.output_bits) / static_cast<double>(cfg.input_bits);

  const EveView view = eve_predictions(spec, test, run.transcript.events());
  for (std::size_t r = 0; r < run.transcript.rounds.size(); ++r) {
    const RoundRecord& rr = run.transcript.rounds[r];
    if (rr.pass) rec.round_values.push_back(rr.decoded.to_index());
    const RoundKnowledge& kn = view.rounds[r];
    for (std::size_t d = 0; d < test.n_devices(); ++d)
      if (auto pred = kn.predicted_outcome(d, rr.setting[d])) {
        ++rec.eve_predictions;
        rec.eve_correct += *pred == rr.outcomes.values[d];
      }
    if (auto bits = kn.setting_bits(test.bits_per_setting())) {
      ++rec.eve_setting_pins;
      rec.eve_setting_correct += *bits == rr.setting_bits;
    }
  }
  return rec;
}

struct RunReport {
  ExperimentConfig config;
  std::vector<TrialRecord> trials;
  nlohmann::ordered_json aggregate;
  std::size_t invariant_violations = 0;

  std::string to_jsonl() const {
    std::string out;
    for (const auto& t : trials) out += to_json(t).dump() + "\n";
    out += aggregate.dump() + "\n";
    return out;
  }
};

inline nlohmann::ordered_json config_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["strategy"] = c.strategy;
  j["k"] = c.k;
  j["input_bits"] = c.input_bits;
  j["zeta"] = c.zeta;
  j["delta"] = c.delta;
  j["epsilon"] = c.epsilon;
  j["gamma"] = c.gamma;
  j["mode"] = c.mode;
  j["include_x1"] = c.include_x1;
  j["trusted"] = c.trusted;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  if (c.strategy == "abort-leak") {
    j["targeted_rounds"] = c.targeted_rounds;
    j["leak_mode"] = c.leak_mode;
  }
  return j;
}

/// Runs `trials` independent protocol runs concurrently; records are stored
/// by trial index so aggregation does not depend on scheduling.
inline RunReport run_monte_carlo(const ExperimentConfig& cfg) {
  validate(cfg);
  RunReport rep;
  rep.config = cfg;
  rep.trials.resize(cfg.trials);

  std::size_t n_threads = cfg.threads ? cfg.threads : std::max(1U, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, cfg.trials);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_threads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < cfg.trials; t += n_threads) rep.trials[t] = run_trial(cfg, t);
      });
  }

  const NonlocalTest test = make_test(cfg.k);
  const ProtocolConfig pc = to_protocol_config(cfg);
  std::size_t aborts = 0, rounds = 0, passed = 0, eve_pred = 0, eve_ok = 0, pins = 0, pins_ok = 0;
  double ratio_sum = 0;
  std::vector<BitString> round_samples;
  for (const auto& t : rep.trials) {
    aborts += t.aborted;
    rounds += t.rounds;
    passed += t.passed;
    eve_pred += t.eve_predictions;
    eve_ok += t.eve_correct;
    pins += t.eve_setting_pins;
    pins_ok += t.eve_setting_correct;
    if (!t.aborted) ratio_sum += t.ratio;
    for (auto v : t.round_values) round_samples.push_back(BitString::from_index(v, test.bits_per_outcome()));
  }
  const std::size_t completed = cfg.trials - aborts;

  nlohmann::ordered_json agg;
  agg["kind"] = "aggregate";
  agg["versions"] = module_versions();
  agg["config"] = config_json(cfg);
  agg["gamma_policy"] = cfg.trusted ? "none" : pc.gamma_policy.label();
  agg["trials"] = cfg.trials;
  agg["abort_rate"] = static_cast<double>(aborts) / static_cast<double>(cfg.trials);
  agg["survival_rate"] = static_cast<double>(completed) / static_cast<double>(cfg.trials);
  agg["round_pass_rate"] = rounds ? static_cast<double>(passed) / static_cast<double>(rounds) : 0.0;
  agg["mean_expansion_ratio"] = completed ? ratio_sum / static_cast<double>(completed) : 0.0;

  if (round_samples.size() >= 5 * (std::size_t{1} << test.bits_per_outcome())) {
    const auto u = uniformity_check(round_samples);
    agg["chi_square"] = {{"statistic", u.chi_square}, {"dof", u.dof}, {"p_value", u.p_value}};
  } else {
    agg["chi_square"] = nullptr;
  }
  agg["eve"] = {{"outcome_predictions", eve_pred},
                {"outcome_accuracy", eve_pred ? static_cast<double>(eve_ok) / static_cast<double>(eve_pred) : 0.0},
                {"settings_pinned", pins},
                {"setting_accuracy", pins ? static_cast<double>(pins_ok) / static_cast<double>(pins) : 0.0}};

  const std::size_t n_rounds = cfg.trusted ? cfg.input_bits / test.bits_per_setting()
                                           : split_input(BitString(cfg.input_bits), pc).first.size() /
                                                 test.bits_per_setting();
  const double classical = classical_max_pass_probability(test).to_double();
  RandomnessLedger predicted_ledger;
  predicted_ledger.bits_consumed = cfg.input_bits;
  const ExpansionReport er = expansion_report(predicted_ledger, pc);
  nlohmann::ordered_json pred;
  pred["classical_round_pass"] = classical;
  pred["classical_survival"] = std::pow(classical, static_cast<double>(n_rounds));
  pred["expansion_ratio"] = er.predicted_ratio;
  pred["ell"] = er.ell ? nlohmann::ordered_json(*er.ell) : nlohmann::ordered_json(nullptr);
  pred["untrusted_rate_k"] = 1.0 + (2.0 * static_cast<double>(cfg.k) - 1.0) /
                                       (static_cast<double>(test.bits_per_setting()) + 2.0 * static_cast<double>(cfg.k) - 1.0);
  agg["predicted"] = pred;

  if (cfg.strategy == "honest" && aborts > 0) ++rep.invariant_violations;
  agg["invariant_violations"] = rep.invariant_violations;
  rep.aggregate = std::move(agg);
  return rep;
}

/// Exact view of the abort-leak attack on one targeted round: Eve's
/// posterior over the round's setting index given that the run did not
/// abort, and its distance from the uniform prior.
struct LeakAnalysis {
  double pass_probability = 0;
  std::vector<double> posterior;
  double distance_from_uniform = 0;
  bool point_mass = false;
  bool seed_compromised = false;
};

inline LeakAnalysis abort_leak_analysis(std::size_t k, AbortLeakMode mode, bool include_x1_in_hash) {
  const NonlocalTest test = make_test(k);
  StrategySpec spec{AbortLeak{{0}, mode}};
  LeakAnalysis out;
  const double prior = 1.0 / static_cast<double>(test.settings().size());
  out.posterior.assign(test.settings().size(), 0.0);
  for (std::size_t s = 0; s < test.settings().size(); ++s) {
    const auto dist = exact_round_distribution(spec, test, test.settings()[s], 0);
    double pass = 0;
    for (std::uint64_t idx = 0; idx < dist.probs.size(); ++idx)
      if (dist.probs[idx] > 0 &&
          validate_and_decode(test, test.settings()[s], OutcomeTuple::from_index(idx, test.n_devices())).pass)
        pass += dist.probs[idx];
    out.posterior[s] = prior * pass;
    out.pass_probability += prior * pass;
  }
  for (auto& p : out.posterior) {
    p /= out.pass_probability;
    out.distance_from_uniform += 0.5 * std::abs(p - prior);
    out.point_mass = out.point_mass || p == 1.0;
  }
  // Setting bits that never enter the hash stay exposed in the output.
  out.seed_compromised = !include_x1_in_hash && out.distance_from_uniform > 0;
  return out;
}

/// JSON-lines text plus the process exit status (0 ok, 3 invariant violation).
struct CommandOutput {
  std::string jsonl;
  int exit_code = 0;

  void emit(const nlohmann::ordered_json& j) { jsonl += j.dump() + "\n"; }
};

inline CommandOutput command_run(const ExperimentConfig& cfg) {
  validate(cfg);
  CommandOutput out;
  SeededRng rng(cfg.seed);
  const NonlocalTest test = make_test(cfg.k);
  const ProtocolConfig pc = to_protocol_config(cfg);
  const StrategySpec spec = make_strategy(cfg);
  const BitString x = random_bits(rng, cfg.input_bits);
  DeviceEnsemble ens = build_ensemble(spec, test, rng);
  const ProtocolRun run = run_protocol1(x, ens, pc, rng);
  for (std::size_t r = 0; r < run.transcript.rounds.size(); ++r) {
    const auto& rr = run.transcript.rounds[r];
    nlohmann::ordered_json j;
    j["kind"] = "round";
    j["round"] = r;
    j["setting_bits"] = rr.setting_bits.to_string();
    j["setting"] = rr.setting.to_string();
    j["outcomes"] = rr.outcomes.values;
    j["pass"] = rr.pass;
    j["decoded"] = rr.decoded.to_string();
    out.emit(j);
  }
  const ExpansionReport er = expansion_report(run.ledger, pc);
  nlohmann::ordered_json agg;
  agg["kind"] = "aggregate";
  agg["versions"] = module_versions();
  agg["config"] = config_json(cfg);
  agg["gamma_policy"] = er.gamma_label;
  agg["aborted"] = run.output.aborted;
  agg["passed"] = run.transcript.passed;
  agg["gamma"] = run.gamma;
  agg["s"] = run.output.s.to_string();
  agg["r"] = run.output.r.to_string();
  if (!cfg.include_x1) agg["unprocessed_x1"] = run.output.unprocessed_x1.to_string();
  agg["ledger"] = {{"consumed", run.ledger.bits_consumed},
                   {"emitted_raw", run.ledger.bits_emitted_raw},
                   {"final", run.ledger.bits_output_final}};
  agg["achieved_ratio"] = er.achieved_ratio;
  agg["predicted_ratio"] = er.predicted_ratio;
  agg["ell"] = er.ell ? nlohmann::ordered_json(*er.ell) : nlohmann::ordered_json(nullptr);
  const bool violation = cfg.strategy == "honest" && run.output.aborted;
  agg["invariant_violations"] = violation ? 1 : 0;
  out.emit(agg);
  out.exit_code = violation ? 3 : 0;
  return out;
}

inline CommandOutput command_mc(const ExperimentConfig& cfg) {
  const RunReport rep = run_monte_carlo(cfg);
  return {rep.to_jsonl(), rep.invariant_violations ? 3 : 0};
}

inline CommandOutput command_iterate(const ExperimentConfig& cfg) {
  validate(cfg);
  CommandOutput out;
  SeededRng rng(cfg.seed);
  const NonlocalTest test = make_test(cfg.k);
  const ProtocolConfig pc = to_protocol_config(cfg);
  const StrategySpec spec = make_strategy(cfg);
  const BitString x = random_bits(rng, cfg.input_bits);
  std::vector<DeviceEnsemble> ensembles;
  for (std::size_t i = 0; i < cfg.stages; ++i) ensembles.push_back(build_ensemble(spec, test, rng));
  const IteratedRun run = run_iterated(x, ensembles, pc, rng);
  for (std::size_t i = 0; i < run.stages.size(); ++i) {
    const auto& st = run.stages[i];
    out.emit({{"kind", "stage"},
              {"stage", i},
              {"input_bits", st.input_bits},
              {"discarded_bits", st.discarded_bits},
              {"aborted", st.aborted},
              {"gamma", st.gamma},
              {"output_bits", st.output_bits}});
  }
  nlohmann::ordered_json agg;
  agg["kind"] = "aggregate";
  agg["versions"] = module_versions();
  agg["config"] = config_json(cfg);
  agg["gamma_policy"] = cfg.trusted ? "none" : pc.gamma_policy.label();
  agg["stages"] = cfg.stages;
  agg["aborted"] = run.aborted;
  agg["final_bits"] = run.final_output.size();
  agg["discarded_bits"] = run.ledger.bits_discarded;
  agg["overall_ratio"] = static_cast<double>(run.final_output.size()) / static_cast<double>(cfg.input_bits);
  agg["note"] = "no security claim is made for chained stages";
  out.emit(agg);
  out.exit_code = cfg.strategy == "honest" && run.aborted ? 3 : 0;
  return out;
}

inline CommandOutput command_attack(const ExperimentConfig& cfg) {
  validate(cfg);
  CommandOutput out;
  bool violation = false;

  const auto mode = cfg.leak_mode == "except-all-p" ? AbortLeakMode::ExceptAllP : AbortLeakMode::OnlyAllP;
  const LeakAnalysis leak = abort_leak_analysis(cfg.k, mode, cfg.include_x1);
  out.emit({{"kind", "abort_leak"},
            {"k", cfg.k},
            {"leak_mode", cfg.leak_mode},
            {"include_x1", cfg.include_x1},
            {"pass_probability", leak.pass_probability},
            {"posterior", leak.posterior},
            {"distance_from_uniform", leak.distance_from_uniform},
            {"point_mass", leak.point_mass},
            {"seed_compromised", leak.seed_compromised}});

  // Exhaustive toy run of the full protocol under the same attack.
  if (cfg.k == 1) {
    ProtocolConfig pc;
    pc.include_x1_in_hash = true;
    const StrategySpec spec{AbortLeak{{0}, mode}};
    const ExactHashInput toy = exact_hash_input(spec, pc, 4);
    const double honest_budget = 8.0;
    const double h = min_entropy(*toy.joint);
    for (std::size_t t = 1; t <= 4; ++t) {
      const double dist = distance_to_ideal(hashed_joint(*toy.joint, IdentityToeplitzFamily(8, t))).distance;
      const double bound = theorem1_bound(h, static_cast<double>(t), 0.0);
      violation = violation || dist > bound + 1e-12;
      out.emit({{"kind", "abort_leak_toy"},
                {"x1_bits", 4},
                {"t", t},
                {"pass_probability", toy.pass_probability},
                {"hmin", h},
                {"leaked_bits", honest_budget - h},
                {"distance", dist},
                {"bound", bound},
                {"holds", dist <= bound + 1e-12}});
    }
  }

  if (cfg.k == 1) {
    const NonlocalTest test = make_test(1);
    const StrategySpec spec{NlBox{}};
    std::size_t passes = 0, preds = 0, correct = 0;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      SeededRng rng(cfg.seed + t);
      DeviceEnsemble ens = build_ensemble(spec, test, rng);
      const SettingVector setting = test.settings()[rng.uniform_below(test.settings().size())];
      const OutcomeTuple o = ens.round_outputs(setting, rng);
      passes += validate_and_decode(test, setting, o).pass;
      const EveView view = eve_predictions(spec, test, {false, 1});
      for (std::size_t d = 0; d < 3; ++d)
        if (auto p = view.rounds[0].predicted_outcome(d, setting[d])) {
          ++preds;
          correct += *p == o.values[d];
        }
    }
    out.emit({{"kind", "nlbox"},
              {"trials", cfg.trials},
              {"pass_rate", static_cast<double>(passes) / static_cast<double>(cfg.trials)},
              {"eve_predictions", preds},
              {"eve_accuracy", preds ? static_cast<double>(correct) / static_cast<double>(preds) : 0.0},
              {"private_bits_per_round_at_most", 1}});
    violation = violation || passes != cfg.trials;
  }
  out.emit({{"kind", "aggregate"}, {"versions", module_versions()}, {"config", config_json(cfg)},
            {"invariant_violations", violation ? 1 : 0}});
  out.exit_code = violation ? 3 : 0;
  return out;
}

/// Random joint table over (x, e) with a few zeroed atoms.
inline JointDistribution random_joint(SeededRng& rng, std::size_t value_bits, std::size_t n_symbols) {
  std::vector<double> p((std::size_t{1} << value_bits) * n_symbols);
  double total = 0;
  for (auto& v : p) {
    v = rng.uniform01() < 0.2 ? 0.0 : -std::log(1.0 - rng.uniform01());
    total += v;
  }
  if (total == 0) {
    p[0] = 1.0;
    total = 1.0;
  }
  for (auto& v : p) v /= total;
  return JointDistribution(value_bits, n_symbols, std::move(p));
}

inline CommandOutput command_oracle(const ExperimentConfig& cfg) {
  CommandOutput out;
  bool violation = false;
  for (std::size_t k : {1, 2}) {
    const Rational r = classical_max_pass_probability(make_test(k));
    const Rational expected(static_cast<std::int64_t>(4 * k - 1), static_cast<std::int64_t>(4 * k));
    violation = violation || !(r == expected);
    out.emit({{"kind", "classical_oracle"}, {"k", k}, {"max_pass", r.to_string()}, {"expected", expected.to_string()}});
  }
  SeededRng rng(cfg.seed);
  std::size_t violations = 0;
  double worst_margin = 1.0;
  for (std::size_t i = 0; i < cfg.trials; ++i) {
    const std::size_t n = 1 + rng.uniform_below(6);
    const std::size_t t = 1 + rng.uniform_below(n);
    const std::size_t n_e = 1 + rng.uniform_below(3);
    const JointDistribution joint = random_joint(rng, n, n_e);
    const double eps = rng.coin() ? 0.0 : 0.2 * rng.uniform01();
    const auto rep = verify_leftover_hash(joint, ToeplitzFamily(n, t), eps);
    violations += !rep.holds;
    worst_margin = std::min(worst_margin, rep.bound - rep.distance);
  }
  violation = violation || violations > 0;
  out.emit({{"kind", "leftover_hash"}, {"instances", cfg.trials}, {"violations", violations},
            {"min_margin", worst_margin}});
  out.emit({{"kind", "aggregate"}, {"versions", module_versions()}, {"invariant_violations", violation ? 1 : 0}});
  out.exit_code = violation ? 3 : 0;
  return out;
}

inline CommandOutput command_verify_appendix(const ExperimentConfig& cfg) {
  CommandOutput out;
  SeededRng rng(cfg.seed);
  std::size_t failures = 0;
  double worst = 0;
  for (std::size_t i = 0; i < cfg.trials; ++i) {
    const CanonicalInstance spec = random_canonical_spec(rng);
    const CanonicalOutput inst = canonical_instance(spec);
    const RelationReport rel = verify_ghz_relations(inst.state, inst.pairs);
    const StructureReport st = verify_structure(inst.state, inst.pairs);
    failures += !(rel.pass && st.pass);
    worst = std::max({worst, rel.max_residual(), st.max_residual()});
    out.emit({{"kind", "canonical_instance"},
              {"index", i},
              {"block_dims", spec.block_dims},
              {"relation_residual", rel.max_residual()},
              {"structure_residual", st.max_residual()},
              {"pass", rel.pass && st.pass}});
  }
  out.emit({{"kind", "aggregate"}, {"versions", module_versions()}, {"instances", cfg.trials},
            {"failures", failures}, {"max_residual", worst}, {"tolerance", kResidualTolerance},
            {"invariant_violations", failures}});
  out.exit_code = failures ? 3 : 0;
  return out;
}

}  // namespace direx
