#pragma once

// Randomness expansion protocol: test rounds driven by the first part of the
// input string, abort (or tally) on failed product checks, then privacy
// amplification of (setting bits ∥ outcome bits) seeded by the rest of the
// input. Also the chained multi-ensemble variant and rate accounting.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "direx/amplify.hpp"
#include "direx/bits.hpp"
#include "direx/devices.hpp"
#include "direx/error.hpp"
#include "direx/nonlocal_test.hpp"

namespace direx {

enum class RoundMode { AbortOnFail, Tally };

struct GammaPolicy {
  enum class Kind { Heuristic, Explicit, Zero };
  Kind kind = Kind::Heuristic;
  std::size_t value = 0;  // Explicit only

  static GammaPolicy heuristic() { return {Kind::Heuristic, 0}; }
  static GammaPolicy explicit_value(std::size_t v) { return {Kind::Explicit, v}; }
  static GammaPolicy zero() { return {Kind::Zero, 0}; }

  std::string label() const {
    switch (kind) {
      case Kind::Heuristic: return "heuristic";
      case Kind::Explicit: return "explicit";
      case Kind::Zero: return "zero";
    }
    return "unknown";
  }
};

struct ProtocolConfig {
  double zeta = 0.01;
  double delta = 0.001;
  double epsilon = 0.0;
  std::size_t k = 1;
  RoundMode mode = RoundMode::AbortOnFail;
  bool include_x1_in_hash = true;
  GammaPolicy gamma_policy = GammaPolicy::heuristic();
  bool trusted = false;  // skip amplification; the whole input drives test rounds
};

/// ℓ = ⌈2·log2(1 / (2(δ − ε)))⌉, the slack that makes ε + ½·2^(−ℓ/2) ≤ δ.
inline std::size_t heuristic_ell(double delta, double epsilon) {
  require(delta > epsilon, ErrorCode::BadParameters, "delta must exceed epsilon");
  const double ell = std::ceil(2.0 * std::log2(1.0 / (2.0 * (delta - epsilon))) - 1e-12);
  return ell > 0 ? static_cast<std::size_t>(ell) : 0;
}

/// Hash output length. The heuristic budget is the honest entropy of the
/// hash input, |x1| + rounds·(outcome bits) (= 2|x1| for the GHZ test),
/// scaled by the pass fraction in tally mode; zeta does not enter.
/// This is a policy, not a proven bound.
inline std::size_t gamma(const ProtocolConfig& cfg, std::size_t n1_bits, std::size_t passed_rounds) {
  switch (cfg.gamma_policy.kind) {
    case GammaPolicy::Kind::Explicit: return cfg.gamma_policy.value;
    case GammaPolicy::Kind::Zero: return 0;
    case GammaPolicy::Kind::Heuristic: break;
  }
  const std::size_t ell = heuristic_ell(cfg.delta, cfg.epsilon);
  const NonlocalTest test = make_test(cfg.k);
  const std::size_t rounds = n1_bits / test.bits_per_setting();
  std::size_t budget = n1_bits + rounds * test.bits_per_outcome();
  if (cfg.mode == RoundMode::Tally && rounds > 0) budget = budget * passed_rounds / rounds;
  return budget > ell ? budget - ell : 0;
}

struct RoundRecord {
  BitString setting_bits;
  SettingVector setting;
  OutcomeTuple outcomes;
  bool pass = false;
  BitString decoded;
};

struct Transcript {
  std::vector<RoundRecord> rounds;
  bool aborted = false;
  std::size_t passed = 0;  // T
  BitString x_tilde;
  BitString x_prime;

  TranscriptEvents events() const { return {aborted, rounds.size()}; }
};

struct ProtocolOutput {
  bool aborted = false;
  BitString s;
  BitString r;
  BitString unprocessed_x1;  // ablation only: x1 kept outside the hash, exposed to the leak

  BitString combined() const { return concat(s, r); }
};

struct ProtocolRun {
  ProtocolOutput output;
  Transcript transcript;
  RandomnessLedger ledger;
  std::size_t gamma = 0;
  std::size_t hash_seed_bits = 0;
};

/// Input length unit: |x1| : |r| = bits_per_setting : (bits_per_setting +
/// bits_per_outcome), so that |r| = |x'|. For the GHZ test this is 2 : 4.
inline std::size_t input_unit(const ProtocolConfig& cfg) {
  const NonlocalTest test = make_test(cfg.k);
  if (cfg.trusted) return test.bits_per_setting();
  return 2 * test.bits_per_setting() + test.bits_per_outcome();
}

inline std::pair<BitString, BitString> split_input(const BitString& x, const ProtocolConfig& cfg) {
  const NonlocalTest test = make_test(cfg.k);
  const std::size_t unit = input_unit(cfg);
  require(!x.empty() && x.size() % unit == 0, ErrorCode::LengthMismatch,
          "input length " + std::to_string(x.size()) + " is not a positive multiple of " + std::to_string(unit));
  if (cfg.trusted) return {x, BitString{}};
  if (cfg.k == 1) return partition_input(x);
  const std::size_t n1 = x.size() / unit * test.bits_per_setting();
  return {x.slice(0, n1), x.slice(n1, x.size() - n1)};
}

inline ProtocolRun run_protocol1(const BitString& x, DeviceEnsemble& ensemble, const ProtocolConfig& cfg,
                                 SeededRng& rng) {
  const NonlocalTest test = make_test(cfg.k);
  require(ensemble.test() == test, ErrorCode::InconsistentSpec, "ensemble was built for a different test");
  auto [x1, r] = split_input(x, cfg);
  ensemble.claim_for_protocol();

  ProtocolRun run;
  Transcript& tr = run.transcript;
  const std::size_t width = test.bits_per_setting();
  for (std::size_t pos = 0; pos < x1.size(); pos += width) {
    RoundRecord rec;
    rec.setting_bits = x1.slice(pos, width);
    rec.setting = encode_setting(test, rec.setting_bits);
    rec.outcomes = ensemble.round_outputs(rec.setting, rng);
    const DecodeResult dec = validate_and_decode(test, rec.setting, rec.outcomes);
    rec.pass = dec.pass;
    rec.decoded = dec.bits;
    tr.rounds.push_back(rec);
    if (dec.pass) {
      ++tr.passed;
      tr.x_tilde.append(dec.bits);
    } else if (cfg.mode == RoundMode::AbortOnFail) {
      tr.aborted = true;
      break;
    }
  }

  run.ledger.bits_consumed = x.size();
  run.ledger.bits_emitted_raw = tr.x_tilde.size();
  if (tr.aborted) {
    run.output.aborted = true;
    return run;
  }

  if (cfg.trusted) {
    run.output.s = tr.x_tilde;
    run.output.r = x1;
    run.ledger.bits_output_final = run.output.s.size() + run.output.r.size();
    return run;
  }

  tr.x_prime = cfg.include_x1_in_hash ? concat(x1, tr.x_tilde) : tr.x_tilde;
  if (!cfg.include_x1_in_hash) run.output.unprocessed_x1 = x1;
  run.gamma = std::min(gamma(cfg, x1.size(), tr.passed), tr.x_prime.size());
  const IdentityToeplitzFamily family(tr.x_prime.size(), run.gamma);
  run.hash_seed_bits = family.seed_bits();
  require(r.size() >= family.seed_bits(), ErrorCode::SeedTooShort,
          "hash seed needs " + std::to_string(family.seed_bits()) + " bits, have " + std::to_string(r.size()));
  run.output.s = apply_hash(family, tr.x_prime, r.slice(0, family.seed_bits()));
  run.output.r = r;
  run.ledger.bits_output_final = run.output.s.size() + run.output.r.size();
  return run;
}

struct StageReport {
  std::size_t input_bits = 0;
  std::size_t discarded_bits = 0;
  bool aborted = false;
  std::size_t gamma = 0;
  std::size_t output_bits = 0;
};

struct IteratedRun {
  bool aborted = false;
  BitString final_output;
  std::vector<StageReport> stages;
  RandomnessLedger ledger;
};

/// Feeds each stage's (s ∥ r) into the next, fresh, ensemble. Stage inputs
/// are truncated to the largest valid length; the cut is counted as discarded.
inline IteratedRun run_iterated(const BitString& x, std::span<DeviceEnsemble> ensembles, const ProtocolConfig& cfg,
                                SeededRng& rng) {
  require(!ensembles.empty(), ErrorCode::BadParameters, "need at least one ensemble");
  IteratedRun out;
  out.ledger.bits_consumed = x.size();
  BitString current = x;
  const std::size_t unit = input_unit(cfg);
  for (auto& ens : ensembles) {
    StageReport st;
    const std::size_t usable = current.size() / unit * unit;
    st.discarded_bits = current.size() - usable;
    st.input_bits = usable;
    out.ledger.bits_discarded += st.discarded_bits;
    const ProtocolRun run = run_protocol1(current.slice(0, usable), ens, cfg, rng);
    out.ledger.bits_emitted_raw += run.ledger.bits_emitted_raw;
    st.aborted = run.output.aborted;
    st.gamma = run.gamma;
    st.output_bits = run.ledger.bits_output_final;
    out.stages.push_back(st);
    if (run.output.aborted) {
      out.aborted = true;
      return out;
    }
    current = run.output.combined();
  }
  out.final_output = current;
  out.ledger.bits_output_final = current.size();
  return out;
}

struct ExpansionReport {
  double achieved_ratio = 0;
  double predicted_ratio = 0;
  std::optional<std::size_t> ell;
  std::string gamma_label;
  bool trusted = false;
};

/// Achieved final/consumed ratio next to the predicted one:
/// trusted: 1 + (outcome bits)/(setting bits), i.e. 2 for k = 1 and 3 for k = 2;
/// untrusted: 1 + (2k − 1)/(log2(4k) + 2k − 1) − ℓ/|X|, i.e. 4/3 − ℓ/|X| for k = 1.
inline ExpansionReport expansion_report(const RandomnessLedger& ledger, const ProtocolConfig& cfg) {
  const NonlocalTest test = make_test(cfg.k);
  ExpansionReport rep;
  rep.trusted = cfg.trusted;
  rep.gamma_label = cfg.trusted ? "none" : cfg.gamma_policy.label();
  rep.achieved_ratio = ledger.bits_consumed == 0
                           ? 0.0
                           : static_cast<double>(ledger.bits_output_final) / static_cast<double>(ledger.bits_consumed);
  const double bps = static_cast<double>(test.bits_per_setting());
  const double bpo = static_cast<double>(test.bits_per_outcome());
  if (cfg.trusted) {
    rep.predicted_ratio = 1.0 + bpo / bps;
    return rep;
  }
  const double kk = static_cast<double>(cfg.k);
  rep.predicted_ratio = 1.0 + (2.0 * kk - 1.0) / (bps + 2.0 * kk - 1.0);
  if (cfg.delta > cfg.epsilon) {
    rep.ell = heuristic_ell(cfg.delta, cfg.epsilon);
    if (ledger.bits_consumed > 0)
      rep.predicted_ratio -= static_cast<double>(*rep.ell) / static_cast<double>(ledger.bits_consumed);
  }
  return rep;
}

/// Exact distribution of the hash input x' conditioned on the run not
/// aborting, for uniform setting bits and independent rounds. Eve's symbol
/// is trivial: everything she knows is the strategy itself plus the
/// no-abort event, both already folded into the conditioning.
struct ExactHashInput {
  double pass_probability = 0;
  std::optional<JointDistribution> joint;  // absent when the run always aborts
  std::vector<double> setting_posterior_first_target;  // P(setting index of round 0 | no abort)
};

inline ExactHashInput exact_hash_input(const StrategySpec& spec, const ProtocolConfig& cfg, std::size_t n1_bits) {
  require(cfg.mode == RoundMode::AbortOnFail && !cfg.trusted, ErrorCode::BadParameters,
          "exact enumeration covers the aborting, amplified protocol");
  const NonlocalTest test = make_test(cfg.k);
  const std::size_t width = test.bits_per_setting();
  require(n1_bits % width == 0, ErrorCode::LengthMismatch, "x1 length must be a multiple of the setting width");
  const std::size_t rounds = n1_bits / width;
  const std::size_t xt_bits = rounds * test.bits_per_outcome();
  const std::size_t xp_bits = (cfg.include_x1_in_hash ? n1_bits : 0) + xt_bits;
  require(n1_bits <= 12 && xp_bits <= 20, ErrorCode::TooLarge, "toy instance too large to enumerate");

  // Per round and setting: passing decoded values with their probabilities.
  std::vector<std::vector<std::vector<std::pair<std::uint64_t, double>>>> table(rounds);
  for (std::size_t r = 0; r < rounds; ++r)
    for (const auto& setting : test.settings()) {
      const auto dist = exact_round_distribution(spec, test, setting, r);
      std::vector<std::pair<std::uint64_t, double>> passing;
      for (std::uint64_t idx = 0; idx < dist.probs.size(); ++idx) {
        if (dist.probs[idx] <= 0) continue;
        const auto dec = validate_and_decode(test, setting, OutcomeTuple::from_index(idx, test.n_devices()));
        if (dec.pass) passing.emplace_back(dec.bits.to_index(), dist.probs[idx]);
      }
      table[r].push_back(std::move(passing));
    }

  std::vector<double> probs(std::size_t{1} << xp_bits, 0.0);
  std::vector<double> posterior(test.settings().size(), 0.0);
  const double px1 = std::exp2(-static_cast<double>(n1_bits));
  double pass_total = 0;
  for (std::uint64_t x1 = 0; x1 < (std::uint64_t{1} << n1_bits); ++x1) {
    const auto idx = chunk_to_indices(BitString::from_index(x1, n1_bits), width);
    auto descend = [&](auto&& self, std::size_t r, std::uint64_t xt, double p) -> void {
      if (r == rounds) {
        const std::uint64_t xp = cfg.include_x1_in_hash ? ((x1 << xt_bits) | xt) : xt;
        probs[xp] += p;
        pass_total += p;
        if (rounds > 0) posterior[idx[0]] += p;
        return;
      }
      for (const auto& [bits, q] : table[r][idx[r]])
        self(self, r + 1, (xt << test.bits_per_outcome()) | bits, p * q);
    };
    descend(descend, 0, 0, px1);
  }

  ExactHashInput out;
  out.pass_probability = pass_total;
  if (pass_total > 0) {
    for (auto& v : probs) v /= pass_total;
    for (auto& v : posterior) v /= pass_total;
    out.joint.emplace(xp_bits, 1, std::move(probs));
  }
  out.setting_posterior_first_target = std::move(posterior);
  return out;
}

}  // namespace direx
