#pragma once

// Adversary-supplied device models.
//
// Each device is a separate object that is handed only its own local
// setting (P or Q) per round; no other protocol data has a path into it.
// Devices of one ensemble may share a physical resource prepared in advance
// (an entangled state, a PR box), which is the only coupling between them.

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "direx/bits.hpp"
#include "direx/error.hpp"
#include "direx/nonlocal_test.hpp"
#include "direx/quantum.hpp"

namespace direx {

struct LocalTable {
  int p = 1;
  int q = 1;
  int respond(Choice c) const { return c == Choice::P ? p : q; }
  friend bool operator==(const LocalTable&, const LocalTable&) = default;
};

enum class AbortLeakMode { OnlyAllP, ExceptAllP };

struct HonestQuantum {
  std::optional<HonestSetup> custom;  // default: honest_observables(test)
};

struct ClassicalTable {
  std::vector<LocalTable> tables;                   // one per device
  std::vector<std::vector<LocalTable>> per_round;  // optional; cycles when shorter than the run
};

struct AbortLeak {
  std::set<std::size_t> targeted_rounds;  // zero-based
  AbortLeakMode mode = AbortLeakMode::OnlyAllP;
};

struct NlBox {
  std::vector<int> fixed_outputs{+1};  // devices 3..n
};

struct StrategySpec {
  std::variant<HonestQuantum, ClassicalTable, AbortLeak, NlBox> payload;

  std::string kind() const {
    switch (payload.index()) {
      case 0: return "honest";
      case 1: return "classical";
      case 2: return "abort-leak";
      default: return "nlbox";
    }
  }
};

/// One untrusted device. Sees its own local setting and nothing else.
class Device {
 public:
  virtual ~Device() = default;
  virtual int respond(Choice local, SeededRng& rng) = 0;
};

namespace detail {

/// Entangled state shared by a set of devices; a fresh copy is prepared each round.
class SharedQuantumSource {
 public:
  SharedQuantumSource(StateVector state, std::vector<std::size_t> device_qubits)
      : state_(std::move(state)), device_qubits_(std::move(device_qubits)) {}

  int measure(std::size_t device, std::uint64_t round, const LocalObservable& obs, SeededRng& rng) {
    if (!reg_ || round != round_) {
      reg_.emplace(state_, device_qubits_);
      round_ = round;
    }
    return reg_->measure(device, obs, rng);
  }

 private:
  StateVector state_;
  std::vector<std::size_t> device_qubits_;
  std::optional<QuantumRegister> reg_;
  std::uint64_t round_ = 0;
};

class QuantumDevice final : public Device {
 public:
  QuantumDevice(std::size_t index, ObservablePair pair, std::shared_ptr<SharedQuantumSource> source)
      : index_(index), pair_(std::move(pair)), source_(std::move(source)) {}

  int respond(Choice local, SeededRng& rng) override {
    const auto& obs = local == Choice::P ? pair_.p_obs : pair_.q_obs;
    return source_->measure(index_, round_++, obs, rng);
  }

 private:
  std::size_t index_;
  ObservablePair pair_;
  std::shared_ptr<SharedQuantumSource> source_;
  std::uint64_t round_ = 0;
};

class TableDevice final : public Device {
 public:
  TableDevice(LocalTable table, std::vector<LocalTable> per_round)
      : table_(table), per_round_(std::move(per_round)) {}

  int respond(Choice local, SeededRng&) override {
    const LocalTable& t = per_round_.empty() ? table_ : per_round_[round_ % per_round_.size()];
    ++round_;
    return t.respond(local);
  }

 private:
  LocalTable table_;
  std::vector<LocalTable> per_round_;
  std::uint64_t round_ = 0;
};

class AbortLeakDevice final : public Device {
 public:
  AbortLeakDevice(std::set<std::size_t> targeted, int fixed, std::unique_ptr<Device> fallback)
      : targeted_(std::move(targeted)), fixed_(fixed), fallback_(std::move(fallback)) {}

  int respond(Choice local, SeededRng& rng) override {
    const std::uint64_t r = round_++;
    if (targeted_.contains(r)) return fixed_;
    return fallback_->respond(local, rng);
  }

 private:
  std::set<std::size_t> targeted_;
  int fixed_;
  std::unique_ptr<Device> fallback_;
  std::uint64_t round_ = 0;
};

/// PR box: outputs a, b with uniform marginals and ab = −1 iff both inputs are P.
class PrBox {
 public:
  int query(std::size_t side, std::uint64_t round, Choice local, SeededRng& rng) {
    if (!first_ || round != round_) {
      round_ = round;
      first_side_ = side;
      first_input_ = local;
      first_output_ = rng.coin() ? -1 : 1;
      first_ = true;
      return first_output_;
    }
    require(side != first_side_, ErrorCode::BadSetting, "PR box side queried twice in one round");
    first_ = false;
    const bool both_p = first_input_ == Choice::P && local == Choice::P;
    return both_p ? -first_output_ : first_output_;
  }

 private:
  bool first_ = false;
  std::uint64_t round_ = 0;
  std::size_t first_side_ = 0;
  Choice first_input_ = Choice::P;
  int first_output_ = 1;
};

class BoxDevice final : public Device {
 public:
  BoxDevice(std::size_t side, std::shared_ptr<PrBox> box) : side_(side), box_(std::move(box)) {}
  int respond(Choice local, SeededRng& rng) override { return box_->query(side_, round_++, local, rng); }

 private:
  std::size_t side_;
  std::shared_ptr<PrBox> box_;
  std::uint64_t round_ = 0;
};

class ConstantDevice final : public Device {
 public:
  explicit ConstantDevice(int value) : value_(value) {}
  int respond(Choice, SeededRng&) override { return value_; }

 private:
  int value_;
};

inline int fixed_leak_output(AbortLeakMode mode, std::size_t device, std::size_t n_devices) {
  // Last device carries the sign: product −1 passes only all-P, +1 passes the rest.
  if (mode == AbortLeakMode::OnlyAllP && device + 1 == n_devices) return -1;
  return +1;
}

inline std::vector<std::unique_ptr<Device>> honest_devices(const HonestSetup& setup) {
  std::vector<std::size_t> qs;
  for (const auto& p : setup.pairs) qs.push_back(p.p_obs.qubits());
  auto source = std::make_shared<SharedQuantumSource>(setup.state, qs);
  std::vector<std::unique_ptr<Device>> devs;
  for (std::size_t i = 0; i < setup.pairs.size(); ++i)
    devs.push_back(std::make_unique<QuantumDevice>(i, setup.pairs[i], source));
  return devs;
}

inline HonestSetup resolve_honest(const HonestQuantum& h, const NonlocalTest& test) {
  HonestSetup setup = h.custom ? *h.custom : honest_observables(test);
  require(setup.pairs.size() == test.n_devices(), ErrorCode::InconsistentSpec,
          "honest payload has the wrong number of devices");
  std::vector<std::size_t> qs;
  for (const auto& p : setup.pairs) qs.push_back(p.p_obs.qubits());
  try {
    device_offsets(setup.state.qubits(), qs);
  } catch (const Error&) {
    fail(ErrorCode::InconsistentSpec, "honest observables do not partition the shared state");
  }
  return setup;
}

}  // namespace detail

class DeviceEnsemble {
 public:
  DeviceEnsemble(NonlocalTest test, StrategySpec spec, std::vector<std::unique_ptr<Device>> devices)
      : test_(std::move(test)), spec_(std::move(spec)), devices_(std::move(devices)) {
    require(devices_.size() == test_.n_devices(), ErrorCode::InconsistentSpec,
            "device count differs from the test's");
  }

  DeviceEnsemble(const DeviceEnsemble&) = delete;
  DeviceEnsemble& operator=(const DeviceEnsemble&) = delete;
  DeviceEnsemble(DeviceEnsemble&&) = default;
  DeviceEnsemble& operator=(DeviceEnsemble&&) = default;

  const NonlocalTest& test() const noexcept { return test_; }
  const StrategySpec& strategy() const noexcept { return spec_; }
  std::size_t n_devices() const noexcept { return devices_.size(); }
  std::uint64_t rounds_played() const noexcept { return rounds_; }

  /// Marks the ensemble as spent by a protocol run; a second claim throws.
  void claim_for_protocol() {
    require(!claimed_, ErrorCode::EnsembleReused, "device ensemble already used by a protocol run");
    claimed_ = true;
  }
  bool claimed() const noexcept { return claimed_; }

  /// Dispatches each device's own local setting and gathers the outputs.
  OutcomeTuple round_outputs(const SettingVector& setting, SeededRng& rng) {
    require(setting.size() == devices_.size() && test_.index_of(setting).has_value(), ErrorCode::BadSetting,
            "setting " + setting.to_string() + " is not valid for this ensemble");
    OutcomeTuple out;
    out.values.reserve(devices_.size());
    for (std::size_t i = 0; i < devices_.size(); ++i) out.values.push_back(devices_[i]->respond(setting[i], rng));
    ++rounds_;
    return out;
  }

 private:
  NonlocalTest test_;
  StrategySpec spec_;
  std::vector<std::unique_ptr<Device>> devices_;
  std::uint64_t rounds_ = 0;
  bool claimed_ = false;
};

inline DeviceEnsemble build_ensemble(const StrategySpec& spec, const NonlocalTest& test, SeededRng& /*rng*/) {
  const std::size_t n = test.n_devices();
  std::vector<std::unique_ptr<Device>> devs;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, HonestQuantum>) {
          devs = detail::honest_devices(detail::resolve_honest(p, test));
        } else if constexpr (std::is_same_v<T, ClassicalTable>) {
          require(p.tables.size() == n, ErrorCode::InconsistentSpec, "need one table per device");
          for (const auto& row : p.per_round)
            require(row.size() == n, ErrorCode::InconsistentSpec, "per-round table row has the wrong width");
          for (const auto& t : p.tables)
            require((t.p == 1 || t.p == -1) && (t.q == 1 || t.q == -1), ErrorCode::InconsistentSpec,
                    "table entries must be ±1");
          for (std::size_t i = 0; i < n; ++i) {
            std::vector<LocalTable> rounds;
            for (const auto& row : p.per_round) rounds.push_back(row[i]);
            devs.push_back(std::make_unique<detail::TableDevice>(p.tables[i], std::move(rounds)));
          }
        } else if constexpr (std::is_same_v<T, AbortLeak>) {
          auto fallback = detail::honest_devices(honest_observables(test));
          for (std::size_t i = 0; i < n; ++i)
            devs.push_back(std::make_unique<detail::AbortLeakDevice>(
                p.targeted_rounds, detail::fixed_leak_output(p.mode, i, n), std::move(fallback[i])));
        } else {
          require(n >= 2 && p.fixed_outputs.size() == n - 2, ErrorCode::InconsistentSpec,
                  "NL-box payload must fix the outputs of all devices beyond the box pair");
          for (int v : p.fixed_outputs)
            require(v == 1 || v == -1, ErrorCode::InconsistentSpec, "fixed outputs must be ±1");
          auto box = std::make_shared<detail::PrBox>();
          devs.push_back(std::make_unique<detail::BoxDevice>(0, box));
          devs.push_back(std::make_unique<detail::BoxDevice>(1, box));
          for (int v : p.fixed_outputs) devs.push_back(std::make_unique<detail::ConstantDevice>(v));
        }
      },
      spec.payload);
  return DeviceEnsemble(test, spec, std::move(devs));
}

inline OutcomeTuple round_outputs(DeviceEnsemble& ensemble, const SettingVector& setting, SeededRng& rng) {
  return ensemble.round_outputs(setting, rng);
}

/// Exact distribution of one round's outcomes for a strategy, by definition
/// of each model rather than by sampling.
inline OutcomeDistribution exact_round_distribution(const StrategySpec& spec, const NonlocalTest& test,
                                                    const SettingVector& setting, std::size_t round = 0) {
  require(test.index_of(setting).has_value(), ErrorCode::BadSetting, "setting not in test");
  const std::size_t n = test.n_devices();
  OutcomeDistribution dist;
  dist.n_devices = n;
  dist.probs.assign(std::size_t{1} << n, 0.0);
  auto point = [&](const OutcomeTuple& t) { dist.probs[t.index()] = 1.0; };
  auto born = [&](const HonestSetup& setup) {
    return joint_outcome_distribution(setup.state, observables_for(setup.pairs, setting));
  };

  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, HonestQuantum>) {
          dist = born(detail::resolve_honest(p, test));
        } else if constexpr (std::is_same_v<T, ClassicalTable>) {
          OutcomeTuple t;
          for (std::size_t i = 0; i < n; ++i) {
            const LocalTable& tab = p.per_round.empty() ? p.tables[i] : p.per_round[round % p.per_round.size()][i];
            t.values.push_back(tab.respond(setting[i]));
          }
          point(t);
        } else if constexpr (std::is_same_v<T, AbortLeak>) {
          if (p.targeted_rounds.contains(round)) {
            OutcomeTuple t;
            for (std::size_t i = 0; i < n; ++i) t.values.push_back(detail::fixed_leak_output(p.mode, i, n));
            point(t);
          } else {
            dist = born(honest_observables(test));
          }
        } else {
          const int sign = (setting[0] == Choice::P && setting[1] == Choice::P) ? -1 : 1;
          for (int a : {1, -1}) {
            OutcomeTuple t;
            t.values = {a, a * sign};
            for (int v : p.fixed_outputs) t.values.push_back(v);
            dist.probs[t.index()] = 0.5;
          }
        }
      },
      spec.payload);
  return dist;
}

/// Eve's knowledge about one round.
struct RoundKnowledge {
  std::map<std::size_t, LocalTable> known_responses;   // device -> answer to P and to Q
  std::optional<std::vector<std::uint64_t>> possible_settings;  // setting indices consistent with the transcript

  bool none() const { return known_responses.empty() && !possible_settings; }

  /// Known setting bits when the setting is pinned to a single value.
  std::optional<BitString> setting_bits(std::size_t width) const {
    if (!possible_settings || possible_settings->size() != 1) return std::nullopt;
    return BitString::from_index(possible_settings->front(), width);
  }
  std::optional<int> predicted_outcome(std::size_t device, Choice local) const {
    auto it = known_responses.find(device);
    if (it == known_responses.end()) return std::nullopt;
    return it->second.respond(local);
  }
};

struct EveView {
  std::vector<RoundKnowledge> rounds;

  bool no_knowledge() const {
    for (const auto& r : rounds)
      if (!r.none()) return false;
    return true;
  }
};

/// Public transcript events visible to Eve.
struct TranscriptEvents {
  bool aborted = false;
  std::size_t rounds = 0;  // rounds executed, including an aborting one
};

inline EveView eve_predictions(const StrategySpec& spec, const NonlocalTest& test, const TranscriptEvents& events) {
  EveView view;
  view.rounds.resize(events.rounds);
  const std::size_t n = test.n_devices();
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, HonestQuantum>) {
          // No information.
        } else if constexpr (std::is_same_v<T, ClassicalTable>) {
          for (std::size_t r = 0; r < events.rounds; ++r)
            for (std::size_t i = 0; i < n; ++i)
              view.rounds[r].known_responses[i] =
                  p.per_round.empty() ? p.tables[i] : p.per_round[r % p.per_round.size()][i];
        } else if constexpr (std::is_same_v<T, AbortLeak>) {
          const std::size_t n_settings = test.settings().size();
          std::vector<std::uint64_t> passing;
          std::vector<std::uint64_t> failing;
          for (std::uint64_t s = 0; s < n_settings; ++s) {
            const bool all_p = test.settings()[s].all_p();
            const bool passes = p.mode == AbortLeakMode::OnlyAllP ? all_p : !all_p;
            (passes ? passing : failing).push_back(s);
          }
          const std::size_t passed_rounds = events.aborted && events.rounds > 0 ? events.rounds - 1 : events.rounds;
          for (std::size_t r : p.targeted_rounds) {
            if (r >= events.rounds) continue;
            for (std::size_t i = 0; i < n; ++i) {
              const int v = detail::fixed_leak_output(p.mode, i, n);
              view.rounds[r].known_responses[i] = LocalTable{v, v};
            }
            view.rounds[r].possible_settings = r < passed_rounds ? passing : failing;
          }
        } else {
          for (std::size_t r = 0; r < events.rounds; ++r)
            for (std::size_t i = 0; i < p.fixed_outputs.size(); ++i)
              view.rounds[r].known_responses[i + 2] = LocalTable{p.fixed_outputs[i], p.fixed_outputs[i]};
        }
      },
      spec.payload);
  return view;
}

}  // namespace direx
