#include <gtest/gtest.h>

#include <vector>

#include "direx/protocol.hpp"
#include "oracles.hpp"

using namespace direx;

namespace {

DeviceEnsemble honest(std::size_t k, SeededRng& rng) { return build_ensemble(StrategySpec{HonestQuantum{}}, make_test(k), rng); }

DeviceEnsemble all_plus(SeededRng& rng) {
  return build_ensemble(StrategySpec{ClassicalTable{std::vector<LocalTable>(3), {}}}, make_test(1), rng);
}

}  // namespace

TEST(Gamma, Examples) {
  ProtocolConfig cfg;
  EXPECT_EQ(heuristic_ell(0.001, 0.0), 18u);
  EXPECT_EQ(gamma(cfg, 100, 50), 182u);
  EXPECT_EQ(gamma(cfg, 4, 2), 0u);
  cfg.gamma_policy = GammaPolicy::explicit_value(6);
  EXPECT_EQ(gamma(cfg, 100, 50), 6u);
  EXPECT_EQ(gamma(cfg, 4, 0), 6u);
  cfg.gamma_policy = GammaPolicy::zero();
  EXPECT_EQ(gamma(cfg, 100, 50), 0u);
}

TEST(Gamma, EllInvertsLeftoverBound) {
  for (double delta : {0.1, 0.01, 0.001, 1e-6}) {
    const auto ell = static_cast<double>(heuristic_ell(delta, 0.0));
    EXPECT_LE(0.5 * std::exp2(-ell / 2), delta * (1 + 1e-12));
    EXPECT_GT(0.5 * std::exp2(-(ell - 1) / 2), delta);
  }
  EXPECT_THROW(heuristic_ell(0.01, 0.01), Error);
}

TEST(Gamma, TallyScalesWithPassedRounds) {
  ProtocolConfig cfg;
  cfg.mode = RoundMode::Tally;
  EXPECT_EQ(gamma(cfg, 100, 50), 182u);
  EXPECT_EQ(gamma(cfg, 100, 25), 82u);
  EXPECT_EQ(gamma(cfg, 100, 0), 0u);
}

TEST(RunProtocol1, HonestTwelveBitsExplicitGamma) {
  SeededRng rng(1);
  auto ens = honest(1, rng);
  ProtocolConfig cfg;
  cfg.gamma_policy = GammaPolicy::explicit_value(6);
  const auto x = gen::bits(rng, 12);
  const auto run = run_protocol1(x, ens, cfg, rng);
  EXPECT_FALSE(run.output.aborted);
  EXPECT_EQ(run.transcript.rounds.size(), 2u);
  EXPECT_EQ(run.transcript.x_tilde.size(), 4u);
  EXPECT_EQ(run.transcript.x_prime.size(), 8u);
  EXPECT_EQ(run.output.s.size(), 6u);
  EXPECT_EQ(run.output.r.size(), 8u);
  EXPECT_EQ(run.ledger.bits_consumed, 12u);
  EXPECT_EQ(run.ledger.bits_emitted_raw, 4u);
  EXPECT_EQ(run.ledger.bits_output_final, 14u);
  EXPECT_EQ(run.output.r, x.slice(4, 8));
}

TEST(RunProtocol1, ClassicalAbortsOnPPP) {
  SeededRng rng(2);
  auto ens = all_plus(rng);
  auto x = gen::bits(rng, 12);
  x.set(0, true);
  x.set(1, true);
  const auto run = run_protocol1(x, ens, ProtocolConfig{}, rng);
  EXPECT_TRUE(run.output.aborted);
  EXPECT_TRUE(run.transcript.aborted);
  EXPECT_EQ(run.transcript.rounds.size(), 1u);
  EXPECT_TRUE(run.output.s.empty());
  EXPECT_EQ(run.ledger.bits_output_final, 0u);
}

TEST(RunProtocol1, TallyModeCountsPasses) {
  SeededRng rng(3);
  auto ens = all_plus(rng);
  ProtocolConfig cfg;
  cfg.mode = RoundMode::Tally;
  const auto x = gen::bits(rng, 60);
  const auto run = run_protocol1(x, ens, cfg, rng);
  EXPECT_FALSE(run.output.aborted);
  std::size_t expected = 0;
  for (auto v : chunk_to_indices(x.slice(0, 20), 2)) expected += v != 3;
  EXPECT_EQ(run.transcript.passed, expected);
}

TEST(RunProtocol1, LengthMismatch) {
  SeededRng rng(4);
  auto ens = honest(1, rng);
  try {
    run_protocol1(BitString(13), ens, ProtocolConfig{}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(RunProtocol1, EnsembleCannotBeReused) {
  SeededRng rng(5);
  auto ens = honest(1, rng);
  run_protocol1(BitString(12), ens, ProtocolConfig{}, rng);
  try {
    run_protocol1(BitString(12), ens, ProtocolConfig{}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EnsembleReused);
  }
}

TEST(RunProtocol1, DecoyBitsNeverReachDevices) {
  // Bits outside x1 influence neither the settings nor the device outputs.
  SeededRng gen_rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const auto x = gen::bits(gen_rng, 30);
    auto y = x;
    for (std::size_t i = 10; i < 30; ++i) y.set(i, gen_rng.coin());
    SeededRng a(100 + trial), b(100 + trial);
    auto ea = honest(1, a);
    auto eb = honest(1, b);
    const auto ra = run_protocol1(x, ea, ProtocolConfig{}, a);
    const auto rb = run_protocol1(y, eb, ProtocolConfig{}, b);
    EXPECT_EQ(ra.transcript.x_tilde, rb.transcript.x_tilde);
    ASSERT_EQ(ra.transcript.rounds.size(), rb.transcript.rounds.size());
    for (std::size_t r = 0; r < ra.transcript.rounds.size(); ++r)
      EXPECT_EQ(ra.transcript.rounds[r].outcomes, rb.transcript.rounds[r].outcomes);
  }
}

TEST(RunProtocol1, HashIsLinearInHashInputForFixedSeed) {
  SeededRng rng(7);
  ProtocolConfig cfg;
  const auto x = gen::bits(rng, 300);
  auto ens = honest(1, rng);
  const auto run = run_protocol1(x, ens, cfg, rng);
  const IdentityToeplitzFamily f(run.transcript.x_prime.size(), run.gamma);
  EXPECT_EQ(run.output.s, apply_hash(f, run.transcript.x_prime, run.output.r.slice(0, f.seed_bits())));
  EXPECT_EQ(run.gamma, 182u);
}

TEST(RunProtocol1, AblationExposesX1) {
  SeededRng rng(8);
  ProtocolConfig cfg;
  cfg.include_x1_in_hash = false;
  cfg.gamma_policy = GammaPolicy::explicit_value(3);
  const auto x = gen::bits(rng, 12);
  auto ens = honest(1, rng);
  const auto run = run_protocol1(x, ens, cfg, rng);
  EXPECT_EQ(run.transcript.x_prime, run.transcript.x_tilde);
  EXPECT_EQ(run.output.unprocessed_x1, x.slice(0, 4));
}

TEST(RunProtocol1, Determinism) {
  for (std::uint64_t seed : {1, 2, 3}) {
    SeededRng a(seed), b(seed);
    auto ea = honest(2, a);
    auto eb = honest(2, b);
    ProtocolConfig cfg;
    cfg.k = 2;
    const auto xa = gen::bits(a, 120);
    const auto xb = gen::bits(b, 120);
    EXPECT_EQ(run_protocol1(xa, ea, cfg, a).output.combined(), run_protocol1(xb, eb, cfg, b).output.combined());
  }
}

TEST(RunIterated, SingleStageMatchesRunProtocol1) {
  SeededRng a(9), b(9);
  const auto x = gen::bits(a, 60);
  gen::bits(b, 60);
  std::vector<DeviceEnsemble> ens;
  ens.push_back(honest(1, a));
  auto single = honest(1, b);
  const auto it = run_iterated(x, ens, ProtocolConfig{}, a);
  const auto one = run_protocol1(x, single, ProtocolConfig{}, b);
  EXPECT_EQ(it.final_output, one.output.combined());
  EXPECT_EQ(it.ledger.bits_output_final, one.ledger.bits_output_final);
}

TEST(RunIterated, LengthGrowsAcrossStages) {
  SeededRng rng(10);
  const auto x = gen::bits(rng, 300);
  std::vector<DeviceEnsemble> ens;
  for (int i = 0; i < 3; ++i) ens.push_back(honest(1, rng));
  const auto it = run_iterated(x, ens, ProtocolConfig{}, rng);
  ASSERT_FALSE(it.aborted);
  ASSERT_EQ(it.stages.size(), 3u);
  std::size_t prev = x.size();
  for (const auto& st : it.stages) {
    EXPECT_GT(st.output_bits, prev);
    prev = st.output_bits;
  }
  std::size_t discarded = 0;
  for (const auto& st : it.stages) discarded += st.discarded_bits;
  EXPECT_EQ(it.ledger.bits_discarded, discarded);
}

TEST(RunIterated, SameEnsembleTwiceIsRejected) {
  SeededRng rng(11);
  std::vector<DeviceEnsemble> ens;
  ens.push_back(honest(1, rng));
  run_iterated(BitString(12), ens, ProtocolConfig{}, rng);
  try {
    run_iterated(BitString(12), ens, ProtocolConfig{}, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EnsembleReused);
  }
}

TEST(ExpansionReport, TrustedDoublingAndTripling) {
  for (auto [k, bits, final_bits, ratio] : std::vector<std::tuple<std::size_t, std::size_t, std::size_t, double>>{
           {1, 10, 20, 2.0}, {2, 9, 27, 3.0}}) {
    SeededRng rng(12);
    auto ens = honest(k, rng);
    ProtocolConfig cfg;
    cfg.k = k;
    cfg.trusted = true;
    const auto run = run_protocol1(gen::bits(rng, bits), ens, cfg, rng);
    EXPECT_EQ(run.ledger.bits_output_final, final_bits);
    const auto rep = expansion_report(run.ledger, cfg);
    EXPECT_DOUBLE_EQ(rep.achieved_ratio, ratio);
    EXPECT_DOUBLE_EQ(rep.predicted_ratio, ratio);
    EXPECT_FALSE(rep.ell.has_value());
  }
}

TEST(ExpansionReport, UntrustedApproachesFourThirds) {
  SeededRng rng(13);
  const std::size_t bits = 3000;
  auto ens = honest(1, rng);
  ProtocolConfig cfg;
  const auto run = run_protocol1(gen::bits(rng, bits), ens, cfg, rng);
  const auto rep = expansion_report(run.ledger, cfg);
  EXPECT_EQ(rep.gamma_label, "heuristic");
  ASSERT_TRUE(rep.ell.has_value());
  EXPECT_LE(std::abs(rep.achieved_ratio - 4.0 / 3.0), double(*rep.ell) / bits + 1e-12);
  EXPECT_NEAR(rep.achieved_ratio, rep.predicted_ratio, 1e-12);
}

TEST(ExactHashInput, AbortLeakAblationPosteriorIsPointMass) {
  ProtocolConfig cfg;
  cfg.include_x1_in_hash = false;
  const auto in = exact_hash_input(StrategySpec{AbortLeak{{0}, AbortLeakMode::OnlyAllP}}, cfg, 4);
  EXPECT_NEAR(in.pass_probability, 0.25, 1e-12);
  ASSERT_EQ(in.setting_posterior_first_target.size(), 4u);
  EXPECT_NEAR(in.setting_posterior_first_target[3], 1.0, 1e-12);
}

TEST(ExactHashInput, HonestIsUniform) {
  ProtocolConfig cfg;
  const auto in = exact_hash_input(StrategySpec{HonestQuantum{}}, cfg, 4);
  EXPECT_NEAR(in.pass_probability, 1.0, 1e-12);
  ASSERT_TRUE(in.joint.has_value());
  EXPECT_NEAR(min_entropy(*in.joint), 8.0, 1e-9);
}
