#include <gtest/gtest.h>

#include <numbers>

#include "direx/quantum.hpp"
#include "oracles.hpp"

using namespace direx;

namespace {

const double kInvSqrt2 = 1.0 / std::numbers::sqrt2;

std::vector<double> library_probs(const StateVector& s, const std::vector<Matrix>& obs) {
  std::vector<LocalObservable> lo;
  for (const auto& m : obs) lo.emplace_back(m);
  return joint_outcome_distribution(s, lo).probs;
}

Matrix rotate_about_z(const Matrix& m, double theta) {
  Matrix r(2, 2);
  r << std::polar(1.0, -theta / 2), 0, 0, std::polar(1.0, theta / 2);
  return r * m * r.adjoint();
}

std::vector<ObservablePair> honest_pairs() { return std::vector<ObservablePair>(3, pauli_xy_pair()); }

}  // namespace

TEST(GhzState, ThreeQubitAmplitudes) {
  const auto s = ghz_state(3);
  EXPECT_NEAR(s.amplitudes()(0).real(), kInvSqrt2, 1e-15);
  EXPECT_NEAR(s.amplitudes()(7).real(), -kInvSqrt2, 1e-15);
  for (int i = 1; i < 7; ++i) EXPECT_EQ(std::abs(s.amplitudes()(i)), 0.0);
}

TEST(GhzState, SevenQubitsAndOne) {
  const auto s7 = ghz_state(7);
  EXPECT_EQ(s7.dimension(), 128u);
  EXPECT_NEAR(s7.amplitudes().norm(), 1.0, 1e-15);
  const auto s1 = ghz_state(1);
  EXPECT_NEAR(s1.amplitudes()(0).real(), kInvSqrt2, 1e-15);
  EXPECT_NEAR(s1.amplitudes()(1).real(), -kInvSqrt2, 1e-15);
}

TEST(StateVector, RejectsBadInput) {
  EXPECT_THROW(StateVector(Vector::Ones(3) / std::sqrt(3.0)), Error);
  EXPECT_THROW(StateVector(Vector::Ones(4)), Error);
  try {
    ghz_state(15);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooManyQubits);
  }
}

TEST(LocalObservable, RejectsNonInvolutions) {
  EXPECT_THROW(LocalObservable(2.0 * pauli::x()), Error);
  Matrix nh(2, 2);
  nh << 0, 1, 0, 0;
  EXPECT_THROW(LocalObservable{nh}, Error);
}

TEST(JointOutcome, PPPIsUniformOverProductMinusOne) {
  const auto d = joint_outcome_distribution(ghz_state(3), std::vector<LocalObservable>(3, LocalObservable(pauli::x())));
  for (std::uint64_t i = 0; i < 8; ++i) {
    const auto t = OutcomeTuple::from_index(i, 3);
    EXPECT_NEAR(d.probs[i], t.product() == -1 ? 0.25 : 0.0, 1e-12) << i;
  }
}

TEST(JointOutcome, PQQIsUniformOverProductPlusOne) {
  const auto d = joint_outcome_distribution(
      ghz_state(3), {LocalObservable(pauli::x()), LocalObservable(pauli::y()), LocalObservable(pauli::y())});
  for (std::uint64_t i = 0; i < 8; ++i)
    EXPECT_NEAR(d.probs[i], OutcomeTuple::from_index(i, 3).product() == 1 ? 0.25 : 0.0, 1e-12);
}

TEST(JointOutcome, SingleQubitZeroStateInXBasis) {
  Vector v(2);
  v << 1, 0;
  const auto d = joint_outcome_distribution(StateVector(v), {LocalObservable(pauli::x())});
  EXPECT_NEAR(d.probs[0], 0.5, 1e-15);
  EXPECT_NEAR(d.probs[1], 0.5, 1e-15);
}

TEST(JointOutcome, MatchesKroneckerBornOracleOnRandomInstances) {
  SeededRng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.uniform_below(4);
    Vector psi(static_cast<Eigen::Index>(1) << n);
    for (Eigen::Index i = 0; i < psi.size(); ++i) psi(i) = Complex(rng.uniform01() - 0.5, rng.uniform01() - 0.5);
    psi.normalize();
    std::vector<Matrix> obs;
    for (std::size_t i = 0; i < n; ++i) {
      const Matrix u = random_unitary(2, rng);
      obs.push_back(u * pauli::z() * u.adjoint());
    }
    const auto lib = library_probs(StateVector(psi), obs);
    const auto ref = oracle::born(psi, obs);
    for (std::size_t o = 0; o < ref.size(); ++o) EXPECT_NEAR(lib[o], ref[o], 1e-12);
  }
}

TEST(JointOutcome, NonSignallingMarginals) {
  // Device 0's marginal must not depend on what the others measure.
  SeededRng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    Vector psi(8);
    for (Eigen::Index i = 0; i < 8; ++i) psi(i) = Complex(rng.uniform01() - 0.5, rng.uniform01() - 0.5);
    psi.normalize();
    const StateVector s(psi);
    const Matrix u0 = random_unitary(2, rng);
    const LocalObservable a(Matrix(u0 * pauli::z() * u0.adjoint()));
    double reference = -1;
    for (int variant = 0; variant < 4; ++variant) {
      const LocalObservable b(variant & 1 ? pauli::x() : pauli::y());
      const LocalObservable c(variant & 2 ? pauli::z() : pauli::x());
      const double m = joint_outcome_distribution(s, {a, b, c}).marginal(0)[0];
      if (reference < 0) reference = m;
      EXPECT_NEAR(m, reference, 1e-12);
    }
  }
}

TEST(QuantumRegister, SequentialMeasurementFollowsJointDistribution) {
  const auto psi = ghz_state(3);
  const std::vector<LocalObservable> obs{LocalObservable(pauli::x()), LocalObservable(pauli::x()),
                                         LocalObservable(pauli::x())};
  const auto exact = joint_outcome_distribution(psi, obs);
  SeededRng rng(23);
  std::vector<int> counts(8, 0);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    QuantumRegister reg(psi, {1, 1, 1});
    OutcomeTuple t;
    for (std::size_t d = 0; d < 3; ++d) t.values.push_back(reg.measure(d, obs[d], rng));
    ++counts[t.index()];
  }
  for (std::size_t i = 0; i < 8; ++i) {
    const double p = exact.probs[i];
    EXPECT_NEAR(counts[i] / double(n), p, 4 * std::sqrt(0.25 * 0.75 / n) + 1e-12);
  }
}

TEST(CanonicalInstance, IdentityCaseIsHonestGhz) {
  CanonicalInstance spec;
  spec.block_dims = {1, 1, 1};
  spec.block_weights = Vector::Ones(1);
  spec.local_unitaries = std::vector<Matrix>(3, Matrix::Identity(2, 2));
  const auto out = canonical_instance(spec);
  EXPECT_LT((out.state.amplitudes() - ghz_state(3).amplitudes()).norm(), 1e-15);
  for (const auto& p : out.pairs) {
    EXPECT_LT((p.p_obs.matrix() - pauli::x()).norm(), 1e-15);
    EXPECT_LT((p.q_obs.matrix() - pauli::y()).norm(), 1e-15);
  }
}

TEST(CanonicalInstance, JunkBlockWithRandomUnitariesPasses) {
  SeededRng rng(31);
  CanonicalInstance spec;
  spec.block_dims = {2, 1, 1};
  spec.block_weights = Vector::Constant(2, Complex(kInvSqrt2, 0));
  spec.local_unitaries = {random_unitary(4, rng), random_unitary(2, rng), random_unitary(2, rng)};
  const auto out = canonical_instance(spec);
  EXPECT_TRUE(verify_ghz_relations(out.state, out.pairs).pass);
  EXPECT_TRUE(verify_structure(out.state, out.pairs).pass);
}

TEST(CanonicalInstance, RejectsUnnormalizedWeights) {
  CanonicalInstance spec;
  spec.block_dims = {2, 1, 1};
  spec.block_weights = Vector::Ones(2);
  spec.local_unitaries = {Matrix::Identity(4, 4), Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
  try {
    canonical_instance(spec);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadSpec);
  }
  spec.block_dims = {3, 1, 1};
  spec.block_weights = Vector::Ones(3) / std::sqrt(3.0);
  spec.local_unitaries = {Matrix::Identity(6, 6), Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
  EXPECT_THROW(canonical_instance(spec), Error);
}

TEST(VerifyGhzRelations, HonestResidualsVanish) {
  const auto rep = verify_ghz_relations(ghz_state(3), honest_pairs());
  EXPECT_TRUE(rep.pass);
  EXPECT_LE(rep.max_residual(), 1e-12);
}

TEST(VerifyGhzRelations, QEqualPBreaksSecondRelation) {
  std::vector<ObservablePair> pairs(3, ObservablePair{LocalObservable(pauli::x()), LocalObservable(pauli::x())});
  const auto rep = verify_ghz_relations(ghz_state(3), pairs);
  EXPECT_FALSE(rep.pass);
  EXPECT_GE(rep.residuals[1], 1.0);
}

TEST(VerifyGhzRelations, RequiresThreeDevices) {
  try {
    verify_ghz_relations(ghz_state(2), std::vector<ObservablePair>(2, pauli_xy_pair()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(VerifyStructure, HonestResidualsVanish) {
  const auto rep = verify_structure(ghz_state(3), honest_pairs());
  EXPECT_TRUE(rep.pass);
  EXPECT_LE(rep.max_residual(), 1e-12);
}

TEST(VerifyStructure, CommutingModelsFailFEigencheck) {
  // Diagonal ±1 observables: F is diagonal with entries in {−1, 0, ½}, so ‖Fψ − ψ‖ ≥ ½.
  SeededRng rng(41);
  for (int trial = 0; trial < 200; ++trial) {
    Vector psi(8);
    for (Eigen::Index i = 0; i < 8; ++i) psi(i) = Complex(rng.uniform01() - 0.5, rng.uniform01() - 0.5);
    psi.normalize();
    std::vector<ObservablePair> pairs;
    for (int d = 0; d < 3; ++d) {
      Matrix p = Matrix::Identity(2, 2), q = Matrix::Identity(2, 2);
      if (rng.coin()) p = pauli::z();
      if (rng.coin()) q = pauli::z();
      if (rng.coin()) p = -p;
      if (rng.coin()) q = -q;
      pairs.emplace_back(LocalObservable(p), LocalObservable(q));
    }
    EXPECT_GE(verify_structure(StateVector(psi), pairs).f_residual, 0.5 - 1e-12);
  }
}

TEST(VerifyStructure, ProductStateFails) {
  Vector minus(2);
  minus << kInvSqrt2, -kInvSqrt2;
  const Vector psi = kron(kron(minus, minus), minus);
  EXPECT_FALSE(verify_structure(StateVector(psi), honest_pairs()).pass);
}

TEST(VerifyStructure, PerturbedObservableResidualMatchesRotationAngle) {
  // Rotating σx about z by θ on one device moves (P−P')ψ by 2 sin(θ/2).
  for (double theta : {0.1, 0.3, 1.0}) {
    auto pairs = honest_pairs();
    pairs[0].p_obs = LocalObservable(rotate_about_z(pauli::x(), theta));
    const auto rel = verify_ghz_relations(ghz_state(3), pairs);
    EXPECT_NEAR(rel.residuals[0], 2 * std::sin(theta / 2), 1e-12);
    EXPECT_FALSE(rel.pass);
  }
}

TEST(VerifyStructure, CanonicalPropertyRandomSpecs) {
  SeededRng rng(51);
  for (int trial = 0; trial < 25; ++trial) {
    const auto spec = random_canonical_spec(rng);
    const auto out = canonical_instance(spec);
    EXPECT_TRUE(verify_ghz_relations(out.state, out.pairs).pass);
    EXPECT_TRUE(verify_structure(out.state, out.pairs).pass);
  }
}
