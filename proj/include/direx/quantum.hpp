#pragma once

// Dense few-qubit statevector simulation and numerical checks of the
// GHZ-passing characterization: stabilizer-style relations, the F-operator
// eigencheck, per-device anticommutation, and the canonical family of
// passing states (blocks of GHZ states under local unitaries).
//
// Qubit 0 is the most significant bit of an amplitude index. A device owning
// m qubits occupies a consecutive run of them; devices are laid out in order.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "direx/bits.hpp"
#include "direx/error.hpp"

namespace direx {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr double kResidualTolerance = 1e-10;
inline constexpr std::size_t kMaxQubits = 14;

namespace pauli {
inline Matrix identity() { return Matrix::Identity(2, 2); }
inline Matrix x() {
  Matrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}
/// σy|0⟩ = i|1⟩, σy|1⟩ = −i|0⟩.
inline Matrix y() {
  Matrix m(2, 2);
  m << 0, Complex(0, -1), Complex(0, 1), 0;
  return m;
}
inline Matrix z() {
  Matrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}
}  // namespace pauli

inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Exponent m with 2^m == dim, or -1 when dim is not a power of two.
inline int log2_exact(std::size_t dim) {
  if (dim == 0 || (dim & (dim - 1)) != 0) return -1;
  int m = 0;
  while ((std::size_t{1} << m) < dim) ++m;
  return m;
}

class StateVector {
 public:
  StateVector(Vector amplitudes) : amps_(std::move(amplitudes)) {
    const int n = log2_exact(static_cast<std::size_t>(amps_.size()));
    require(n >= 0, ErrorCode::DimensionMismatch, "amplitude count is not a power of two");
    require(static_cast<std::size_t>(n) <= kMaxQubits, ErrorCode::TooManyQubits,
            std::to_string(n) + " qubits exceeds the simulator bound");
    require(std::abs(amps_.squaredNorm() - 1.0) <= kResidualTolerance, ErrorCode::BadSpec,
            "state is not normalized");
    qubits_ = static_cast<std::size_t>(n);
  }

  std::size_t qubits() const noexcept { return qubits_; }
  std::size_t dimension() const noexcept { return static_cast<std::size_t>(amps_.size()); }
  const Vector& amplitudes() const noexcept { return amps_; }
  Complex operator[](std::size_t i) const { return amps_(static_cast<Eigen::Index>(i)); }

 private:
  Vector amps_;
  std::size_t qubits_ = 0;
};

/// Hermitian involution on one device's Hilbert space (eigenvalues ±1).
class LocalObservable {
 public:
  LocalObservable(Matrix m) : m_(std::move(m)) {
    require(m_.rows() == m_.cols(), ErrorCode::DimensionMismatch, "observable is not square");
    require(log2_exact(static_cast<std::size_t>(m_.rows())) >= 0, ErrorCode::DimensionMismatch,
            "observable dimension is not a power of two");
    require((m_ - m_.adjoint()).norm() <= kResidualTolerance, ErrorCode::BadSpec,
            "observable is not Hermitian");
    const Matrix id = Matrix::Identity(m_.rows(), m_.cols());
    require((m_ * m_ - id).norm() <= kResidualTolerance, ErrorCode::BadSpec,
            "observable does not square to the identity");
  }

  const Matrix& matrix() const noexcept { return m_; }
  std::size_t dimension() const noexcept { return static_cast<std::size_t>(m_.rows()); }
  std::size_t qubits() const { return static_cast<std::size_t>(log2_exact(dimension())); }

 private:
  Matrix m_;
};

struct ObservablePair {
  LocalObservable p_obs;
  LocalObservable q_obs;

  ObservablePair(LocalObservable p, LocalObservable q) : p_obs(std::move(p)), q_obs(std::move(q)) {
    require(p_obs.dimension() == q_obs.dimension(), ErrorCode::DimensionMismatch,
            "P and Q observables differ in dimension");
  }
};

inline ObservablePair pauli_xy_pair() { return {LocalObservable(pauli::x()), LocalObservable(pauli::y())}; }

/// Per-device outcomes in {+1, −1}.
struct OutcomeTuple {
  std::vector<int> values;

  std::size_t size() const noexcept { return values.size(); }
  int product() const {
    int p = 1;
    for (int v : values) p *= v;
    return p;
  }
  /// Big-endian pattern index, bit set for a −1 outcome.
  std::uint64_t index() const {
    std::uint64_t idx = 0;
    for (int v : values) idx = (idx << 1) | (v < 0 ? 1U : 0U);
    return idx;
  }
  static OutcomeTuple from_index(std::uint64_t idx, std::size_t n) {
    OutcomeTuple t;
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) t.values[n - 1 - i] = ((idx >> i) & 1U) ? -1 : 1;
    return t;
  }
  friend bool operator==(const OutcomeTuple&, const OutcomeTuple&) = default;
};

/// Exact probabilities over all 2^n outcome patterns (see OutcomeTuple::index).
struct OutcomeDistribution {
  std::size_t n_devices = 0;
  std::vector<double> probs;

  double probability(const OutcomeTuple& t) const { return probs.at(t.index()); }
  double total() const {
    double s = 0;
    for (double p : probs) s += p;
    return s;
  }
  /// Marginal of one device: {P(+1), P(−1)}.
  std::array<double, 2> marginal(std::size_t device) const {
    std::array<double, 2> m{0.0, 0.0};
    for (std::uint64_t idx = 0; idx < probs.size(); ++idx)
      m[(idx >> (n_devices - 1 - device)) & 1U] += probs[idx];
    return m;
  }
};

/// Applies `op` to the `m` qubits starting at `offset` of an n-qubit vector.
inline Vector apply_local(const Vector& psi, std::size_t n, std::size_t offset, const Matrix& op) {
  const int m = log2_exact(static_cast<std::size_t>(op.rows()));
  require(m >= 0 && offset + static_cast<std::size_t>(m) <= n &&
              static_cast<std::size_t>(psi.size()) == (std::size_t{1} << n),
          ErrorCode::DimensionMismatch, "local operator does not fit the register");
  const std::size_t lo_dim = std::size_t{1} << (n - offset - static_cast<std::size_t>(m));
  const std::size_t mid_dim = std::size_t{1} << m;
  const std::size_t hi_dim = std::size_t{1} << offset;
  Vector out = Vector::Zero(psi.size());
  for (std::size_t hi = 0; hi < hi_dim; ++hi)
    for (std::size_t lo = 0; lo < lo_dim; ++lo)
      for (std::size_t r = 0; r < mid_dim; ++r) {
        Complex acc = 0;
        for (std::size_t c = 0; c < mid_dim; ++c) {
          const Complex a = op(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
          if (a != Complex(0)) acc += a * psi(static_cast<Eigen::Index>((hi * mid_dim + c) * lo_dim + lo));
        }
        out(static_cast<Eigen::Index>((hi * mid_dim + r) * lo_dim + lo)) = acc;
      }
  return out;
}

/// Qubit offsets of each device, validating that the devices tile the register.
inline std::vector<std::size_t> device_offsets(std::size_t n_qubits, const std::vector<std::size_t>& device_qubits) {
  std::vector<std::size_t> offsets;
  std::size_t acc = 0;
  for (auto q : device_qubits) {
    offsets.push_back(acc);
    acc += q;
  }
  require(acc == n_qubits, ErrorCode::DimensionMismatch,
          "observable dimensions do not partition the state's qubits");
  return offsets;
}

/// Applies one operator per device (tensor product) to the state.
inline Vector apply_product(const StateVector& state, const std::vector<const Matrix*>& ops) {
  std::vector<std::size_t> qs;
  for (const Matrix* op : ops) {
    const int m = log2_exact(static_cast<std::size_t>(op->rows()));
    require(m >= 0, ErrorCode::DimensionMismatch, "operator dimension is not a power of two");
    qs.push_back(static_cast<std::size_t>(m));
  }
  const auto offsets = device_offsets(state.qubits(), qs);
  Vector v = state.amplitudes();
  for (std::size_t i = 0; i < ops.size(); ++i) v = apply_local(v, state.qubits(), offsets[i], *ops[i]);
  return v;
}

inline StateVector ghz_state(std::size_t n) {
  require(n >= 1, ErrorCode::BadSpec, "GHZ state needs at least one qubit");
  require(n <= kMaxQubits, ErrorCode::TooManyQubits, std::to_string(n) + " qubits exceeds the simulator bound");
  Vector v = Vector::Zero(static_cast<Eigen::Index>(std::size_t{1} << n));
  v(0) = 1.0 / std::numbers::sqrt2;
  v(v.size() - 1) = -1.0 / std::numbers::sqrt2;
  return StateVector(std::move(v));
}

inline Matrix projector(const LocalObservable& obs, int outcome) {
  const Matrix id = Matrix::Identity(obs.matrix().rows(), obs.matrix().cols());
  return 0.5 * (id + static_cast<double>(outcome) * obs.matrix());
}

/// Born-rule distribution of the joint ±1 outcomes of one observable per device.
inline OutcomeDistribution joint_outcome_distribution(const StateVector& state,
                                                      const std::vector<LocalObservable>& observables) {
  std::vector<std::size_t> qs;
  for (const auto& o : observables) qs.push_back(o.qubits());
  const auto offsets = device_offsets(state.qubits(), qs);
  const std::size_t n_dev = observables.size();

  std::vector<std::array<Matrix, 2>> proj;
  for (const auto& o : observables) proj.push_back({projector(o, +1), projector(o, -1)});

  OutcomeDistribution dist;
  dist.n_devices = n_dev;
  dist.probs.assign(std::size_t{1} << n_dev, 0.0);

  // Depth-first over devices, sharing projected prefixes.
  auto descend = [&](auto&& self, const Vector& v, std::size_t dev, std::uint64_t idx) -> void {
    if (dev == n_dev) {
      dist.probs[idx] = v.squaredNorm();
      return;
    }
    for (int bit = 0; bit < 2; ++bit) {
      Vector w = apply_local(v, state.qubits(), offsets[dev], proj[dev][bit]);
      if (w.squaredNorm() == 0.0) continue;
      self(self, w, dev + 1, (idx << 1) | static_cast<std::uint64_t>(bit));
    }
  };
  descend(descend, state.amplitudes(), 0, 0);
  return dist;
}

/// Mutable register for sequential projective measurement (one device at a time).
class QuantumRegister {
 public:
  QuantumRegister(const StateVector& state, std::vector<std::size_t> device_qubits)
      : n_(state.qubits()), amps_(state.amplitudes()), offsets_(device_offsets(n_, device_qubits)) {}

  /// Measures `obs` on `device`, collapses the register, returns ±1.
  int measure(std::size_t device, const LocalObservable& obs, SeededRng& rng) {
    require(device < offsets_.size(), ErrorCode::BadSetting, "no such device");
    Vector plus = apply_local(amps_, n_, offsets_[device], projector(obs, +1));
    const double p_plus = plus.squaredNorm();
    const double total = amps_.squaredNorm();
    if (rng.uniform01() * total < p_plus) {
      amps_ = plus / std::sqrt(p_plus);
      return +1;
    }
    Vector minus = amps_ - plus;
    amps_ = minus / minus.norm();
    return -1;
  }

 private:
  std::size_t n_;
  Vector amps_;
  std::vector<std::size_t> offsets_;
};

struct CanonicalInstance {
  std::vector<std::size_t> block_dims;  // d_i per device; each a power of two
  Vector block_weights;                 // one weight per product block, Σ|a_j|² = 1
  std::vector<Matrix> local_unitaries;  // dimension 2·d_i each
};

struct CanonicalOutput {
  StateVector state;
  std::vector<ObservablePair> pairs;
};

/// Haar-random unitary via QR of a complex Ginibre matrix with phase fix.
inline Matrix random_unitary(std::size_t dim, SeededRng& rng) {
  auto gauss = [&rng]() {
    const double u1 = 1.0 - rng.uniform01();
    const double u2 = rng.uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  };
  const auto d = static_cast<Eigen::Index>(dim);
  Matrix g(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) g(i, j) = Complex(gauss(), gauss());
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j) {
    const Complex rjj = r(j, j);
    if (std::abs(rjj) > 0) q.col(j) *= rjj / std::abs(rjj);
  }
  return q;
}

inline CanonicalOutput canonical_instance(const CanonicalInstance& spec) {
  const std::size_t n_dev = spec.block_dims.size();
  require(n_dev >= 1, ErrorCode::BadSpec, "no devices");
  require(spec.local_unitaries.size() == n_dev, ErrorCode::BadSpec, "one unitary per device required");
  std::size_t n_blocks = 1;
  std::size_t n_qubits = 0;
  std::vector<std::size_t> junk_qubits;
  for (std::size_t i = 0; i < n_dev; ++i) {
    const int m = log2_exact(spec.block_dims[i]);
    require(m >= 0, ErrorCode::BadSpec, "block dimension must be a power of two");
    junk_qubits.push_back(static_cast<std::size_t>(m));
    n_blocks *= spec.block_dims[i];
    n_qubits += static_cast<std::size_t>(m) + 1;
  }
  require(n_qubits <= kMaxQubits, ErrorCode::TooManyQubits, "canonical instance too large");
  require(static_cast<std::size_t>(spec.block_weights.size()) == n_blocks, ErrorCode::BadSpec,
          "need one weight per block");
  require(std::abs(spec.block_weights.squaredNorm() - 1.0) <= kResidualTolerance, ErrorCode::BadSpec,
          "block weights are not normalized");
  for (std::size_t i = 0; i < n_dev; ++i) {
    const Matrix& u = spec.local_unitaries[i];
    const auto dim = static_cast<Eigen::Index>(2 * spec.block_dims[i]);
    require(u.rows() == dim && u.cols() == dim, ErrorCode::BadSpec, "unitary has the wrong dimension");
    require((u * u.adjoint() - Matrix::Identity(dim, dim)).norm() <= kResidualTolerance, ErrorCode::BadSpec,
            "local map is not unitary");
  }

  // Σ_j a_j |j⟩ ⊗ |GHZ⟩ with device i holding (junk_i, qubit_i).
  Vector psi = Vector::Zero(static_cast<Eigen::Index>(std::size_t{1} << n_qubits));
  const double g = 1.0 / std::numbers::sqrt2;
  for (std::size_t j = 0; j < n_blocks; ++j) {
    std::vector<std::size_t> parts(n_dev);
    std::size_t rem = j;
    for (std::size_t i = n_dev; i-- > 0;) {
      parts[i] = rem % spec.block_dims[i];
      rem /= spec.block_dims[i];
    }
    for (int branch = 0; branch < 2; ++branch) {
      std::size_t idx = 0;
      for (std::size_t i = 0; i < n_dev; ++i) {
        idx = (idx << junk_qubits[i]) | parts[i];
        idx = (idx << 1) | static_cast<std::size_t>(branch);
      }
      psi(static_cast<Eigen::Index>(idx)) += spec.block_weights(static_cast<Eigen::Index>(j)) * (branch ? -g : g);
    }
  }

  std::size_t offset = 0;
  std::vector<ObservablePair> pairs;
  for (std::size_t i = 0; i < n_dev; ++i) {
    const Matrix& u = spec.local_unitaries[i];
    psi = apply_local(psi, n_qubits, offset, u);
    offset += junk_qubits[i] + 1;
    const Matrix id = Matrix::Identity(static_cast<Eigen::Index>(spec.block_dims[i]),
                                       static_cast<Eigen::Index>(spec.block_dims[i]));
    Matrix p = u * kron(id, pauli::x()) * u.adjoint();
    Matrix q = u * kron(id, pauli::y()) * u.adjoint();
    // Remove rounding asymmetry before the Hermiticity check.
    p = 0.5 * (p + p.adjoint()).eval();
    q = 0.5 * (q + q.adjoint()).eval();
    pairs.emplace_back(LocalObservable(std::move(p)), LocalObservable(std::move(q)));
  }
  psi.normalize();
  return {StateVector(std::move(psi)), std::move(pairs)};
}

/// Residual norms of the four GHZ relations:
///   [0] ‖(P1P2P3 + 1)Ψ‖, [1] ‖(Q1Q2P3 − 1)Ψ‖, [2] ‖(Q1P2Q3 − 1)Ψ‖, [3] ‖(P1Q2Q3 − 1)Ψ‖.
struct RelationReport {
  std::array<double, 4> residuals{};
  bool pass = false;

  double max_residual() const {
    double m = 0;
    for (double r : residuals) m = std::max(m, r);
    return m;
  }
};

struct StructureReport {
  double f_residual = 0;                   // ‖FΨ − Ψ‖
  std::vector<double> anticommutator;      // ‖({P_i, Q_i} ⊗ 1)Ψ‖ per device
  bool pass = false;

  double max_residual() const {
    double m = f_residual;
    for (double r : anticommutator) m = std::max(m, r);
    return m;
  }
};

namespace detail {
inline void require_three_devices(const StateVector& state, const std::vector<ObservablePair>& pairs) {
  require(pairs.size() == 3, ErrorCode::DimensionMismatch, "GHZ relations need exactly three devices");
  std::vector<std::size_t> qs;
  for (const auto& p : pairs) qs.push_back(p.p_obs.qubits());
  device_offsets(state.qubits(), qs);
}

// Choice per device: false = P, true = Q.
inline Vector apply_choice(const StateVector& state, const std::vector<ObservablePair>& pairs,
                           std::array<bool, 3> use_q) {
  std::vector<const Matrix*> ops;
  for (std::size_t i = 0; i < 3; ++i)
    ops.push_back(use_q[i] ? &pairs[i].q_obs.matrix() : &pairs[i].p_obs.matrix());
  return apply_product(state, ops);
}
}  // namespace detail

inline RelationReport verify_ghz_relations(const StateVector& state, const std::vector<ObservablePair>& pairs) {
  detail::require_three_devices(state, pairs);
  const Vector& psi = state.amplitudes();
  RelationReport rep;
  rep.residuals[0] = (detail::apply_choice(state, pairs, {false, false, false}) + psi).norm();
  rep.residuals[1] = (detail::apply_choice(state, pairs, {true, true, false}) - psi).norm();
  rep.residuals[2] = (detail::apply_choice(state, pairs, {true, false, true}) - psi).norm();
  rep.residuals[3] = (detail::apply_choice(state, pairs, {false, true, true}) - psi).norm();
  rep.pass = rep.max_residual() <= kResidualTolerance;
  return rep;
}

inline StructureReport verify_structure(const StateVector& state, const std::vector<ObservablePair>& pairs) {
  detail::require_three_devices(state, pairs);
  const Vector& psi = state.amplitudes();
  const Vector f_psi = 0.25 * (detail::apply_choice(state, pairs, {false, true, true}) +
                               detail::apply_choice(state, pairs, {true, false, true}) +
                               detail::apply_choice(state, pairs, {true, true, false}) -
                               detail::apply_choice(state, pairs, {false, false, false}));
  StructureReport rep;
  rep.f_residual = (f_psi - psi).norm();

  std::vector<std::size_t> qs;
  for (const auto& p : pairs) qs.push_back(p.p_obs.qubits());
  const auto offsets = device_offsets(state.qubits(), qs);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Matrix& p = pairs[i].p_obs.matrix();
    const Matrix& q = pairs[i].q_obs.matrix();
    const Matrix anti = p * q + q * p;
    rep.anticommutator.push_back(apply_local(psi, state.qubits(), offsets[i], anti).norm());
  }
  rep.pass = rep.max_residual() <= kResidualTolerance;
  return rep;
}

/// Random valid canonical instance: block dimensions drawn from the powers of
/// two up to `max_block_dim`, Gaussian block weights, Haar local unitaries.
inline CanonicalInstance random_canonical_spec(SeededRng& rng, std::size_t n_devices = 3,
                                               std::size_t max_block_dim = 4) {
  std::vector<std::size_t> choices;
  for (std::size_t d = 1; d <= max_block_dim; d *= 2) choices.push_back(d);
  CanonicalInstance spec;
  std::size_t blocks = 1;
  for (std::size_t i = 0; i < n_devices; ++i) {
    spec.block_dims.push_back(choices[rng.uniform_below(choices.size())]);
    blocks *= spec.block_dims.back();
  }
  Vector w(static_cast<Eigen::Index>(blocks));
  for (Eigen::Index j = 0; j < w.size(); ++j) w(j) = Complex(rng.uniform01() - 0.5, rng.uniform01() - 0.5);
  spec.block_weights = w / w.norm();
  for (std::size_t d : spec.block_dims) spec.local_unitaries.push_back(random_unitary(2 * d, rng));
  return spec;
}

}  // namespace direx
