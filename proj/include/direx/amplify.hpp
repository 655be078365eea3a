#pragma once

// Privacy amplification and classical side-information analytics.
//
// Hash families are linear maps over GF(2) selected by a seed. Inputs and
// outputs follow the bit-order convention of bits.hpp; when enumerating,
// a string of n bits is identified with its big-endian integer value.

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "direx/bits.hpp"
#include "direx/error.hpp"
#include "direx/rational.hpp"

namespace direx {

/// t×n Toeplitz matrix M[i][j] = seed[i − j + n − 1]; seed has n + t − 1 bits
/// (none when t = 0). Seed bits 0..n−1 hold the first row right to left, bits
/// n−1..n+t−2 the first column top to bottom.
struct ToeplitzFamily {
  std::size_t n = 0;
  std::size_t t = 0;

  ToeplitzFamily(std::size_t n_in, std::size_t t_out) : n(n_in), t(t_out) {
    require(t <= n, ErrorCode::LengthMismatch, "Toeplitz output longer than input");
  }
  std::size_t input_bits() const noexcept { return n; }
  std::size_t output_bits() const noexcept { return t; }
  std::size_t seed_bits() const noexcept { return t == 0 ? 0 : n + t - 1; }
  bool entry(const BitString& seed, std::size_t i, std::size_t j) const { return seed[i + n - 1 - j]; }
};

/// [I_t | T] with T a t×(n−t) Toeplitz matrix: s = x_head ⊕ T·x_tail.
/// Two-universal with an (n−1)-bit seed, so a seed as long as the input suffices.
struct IdentityToeplitzFamily {
  std::size_t n = 0;
  std::size_t t = 0;

  IdentityToeplitzFamily(std::size_t n_in, std::size_t t_out) : n(n_in), t(t_out) {
    require(t <= n, ErrorCode::LengthMismatch, "hash output longer than input");
  }
  std::size_t input_bits() const noexcept { return n; }
  std::size_t output_bits() const noexcept { return t; }
  std::size_t seed_bits() const noexcept { return (t == 0 || t == n) ? 0 : n - 1; }
  bool entry(const BitString& seed, std::size_t i, std::size_t j) const {
    if (j < t) return i == j;
    return seed[i + (n - t) - 1 - (j - t)];
  }
};

template <class F>
concept LinearHashFamily = requires(const F& f, const BitString& seed, std::size_t i) {
  { f.input_bits() } -> std::convertible_to<std::size_t>;
  { f.output_bits() } -> std::convertible_to<std::size_t>;
  { f.seed_bits() } -> std::convertible_to<std::size_t>;
  { f.entry(seed, i, i) } -> std::convertible_to<bool>;
};

template <LinearHashFamily F>
BitString apply_hash(const F& family, const BitString& x, const BitString& seed) {
  require(x.size() == family.input_bits(), ErrorCode::LengthMismatch,
          "hash input has " + std::to_string(x.size()) + " bits, family expects " +
              std::to_string(family.input_bits()));
  require(seed.size() >= family.seed_bits(), ErrorCode::SeedTooShort,
          "seed has " + std::to_string(seed.size()) + " bits, family needs " + std::to_string(family.seed_bits()));
  BitString out(family.output_bits());
  for (std::size_t i = 0; i < family.output_bits(); ++i) {
    bool acc = false;
    for (std::size_t j = 0; j < family.input_bits(); ++j) acc ^= x[j] && family.entry(seed, i, j);
    out.set(i, acc);
  }
  return out;
}

struct ToeplitzSeed {
  BitString bits;
  std::size_t n = 0;
  std::size_t t = 0;

  ToeplitzSeed(BitString b, std::size_t n_in, std::size_t t_out) : bits(std::move(b)), n(n_in), t(t_out) {
    require(t <= n, ErrorCode::LengthMismatch, "Toeplitz output longer than input");
    require(bits.size() == ToeplitzFamily(n, t).seed_bits(), ErrorCode::LengthMismatch,
            "Toeplitz seed must have n + t - 1 bits");
  }
};

inline BitString toeplitz_hash(const BitString& x, const ToeplitzSeed& seed) {
  return apply_hash(ToeplitzFamily(seed.n, seed.t), x, seed.bits);
}

namespace detail {

inline std::uint64_t parity(std::uint64_t v) { return static_cast<std::uint64_t>(std::popcount(v) & 1); }

/// Row masks of the matrix for one seed; bit (n−1−j) of row i holds M[i][j].
template <LinearHashFamily F>
std::vector<std::uint64_t> row_masks(const F& family, const BitString& seed) {
  const std::size_t n = family.input_bits();
  std::vector<std::uint64_t> rows(family.output_bits(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (family.entry(seed, i, j)) rows[i] |= std::uint64_t{1} << (n - 1 - j);
  return rows;
}

inline std::uint64_t apply_rows(const std::vector<std::uint64_t>& rows, std::uint64_t x) {
  std::uint64_t s = 0;
  for (auto row : rows) s = (s << 1) | parity(row & x);
  return s;
}

inline constexpr std::size_t kMaxEnumerationLog2 = 26;

template <LinearHashFamily F>
void require_enumerable(const F& family) {
  require(family.input_bits() <= 20 && family.seed_bits() <= 20 &&
              family.input_bits() + family.seed_bits() <= kMaxEnumerationLog2,
          ErrorCode::TooLarge, "family too large for exhaustive enumeration");
}

}  // namespace detail

/// Largest fraction of seeds on which two distinct inputs collide, exact.
/// Linearity is confirmed on every (seed, input) first, after which the
/// pair (a, b) collides exactly when the difference a ⊕ b hashes to zero.
template <LinearHashFamily F>
Rational family_collision_check(const F& family) {
  detail::require_enumerable(family);
  const std::size_t n = family.input_bits();
  const std::uint64_t n_inputs = std::uint64_t{1} << n;
  const std::uint64_t n_seeds = std::uint64_t{1} << family.seed_bits();
  std::vector<std::uint32_t> zero_count(n_inputs, 0);
  for (std::uint64_t r = 0; r < n_seeds; ++r) {
    const BitString seed = BitString::from_index(r, family.seed_bits());
    const auto rows = detail::row_masks(family, seed);
    std::vector<std::uint64_t> basis(n);
    for (std::size_t j = 0; j < n; ++j) basis[j] = apply_hash(family, BitString::from_index(std::uint64_t{1} << (n - 1 - j), n), seed).to_index();
    for (std::uint64_t x = 0; x < n_inputs; ++x) {
      const std::uint64_t h = detail::apply_rows(rows, x);
      std::uint64_t lin = 0;
      for (std::size_t j = 0; j < n; ++j)
        if ((x >> (n - 1 - j)) & 1U) lin ^= basis[j];
      require(h == lin, ErrorCode::InvariantViolation, "hash family is not linear");
      if (h == 0) ++zero_count[x];
    }
  }
  std::uint32_t worst = 0;
  for (std::uint64_t d = 1; d < n_inputs; ++d) worst = std::max(worst, zero_count[d]);
  if (n_inputs < 2) return Rational(0);
  return Rational(static_cast<std::int64_t>(worst), static_cast<std::int64_t>(n_seeds));
}

/// Dense probability table over (value, e): `value_bits`-bit strings times a
/// finite adversary alphabet.
class JointDistribution {
 public:
  static constexpr double kNormTolerance = 1e-12;

  JointDistribution(std::size_t value_bits, std::size_t n_symbols, std::vector<double> probs)
      : value_bits_(value_bits), n_symbols_(n_symbols), p_(std::move(probs)) {
    require(value_bits_ <= 24, ErrorCode::TooLarge, "value space too large");
    require(n_symbols_ >= 1 && p_.size() == n_values() * n_symbols_, ErrorCode::InvalidDistribution,
            "table size does not match value and symbol counts");
    double total = 0;
    for (double v : p_) {
      require(std::isfinite(v) && v >= 0.0, ErrorCode::InvalidDistribution, "negative or non-finite probability");
      total += v;
    }
    require(std::abs(total - 1.0) <= kNormTolerance * std::max<double>(1.0, static_cast<double>(p_.size()) / 64.0),
            ErrorCode::InvalidDistribution, "probabilities do not sum to 1");
  }

  std::size_t value_bits() const noexcept { return value_bits_; }
  std::size_t n_values() const noexcept { return std::size_t{1} << value_bits_; }
  std::size_t n_symbols() const noexcept { return n_symbols_; }
  double operator()(std::size_t value, std::size_t e) const { return p_[value * n_symbols_ + e]; }
  const std::vector<double>& raw() const noexcept { return p_; }

  std::vector<double> symbol_marginal() const {
    std::vector<double> m(n_symbols_, 0.0);
    for (std::size_t x = 0; x < n_values(); ++x)
      for (std::size_t e = 0; e < n_symbols_; ++e) m[e] += (*this)(x, e);
    return m;
  }

 private:
  std::size_t value_bits_;
  std::size_t n_symbols_;
  std::vector<double> p_;
};

/// Guessing probability Σ_e max_x P(x, e).
inline double guessing_probability(const JointDistribution& joint) {
  double g = 0;
  for (std::size_t e = 0; e < joint.n_symbols(); ++e) {
    double m = 0;
    for (std::size_t x = 0; x < joint.n_values(); ++x) m = std::max(m, joint(x, e));
    g += m;
  }
  return g;
}

inline double min_entropy(const JointDistribution& joint) { return -std::log2(guessing_probability(joint)); }

/// Smoothed min-entropy over sub-distributions obtained by removing at most
/// `epsilon` total mass. Removal is water-filling: each unit of mass lowers the
/// top level of some symbol e by 1/c, where c is the number of atoms tied at
/// that level, so mass always goes to the symbol with the fewest tied atoms.
inline double smooth_min_entropy(const JointDistribution& joint, double epsilon) {
  require(epsilon >= 0.0 && epsilon < 1.0, ErrorCode::BadEpsilon, "epsilon must lie in [0, 1)");
  if (epsilon == 0.0) return min_entropy(joint);

  struct Column {
    std::vector<double> atoms;  // descending
    std::size_t tied = 1;       // atoms at the current level
    double level = 0;
  };
  std::vector<Column> cols(joint.n_symbols());
  for (std::size_t e = 0; e < joint.n_symbols(); ++e) {
    auto& c = cols[e];
    for (std::size_t x = 0; x < joint.n_values(); ++x) c.atoms.push_back(joint(x, e));
    std::sort(c.atoms.begin(), c.atoms.end(), std::greater<>());
    c.level = c.atoms.front();
    while (c.tied < c.atoms.size() && c.atoms[c.tied] >= c.level) ++c.tied;
  }

  double budget = epsilon;
  while (budget > 0) {
    Column* best = nullptr;
    for (auto& c : cols)
      if (c.level > 0 && (!best || c.tied < best->tied)) best = &c;
    if (!best) break;
    const double next = best->tied < best->atoms.size() ? best->atoms[best->tied] : 0.0;
    const double drop = best->level - next;
    const double cost = drop * static_cast<double>(best->tied);
    if (cost >= budget) {
      best->level -= budget / static_cast<double>(best->tied);
      budget = 0;
      break;
    }
    budget -= cost;
    best->level = next;
    while (best->tied < best->atoms.size() && best->atoms[best->tied] >= best->level) ++best->tied;
  }
  double g = 0;
  for (const auto& c : cols) g += c.level;
  return -std::log2(g);
}

/// Right-hand side of the leftover hash bound: ε + ½·2^(−(H − t)/2).
inline double theorem1_bound(double hmin_eps, double t, double epsilon) {
  return epsilon + 0.5 * std::exp2(-(hmin_eps - t) / 2.0);
}

/// Output length for a target security slack ℓ: t = H − ℓ.
inline double leftover_output_length(double hmin_eps, double ell) { return hmin_eps - ell; }

enum class PrivacyVerdict { DeltaPrivate, NotDeltaPrivate };

struct PrivacyAssessment {
  double distance = 0;        // min over q(e) of the trace distance to uniform ⊗ q
  double bound = 0;           // same distance with q fixed to the actual marginal of e
  double delta_target = 0;
  PrivacyVerdict verdict = PrivacyVerdict::DeltaPrivate;
};

/// min_q ½ Σ_{s,e} |P(s,e) − q(e)/|S||, solved exactly.
///
/// The objective separates over e into convex piecewise-linear functions of
/// q(e) with breakpoints |S|·P(s,e). Starting from q = 0 (objective ½), unit
/// mass is poured into segments in order of increasing slope.
inline PrivacyAssessment distance_to_ideal(const JointDistribution& joint, double delta_target = 0.0) {
  const double S = static_cast<double>(joint.n_values());
  struct Segment {
    double slope;
    double length;
  };
  std::vector<Segment> segs;
  for (std::size_t e = 0; e < joint.n_symbols(); ++e) {
    std::vector<double> bp;
    for (std::size_t s = 0; s < joint.n_values(); ++s) bp.push_back(S * joint(s, e));
    std::sort(bp.begin(), bp.end());
    double prev = 0;
    for (std::size_t m = 0; m < bp.size(); ++m) {
      const double slope = (2.0 * static_cast<double>(m) - S) / (2.0 * S);
      if (bp[m] > prev) segs.push_back({slope, bp[m] - prev});
      prev = bp[m];
    }
    segs.push_back({0.5, std::numeric_limits<double>::infinity()});
  }
  std::stable_sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) { return a.slope < b.slope; });
  double remaining = 1.0;
  double value = 0.5;
  for (const auto& sg : segs) {
    if (remaining <= 0) break;
    const double take = std::min(remaining, sg.length);
    value += take * sg.slope;
    remaining -= take;
  }

  const auto marg = joint.symbol_marginal();
  double marginal_bound = 0;
  for (std::size_t s = 0; s < joint.n_values(); ++s)
    for (std::size_t e = 0; e < joint.n_symbols(); ++e) marginal_bound += std::abs(joint(s, e) - marg[e] / S);
  marginal_bound *= 0.5;

  PrivacyAssessment a;
  a.distance = std::clamp(value, 0.0, 1.0);
  a.bound = marginal_bound;
  a.delta_target = delta_target;
  a.verdict = a.distance <= delta_target ? PrivacyVerdict::DeltaPrivate : PrivacyVerdict::NotDeltaPrivate;
  return a;
}

/// Joint distribution of (f_R(X), (E, R)) for a uniform seed R.
template <LinearHashFamily F>
JointDistribution hashed_joint(const JointDistribution& joint_x_e, const F& family) {
  require(joint_x_e.value_bits() == family.input_bits(), ErrorCode::LengthMismatch,
          "distribution and family disagree on input length");
  detail::require_enumerable(family);
  const std::size_t n_e = joint_x_e.n_symbols();
  const std::uint64_t n_seeds = std::uint64_t{1} << family.seed_bits();
  require(n_e * n_seeds * (std::size_t{1} << family.output_bits()) <= (std::size_t{1} << 26), ErrorCode::TooLarge,
          "hashed table too large");
  const std::size_t n_symbols = n_e * n_seeds;
  std::vector<double> table((std::size_t{1} << family.output_bits()) * n_symbols, 0.0);
  const double w = 1.0 / static_cast<double>(n_seeds);
  for (std::uint64_t r = 0; r < n_seeds; ++r) {
    const auto rows = detail::row_masks(family, BitString::from_index(r, family.seed_bits()));
    for (std::size_t x = 0; x < joint_x_e.n_values(); ++x) {
      const std::uint64_t s = detail::apply_rows(rows, x);
      for (std::size_t e = 0; e < n_e; ++e) table[s * n_symbols + e * n_seeds + r] += w * joint_x_e(x, e);
    }
  }
  return JointDistribution(family.output_bits(), n_symbols, std::move(table));
}

struct LeftoverHashReport {
  double hmin_eps = 0;
  double distance = 0;
  double bound = 0;
  bool holds = false;
};

/// Exact check of the leftover hash bound with the seed included in the
/// adversary's information.
template <LinearHashFamily F>
LeftoverHashReport verify_leftover_hash(const JointDistribution& joint_x_e, const F& family, double epsilon) {
  LeftoverHashReport rep;
  rep.hmin_eps = smooth_min_entropy(joint_x_e, epsilon);
  rep.distance = distance_to_ideal(hashed_joint(joint_x_e, family)).distance;
  rep.bound = theorem1_bound(rep.hmin_eps, static_cast<double>(family.output_bits()), epsilon);
  rep.holds = rep.distance <= rep.bound + 1e-12;
  return rep;
}

inline LeftoverHashReport verify_leftover_hash(const JointDistribution& joint_x_e, std::size_t t, double epsilon) {
  return verify_leftover_hash(joint_x_e, ToeplitzFamily(joint_x_e.value_bits(), t), epsilon);
}

}  // namespace direx
