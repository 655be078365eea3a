#pragma once

// Reference computations used only by the tests. Each one takes the slow,
// direct route so it shares no code path with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "direx/amplify.hpp"
#include "direx/bits.hpp"
#include "direx/quantum.hpp"

namespace oracle {

using direx::Matrix;
using direx::Vector;

/// Born rule on the full tensor product: P(o) = ⟨ψ| ⊗_i Π_i(o_i) |ψ⟩.
/// Outcome index bit (n−1−i) set means device i read −1.
inline std::vector<double> born(const Vector& psi, const std::vector<Matrix>& observables) {
  const std::size_t n = observables.size();
  std::vector<double> out(std::size_t{1} << n, 0.0);
  for (std::size_t o = 0; o < out.size(); ++o) {
    Matrix full = Matrix::Identity(1, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const bool minus = (o >> (n - 1 - i)) & 1U;
      const auto d = observables[i].rows();
      const Matrix proj = 0.5 * (Matrix::Identity(d, d) + (minus ? -1.0 : 1.0) * observables[i]);
      Matrix next(full.rows() * d, full.cols() * d);
      for (Eigen::Index a = 0; a < full.rows(); ++a)
        for (Eigen::Index b = 0; b < full.cols(); ++b) next.block(a * d, b * d, d, d) = full(a, b) * proj;
      full = next;
    }
    out[o] = (psi.adjoint() * full * psi)(0, 0).real();
  }
  return out;
}

/// Dense GF(2) matrix of the Toeplitz family built from its defining property:
/// entry (i, j) depends only on i − j. The first row is read from the seed
/// tail reversed, the first column from seed[n−1 ..].
inline std::vector<std::vector<int>> toeplitz_matrix(std::size_t n, std::size_t t, const direx::BitString& seed) {
  std::vector<std::vector<int>> m(t, std::vector<int>(n, 0));
  for (std::size_t j = 0; j < n; ++j) m[0][j] = seed[n - 1 - j];
  for (std::size_t i = 1; i < t; ++i) m[i][0] = seed[n - 1 + i];
  for (std::size_t i = 1; i < t; ++i)
    for (std::size_t j = 1; j < n; ++j) m[i][j] = m[i - 1][j - 1];
  return m;
}

inline direx::BitString gf2_multiply(const std::vector<std::vector<int>>& m, const direx::BitString& x) {
  direx::BitString out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    int acc = 0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += m[i][j] * x[j];
    out.set(i, acc % 2 == 1);
  }
  return out;
}

/// Best guessing strategy found by trying every map e -> x.
inline double guessing_probability(const direx::JointDistribution& joint) {
  const std::size_t nx = joint.n_values();
  const std::size_t ne = joint.n_symbols();
  std::vector<std::size_t> guess(ne, 0);
  double best = 0;
  while (true) {
    double p = 0;
    for (std::size_t e = 0; e < ne; ++e) p += joint(guess[e], e);
    best = std::max(best, p);
    std::size_t pos = 0;
    while (pos < ne && ++guess[pos] == nx) guess[pos++] = 0;
    if (pos == ne) break;
  }
  return best;
}

/// Smallest guessing probability reachable by removing at most eps of mass,
/// removal amounts restricted to multiples of eps/steps. Exhaustive.
inline double smoothed_guessing_grid(const direx::JointDistribution& joint, double eps, int steps) {
  const std::vector<double>& atoms = joint.raw();
  const double unit = eps / steps;
  std::vector<double> work = atoms;
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, int)> rec = [&](std::size_t idx, int left) {
    if (idx == atoms.size()) {
      double g = 0;
      for (std::size_t e = 0; e < joint.n_symbols(); ++e) {
        double m = 0;
        for (std::size_t x = 0; x < joint.n_values(); ++x) m = std::max(m, work[x * joint.n_symbols() + e]);
        g += m;
      }
      best = std::min(best, g);
      return;
    }
    for (int u = 0; u <= left; ++u) {
      const double take = u * unit;
      if (take > atoms[idx] + 1e-15) break;
      work[idx] = atoms[idx] - take;
      rec(idx + 1, left - u);
    }
    work[idx] = atoms[idx];
  };
  rec(0, steps);
  return best;
}

/// ½ Σ |P(s,e) − q(e)/|S|| minimized over q on a grid of the simplex.
inline double distance_grid(const direx::JointDistribution& joint, double step) {
  const std::size_t ne = joint.n_symbols();
  const double S = static_cast<double>(joint.n_values());
  const int cells = static_cast<int>(std::lround(1.0 / step));
  auto objective = [&](const std::vector<double>& q) {
    double d = 0;
    for (std::size_t s = 0; s < joint.n_values(); ++s)
      for (std::size_t e = 0; e < ne; ++e) d += std::abs(joint(s, e) - q[e] / S);
    return 0.5 * d;
  };
  std::vector<double> q(ne, 0.0);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, int)> rec = [&](std::size_t e, int left) {
    if (e + 1 == ne) {
      q[e] = left * step;
      best = std::min(best, objective(q));
      return;
    }
    for (int u = 0; u <= left; ++u) {
      q[e] = u * step;
      rec(e + 1, left - u);
    }
  };
  rec(0, cells);
  return best;
}

}  // namespace oracle

namespace gen {

/// Hand-rolled generators for property tests; all draw from SeededRng so a
/// failing case is reproduced by its seed.
inline direx::BitString bits(direx::SeededRng& rng, std::size_t n) { return direx::random_bits(rng, n); }

inline direx::JointDistribution joint(direx::SeededRng& rng, std::size_t value_bits, std::size_t n_symbols,
                                      double zero_fraction = 0.2) {
  std::vector<double> p((std::size_t{1} << value_bits) * n_symbols);
  double total = 0;
  for (auto& v : p) {
    v = rng.uniform01() < zero_fraction ? 0.0 : -std::log(1.0 - rng.uniform01());
    total += v;
  }
  if (total == 0) {
    p[0] = 1;
    total = 1;
  }
  for (auto& v : p) v /= total;
  return direx::JointDistribution(value_bits, n_symbols, std::move(p));
}

}  // namespace gen
