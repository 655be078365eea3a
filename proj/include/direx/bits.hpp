#pragma once

// Bit strings, seeded randomness and randomness accounting.
//
// Bit order convention: index 0 is the leftmost bit; multi-bit chunks are
// read big-endian. Every module (setting selection, hash inputs, seeds)
// follows this.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "direx/error.hpp"

namespace direx {

class BitString {
 public:
  BitString() = default;
  explicit BitString(std::size_t n, bool value = false) : bits_(n, value ? 1 : 0) {}
  BitString(std::initializer_list<int> bits) {
    bits_.reserve(bits.size());
    for (int b : bits) bits_.push_back(b ? 1 : 0);
  }

  /// Parses a string of '0'/'1' characters. Anything else throws BadSpec.
  static BitString parse(std::string_view text) {
    BitString out;
    out.bits_.reserve(text.size());
    for (char c : text) {
      require(c == '0' || c == '1', ErrorCode::BadSpec, "bit string may contain only 0 and 1");
      out.bits_.push_back(c == '1' ? 1 : 0);
    }
    return out;
  }

  /// Big-endian encoding of `value` in `width` bits.
  static BitString from_index(std::uint64_t value, std::size_t width) {
    require(width <= 64, ErrorCode::BadChunking, "width above 64 bits");
    require(width == 64 || value < (std::uint64_t{1} << width), ErrorCode::BadChunking,
            "value does not fit in width");
    BitString out(width);
    for (std::size_t i = 0; i < width; ++i) out.bits_[width - 1 - i] = (value >> i) & 1U;
    return out;
  }

  std::size_t size() const noexcept { return bits_.size(); }
  bool empty() const noexcept { return bits_.empty(); }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  bool at(std::size_t i) const { return bits_.at(i) != 0; }
  void set(std::size_t i, bool v) { bits_.at(i) = v ? 1 : 0; }
  void push_back(bool v) { bits_.push_back(v ? 1 : 0); }

  void append(const BitString& other) {
    bits_.insert(bits_.end(), other.bits_.begin(), other.bits_.end());
  }

  BitString slice(std::size_t pos, std::size_t len) const {
    require(pos + len <= size(), ErrorCode::LengthMismatch, "slice out of range");
    BitString out;
    out.bits_.assign(bits_.begin() + static_cast<std::ptrdiff_t>(pos),
                     bits_.begin() + static_cast<std::ptrdiff_t>(pos + len));
    return out;
  }

  /// Big-endian value of the whole string; at most 64 bits.
  std::uint64_t to_index() const {
    require(size() <= 64, ErrorCode::BadChunking, "string longer than 64 bits");
    std::uint64_t v = 0;
    for (auto b : bits_) v = (v << 1) | b;
    return v;
  }

  std::size_t popcount() const noexcept {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

  std::string to_string() const {
    std::string s;
    s.reserve(size());
    for (auto b : bits_) s.push_back(b ? '1' : '0');
    return s;
  }

  std::span<const std::uint8_t> raw() const noexcept { return bits_; }

  friend bool operator==(const BitString&, const BitString&) = default;
  friend auto operator<=>(const BitString&, const BitString&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

inline BitString concat(const BitString& a, const BitString& b) {
  BitString out = a;
  out.append(b);
  return out;
}

/// Deterministic generator. Wraps the standard 64-bit Mersenne Twister, whose
/// output sequence is fixed by the C++ standard; derived quantities (doubles,
/// bounded integers) are computed here rather than through <random>
/// distributions, whose algorithms are implementation-defined.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), unbiased by rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    require(n > 0, ErrorCode::BadParameters, "uniform_below(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  bool coin() { return (next_u64() >> 63) != 0; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// n fresh bits, consuming one 64-bit draw per 64 bits (most significant first).
inline BitString random_bits(SeededRng& rng, std::size_t n) {
  BitString out(n);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 64 == 0) word = rng.next_u64();
    out.set(i, (word >> (63 - i % 64)) & 1U);
  }
  return out;
}

struct RandomnessLedger {
  std::uint64_t bits_consumed = 0;
  std::uint64_t bits_emitted_raw = 0;
  std::uint64_t bits_output_final = 0;
  std::uint64_t bits_discarded = 0;

  friend bool operator==(const RandomnessLedger&, const RandomnessLedger&) = default;
};

/// Splits x into (x1, r) with |r| = 2|x1|.
inline std::pair<BitString, BitString> partition_input(const BitString& x) {
  require(x.size() % 3 == 0, ErrorCode::IndivisibleLength,
          "input length " + std::to_string(x.size()) + " is not a multiple of 3");
  const std::size_t n1 = x.size() / 3;
  return {x.slice(0, n1), x.slice(n1, x.size() - n1)};
}

inline std::vector<std::uint64_t> chunk_to_indices(const BitString& x, std::size_t width) {
  require(width >= 1 && width <= 64, ErrorCode::BadChunking, "chunk width must be in [1, 64]");
  require(x.size() % width == 0, ErrorCode::BadChunking,
          "length " + std::to_string(x.size()) + " not divisible by width " +
              std::to_string(width));
  std::vector<std::uint64_t> out;
  out.reserve(x.size() / width);
  for (std::size_t pos = 0; pos < x.size(); pos += width) out.push_back(x.slice(pos, width).to_index());
  return out;
}

}  // namespace direx
