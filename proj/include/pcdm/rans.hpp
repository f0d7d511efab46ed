#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace pcdm {

/// rANS with a 64-bit state and 32-bit renormalization words.
///
/// The word vector is a stack: push appends, pop consumes from the back.
/// Any bits placed there beforehand act as bits-back capital.
///
/// Every operation takes a slot rotation. A push and the pop that undoes it
/// must use the same rotation; giving unrelated operations unrelated
/// rotations stops a pop from reading back the quantile of the push before it.
class AnsState {
 public:
  static constexpr int kPrecision = 24;
  static constexpr std::uint32_t kTotal = 1u << kPrecision;
  static constexpr std::uint64_t kLower = 1ull << 31;

  AnsState() = default;
  AnsState(std::uint64_t head, std::vector<std::uint32_t> words);

  /// Encode the symbol occupying [start, start + freq) of kTotal.
  void push(std::uint32_t start, std::uint32_t freq, std::uint32_t rot = 0);
  /// The slot a decoder uses to identify the next symbol.
  std::uint32_t peek(std::uint32_t rot = 0) const { return static_cast<std::uint32_t>((head_ + rot) & (kTotal - 1)); }
  /// Remove the symbol identified from peek(rot). Throws StateError when the
  /// stream runs dry.
  void pop(std::uint32_t start, std::uint32_t freq, std::uint32_t rot = 0);

  void push_uniform16(std::uint32_t v, std::uint32_t rot = 0) { push(v << (kPrecision - 16), 1u << (kPrecision - 16), rot); }
  std::uint32_t pop_uniform16(std::uint32_t rot = 0);

  std::uint64_t head() const { return head_; }
  const std::vector<std::uint32_t>& words() const { return words_; }
  /// Information content: 32 bits per word plus log2(head).
  double bits() const;

  friend bool operator==(const AnsState&, const AnsState&) = default;

 private:
  std::uint64_t head_ = kLower;
  std::vector<std::uint32_t> words_;
};

/// Quantized Gaussian over the integers [lo, hi] with an optional escape
/// symbol. Frequencies sum to kTotal. Bins whose mass rounds to zero slots
/// (and values outside the window) can only be coded through the escape.
class DiscreteGaussian {
 public:
  /// mean and sd are in bin units. The window is clipped to [lo, hi].
  DiscreteGaussian(double mean, double sd, std::int64_t lo, std::int64_t hi, bool escape);

  /// Window out to where a bin holds one slot of mass, clipped to [range_lo, range_hi].
  static DiscreteGaussian windowed(double mean, double sd, std::int64_t range_lo, std::int64_t range_hi, bool escape);

  std::int64_t lo() const { return lo_; }
  std::int64_t hi() const { return hi_; }
  bool contains(std::int64_t v) const { return v >= lo_ && v <= hi_; }

  /// Values without a slot go as escape plus a raw 32-bit offset.
  void push(AnsState& st, std::int64_t v, std::uint32_t rot = 0) const;
  std::int64_t pop(AnsState& st, std::uint32_t rot = 0) const;

  /// -log2 of the coded probability of v (window values only).
  double cost_bits(std::int64_t v) const;

 private:
  std::uint32_t cum(std::int64_t j) const;  // j in [0, n]
  double cdf(double edge) const;

  double mean_, sd_;
  std::int64_t lo_, hi_;
  bool escape_;
  std::uint32_t esc_, spare_;
  double phi_lo_, phi_span_;
};

}  // namespace pcdm
