#include "pcdm/rans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "pcdm/error.hpp"

namespace pcdm {

AnsState::AnsState(std::uint64_t head, std::vector<std::uint32_t> words) : head_(head), words_(std::move(words)) {
  if (head_ < kLower || head_ >= (kLower << 32)) throw FormatError("ANS head outside [2^31, 2^63)");
}

void AnsState::push(std::uint32_t start, std::uint32_t freq, std::uint32_t rot) {
  if (freq == 0 || start + std::uint64_t{freq} > kTotal) throw RangeError("ANS push: bad symbol interval");
  const std::uint64_t limit = ((kLower >> kPrecision) << 32) * freq;
  if (head_ >= limit) {
    words_.push_back(static_cast<std::uint32_t>(head_));
    head_ >>= 32;
  }
  head_ = ((head_ / freq) << kPrecision) | ((head_ % freq + start - rot) & (kTotal - 1));
}

void AnsState::pop(std::uint32_t start, std::uint32_t freq, std::uint32_t rot) {
  const std::uint32_t slot = peek(rot);
  if (freq == 0 || slot < start || slot >= start + std::uint64_t{freq}) throw RangeError("ANS pop: slot not in symbol interval");
  head_ = freq * (head_ >> kPrecision) + slot - start;
  if (head_ < kLower) {
    if (words_.empty()) throw StateError("insufficient aux bits: ANS stream exhausted");
    head_ = (head_ << 32) | words_.back();
    words_.pop_back();
  }
}

std::uint32_t AnsState::pop_uniform16(std::uint32_t rot) {
  const std::uint32_t v = peek(rot) >> (kPrecision - 16);
  pop(v << (kPrecision - 16), 1u << (kPrecision - 16), rot);
  return v;
}

double AnsState::bits() const { return 32.0 * double(words_.size()) + std::log2(double(head_)); }

// ---------------------------------------------------------------------------

DiscreteGaussian::DiscreteGaussian(double mean, double sd, std::int64_t lo, std::int64_t hi, bool escape)
    : mean_(mean), sd_(sd), lo_(lo), hi_(hi), escape_(escape) {
  if (!(sd > 0.0) || !std::isfinite(sd) || !std::isfinite(mean)) throw RangeError("discrete Gaussian needs finite mean and positive sd");
  if (hi < lo) throw RangeError("discrete Gaussian: empty window");
  const std::int64_t n = hi - lo + 1;
  if (n > (1 << 15)) throw RangeError("discrete Gaussian window of " + std::to_string(n) + " bins is too wide to code");
  esc_ = escape ? 1 : 0;
  spare_ = AnsState::kTotal - esc_;
  phi_lo_ = cdf(double(lo) - 0.5);
  phi_span_ = cdf(double(hi) + 0.5) - phi_lo_;
  if (!(phi_span_ > 0.0)) phi_span_ = 0.0;  // window far in a tail: fall back to uniform
}

DiscreteGaussian DiscreteGaussian::windowed(double mean, double sd, std::int64_t range_lo, std::int64_t range_hi, bool escape) {
  if (!std::isfinite(mean) || !(sd > 0.0)) throw RangeError("discrete Gaussian needs finite mean and positive sd");
  // Out to where one bin's mass falls to a single slot; further bins would
  // only get probability by inflation.
  const double peak = double(AnsState::kTotal) / (std::sqrt(2.0 * std::numbers::pi) * sd);
  const double z = peak > 1.0 ? std::sqrt(2.0 * std::log(peak)) : 1.0;
  const double half = std::ceil(z * sd) + 1.0;
  const double c = std::round(mean);
  if (std::abs(c) > 9e15) throw RangeError("latent mean outside representable range");
  std::int64_t lo = static_cast<std::int64_t>(c - half), hi = static_cast<std::int64_t>(c + half);
  lo = std::max(lo, range_lo);
  hi = std::min(hi, range_hi);
  if (hi < lo) {
    // Mean lies far outside the range: keep the nearest edge bins.
    if (c < double(range_lo)) {
      lo = range_lo;
      hi = std::min(range_hi, range_lo + static_cast<std::int64_t>(half));
    } else {
      hi = range_hi;
      lo = std::max(range_lo, range_hi - static_cast<std::int64_t>(half));
    }
  }
  return DiscreteGaussian(mean, sd, lo, hi, escape);
}

double DiscreteGaussian::cdf(double edge) const { return 0.5 * std::erfc(-(edge - mean_) / (sd_ * std::sqrt(2.0))); }

std::uint32_t DiscreteGaussian::cum(std::int64_t j) const {
  const std::int64_t n = hi_ - lo_ + 1;
  if (j <= 0) return esc_;
  if (j >= n) return AnsState::kTotal;
  double c = phi_span_ > 0.0 ? (cdf(double(lo_ + j) - 0.5) - phi_lo_) / phi_span_ : double(j) / double(n);
  c = std::clamp(c, 0.0, 1.0);
  return esc_ + static_cast<std::uint32_t>(std::floor(c * double(spare_)));
}

void DiscreteGaussian::push(AnsState& st, std::int64_t v, std::uint32_t rot) const {
  if (contains(v)) {
    const std::int64_t j = v - lo_;
    const std::uint32_t a = cum(j), b = cum(j + 1);
    if (b > a) {
      st.push(a, b - a, rot);
      return;
    }
  }
  if (!escape_) throw RangeError("value " + std::to_string(v) + " has no slot in coding window [" + std::to_string(lo_) + ", " + std::to_string(hi_) + "]");
  const std::int64_t off = v - lo_;
  if (off < std::numeric_limits<std::int32_t>::min() || off > std::numeric_limits<std::int32_t>::max()) {
    throw RangeError("latent outside representable range");
  }
  const auto raw = static_cast<std::uint32_t>(static_cast<std::int32_t>(off));
  st.push_uniform16(raw & 0xffffu, rot);
  st.push_uniform16(raw >> 16, rot);
  st.push(0, 1, rot);
}

std::int64_t DiscreteGaussian::pop(AnsState& st, std::uint32_t rot) const {
  const std::uint32_t slot = st.peek(rot);
  if (slot < esc_) {
    st.pop(0, 1, rot);
    const std::uint32_t high = st.pop_uniform16(rot);
    const std::uint32_t low = st.pop_uniform16(rot);
    const auto off = static_cast<std::int32_t>((high << 16) | low);
    const std::int64_t v = lo_ + off;
    if (contains(v) && cum(off + 1) > cum(off)) throw FormatError("escape code for a directly codable value");
    return v;
  }
  std::int64_t a = 0, b = hi_ - lo_ + 1;  // cum(a) <= slot < cum(b)
  while (b - a > 1) {
    const std::int64_t m = a + (b - a) / 2;
    if (cum(m) <= slot) {
      a = m;
    } else {
      b = m;
    }
  }
  const std::uint32_t s0 = cum(a), s1 = cum(a + 1);
  st.pop(s0, s1 - s0, rot);
  return lo_ + a;
}

double DiscreteGaussian::cost_bits(std::int64_t v) const {
  if (!contains(v)) throw RangeError("cost_bits: value outside window");
  const std::int64_t j = v - lo_;
  const std::uint32_t f = cum(j + 1) - cum(j);
  if (f == 0) return escape_ ? 48.0 : std::numeric_limits<double>::infinity();
  return double(AnsState::kPrecision) - std::log2(double(f));
}

}  // namespace pcdm
