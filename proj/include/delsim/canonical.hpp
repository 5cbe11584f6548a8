#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string_view>

#include "delsim/digest.hpp"

namespace delsim {

// Canonical byte encoding used for every tag, signature, and digest input:
// fields are concatenated in declared order, integers big-endian, variable
// length fields prefixed with a big-endian u64 length. Doubles are encoded
// via their IEEE-754 bit pattern.
class CanonicalWriter {
 public:
  CanonicalWriter& u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) {
      buf_.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
    }
    return *this;
  }

  CanonicalWriter& i64(std::int64_t v) {
    return u64(static_cast<std::uint64_t>(v));
  }

  CanonicalWriter& f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }

  CanonicalWriter& bytes(std::span<const std::uint8_t> data) {
    u64(data.size());
    buf_.insert(buf_.end(), data.begin(), data.end());
    return *this;
  }

  CanonicalWriter& str(std::string_view s) { return bytes(as_span(s)); }

  const Bytes& data() const { return buf_; }

  Digest32 digest() const { return sha256(as_span(buf_)); }

 private:
  Bytes buf_;
};

}  // namespace delsim
