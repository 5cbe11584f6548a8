#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace delsim {

using Bytes = std::vector<std::uint8_t>;
using Digest32 = std::array<std::uint8_t, 32>;

Digest32 sha256(std::span<const std::uint8_t> data);

// Keyed authentication tag (HMAC-SHA256). Stands in for signatures within
// the simulator's trusted key registry.
Digest32 hmac_sha256(std::span<const std::uint8_t> key,
                     std::span<const std::uint8_t> data);

std::string to_hex(std::span<const std::uint8_t> data);
Bytes from_hex(std::string_view hex);

inline std::span<const std::uint8_t> as_span(const Digest32& d) {
  return {d.data(), d.size()};
}

inline std::span<const std::uint8_t> as_span(const Bytes& b) {
  return {b.data(), b.size()};
}

inline std::span<const std::uint8_t> as_span(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace delsim
