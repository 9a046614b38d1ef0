#pragma once

// Binary framing for remote plant measurements.
//
//   offset  size  field
//   0       4     magic "ILCP"
//   4       1     version (1)
//   5       1     command: 1 = APPLY request, 2 = APPLY response, 255 = ERROR
//   6       4     count, little-endian uint32
//   10      ...   APPLY: count pairs of little-endian IEEE-754 doubles (re, im)
//                 ERROR: count is 0, followed by a 4-byte little-endian code

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ilcdpd/signal.hpp"

namespace ilcdpd::wire {

inline constexpr std::array<std::uint8_t, 4> kMagic{'I', 'L', 'C', 'P'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 10;
inline constexpr std::uint32_t kDefaultMaxCount = 1u << 22;

enum class Command : std::uint8_t {
  ApplyRequest = 1,
  ApplyResponse = 2,
  Error = 255,
};

enum class ErrorCode : std::uint32_t {
  BadMagic = 1,
  BadVersion = 2,
  BadCommand = 3,
  Oversized = 4,
  BadPayload = 5,  // non-finite samples or too short for a signal
  PlantFailure = 6,
};

std::string_view error_name(std::uint32_t code);

struct Header {
  std::array<std::uint8_t, 4> magic;
  std::uint8_t version;
  std::uint8_t command;
  std::uint32_t count;
};

std::array<std::uint8_t, kHeaderSize> encode_header(const Header& h);
Header decode_header(std::span<const std::uint8_t, kHeaderSize> bytes);

/// Protocol check of a decoded header. Returns the ERROR code to send back, or
/// nothing when the header is a valid APPLY request within max_count.
std::optional<ErrorCode> validate_request(const Header& h,
                                          std::uint32_t max_count);

std::vector<std::uint8_t> encode_apply(Command command,
                                       std::span<const cplx> samples);
std::vector<std::uint8_t> encode_error(ErrorCode code);

std::vector<cplx> decode_samples(std::span<const std::uint8_t> payload);

void put_u32(std::uint8_t* out, std::uint32_t v);
std::uint32_t get_u32(const std::uint8_t* in);

}  // namespace ilcdpd::wire
