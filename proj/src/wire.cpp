#include "ilcdpd/wire.hpp"

#include <bit>
#include <cstring>

namespace ilcdpd::wire {

std::string_view error_name(std::uint32_t code) {
  switch (static_cast<ErrorCode>(code)) {
    case ErrorCode::BadMagic: return "bad-magic";
    case ErrorCode::BadVersion: return "bad-version";
    case ErrorCode::BadCommand: return "bad-command";
    case ErrorCode::Oversized: return "oversized";
    case ErrorCode::BadPayload: return "bad-payload";
    case ErrorCode::PlantFailure: return "plant-failure";
  }
  return "unknown";
}

void put_u32(std::uint8_t* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t get_u32(const std::uint8_t* in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[i]) << (8 * i);
  return v;
}

namespace {

void put_f64(std::uint8_t* out, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(bits >> (8 * i));
}

double get_f64(const std::uint8_t* in) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

std::array<std::uint8_t, kHeaderSize> encode_header(const Header& h) {
  std::array<std::uint8_t, kHeaderSize> out{};
  std::memcpy(out.data(), h.magic.data(), 4);
  out[4] = h.version;
  out[5] = h.command;
  put_u32(out.data() + 6, h.count);
  return out;
}

Header decode_header(std::span<const std::uint8_t, kHeaderSize> bytes) {
  Header h{};
  std::memcpy(h.magic.data(), bytes.data(), 4);
  h.version = bytes[4];
  h.command = bytes[5];
  h.count = get_u32(bytes.data() + 6);
  return h;
}

std::optional<ErrorCode> validate_request(const Header& h,
                                          std::uint32_t max_count) {
  if (h.magic != kMagic) return ErrorCode::BadMagic;
  if (h.version != kVersion) return ErrorCode::BadVersion;
  if (h.command != static_cast<std::uint8_t>(Command::ApplyRequest)) {
    return ErrorCode::BadCommand;
  }
  if (h.count > max_count) return ErrorCode::Oversized;
  return std::nullopt;
}

std::vector<std::uint8_t> encode_apply(Command command,
                                       std::span<const cplx> samples) {
  const auto header = encode_header(
      {kMagic, kVersion, static_cast<std::uint8_t>(command),
       static_cast<std::uint32_t>(samples.size())});
  std::vector<std::uint8_t> out(kHeaderSize + 16 * samples.size());
  std::memcpy(out.data(), header.data(), kHeaderSize);
  std::uint8_t* p = out.data() + kHeaderSize;
  for (const auto& s : samples) {
    put_f64(p, s.real());
    put_f64(p + 8, s.imag());
    p += 16;
  }
  return out;
}

std::vector<std::uint8_t> encode_error(ErrorCode code) {
  const auto header = encode_header(
      {kMagic, kVersion, static_cast<std::uint8_t>(Command::Error), 0});
  std::vector<std::uint8_t> out(kHeaderSize + 4);
  std::memcpy(out.data(), header.data(), kHeaderSize);
  put_u32(out.data() + kHeaderSize, static_cast<std::uint32_t>(code));
  return out;
}

std::vector<cplx> decode_samples(std::span<const std::uint8_t> payload) {
  std::vector<cplx> out(payload.size() / 16);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {get_f64(payload.data() + 16 * i),
              get_f64(payload.data() + 16 * i + 8)};
  }
  return out;
}

}  // namespace ilcdpd::wire
