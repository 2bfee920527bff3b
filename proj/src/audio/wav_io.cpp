#include "cvc/audio/wav_io.hpp"

#include "cvc/error.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace cvc::audio {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

[[noreturn]] void unreadable(const std::filesystem::path& path, const std::string& why) {
  throw Error("audio_frontend", "UnreadableFile", path.string() + ": " + why);
}

std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

double decode_sample(const unsigned char* p, std::uint16_t format, int bits) {
  if (format == kFormatFloat) {
    if (bits == 32) {
      float f;
      std::memcpy(&f, p, 4);
      return f;
    }
    double d;
    std::memcpy(&d, p, 8);
    return d;
  }
  switch (bits) {
    case 8:
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
      return static_cast<std::int16_t>(le16(p)) / 32768.0;
    case 24: {
      std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
      if (v & 0x800000) v |= ~0xFFFFFF;
      return v / 8388608.0;
    }
    default:
      return static_cast<std::int32_t>(le32(p)) / 2147483648.0;
  }
}

void put16(std::ofstream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}
void put32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

DecodedAudio read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) unreadable(path, "cannot open");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    unreadable(path, "not a RIFF/WAVE container");

  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  bool have_fmt = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    std::uint32_t size = le32(hdr + 4);
    std::size_t body = pos + 8;
    std::size_t avail = bytes.size() - body;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) unreadable(path, "truncated fmt chunk");
      const unsigned char* f = bytes.data() + body;
      format = le16(f);
      channels = le16(f + 2);
      rate = le32(f + 4);
      block_align = le16(f + 12);
      bits = le16(f + 14);
      if (format == kFormatExtensible) {
        if (size < 40 || avail < 40) unreadable(path, "truncated extensible fmt chunk");
        format = le16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(size, avail);
    }
    pos = body + size + (size & 1u);
  }

  if (!have_fmt || data == nullptr) unreadable(path, "missing fmt or data chunk");
  if (channels == 0 || rate == 0) unreadable(path, "invalid channel count or rate");
  bool ok_format = (format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) ||
                   (format == kFormatFloat && (bits == 32 || bits == 64));
  if (!ok_format) unreadable(path, "unsupported sample format " + std::to_string(format) + "/" + std::to_string(bits));
  const int bytes_per_sample = bits / 8;
  if (block_align != channels * bytes_per_sample) unreadable(path, "inconsistent block alignment");

  DecodedAudio out;
  out.sample_rate_hz = static_cast<int>(rate);
  out.source_channels = channels;
  const std::size_t frames = data_size / block_align;
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c)
      acc += decode_sample(data + i * block_align + static_cast<std::size_t>(c) * bytes_per_sample, format, bits);
    out.samples[i] = static_cast<float>(acc / channels);
  }
  return out;
}

void write_wav(const std::filesystem::path& path, std::span<const float> samples, int sample_rate_hz) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("audio_frontend", "UnwritableFile", path.string());
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 4);
  os.write("RIFF", 4);
  put32(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  put32(os, 16);
  put16(os, kFormatFloat);
  put16(os, 1);
  put32(os, static_cast<std::uint32_t>(sample_rate_hz));
  put32(os, static_cast<std::uint32_t>(sample_rate_hz) * 4);
  put16(os, 4);
  put16(os, 32);
  os.write("data", 4);
  put32(os, data_bytes);
  for (float s : samples) {
    std::uint32_t bits;
    std::memcpy(&bits, &s, 4);
    put32(os, bits);
  }
  if (!os) throw Error("audio_frontend", "UnwritableFile", path.string());
}

}  // namespace cvc::audio
