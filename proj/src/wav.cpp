#include "roomabs/wav.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "roomabs/error.hpp"

namespace roomabs {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
         std::uint32_t{p[3]} << 24;
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

}  // namespace

void write_wav(const std::filesystem::path& path, const Rir& rir, const std::string& comment) {
  const auto n = static_cast<std::uint32_t>(rir.samples.size());
  const auto rate = static_cast<std::uint32_t>(std::lround(rir.sample_rate));
  std::string list;
  if (!comment.empty()) {
    std::string text = comment;
    text.push_back('\0');
    if (text.size() & 1) text.push_back('\0');
    list += "LIST";
    put_u32(list, static_cast<std::uint32_t>(4 + 8 + text.size()));
    list += "INFO";
    list += "ICMT";
    put_u32(list, static_cast<std::uint32_t>(text.size()));
    list += text;
  }
  std::string out;
  out.reserve(44 + list.size() + 4 * rir.samples.size());
  out += "RIFF";
  put_u32(out, static_cast<std::uint32_t>(36 + list.size() + 4 * n));
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, kFormatFloat);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * 4);
  put_u16(out, 4);
  put_u16(out, 32);
  out += list;
  out += "data";
  put_u32(out, 4 * n);
  for (double v : rir.samples) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

Rir read_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                         std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& what, std::size_t offset) -> CorruptFile {
    return CorruptFile(path.string() + ": " + what + " at offset " + std::to_string(offset));
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw fail("missing RIFF/WAVE header", 0);
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = get_u32(chunk + 4);
    if (pos + 8 + size > bytes.size()) {
      // Tolerate a data chunk whose declared size overruns the file.
      if (std::memcmp(chunk, "data", 4) != 0) throw fail("truncated chunk", pos);
    }
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - pos - 8);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw fail("short fmt chunk", pos);
      format = get_u16(chunk + 8);
      channels = get_u16(chunk + 10);
      rate = get_u32(chunk + 12);
      bits = get_u16(chunk + 22);
      if (format == kFormatExtensible && avail >= 26) format = get_u16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = avail;
    }
    pos += 8 + size + (size & 1);
  }
  if (channels == 0 || rate == 0) throw fail("missing fmt chunk", 12);
  if (data == nullptr) throw fail("missing data chunk", 12);

  const std::size_t width = bits / 8;
  const std::size_t frame = width * channels;
  if (width == 0 || frame == 0) throw fail("bad sample width", 12);
  const std::size_t frames = data_size / frame;

  Rir rir;
  rir.sample_rate = rate;
  rir.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const unsigned char* p = data + i * frame;
    double v = 0.0;
    if (format == kFormatFloat && bits == 32) {
      v = std::bit_cast<float>(get_u32(p));
    } else if (format == kFormatFloat && bits == 64) {
      const std::uint64_t lo = get_u32(p), hi = get_u32(p + 4);
      v = std::bit_cast<double>(lo | hi << 32);
    } else if (format == kFormatPcm && bits == 16) {
      v = static_cast<std::int16_t>(get_u16(p)) / 32768.0;
    } else if (format == kFormatPcm && bits == 24) {
      std::int32_t s = p[0] | p[1] << 8 | p[2] << 16;
      if (s & 0x800000) s -= 0x1000000;
      v = s / 8388608.0;
    } else if (format == kFormatPcm && bits == 32) {
      v = static_cast<std::int32_t>(get_u32(p)) / 2147483648.0;
    } else {
      throw fail("unsupported sample format " + std::to_string(format) + "/" +
                     std::to_string(bits) + " bit",
                 12);
    }
    rir.samples[i] = v;
  }
  return rir;
}

}  // namespace roomabs
