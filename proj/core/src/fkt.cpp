#include "cci/fkt.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "cci/error.hpp"

namespace cci::fkt {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b = {static_cast<char>(v & 0xffu), static_cast<char>((v >> 8) & 0xffu),
                                 static_cast<char>((v >> 16) & 0xffu),
                                 static_cast<char>((v >> 24) & 0xffu)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write(std::ostream& out, const Tensor& t) {
  out.write(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(t.n()));
  put_u32(out, static_cast<std::uint32_t>(t.c()));
  put_u32(out, static_cast<std::uint32_t>(t.h()));
  put_u32(out, static_cast<std::uint32_t>(t.w()));
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw IoError("FKT1 write failed");
}

Tensor read(std::istream& in, std::size_t base_offset) {
  std::array<unsigned char, kHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), kHeaderBytes);
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got < 4 || std::memcmp(header.data(), kMagic, 4) != 0) {
    // Report the first byte that disagrees with the magic.
    std::size_t bad = 0;
    while (bad < got && bad < 4 && header[bad] == static_cast<unsigned char>(kMagic[bad])) ++bad;
    throw ParseError("FKT1: bad magic at byte offset " + std::to_string(base_offset + bad));
  }
  if (got < kHeaderBytes) {
    throw ParseError("FKT1: truncated header at byte offset " + std::to_string(base_offset + got));
  }
  Shape s{static_cast<int>(get_u32(&header[4])), static_cast<int>(get_u32(&header[8])),
          static_cast<int>(get_u32(&header[12])), static_cast<int>(get_u32(&header[16]))};
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
    throw ParseError("FKT1: zero-sized dimension in header at byte offset " +
                     std::to_string(base_offset + 4));
  }
  const std::size_t count = s.numel();
  std::vector<unsigned char> raw(count * 4);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  const auto payload = static_cast<std::size_t>(in.gcount());
  if (payload != raw.size()) {
    throw ParseError("FKT1: truncated payload at byte offset " +
                     std::to_string(base_offset + kHeaderBytes + payload));
  }
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<float>(get_u32(&raw[4 * i]));
  return Tensor(s, std::move(values));
}

void save(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write(out, t);
}

Tensor load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read(in);
}

bool has_magic(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char b[4] = {};
  in.read(b, 4);
  return in.gcount() == 4 && std::memcmp(b, kMagic, 4) == 0;
}

}  // namespace cci::fkt
