#include "flimzs/cli/fph.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "flimzs/errors.hpp"

namespace flimzs::cli {

namespace {

constexpr std::size_t kHeaderSize = 24;
constexpr std::size_t kNameSize = 16;
constexpr std::string_view kMagic = "FPH1";

template <typename U>
void put(std::string& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

template <typename U>
U get(std::string_view bytes, std::size_t offset) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return value;
}

}  // namespace

bool is_known_plane_name(std::string_view name) {
  static constexpr std::string_view kNames[] = {"g", "s", "I", "tau", "y_g", "y_s", "y_I"};
  return std::find(std::begin(kNames), std::end(kNames), name) != std::end(kNames);
}

const FphPlane* FphContainer::find(std::string_view name) const {
  for (const auto& p : planes) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

void FphContainer::add(std::string name, const Plane& plane) {
  if (plane.width != width || plane.height != height) {
    throw DimensionError("plane " + name + " does not match container extents");
  }
  FphPlane p{std::move(name), std::vector<float>(plane.size())};
  for (std::size_t i = 0; i < plane.size(); ++i) p.data[i] = static_cast<float>(plane.data[i]);
  planes.push_back(std::move(p));
}

Plane FphContainer::plane(std::string_view name) const {
  const FphPlane* p = find(name);
  if (p == nullptr) throw IoError("missing plane '" + std::string(name) + "'");
  Plane out(width, height);
  std::copy(p->data.begin(), p->data.end(), out.data.begin());
  return out;
}

std::string encode_fph(const FphContainer& c) {
  std::set<std::string> seen;
  for (const auto& p : c.planes) {
    if (!is_known_plane_name(p.name)) throw IoError("unknown plane name '" + p.name + "'");
    if (!seen.insert(p.name).second) throw IoError("duplicate plane name '" + p.name + "'");
    if (p.data.size() != static_cast<std::size_t>(c.width) * c.height) {
      throw IoError("plane '" + p.name + "' has the wrong number of values");
    }
  }
  if (c.planes.size() > 0xFFFF) throw IoError("too many planes");
  std::string out;
  out.reserve(kHeaderSize + c.planes.size() * (kNameSize + 4 * c.width * c.height));
  out.append(kMagic);
  put<std::uint16_t>(out, kFphVersion);
  put<std::uint32_t>(out, c.width);
  put<std::uint32_t>(out, c.height);
  put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(c.omega));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(c.planes.size()));
  for (const auto& p : c.planes) {
    std::string name = p.name;
    name.resize(kNameSize, ' ');
    out.append(name);
    for (float v : p.data) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

FphContainer decode_fph(std::string_view bytes) {
  if (bytes.size() < kHeaderSize) throw IoError("FPH: truncated header");
  if (bytes.substr(0, 4) != kMagic) throw IoError("FPH: bad magic");
  const auto version = get<std::uint16_t>(bytes, 4);
  if (version != kFphVersion) throw IoError("FPH: unsupported version " + std::to_string(version));
  FphContainer c;
  c.width = get<std::uint32_t>(bytes, 6);
  c.height = get<std::uint32_t>(bytes, 10);
  c.omega = std::bit_cast<double>(get<std::uint64_t>(bytes, 14));
  const auto count = get<std::uint16_t>(bytes, 22);
  const std::uint64_t plane_bytes = 4ULL * c.width * c.height;
  const std::uint64_t expected = kHeaderSize + count * (kNameSize + plane_bytes);
  if (bytes.size() != expected) {
    throw IoError("FPH: payload is " + std::to_string(bytes.size()) + " bytes, header declares " +
                  std::to_string(expected));
  }
  std::size_t off = kHeaderSize;
  std::set<std::string> seen;
  for (std::uint16_t k = 0; k < count; ++k) {
    std::string name(bytes.substr(off, kNameSize));
    const std::string padded = name;
    name.erase(name.find_last_not_of(' ') + 1);
    if (!is_known_plane_name(name)) throw IoError("FPH: unknown plane name '" + padded + "'");
    if (!seen.insert(name).second) throw IoError("FPH: duplicate plane '" + name + "'");
    off += kNameSize;
    FphPlane p{name, std::vector<float>(static_cast<std::size_t>(c.width) * c.height)};
    for (float& v : p.data) {
      v = std::bit_cast<float>(get<std::uint32_t>(bytes, off));
      off += 4;
    }
    c.planes.push_back(std::move(p));
  }
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

void write_fph(const std::filesystem::path& path, const FphContainer& c) {
  write_file_atomic(path, encode_fph(c));
}

FphContainer read_fph(const std::filesystem::path& path) {
  try {
    return decode_fph(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace flimzs::cli
