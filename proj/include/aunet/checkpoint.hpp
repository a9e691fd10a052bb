#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "aunet/nn.hpp"

namespace aunet {

// Checkpoint archive: a manifest entry per parameter (name, shape, element
// type) followed by the raw little-endian buffer, row-major. Save -> load ->
// save round-trips bit-exactly.
//
//   magic "AUNCKPT1", u32 count,
//   then per entry: u32 name_len, name, u8 dtype (0=f32, 1=f64),
//                   u32 dims[4], payload.
namespace ckpt {

inline constexpr char kMagic[8] = {'A', 'U', 'N', 'C', 'K', 'P', 'T', '1'};

struct Entry {
  std::string name;
  int dtype = 0;  // 0 = f32, 1 = f64
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<unsigned char> payload;

  std::size_t numel() const { return std::size_t(n) * c * h * w; }
};

struct Archive {
  std::vector<Entry> entries;

  const Entry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

namespace detail {
template <class U>
void put(std::string& buf, U v) {
  char tmp[sizeof(U)];
  std::memcpy(tmp, &v, sizeof(U));
  buf.append(tmp, sizeof(U));
}

template <class U>
U get(const std::string& buf, std::size_t& off) {
  if (off + sizeof(U) > buf.size()) throw DataError("checkpoint: truncated file");
  U v;
  std::memcpy(&v, buf.data() + off, sizeof(U));
  off += sizeof(U);
  return v;
}

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");
}  // namespace detail

template <class T>
Archive from_params(const nn::ParamList<T>& params) {
  Archive a;
  for (const auto& p : params) {
    Entry e;
    e.name = p.name;
    e.dtype = std::is_same_v<T, double> ? 1 : 0;
    e.n = p.value->n;
    e.c = p.value->c;
    e.h = p.value->h;
    e.w = p.value->w;
    e.payload.resize(p.value->numel() * sizeof(T));
    std::memcpy(e.payload.data(), p.value->data(), e.payload.size());
    a.entries.push_back(std::move(e));
  }
  return a;
}

inline void save(const Archive& a, const std::string& path) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  detail::put<std::uint32_t>(buf, std::uint32_t(a.entries.size()));
  for (const auto& e : a.entries) {
    detail::put<std::uint32_t>(buf, std::uint32_t(e.name.size()));
    buf.append(e.name);
    detail::put<std::uint8_t>(buf, std::uint8_t(e.dtype));
    detail::put<std::uint32_t>(buf, std::uint32_t(e.n));
    detail::put<std::uint32_t>(buf, std::uint32_t(e.c));
    detail::put<std::uint32_t>(buf, std::uint32_t(e.h));
    detail::put<std::uint32_t>(buf, std::uint32_t(e.w));
    buf.append(reinterpret_cast<const char*>(e.payload.data()), e.payload.size());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("checkpoint: cannot open '" + path + "' for writing");
  f.write(buf.data(), std::streamsize(buf.size()));
  if (!f) throw DataError("checkpoint: write failed for '" + path + "'");
}

inline Archive load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint: bad magic in '" + path + "'");
  std::size_t off = sizeof(kMagic);
  auto count = detail::get<std::uint32_t>(buf, off);
  Archive a;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    auto name_len = detail::get<std::uint32_t>(buf, off);
    if (off + name_len > buf.size()) throw DataError("checkpoint: truncated file");
    e.name.assign(buf.data() + off, name_len);
    off += name_len;
    e.dtype = detail::get<std::uint8_t>(buf, off);
    e.n = int(detail::get<std::uint32_t>(buf, off));
    e.c = int(detail::get<std::uint32_t>(buf, off));
    e.h = int(detail::get<std::uint32_t>(buf, off));
    e.w = int(detail::get<std::uint32_t>(buf, off));
    std::size_t bytes = e.numel() * (e.dtype == 1 ? sizeof(double) : sizeof(float));
    if (off + bytes > buf.size()) throw DataError("checkpoint: truncated payload");
    e.payload.assign(buf.begin() + long(off), buf.begin() + long(off + bytes));
    off += bytes;
    a.entries.push_back(std::move(e));
  }
  return a;
}

// Loads archive entries into matching parameters. With `prefix` non-empty,
// only parameters whose name starts with the prefix are considered, and each
// of them must be present in the archive (used to load an encoder-only
// checkpoint into a full model). Values convert between f32/f64 as needed.
template <class T>
void load_into(const Archive& a, nn::ParamList<T>& params, const std::string& prefix = "") {
  for (auto& p : params) {
    if (!prefix.empty() && p.name.rfind(prefix, 0) != 0) continue;
    const Entry* e = a.find(p.name);
    if (!e) throw DataError("checkpoint: parameter '" + p.name + "' missing from archive");
    if (e->n != p.value->n || e->c != p.value->c || e->h != p.value->h || e->w != p.value->w)
      throw DataError("checkpoint: shape mismatch for parameter '" + p.name + "' (archive " +
                      std::to_string(e->n) + "x" + std::to_string(e->c) + "x" +
                      std::to_string(e->h) + "x" + std::to_string(e->w) + ", model " +
                      p.value->shape_str() + ")");
    if (e->dtype == 1) {
      const double* src = reinterpret_cast<const double*>(e->payload.data());
      for (std::size_t i = 0; i < p.value->numel(); ++i) p.value->v[i] = T(src[i]);
    } else {
      const float* src = reinterpret_cast<const float*>(e->payload.data());
      for (std::size_t i = 0; i < p.value->numel(); ++i) p.value->v[i] = T(src[i]);
    }
  }
}

}  // namespace ckpt
}  // namespace aunet
