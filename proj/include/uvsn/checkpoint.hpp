#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "uvsn/errors.hpp"
#include "uvsn/io.hpp"
#include "uvsn/network.hpp"

namespace uvsn {

inline constexpr char kCheckpointMagic[4] = {'U', 'V', 'S', 'C'};

// Checkpoint file: "UVSC" | version | length-prefixed UTF-8 config text |
// array records until EOF. Each record: length-prefixed name | rank |
// dims (u32 each) | float32 payload in column-major order.
struct ArrayRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

inline void write_checkpoint(const std::string& path, const std::string& config_text,
                             const std::vector<ArrayRecord>& arrays) {
  auto out = detail::open_out(path);
  out.write(kCheckpointMagic, 4);
  detail::put_u32le(out, kFormatVersion);
  detail::put_u32le(out, static_cast<std::uint32_t>(config_text.size()));
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  for (const auto& a : arrays) {
    detail::put_u32le(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    detail::put_u32le(out, static_cast<std::uint32_t>(a.dims.size()));
    std::size_t expect = 1;
    for (auto d : a.dims) {
      detail::put_u32le(out, d);
      expect *= d;
    }
    if (expect != a.data.size()) throw ValidationError("checkpoint array '" + a.name + "': dims do not match payload");
    detail::put_f32le_block(out, a.data.data(), a.data.size());
  }
  if (!out) throw IoError("write failed: " + path);
}

struct Checkpoint {
  std::string config_text;
  std::vector<ArrayRecord> arrays;

  const ArrayRecord* find(const std::string& name) const {
    for (const auto& a : arrays) {
      if (a.name == name) return &a;
    }
    return nullptr;
  }
};

inline Checkpoint read_checkpoint(const std::string& path) {
  auto in = detail::open_in(path);
  detail::check_magic(in, path, kCheckpointMagic);
  const std::uint32_t version = detail::get_u32le(in, path, "version");
  if (version != kFormatVersion) throw FormatError(path + ": unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  const std::uint32_t cfg_len = detail::get_u32le(in, path, "config length");
  ckpt.config_text.resize(cfg_len);
  in.read(ckpt.config_text.data(), cfg_len);
  if (static_cast<std::uint32_t>(in.gcount()) != cfg_len) throw FormatError(path + ": truncated config text");
  while (true) {
    unsigned char peek[4];
    in.read(reinterpret_cast<char*>(peek), 4);
    if (in.gcount() == 0) break;  // clean EOF between records
    if (in.gcount() != 4) throw FormatError(path + ": truncated array record");
    const std::uint32_t name_len = static_cast<std::uint32_t>(peek[0]) | (static_cast<std::uint32_t>(peek[1]) << 8) |
                                   (static_cast<std::uint32_t>(peek[2]) << 16) |
                                   (static_cast<std::uint32_t>(peek[3]) << 24);
    ArrayRecord rec;
    rec.name.resize(name_len);
    in.read(rec.name.data(), name_len);
    if (static_cast<std::uint32_t>(in.gcount()) != name_len) throw FormatError(path + ": truncated array name");
    const std::uint32_t rank = detail::get_u32le(in, path, "array rank");
    std::size_t total = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      rec.dims.push_back(detail::get_u32le(in, path, "array dim"));
      total *= rec.dims.back();
    }
    rec.data.resize(total);
    detail::get_f32le_block(in, rec.data.data(), total, path);
    ckpt.arrays.push_back(std::move(rec));
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// Model-level helpers
// ---------------------------------------------------------------------------

template <class Scalar>
void append_array_records(std::vector<ArrayRecord>& out, const std::vector<ArrayView<Scalar>>& views) {
  for (const auto& v : views) {
    ArrayRecord rec;
    rec.name = v.name;
    rec.dims = v.dims;
    rec.data.resize(static_cast<std::size_t>(v.size));
    for (Eigen::Index i = 0; i < v.size; ++i) rec.data[static_cast<std::size_t>(i)] = static_cast<float>(v.data[i]);
    out.push_back(std::move(rec));
  }
}

// Copies records into an already-shaped parameter set, by name.
template <class Scalar>
void load_array_records(const Checkpoint& ckpt, const std::vector<ArrayView<Scalar>>& views,
                        const std::string& path) {
  for (const auto& v : views) {
    const ArrayRecord* rec = ckpt.find(v.name);
    if (rec == nullptr) throw FormatError(path + ": missing array '" + v.name + "'");
    if (rec->data.size() != static_cast<std::size_t>(v.size)) {
      throw FormatError(path + ": array '" + v.name + "' has " + std::to_string(rec->data.size()) +
                        " values, expected " + std::to_string(v.size));
    }
    for (Eigen::Index i = 0; i < v.size; ++i) v.data[i] = static_cast<Scalar>(rec->data[static_cast<std::size_t>(i)]);
  }
}

}  // namespace uvsn
