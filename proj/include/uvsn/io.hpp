#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "uvsn/errors.hpp"
#include "uvsn/types.hpp"

namespace uvsn {

namespace detail {

// All multi-byte fields are little-endian on disk regardless of host order.
inline void put_u32le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32le(std::istream& in, const std::string& path, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) throw FormatError(path + ": truncated while reading " + std::string(what));
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32le(std::ostream& out, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32le(out, u);
}

inline void put_f32le_block(std::ostream& out, const float* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) put_f32le(out, data[i]);
}

inline void get_f32le_block(std::istream& in, float* data, std::size_t n, const std::string& path) {
  std::vector<unsigned char> buf(n * 4);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw FormatError(path + ": truncated payload");
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t u = static_cast<std::uint32_t>(buf[4 * i]) | (static_cast<std::uint32_t>(buf[4 * i + 1]) << 8) |
                            (static_cast<std::uint32_t>(buf[4 * i + 2]) << 16) |
                            (static_cast<std::uint32_t>(buf[4 * i + 3]) << 24);
    std::memcpy(&data[i], &u, 4);
  }
}

inline void check_magic(std::istream& in, const std::string& path, const char expect[4]) {
  char m[4];
  in.read(m, 4);
  if (in.gcount() != 4) throw FormatError(path + ": truncated while reading magic");
  if (std::memcmp(m, expect, 4) != 0) {
    throw FormatError(path + ": bad magic, expected '" + std::string(expect, 4) + "'");
  }
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

}  // namespace detail

inline constexpr char kFeatureMagic[4] = {'U', 'V', 'S', 'N'};
inline constexpr char kAnnotationMagic[4] = {'U', 'V', 'S', 'A'};
inline constexpr std::uint32_t kFormatVersion = 1;

// Feature file: "UVSN" | version | T | D | flags | T*D float32 LE, row-major.
template <class Scalar>
void write_features(const std::string& path, const FrameFeatureSequence<Scalar>& seq) {
  seq.validate();
  auto out = detail::open_out(path);
  out.write(kFeatureMagic, 4);
  detail::put_u32le(out, kFormatVersion);
  detail::put_u32le(out, static_cast<std::uint32_t>(seq.frames()));
  detail::put_u32le(out, static_cast<std::uint32_t>(seq.dim()));
  detail::put_u32le(out, 0);  // flags
  for (Eigen::Index t = 0; t < seq.frames(); ++t) {
    for (Eigen::Index d = 0; d < seq.dim(); ++d) {
      detail::put_f32le(out, static_cast<float>(seq.features(t, d)));
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

template <class Scalar = float>
FrameFeatureSequence<Scalar> read_features(const std::string& path, std::string video_id = {}) {
  auto in = detail::open_in(path);
  detail::check_magic(in, path, kFeatureMagic);
  const std::uint32_t version = detail::get_u32le(in, path, "version");
  if (version != kFormatVersion) {
    throw FormatError(path + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t t = detail::get_u32le(in, path, "T");
  const std::uint32_t d = detail::get_u32le(in, path, "D");
  detail::get_u32le(in, path, "flags");
  if (t < 1 || d < 1) {
    throw ValidationError(path + ": T >= 1 and D >= 1 required, got " + std::to_string(t) + "x" + std::to_string(d));
  }
  std::vector<float> payload(static_cast<std::size_t>(t) * d);
  detail::get_f32le_block(in, payload.data(), payload.size(), path);
  FrameFeatureSequence<Scalar> seq;
  seq.video_id = video_id.empty() ? std::filesystem::path(path).stem().string() : std::move(video_id);
  seq.features.resize(t, d);
  for (std::uint32_t i = 0; i < t; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) {
      const float v = payload[static_cast<std::size_t>(i) * d + j];
      if (!std::isfinite(v)) throw ValidationError(path + ": non-finite feature value");
      seq.features(i, j) = static_cast<Scalar>(v);
    }
  }
  return seq;
}

// Annotation file: "UVSA" | version | T | U | U*T bytes of 0/1, row-major.
// U=1 for training key-frame annotations, U>=1 for evaluation user
// summaries. Emptiness of rows is a property of the annotation *types*, not
// of the container, so predicted all-zero keyshot masks can share it.
inline void write_annotation_masks(const std::string& path, const std::vector<Mask>& masks) {
  if (masks.empty()) throw ValidationError(path + ": U >= 1 required");
  const std::size_t t = masks.front().size();
  if (t == 0) throw ValidationError(path + ": T >= 1 required");
  auto out = detail::open_out(path);
  out.write(kAnnotationMagic, 4);
  detail::put_u32le(out, kFormatVersion);
  detail::put_u32le(out, static_cast<std::uint32_t>(t));
  detail::put_u32le(out, static_cast<std::uint32_t>(masks.size()));
  for (const Mask& m : masks) {
    if (m.size() != t) throw ValidationError(path + ": ragged mask rows");
    for (auto b : m) {
      if (b > 1) throw ValidationError(path + ": mask values must be 0/1");
    }
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(t));
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<Mask> read_annotation_masks(const std::string& path) {
  auto in = detail::open_in(path);
  detail::check_magic(in, path, kAnnotationMagic);
  const std::uint32_t version = detail::get_u32le(in, path, "version");
  if (version != kFormatVersion) {
    throw FormatError(path + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t t = detail::get_u32le(in, path, "T");
  const std::uint32_t u = detail::get_u32le(in, path, "U");
  if (t < 1) throw ValidationError(path + ": T >= 1 required");
  if (u < 1) throw ValidationError(path + ": U >= 1 required");
  std::vector<Mask> masks(u, Mask(t));
  for (std::uint32_t i = 0; i < u; ++i) {
    in.read(reinterpret_cast<char*>(masks[i].data()), static_cast<std::streamsize>(t));
    if (static_cast<std::size_t>(in.gcount()) != t) throw FormatError(path + ": truncated payload");
    for (auto b : masks[i]) {
      if (b > 1) throw FormatError(path + ": invalid mask byte (must be 0/1)");
    }
  }
  return masks;
}

inline KeyframeAnnotation read_keyframe_annotation(const std::string& path, std::string video_id) {
  const auto masks = read_annotation_masks(path);
  if (masks.size() != 1) {
    throw ValidationError(path + ": expected a single key-frame mask (U=1), got U=" + std::to_string(masks.size()));
  }
  KeyframeAnnotation ann{std::move(video_id), masks.front()};
  ann.validate();
  return ann;
}

inline UserSummaries read_user_summaries(const std::string& path, std::string video_id) {
  UserSummaries users{std::move(video_id), read_annotation_masks(path)};
  users.validate();
  return users;
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

enum class Role { raw, summary, paired, test };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::raw: return "raw";
    case Role::summary: return "summary";
    case Role::paired: return "paired";
    case Role::test: return "test";
  }
  return "?";
}

inline Role parse_role(const std::string& s, const std::string& where) {
  if (s == "raw") return Role::raw;
  if (s == "summary") return Role::summary;
  if (s == "paired") return Role::paired;
  if (s == "test") return Role::test;
  throw FormatError(where + ": unknown role '" + s + "'");
}

struct ManifestEntry {
  std::string video_id;
  Role role = Role::raw;
  std::string feature_path;
  std::string annotation_path;  // "-" when absent
};

// One record per line: video_id<TAB>role<TAB>feature_path<TAB>annotation_path_or_-
inline std::vector<ManifestEntry> read_manifest(const std::string& path) {
  auto in = detail::open_in(path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw FormatError(where + ": expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw FormatError(where + ": empty video_id");
    entries.push_back({fields[0], parse_role(fields[1], where), fields[2], fields[3]});
  }
  return entries;
}

inline void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  auto out = detail::open_out(path);
  for (const auto& e : entries) {
    out << e.video_id << '\t' << to_string(e.role) << '\t' << e.feature_path << '\t'
        << (e.annotation_path.empty() ? "-" : e.annotation_path) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Corpus loading
// ---------------------------------------------------------------------------

// Relative paths in a manifest resolve against the manifest's directory.
inline std::string resolve_path(const std::string& manifest_path, const std::string& p) {
  std::filesystem::path fp(p);
  if (fp.is_absolute()) return p;
  return (std::filesystem::path(manifest_path).parent_path() / fp).string();
}

template <class Scalar>
struct TestVideo {
  FrameFeatureSequence<Scalar> video;
  UserSummaries users;
};

namespace detail {

// Enforces that every file in one corpus shares the feature dimension; the
// diagnostic names both offending files.
struct DimChecker {
  Eigen::Index dim = -1;
  std::string first_path;

  void check(Eigen::Index d, const std::string& path) {
    if (dim < 0) {
      dim = d;
      first_path = path;
    } else if (d != dim) {
      throw ValidationError("mixed feature dimensions in corpus: " + first_path + " has D=" + std::to_string(dim) +
                            " but " + path + " has D=" + std::to_string(d));
    }
  }
};

}  // namespace detail

// Builds the training-side dataset from raw/summary/paired entries. Test
// entries are ignored here (see load_test_videos).
template <class Scalar = float>
UnpairedDataset<Scalar> load_unpaired_dataset(const std::string& manifest_path) {
  const auto entries = read_manifest(manifest_path);
  UnpairedDataset<Scalar> ds;
  detail::DimChecker dims;
  std::unordered_set<std::string> seen;
  for (const auto& e : entries) {
    if (e.role == Role::test) continue;
    if (!seen.insert(e.video_id).second) {
      throw ValidationError(manifest_path + ": duplicate video_id '" + e.video_id + "'");
    }
    const std::string fpath = resolve_path(manifest_path, e.feature_path);
    auto seq = read_features<Scalar>(fpath, e.video_id);
    dims.check(seq.dim(), fpath);
    switch (e.role) {
      case Role::raw:
        ds.raw_videos.push_back(std::move(seq));
        break;
      case Role::paired: {
        if (e.annotation_path == "-" || e.annotation_path.empty()) {
          throw ValidationError(manifest_path + ": paired video '" + e.video_id + "' has no annotation");
        }
        auto ann = read_keyframe_annotation(resolve_path(manifest_path, e.annotation_path), e.video_id);
        ds.raw_videos.push_back(std::move(seq));
        ds.paired_subset.push_back({static_cast<int>(ds.raw_videos.size()) - 1, std::move(ann)});
        break;
      }
      case Role::summary: {
        if (e.annotation_path == "-" || e.annotation_path.empty()) {
          throw ValidationError(manifest_path + ": summary video '" + e.video_id + "' has no annotation");
        }
        auto ann = read_keyframe_annotation(resolve_path(manifest_path, e.annotation_path), e.video_id);
        ds.real_summaries.push_back(build_real_summary(seq, ann));
        break;
      }
      case Role::test:
        break;
    }
  }
  ds.validate();
  return ds;
}

template <class Scalar = float>
std::vector<TestVideo<Scalar>> load_test_videos(const std::string& manifest_path) {
  const auto entries = read_manifest(manifest_path);
  std::vector<TestVideo<Scalar>> out;
  detail::DimChecker dims;
  for (const auto& e : entries) {
    if (e.role != Role::test) continue;
    if (e.annotation_path == "-" || e.annotation_path.empty()) {
      throw ValidationError(manifest_path + ": test video '" + e.video_id + "' is missing user summaries");
    }
    const std::string fpath = resolve_path(manifest_path, e.feature_path);
    auto seq = read_features<Scalar>(fpath, e.video_id);
    dims.check(seq.dim(), fpath);
    auto users = read_user_summaries(resolve_path(manifest_path, e.annotation_path), e.video_id);
    if (static_cast<Eigen::Index>(users.masks.front().size()) != seq.frames()) {
      throw ValidationError(manifest_path + ": test video '" + e.video_id + "' user mask length " +
                            std::to_string(users.masks.front().size()) + " != T=" + std::to_string(seq.frames()));
    }
    out.push_back({std::move(seq), std::move(users)});
  }
  return out;
}

}  // namespace uvsn
