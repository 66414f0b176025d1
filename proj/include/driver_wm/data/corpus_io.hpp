#pragma once

// Corpus on disk: <dir>/corpus.bin + <dir>/manifest.txt.
//
// corpus.bin, all multi-byte values little-endian:
//   "DWM1"
//   u32 version (=1), num_clips, T, T_obs, V, D, K
//   per clip, in manifest `clips` order:
//     coords    T*K*2 f32
//     mask      T*K   u8
//     internal  T*D   f32
//     external  T*V*D f32
//     labels    4     u8   (dbr, der, tcr, vcr)
//     frame     2     u32  (W, H)
//
// manifest.txt, "key = value" lines:
//   format, version, corpus_id, generator_config_hash, num_clips,
//   clips (blob order), train, val, test (comma-separated ids)

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "driver_wm/data/clip.hpp"
#include "driver_wm/error.hpp"
#include "driver_wm/kv_text.hpp"

namespace dwm {

inline constexpr char kCorpusMagic[4] = {'D', 'W', 'M', '1'};
inline constexpr std::uint32_t kCorpusVersion = 1;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes_.append(p, n); }

  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string bytes, std::string context)
      : bytes_(std::move(bytes)), context_(std::move(context)) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorCode::kTruncated, context_ + ": needed " + std::to_string(n) + " bytes at offset " +
                                      std::to_string(pos_) + ", " + std::to_string(bytes_.size() - pos_) + " left");
    }
  }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
  std::string context_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "write failed for " + path);
}

inline std::string encode_corpus_blob(const CorpusDims& dims, const std::vector<Clip>& clips) {
  ByteWriter w;
  w.raw(kCorpusMagic, 4);
  w.u32(kCorpusVersion);
  w.u32(static_cast<std::uint32_t>(clips.size()));
  w.u32(dims.T);
  w.u32(dims.T_obs);
  w.u32(dims.V);
  w.u32(dims.D);
  w.u32(dims.K);
  for (const auto& c : clips) {
    if (!(c.dims == dims)) fail(ErrorCode::kHeaderMismatch, "clip " + c.id + " dims differ from corpus");
    c.validate();
    for (float v : c.coords) w.f32(v);
    for (auto m : c.mask) w.u8(m);
    for (float v : c.internal) w.f32(v);
    for (float v : c.external) w.f32(v);
    for (auto l : c.labels.as_array()) w.u8(l);
    w.u32(c.frame.width);
    w.u32(c.frame.height);
  }
  return w.bytes();
}

/// Decodes the blob; ids come from the manifest's blob-order list.
inline std::pair<CorpusDims, std::vector<Clip>> decode_corpus_blob(std::string bytes,
                                                                   const std::vector<std::string>& ids) {
  ByteReader r(std::move(bytes), "corpus blob");
  if (r.remaining() < 4) fail(ErrorCode::kBadMagic, "corpus blob shorter than magic");
  const std::string magic = r.raw(4);
  if (std::memcmp(magic.data(), kCorpusMagic, 4) != 0) fail(ErrorCode::kBadMagic, "expected DWM1");
  const std::uint32_t version = r.u32();
  if (version != kCorpusVersion) fail(ErrorCode::kBadVersion, "corpus version " + std::to_string(version));
  const std::uint32_t n = r.u32();
  CorpusDims dims;
  dims.T = r.u32();
  dims.T_obs = r.u32();
  dims.V = r.u32();
  dims.D = r.u32();
  dims.K = r.u32();
  if (dims.T_obs < 1 || dims.T_obs >= dims.T || dims.V < 1 || dims.D < 1 || dims.K < 1) {
    fail(ErrorCode::kHeaderMismatch, "inconsistent shape header T=" + std::to_string(dims.T) +
                                         " T_obs=" + std::to_string(dims.T_obs) + " V=" + std::to_string(dims.V) +
                                         " D=" + std::to_string(dims.D) + " K=" + std::to_string(dims.K));
  }
  if (ids.size() != n) {
    fail(ErrorCode::kHeaderMismatch,
         "blob holds " + std::to_string(n) + " clips, manifest lists " + std::to_string(ids.size()));
  }
  const std::size_t T = dims.T, K = dims.K, D = dims.D, V = dims.V;
  const std::size_t per_clip = T * K * 2 * 4 + T * K + T * D * 4 + T * V * D * 4 + 4 + 8;
  r.need(per_clip * n);
  std::vector<Clip> clips(n);
  for (std::size_t i = 0; i < n; ++i) {
    Clip& c = clips[i];
    c.id = ids[i];
    c.dims = dims;
    c.coords.resize(T * K * 2);
    for (auto& v : c.coords) v = r.f32();
    c.mask.resize(T * K);
    for (auto& m : c.mask) m = r.u8();
    c.internal.resize(T * D);
    for (auto& v : c.internal) v = r.f32();
    c.external.resize(T * V * D);
    for (auto& v : c.external) v = r.f32();
    c.labels.dbr = r.u8();
    c.labels.der = r.u8();
    c.labels.tcr = r.u8();
    c.labels.vcr = r.u8();
    c.frame.width = r.u32();
    c.frame.height = r.u32();
  }
  if (r.remaining() != 0) fail(ErrorCode::kHeaderMismatch, std::to_string(r.remaining()) + " trailing bytes");
  return {dims, std::move(clips)};
}

inline KeyValueText encode_manifest(const CorpusManifest& m, const std::vector<Clip>& clips) {
  KeyValueText kv;
  kv.set("format", std::string("dwm-corpus-manifest"));
  kv.set("version", kCorpusVersion);
  kv.set("corpus_id", m.corpus_id);
  kv.set("generator_config_hash", m.generator_config_hash);
  kv.set("num_clips", static_cast<std::uint64_t>(clips.size()));
  std::vector<std::string> ids;
  for (const auto& c : clips) ids.push_back(c.id);
  kv.set("clips", KeyValueText::join_list(ids));
  kv.set("num_train", static_cast<std::uint64_t>(m.train.size()));
  kv.set("num_val", static_cast<std::uint64_t>(m.val.size()));
  kv.set("num_test", static_cast<std::uint64_t>(m.test.size()));
  kv.set("train", KeyValueText::join_list(m.train));
  kv.set("val", KeyValueText::join_list(m.val));
  kv.set("test", KeyValueText::join_list(m.test));
  return kv;
}

inline void save_corpus(const std::string& dir, const Corpus& corpus) {
  std::filesystem::create_directories(dir);
  write_file(dir + "/corpus.bin", encode_corpus_blob(corpus.dims, corpus.clips));
  encode_manifest(corpus.manifest, corpus.clips).save(dir + "/manifest.txt");
}

inline Corpus load_corpus(const std::string& dir) {
  const std::string manifest_path = dir + "/manifest.txt";
  const std::string blob_path = dir + "/corpus.bin";
  if (!std::filesystem::exists(manifest_path)) fail(ErrorCode::kIo, "missing " + manifest_path);
  if (!std::filesystem::exists(blob_path)) fail(ErrorCode::kIo, "missing " + blob_path);
  const KeyValueText kv = KeyValueText::load(manifest_path);
  if (kv.get_or("format", "") != "dwm-corpus-manifest") fail(ErrorCode::kBadMagic, manifest_path + " is not a corpus manifest");
  if (kv.get_u64("version") != kCorpusVersion) fail(ErrorCode::kBadVersion, manifest_path);

  Corpus corpus;
  corpus.manifest.corpus_id = kv.get("corpus_id");
  corpus.manifest.generator_config_hash = kv.get("generator_config_hash");
  corpus.manifest.train = KeyValueText::split_list(kv.get("train"));
  corpus.manifest.val = KeyValueText::split_list(kv.get("val"));
  corpus.manifest.test = KeyValueText::split_list(kv.get("test"));
  const auto ids = KeyValueText::split_list(kv.get("clips"));
  if (kv.get_u64("num_clips") != ids.size() || corpus.manifest.num_clips() != ids.size()) {
    fail(ErrorCode::kHeaderMismatch, "manifest clip counts disagree");
  }
  auto [dims, clips] = decode_corpus_blob(read_file(blob_path), ids);
  corpus.dims = dims;
  corpus.clips = std::move(clips);
  return corpus;
}

}  // namespace dwm
