#pragma once

#include <atomic>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "pty/field_core.hpp"
#include "pty/solver.hpp"

namespace pty::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kBundleVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

enum class DType { f32, c64 };

inline const char* to_string(DType t) { return t == DType::f32 ? "f32" : "c64"; }
inline std::size_t element_bytes(DType t) { return t == DType::f32 ? 4 : 8; }

/// One raw array: little-endian, row-major; c64 is interleaved (re, im) f32.
struct ArrayEntry {
  std::string file;
  DType dtype = DType::f32;
  std::vector<std::size_t> shape;
  std::vector<unsigned char> bytes;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
  }
  std::size_t expected_bytes() const { return element_count() * element_bytes(dtype); }
};

namespace detail {

inline std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
  } else {
    return v;
  }
}

inline void encode_floats(const float* src, std::size_t count, std::vector<unsigned char>& out) {
  out.resize(count * 4);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t w = to_little(std::bit_cast<std::uint32_t>(src[i]));
    std::memcpy(out.data() + 4 * i, &w, 4);
  }
}

inline void decode_floats(const std::vector<unsigned char>& in, float* dst, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t w;
    std::memcpy(&w, in.data() + 4 * i, 4);
    dst[i] = std::bit_cast<float>(to_little(w));
  }
}

}  // namespace detail

/// Manifest plus arrays. `meta` is free-form provenance.
struct Bundle {
  int version = kBundleVersion;
  std::map<std::string, ArrayEntry> arrays;
  json meta = json::object();

  bool has(const std::string& name) const { return arrays.count(name) != 0; }

  const ArrayEntry& at(const std::string& name) const {
    auto it = arrays.find(name);
    if (it == arrays.end()) fail(ErrorKind::validation, "bundle has no array '" + name + "'");
    return it->second;
  }

  void put_f32(const std::string& name, std::vector<std::size_t> shape, std::span<const float> values) {
    ArrayEntry e{name + ".f32", DType::f32, std::move(shape), {}};
    if (e.element_count() != values.size()) fail(ErrorKind::validation, "array '" + name + "' shape does not match data");
    detail::encode_floats(values.data(), values.size(), e.bytes);
    arrays[name] = std::move(e);
  }

  void put_c64(const std::string& name, std::vector<std::size_t> shape, std::span<const Complex<float>> values) {
    ArrayEntry e{name + ".c64", DType::c64, std::move(shape), {}};
    if (e.element_count() != values.size()) fail(ErrorKind::validation, "array '" + name + "' shape does not match data");
    detail::encode_floats(reinterpret_cast<const float*>(values.data()), 2 * values.size(), e.bytes);
    arrays[name] = std::move(e);
  }

  std::vector<float> get_f32(const std::string& name) const {
    const ArrayEntry& e = at(name);
    if (e.dtype != DType::f32) fail(ErrorKind::validation, "array '" + name + "' is not f32");
    std::vector<float> out(e.element_count());
    detail::decode_floats(e.bytes, out.data(), out.size());
    return out;
  }

  std::vector<Complex<float>> get_c64(const std::string& name) const {
    const ArrayEntry& e = at(name);
    if (e.dtype != DType::c64) fail(ErrorKind::validation, "array '" + name + "' is not c64");
    std::vector<Complex<float>> out(e.element_count());
    detail::decode_floats(e.bytes, reinterpret_cast<float*>(out.data()), 2 * out.size());
    return out;
  }

  void put_field(const std::string& name, const ObjectField<float>& f) { put_c64(name, {f.rows(), f.cols()}, f.values()); }

  ObjectField<float> get_field(const std::string& name) const {
    const ArrayEntry& e = at(name);
    if (e.shape.size() != 2) fail(ErrorKind::validation, "array '" + name + "' is not 2D");
    return ObjectField<float>(e.shape[0], e.shape[1], get_c64(name));
  }
};

inline json manifest_json(const Bundle& b) {
  json arrays = json::object();
  for (const auto& [name, e] : b.arrays) {
    arrays[name] = {{"file", e.file}, {"dtype", to_string(e.dtype)}, {"shape", e.shape}};
  }
  return {{"version", b.version}, {"arrays", arrays}, {"meta", b.meta}};
}

/// Writes into a temporary sibling directory, manifest last, then renames it
/// into place. A failed write leaves no manifest at `path`.
inline void write_bundle(const Bundle& b, const fs::path& path) {
  for (const auto& [name, e] : b.arrays) {
    if (e.bytes.size() != e.expected_bytes()) fail(ErrorKind::validation, "array '" + name + "' byte length mismatch");
  }
  static std::atomic<unsigned> counter{0};
  fs::path target = fs::absolute(path).lexically_normal();
  if (!target.has_filename()) target = target.parent_path();
  const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp-" + std::to_string(counter++));
  std::error_code ec;
  auto io_fail = [&](const std::string& what) {
    fs::remove_all(tmp, ec);
    fail(ErrorKind::io, what);
  };
  if (!target.parent_path().empty()) fs::create_directories(target.parent_path(), ec);
  fs::remove_all(tmp, ec);
  if (!fs::create_directories(tmp, ec) || ec) io_fail("cannot create " + tmp.string() + ": " + ec.message());
  for (const auto& [name, e] : b.arrays) {
    std::ofstream out(tmp / e.file, std::ios::binary);
    out.write(reinterpret_cast<const char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size()));
    if (!out) io_fail("cannot write " + (target / e.file).string());
  }
  {
    std::ofstream out(tmp / kManifestName);
    out << manifest_json(b).dump(2) << '\n';
    if (!out) io_fail("cannot write " + (target / kManifestName).string());
  }
  if (fs::exists(target, ec)) fs::remove_all(target, ec);
  fs::rename(tmp, target, ec);
  if (ec) io_fail("cannot move bundle into " + target.string() + ": " + ec.message());
}

/// Reads and validates a bundle. Shapes from the manifest are always
/// cross-checked against file sizes.
inline Bundle read_bundle(const fs::path& path) {
  const fs::path mpath = path / kManifestName;
  std::ifstream min(mpath);
  if (!min) fail(ErrorKind::io, "cannot open " + mpath.string());
  json m;
  try {
    min >> m;
  } catch (const json::exception& e) {
    fail(ErrorKind::corruption, mpath.string() + ": " + e.what());
  }
  Bundle b;
  try {
    b.version = m.at("version").get<int>();
    if (b.version != kBundleVersion) {
      fail(ErrorKind::unsupported_version, mpath.string() + " has version " + std::to_string(b.version));
    }
    if (m.contains("meta")) b.meta = m.at("meta");
    for (const auto& [name, jv] : m.at("arrays").items()) {
      ArrayEntry e;
      e.file = jv.at("file").get<std::string>();
      const std::string dt = jv.at("dtype").get<std::string>();
      if (dt == "f32") {
        e.dtype = DType::f32;
      } else if (dt == "c64") {
        e.dtype = DType::c64;
      } else {
        fail(ErrorKind::corruption, "array '" + name + "' has unknown dtype '" + dt + "'");
      }
      e.shape = jv.at("shape").get<std::vector<std::size_t>>();
      const fs::path fpath = path / e.file;
      std::ifstream in(fpath, std::ios::binary);
      if (!in) fail(ErrorKind::io, "missing array file " + fpath.string());
      e.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
      if (e.bytes.size() != e.expected_bytes()) {
        fail(ErrorKind::corruption, fpath.string() + ": expected " + std::to_string(e.expected_bytes()) + " bytes, found " +
                                        std::to_string(e.bytes.size()));
      }
      b.arrays[name] = std::move(e);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::corruption, mpath.string() + ": " + e.what());
  }
  if (b.has("d")) {
    for (float v : b.get_f32("d")) {
      if (!std::isfinite(v) || v < 0.0f) fail(ErrorKind::validation, path.string() + ": diffraction data has negative or non-finite values");
    }
  }
  return b;
}

/// Dataset bundle: d [n,N,N] f32, probe [N,N] c64, scan [n,2] f32 and an
/// optional psi_ref [H,W] c64. The object shape lives in meta.object.
inline Bundle dataset_bundle(const Dataset<float>& ds, json meta = json::object()) {
  Bundle b;
  const std::size_t n = ds.probe.side();
  b.put_f32("d", {ds.d.count(), n, n}, ds.d.values());
  b.put_c64("probe", {n, n}, ds.probe.flat());
  std::vector<float> scan;
  for (const auto& p : ds.scan) {
    scan.push_back(static_cast<float>(p.row));
    scan.push_back(static_cast<float>(p.col));
  }
  b.put_f32("scan", {ds.scan.size(), 2}, scan);
  if (ds.psi_ref) b.put_field("psi_ref", *ds.psi_ref);
  meta["object"] = {{"height", ds.height}, {"width", ds.width}};
  b.meta = std::move(meta);
  return b;
}

inline Dataset<float> load_dataset(const Bundle& b) {
  for (const char* name : {"d", "probe", "scan"}) {
    if (!b.has(name)) fail(ErrorKind::validation, std::string("dataset bundle lacks required array '") + name + "'");
  }
  const ArrayEntry& de = b.at("d");
  const ArrayEntry& pe = b.at("probe");
  const ArrayEntry& se = b.at("scan");
  if (de.shape.size() != 3 || de.shape[1] != de.shape[2]) fail(ErrorKind::validation, "d must have shape [n, N, N]");
  if (pe.shape.size() != 2 || pe.shape[0] != pe.shape[1]) fail(ErrorKind::validation, "probe must have shape [N, N]");
  if (se.shape.size() != 2 || se.shape[1] != 2) fail(ErrorKind::validation, "scan must have shape [n, 2]");
  const std::size_t n = pe.shape[0];
  if (de.shape[1] != n || de.shape[0] != se.shape[0]) fail(ErrorKind::validation, "d, probe and scan shapes disagree");

  Dataset<float> ds;
  ds.probe = Probe<float>(Grid<Complex<float>>(n, n, b.get_c64("probe")));
  ds.d = DiffractionSet(de.shape[0], n, b.get_f32("d"));
  if (b.has("psi_ref")) {
    ds.psi_ref = b.get_field("psi_ref");
    ds.height = ds.psi_ref->rows();
    ds.width = ds.psi_ref->cols();
  }
  if (b.meta.contains("object")) {
    ds.height = b.meta["object"].at("height").get<std::size_t>();
    ds.width = b.meta["object"].at("width").get<std::size_t>();
  }
  if (ds.height == 0 || ds.width == 0) fail(ErrorKind::validation, "dataset does not record the object shape");
  const std::vector<float> raw = b.get_f32("scan");
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t j = 0; j < se.shape[0]; ++j) pairs.emplace_back(raw[2 * j], raw[2 * j + 1]);
  ds.scan = round_positions(pairs, ds.height, ds.width, n);
  ds.validate();
  return ds;
}

}  // namespace pty::io
