// Binary checkpoint container: magic + version, a kind tag, scalar metadata,
// named tensors with dtype/shape/payload, and a trailing CRC32. Loads are
// bit-exact; writes go through a temp file and rename so a crash cannot leave
// a partial checkpoint behind.
#pragma once

#include <bit>
#include <cstring>
#include <map>

#include "edgenav/detector.hpp"
#include "edgenav/ppo.hpp"

namespace edgenav {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

inline uint32_t crc32(const unsigned char* data, size_t len, uint32_t seed = 0) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t c = seed ^ 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

inline constexpr char kCkptMagic[4] = {'E', 'N', 'M', 'C'};
inline constexpr uint32_t kCkptVersion = 1;

enum class CkptDtype : uint8_t { kF64 = 0, kF32 = 1 };

struct NamedTensor {
  std::string name;
  CkptDtype dtype = CkptDtype::kF64;
  Shape shape;
  std::vector<unsigned char> payload;
};

struct Checkpoint {
  std::string kind;
  std::map<std::string, double> meta;  // ordered: serialization is canonical
  std::vector<NamedTensor> tensors;

  double meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw IoError("checkpoint missing meta key: " + key);
    return it->second;
  }
  const NamedTensor& tensor_at(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t;
    throw IoError("checkpoint missing tensor: " + name);
  }
};

namespace detail_ckpt {

inline void put_bytes(std::vector<unsigned char>& out, const void* p, size_t n) {
  const auto* b = static_cast<const unsigned char*>(p);
  out.insert(out.end(), b, b + n);
}
template <typename T>
void put_pod(std::vector<unsigned char>& out, T v) {
  put_bytes(out, &v, sizeof(T));
}
inline void put_string(std::vector<unsigned char>& out, const std::string& s) {
  put_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  put_bytes(out, s.data(), s.size());
}

struct Reader {
  const unsigned char* p;
  const unsigned char* end;
  const std::string& path;

  void take(void* dst, size_t n) {
    if (p + n > end) throw IoError("truncated checkpoint: " + path);
    std::memcpy(dst, p, n);
    p += n;
  }
  template <typename T>
  T pod() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  std::string str() {
    const uint32_t n = pod<uint32_t>();
    if (p + n > end) throw IoError("truncated checkpoint: " + path);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    return s;
  }
};

}  // namespace detail_ckpt

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::vector<unsigned char> buf;
  detail_ckpt::put_bytes(buf, kCkptMagic, 4);
  detail_ckpt::put_pod<uint32_t>(buf, kCkptVersion);
  detail_ckpt::put_string(buf, ckpt.kind);
  detail_ckpt::put_pod<uint32_t>(buf, static_cast<uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    detail_ckpt::put_string(buf, k);
    detail_ckpt::put_pod<double>(buf, v);
  }
  detail_ckpt::put_pod<uint32_t>(buf, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    detail_ckpt::put_string(buf, t.name);
    detail_ckpt::put_pod<uint8_t>(buf, static_cast<uint8_t>(t.dtype));
    detail_ckpt::put_pod<uint32_t>(buf, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) detail_ckpt::put_pod<int64_t>(buf, d);
    detail_ckpt::put_pod<uint64_t>(buf, t.payload.size());
    detail_ckpt::put_bytes(buf, t.payload.data(), t.payload.size());
  }
  detail_ckpt::put_pod<uint32_t>(buf, crc32(buf.data(), buf.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + tmp);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 12) throw IoError("truncated checkpoint: " + path);
  const uint32_t stored_crc =
      *reinterpret_cast<const uint32_t*>(buf.data() + buf.size() - 4);
  if (crc32(buf.data(), buf.size() - 4) != stored_crc)
    throw IoError("checksum mismatch in checkpoint: " + path);
  detail_ckpt::Reader r{buf.data(), buf.data() + buf.size() - 4, path};
  char magic[4];
  r.take(magic, 4);
  if (std::memcmp(magic, kCkptMagic, 4) != 0)
    throw IoError("not an edgenav checkpoint: " + path);
  const uint32_t version = r.pod<uint32_t>();
  if (version != kCkptVersion)
    throw IoError("refusing checkpoint version " + std::to_string(version) +
                  " (supported: " + std::to_string(kCkptVersion) + "): " + path);
  Checkpoint ckpt;
  ckpt.kind = r.str();
  const uint32_t n_meta = r.pod<uint32_t>();
  for (uint32_t i = 0; i < n_meta; ++i) {
    std::string key = r.str();
    ckpt.meta[key] = r.pod<double>();
  }
  const uint32_t n_tensors = r.pod<uint32_t>();
  for (uint32_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    t.name = r.str();
    t.dtype = static_cast<CkptDtype>(r.pod<uint8_t>());
    const uint32_t ndim = r.pod<uint32_t>();
    for (uint32_t d = 0; d < ndim; ++d) t.shape.push_back(r.pod<int64_t>());
    const uint64_t bytes = r.pod<uint64_t>();
    t.payload.resize(bytes);
    r.take(t.payload.data(), bytes);
    const size_t elem = t.dtype == CkptDtype::kF64 ? 8 : 4;
    if (bytes != static_cast<uint64_t>(shape_numel(t.shape)) * elem)
      throw IoError("tensor payload size mismatch for " + t.name + " in " + path);
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// detector / policy adapters
// ---------------------------------------------------------------------------

struct NormStats {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.25, 0.25, 0.25};
};

inline void save_detector_checkpoint(const std::string& path,
                                     const DetectorModel<double>& model,
                                     const NormStats& stats) {
  Checkpoint ckpt;
  ckpt.kind = "detector";
  const ModelConfig& cfg = model.cfg;
  for (int i = 0; i < 4; ++i) {
    ckpt.meta["depth" + std::to_string(i)] = double(cfg.depths[i]);
    ckpt.meta["channel" + std::to_string(i)] = double(cfg.channels[i]);
  }
  ckpt.meta["num_classes"] = double(cfg.num_classes);
  ckpt.meta["patch_size"] = double(cfg.patch_size);
  ckpt.meta["input_size"] = double(cfg.input_size);
  ckpt.meta["d_state"] = double(cfg.d_state);
  ckpt.meta["head_width"] = double(cfg.head_width);
  for (int c = 0; c < 3; ++c) {
    ckpt.meta["norm_mean_" + std::to_string(c)] = stats.mean[c];
    ckpt.meta["norm_std_" + std::to_string(c)] = stats.stddev[c];
  }
  ParamMap<double> pm = model.parameters();
  for (const auto& [name, t] : pm.items) {
    NamedTensor nt;
    nt.name = name;
    nt.dtype = CkptDtype::kF64;
    nt.shape = t.shape();
    nt.payload.resize(t.numel() * sizeof(double));
    std::memcpy(nt.payload.data(), t.data().data(), nt.payload.size());
    ckpt.tensors.push_back(std::move(nt));
  }
  save_checkpoint(ckpt, path);
}

inline ModelConfig config_from_checkpoint(const Checkpoint& ckpt) {
  ModelConfig cfg;
  for (int i = 0; i < 4; ++i) {
    cfg.depths[i] = static_cast<int64_t>(ckpt.meta_at("depth" + std::to_string(i)));
    cfg.channels[i] = static_cast<int64_t>(ckpt.meta_at("channel" + std::to_string(i)));
  }
  cfg.num_classes = static_cast<int64_t>(ckpt.meta_at("num_classes"));
  cfg.patch_size = static_cast<int64_t>(ckpt.meta_at("patch_size"));
  cfg.input_size = static_cast<int64_t>(ckpt.meta_at("input_size"));
  cfg.d_state = static_cast<int64_t>(ckpt.meta_at("d_state"));
  cfg.head_width = static_cast<int64_t>(ckpt.meta_at("head_width"));
  return cfg;
}

inline NormStats stats_from_checkpoint(const Checkpoint& ckpt) {
  NormStats stats;
  for (int c = 0; c < 3; ++c) {
    stats.mean[c] = ckpt.meta_at("norm_mean_" + std::to_string(c));
    stats.stddev[c] = ckpt.meta_at("norm_std_" + std::to_string(c));
  }
  return stats;
}

// Rebuilds a T-precision model and fills every named parameter from the
// checkpoint. f64 payloads fill double models bit-exactly and float models by
// narrowing cast.
template <typename T>
DetectorModel<T> detector_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "detector")
    throw IoError("checkpoint kind is '" + ckpt.kind + "', expected 'detector'");
  DetectorModel<T> model(config_from_checkpoint(ckpt), 0);
  ParamMap<T> pm = model.parameters();
  for (auto& [name, t] : pm.items) {
    const NamedTensor& nt = ckpt.tensor_at(name);
    if (nt.shape != t.shape())
      throw IoError("tensor shape mismatch for " + name);
    if (nt.dtype != CkptDtype::kF64)
      throw IoError("unexpected dtype for " + name);
    const double* src = reinterpret_cast<const double*>(nt.payload.data());
    auto dst = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) dst[i] = static_cast<T>(src[i]);
  }
  return model;
}

inline void save_policy_checkpoint(const std::string& path, const PolicyNet& policy) {
  Checkpoint ckpt;
  ckpt.kind = "policy";
  ckpt.meta["obs_dim"] = double(policy.obs_dim);
  ckpt.meta["hidden"] = double(policy.fc1.weight.dim(0));
  ckpt.meta["n_actions"] = double(policy.n_actions);
  ParamMap<double> pm = policy.parameters();
  for (const auto& [name, t] : pm.items) {
    NamedTensor nt;
    nt.name = name;
    nt.dtype = CkptDtype::kF64;
    nt.shape = t.shape();
    nt.payload.resize(t.numel() * sizeof(double));
    std::memcpy(nt.payload.data(), t.data().data(), nt.payload.size());
    ckpt.tensors.push_back(std::move(nt));
  }
  save_checkpoint(ckpt, path);
}

inline PolicyNet policy_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "policy")
    throw IoError("checkpoint kind is '" + ckpt.kind + "', expected 'policy'");
  PolicyNet policy(static_cast<int64_t>(ckpt.meta_at("obs_dim")),
                   static_cast<int64_t>(ckpt.meta_at("hidden")),
                   static_cast<int64_t>(ckpt.meta_at("n_actions")), 0);
  ParamMap<double> pm = policy.parameters();
  for (auto& [name, t] : pm.items) {
    const NamedTensor& nt = ckpt.tensor_at(name);
    if (nt.shape != t.shape()) throw IoError("tensor shape mismatch for " + name);
    std::memcpy(t.data().data(), nt.payload.data(), nt.payload.size());
  }
  return policy;
}

}  // namespace edgenav
