#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "attrnet/adam.hpp"
#include "attrnet/model.hpp"

namespace attrnet {

// Layout (all integers little-endian):
//   8 bytes   magic "ATTRNETC"
//   u32       format version
//   u64 + n   network document (JSON)
//   u64 + n   metadata document (JSON)
//   u32       parameter count, then that many tensor records
//   u32       buffer count, then that many tensor records
// Tensor record: u32 name length, name bytes, u8 dtype (1 = f32, 2 = f64),
// u32 rank, rank x u64 dims, payload.

inline constexpr char kCheckpointMagic[8] = {'A', 'T', 'T', 'R', 'N', 'E', 'T', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Training provenance stored next to the weights.
struct CheckpointMeta {
  AdamConfig adam;
  std::uint64_t epoch = 0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  std::string attribute;
  std::vector<std::string> classes;
  std::uint64_t seed = 0;
  std::string dataset;

  bool operator==(const CheckpointMeta&) const = default;
};

inline nlohmann::json to_json(const CheckpointMeta& m) {
  return {{"adam", {{"lr", m.adam.lr}, {"beta1", m.adam.beta1}, {"beta2", m.adam.beta2}, {"eps", m.adam.eps}}},
          {"epoch", m.epoch},
          {"val_loss", m.val_loss},
          {"val_accuracy", m.val_accuracy},
          {"attribute", m.attribute},
          {"classes", m.classes},
          {"seed", m.seed},
          {"dataset", m.dataset}};
}

inline CheckpointMeta meta_from_json(const nlohmann::json& j) {
  try {
    CheckpointMeta m;
    const auto& a = j.at("adam");
    m.adam = {a.at("lr"), a.at("beta1"), a.at("beta2"), a.at("eps")};
    m.epoch = j.at("epoch");
    m.val_loss = j.at("val_loss");
    m.val_accuracy = j.at("val_accuracy");
    m.attribute = j.at("attribute");
    m.classes = j.at("classes").get<std::vector<std::string>>();
    m.seed = j.at("seed");
    m.dataset = j.at("dataset");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
  }
}

template <class T>
struct Checkpoint {
  Model<T> model;
  CheckpointMeta meta;
};

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  static_assert(std::is_trivially_copyable_v<U>);
  char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
  out.append(b, sizeof(U));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  template <class U>
  U get() {
    char b[sizeof(U)];
    take(b, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
    U v;
    std::memcpy(&v, b, sizeof(U));
    return v;
  }

  std::string get_string(std::uint64_t n) {
    if (n > remaining()) truncated();
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void take(char* dst, std::size_t n) {
    if (n > remaining()) truncated();
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  [[noreturn]] void truncated() const { throw FormatError("checkpoint truncated: " + origin_); }
  const std::string& origin() const { return origin_; }

 private:
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

template <class T>
void put_tensor(std::string& out, const std::string& name, const Tensor<T>& t) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_le<std::uint8_t>(out, std::is_same_v<T, float> ? 1 : 2);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
  for (T v : t.data()) put_le<T>(out, v);
}

template <class T>
std::pair<std::string, Tensor<T>> get_tensor(Reader& r) {
  const auto name_len = r.get<std::uint32_t>();
  std::string name = r.get_string(name_len);
  const auto dtype = r.get<std::uint8_t>();
  if (dtype != 1 && dtype != 2) throw FormatError("unknown dtype " + std::to_string(dtype) + " for " + name);
  const auto rank = r.get<std::uint32_t>();
  if (rank == 0 || rank > 8) throw FormatError("bad rank for " + name);
  Shape shape(rank);
  std::uint64_t n = 1;
  for (auto& d : shape) {
    d = r.get<std::uint64_t>();
    if (d == 0 || d > r.remaining()) r.truncated();
    n *= d;
  }
  if (n * (dtype == 1 ? 4 : 8) > r.remaining()) r.truncated();
  Tensor<T> t(shape);
  auto out = t.mutable_data();
  for (std::size_t i = 0; i < n; ++i) out[i] = dtype == 1 ? static_cast<T>(r.get<float>()) : static_cast<T>(r.get<double>());
  return {std::move(name), std::move(t)};
}

}  // namespace detail

template <class T>
std::string serialize_checkpoint(const Model<T>& model, const CheckpointMeta& meta) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string net = to_json(model.spec).dump();
  const std::string md = to_json(meta).dump();
  detail::put_le<std::uint64_t>(out, net.size());
  out += net;
  detail::put_le<std::uint64_t>(out, md.size());
  out += md;
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.params.size()));
  for (const auto& [name, t] : model.params) detail::put_tensor(out, name, t);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.buffers.size()));
  for (const auto& [name, t] : model.buffers) detail::put_tensor(out, name, t);
  return out;
}

/// Parses a checkpoint image; tensors are converted to T. The tensor set
/// must match the network document exactly (names, order and shapes).
template <class T>
Checkpoint<T> deserialize_checkpoint(const std::string& bytes, const std::string& origin = "<memory>") {
  detail::Reader r(bytes, origin);
  char magic[8];
  r.take(magic, 8);
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw FormatError("not a checkpoint (bad magic): " + origin);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) + " is not supported (this build reads " +
                       std::to_string(kCheckpointVersion) + "): " + origin);
  }
  auto parse = [&](const char* what) {
    const auto n = r.get<std::uint64_t>();
    const auto text = r.get_string(n);
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad ") + what + " document in " + origin + ": " + e.what());
    }
  };
  NetworkSpec spec = network_spec_from_json(parse("network"));
  CheckpointMeta meta = meta_from_json(parse("metadata"));
  Model<T> model{spec, {}, {}};
  const auto n_params = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    auto [name, t] = detail::get_tensor<T>(r);
    model.params.insert(name, std::move(t.set_requires_grad(true)));
  }
  const auto n_buffers = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_buffers; ++i) {
    auto [name, t] = detail::get_tensor<T>(r);
    model.buffers.insert(name, std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint: " + origin);
  std::size_t pi = 0, bi = 0;
  const auto layout = model_layout(spec);
  for (const auto& slot : layout) {
    const auto& store = slot.buffer ? model.buffers : model.params;
    auto& idx = slot.buffer ? bi : pi;
    if (idx >= store.size()) throw FormatError("checkpoint is missing tensor " + slot.name + ": " + origin);
    const auto& [name, t] = *(store.begin() + static_cast<std::ptrdiff_t>(idx++));
    if (name != slot.name || t.shape() != slot.shape) {
      throw FormatError("checkpoint tensor " + name + " " + shape_string(t.shape()) + " does not match expected " +
                        slot.name + " " + shape_string(slot.shape) + ": " + origin);
    }
  }
  if (pi != model.params.size() || bi != model.buffers.size()) throw FormatError("checkpoint has extra tensors: " + origin);
  return {std::move(model), std::move(meta)};
}

/// Writes to a sibling temp file and renames it into place.
template <class T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model, const CheckpointMeta& meta) {
  const std::string bytes = serialize_checkpoint(model, meta);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw WriteError(tmp.string(), "cannot open checkpoint for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw WriteError(tmp.string(), "checkpoint write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw WriteError(path.string(), "cannot move checkpoint into place (" + ec.message() + ")");
}

template <class T = float>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError(path.string(), "cannot open checkpoint");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint<T>(bytes, path.string());
}

}  // namespace attrnet
