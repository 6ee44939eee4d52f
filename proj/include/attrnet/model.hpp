#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "attrnet/graph.hpp"
#include "attrnet/head.hpp"
#include "attrnet/ops.hpp"
#include "attrnet/parameters.hpp"
#include "attrnet/rng.hpp"

namespace attrnet {

enum class BlockKind { basic, bottleneck };
enum class ShortcutKind { identity, projection };

inline const char* to_string(BlockKind k) { return k == BlockKind::basic ? "basic" : "bottleneck"; }
inline const char* to_string(ShortcutKind k) { return k == ShortcutKind::identity ? "identity" : "projection"; }

inline BlockKind parse_block_kind(const std::string& s) {
  if (s == "basic") return BlockKind::basic;
  if (s == "bottleneck") return BlockKind::bottleneck;
  throw ValidationError("unknown block kind: " + s);
}
inline ShortcutKind parse_shortcut_kind(const std::string& s) {
  if (s == "identity") return ShortcutKind::identity;
  if (s == "projection") return ShortcutKind::projection;
  throw ValidationError("unknown shortcut kind: " + s);
}

/// Bottleneck blocks expand their middle width by this factor.
inline constexpr std::size_t kBottleneckExpansion = 4;

struct BlockSpec {
  BlockKind kind = BlockKind::basic;
  std::size_t in_channels = 0;
  std::size_t mid_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  ShortcutKind shortcut = ShortcutKind::identity;

  bool shape_preserving() const { return stride == 1 && in_channels == out_channels; }

  /// A block whose shortcut follows the standard rule: identity exactly when
  /// the block preserves shape, projection otherwise.
  static BlockSpec make(BlockKind kind, std::size_t in, std::size_t width, std::size_t stride) {
    BlockSpec b;
    b.kind = kind;
    b.in_channels = in;
    b.mid_channels = width;
    b.out_channels = kind == BlockKind::bottleneck ? width * kBottleneckExpansion : width;
    b.stride = stride;
    b.shortcut = b.shape_preserving() ? ShortcutKind::identity : ShortcutKind::projection;
    return b;
  }

  void validate(const std::string& where) const {
    if (in_channels == 0 || mid_channels == 0 || out_channels == 0) {
      throw ValidationError(where + ": channel counts must be positive");
    }
    if (stride != 1 && stride != 2) throw ValidationError(where + ": stride must be 1 or 2");
    if (kind == BlockKind::bottleneck && out_channels != kBottleneckExpansion * mid_channels) {
      throw ValidationError(where + ": bottleneck output must be 4x its middle width");
    }
    if (kind == BlockKind::basic && mid_channels != out_channels) {
      throw ValidationError(where + ": basic block middle width must equal its output width");
    }
    // Projection on a shape-preserving block is allowed (it is what the
    // identity-vs-projection parameter comparison measures); identity on a
    // shape-changing block is not.
    if (shortcut == ShortcutKind::identity && !shape_preserving()) {
      throw ValidationError(where + ": identity shortcut requires stride 1 and equal in/out channels");
    }
  }

  bool operator==(const BlockSpec&) const = default;
};

struct PoolSpec {
  std::size_t kernel = 2;
  std::size_t stride = 2;
  std::size_t pad = 0;
  bool operator==(const PoolSpec&) const = default;
};

/// conv -> batchnorm -> relu -> optional max pool.
struct StemSpec {
  std::size_t channels = 64;
  std::size_t kernel = 7;
  std::size_t stride = 2;
  std::size_t pad = 3;
  std::optional<PoolSpec> pool = PoolSpec{3, 2, 1};
  bool operator==(const StemSpec&) const = default;
};

struct HeadSpec {
  HeadKind kind = HeadKind::softmax_multiclass;
  std::size_t num_classes = 2;

  std::size_t outputs() const { return num_classes; }

  void validate() const {
    if (num_classes == 0) throw ValidationError("head: num_classes must be positive");
    if (kind == HeadKind::sigmoid_binary && num_classes != 1) {
      throw ValidationError("head: sigmoid_binary requires num_classes == 1, got " + std::to_string(num_classes));
    }
    if (kind == HeadKind::softmax_multiclass && num_classes < 2) {
      throw ValidationError("head: softmax_multiclass requires at least 2 classes");
    }
  }

  /// Number of distinct labels the head predicts.
  std::size_t label_classes() const { return kind == HeadKind::sigmoid_binary ? 2 : num_classes; }

  bool operator==(const HeadSpec&) const = default;
};

struct NetworkSpec {
  std::array<std::size_t, 3> input_shape{3, 224, 224};
  std::optional<StemSpec> stem;
  std::vector<std::vector<BlockSpec>> stages;
  std::optional<HeadSpec> head;
  ops::BatchNormOptions bn;

  /// Channels entering the head.
  std::size_t feature_channels() const {
    for (auto s = stages.rbegin(); s != stages.rend(); ++s)
      if (!s->empty()) return s->back().out_channels;
    return stem ? stem->channels : input_shape[0];
  }

  void validate() const {
    for (auto d : input_shape)
      if (d == 0) throw ValidationError("input shape dims must be positive");
    std::size_t channels = input_shape[0];
    std::size_t h = input_shape[1], w = input_shape[2];
    if (stem) {
      if (stem->channels == 0 || stem->kernel == 0 || stem->stride == 0) {
        throw ValidationError("stem: channels, kernel and stride must be positive");
      }
      if (stem->kernel > h + 2 * stem->pad || stem->kernel > w + 2 * stem->pad) {
        throw ValidationError("shape underflow at stem: input " + std::to_string(h) + "x" + std::to_string(w) +
                              " smaller than the stem kernel");
      }
      h = ops::window_out(h, stem->kernel, stem->stride, stem->pad);
      w = ops::window_out(w, stem->kernel, stem->stride, stem->pad);
      if (stem->pool) {
        const auto& p = *stem->pool;
        if (p.kernel == 0 || p.stride == 0 || p.pad >= p.kernel) throw ValidationError("stem pool: invalid window");
        if (p.kernel > h + 2 * p.pad || p.kernel > w + 2 * p.pad) {
          throw ValidationError("shape underflow at stem pool: feature map " + std::to_string(h) + "x" +
                                std::to_string(w) + " smaller than the pool window");
        }
        h = ops::window_out(h, p.kernel, p.stride, p.pad);
        w = ops::window_out(w, p.kernel, p.stride, p.pad);
      }
      channels = stem->channels;
    }
    for (std::size_t s = 0; s < stages.size(); ++s) {
      for (std::size_t b = 0; b < stages[s].size(); ++b) {
        const auto& blk = stages[s][b];
        const std::string where = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
        blk.validate(where);
        if (blk.in_channels != channels) {
          throw ValidationError(where + ": expects " + std::to_string(blk.in_channels) + " input channels, previous layer gives " +
                                std::to_string(channels));
        }
        if (blk.stride > 1 && (h < blk.stride || w < blk.stride)) {
          throw ValidationError("shape underflow at stage" + std::to_string(s + 1) + ": feature map " +
                                std::to_string(h) + "x" + std::to_string(w) + " cannot be downsampled");
        }
        h = (h - 1) / blk.stride + 1;
        w = (w - 1) / blk.stride + 1;
        channels = blk.out_channels;
      }
    }
    if (head) head->validate();
  }

  bool operator==(const NetworkSpec&) const = default;
};

/// Stage layout used to generate a NetworkSpec.
struct StageConfig {
  BlockKind kind = BlockKind::basic;
  std::size_t blocks = 1;
  std::size_t width = 64;
  std::size_t stride = 1;
};

struct ArchitectureConfig {
  std::optional<StemSpec> stem = StemSpec{};
  std::vector<StageConfig> stages;
};

/// Canonical ImageNet-style layouts for depths 18, 34 and 50.
inline ArchitectureConfig resnet_preset(int depth) {
  ArchitectureConfig cfg;
  std::array<std::size_t, 4> counts;
  BlockKind kind = BlockKind::basic;
  switch (depth) {
    case 18: counts = {2, 2, 2, 2}; break;
    case 34: counts = {3, 4, 6, 3}; break;
    case 50:
      counts = {3, 4, 6, 3};
      kind = BlockKind::bottleneck;
      break;
    default: throw ValidationError("unsupported resnet depth " + std::to_string(depth) + " (use 18, 34 or 50)");
  }
  const std::array<std::size_t, 4> widths{64, 128, 256, 512};
  for (std::size_t s = 0; s < 4; ++s) cfg.stages.push_back({kind, counts[s], widths[s], s == 0 ? 1u : 2u});
  return cfg;
}

/// Two-stage residual net for 32x32 inputs used for desk-scale runs.
inline ArchitectureConfig small_preset() {
  ArchitectureConfig cfg;
  cfg.stem = StemSpec{16, 3, 1, 1, PoolSpec{2, 2, 0}};
  cfg.stages = {{BlockKind::basic, 1, 16, 1}, {BlockKind::basic, 1, 32, 2}};
  return cfg;
}

inline NetworkSpec make_network_spec(const ArchitectureConfig& arch, std::array<std::size_t, 3> input_shape,
                                     std::optional<HeadSpec> head) {
  NetworkSpec spec;
  spec.input_shape = input_shape;
  spec.stem = arch.stem;
  spec.head = head;
  std::size_t channels = arch.stem ? arch.stem->channels : input_shape[0];
  for (const auto& st : arch.stages) {
    if (st.blocks == 0) throw ValidationError("stage with zero blocks");
    std::vector<BlockSpec> blocks;
    for (std::size_t b = 0; b < st.blocks; ++b) {
      blocks.push_back(BlockSpec::make(st.kind, channels, st.width, b == 0 ? st.stride : 1));
      channels = blocks.back().out_channels;
    }
    spec.stages.push_back(std::move(blocks));
  }
  spec.validate();
  return spec;
}

namespace detail {

inline std::size_t conv_count(std::size_t in, std::size_t out, std::size_t k) { return in * out * k * k; }
inline std::size_t bn_count(std::size_t c) { return 2 * c; }

inline std::size_t block_param_count(const BlockSpec& b) {
  std::size_t n = 0;
  if (b.kind == BlockKind::basic) {
    n += conv_count(b.in_channels, b.mid_channels, 3) + bn_count(b.mid_channels);
    n += conv_count(b.mid_channels, b.out_channels, 3) + bn_count(b.out_channels);
  } else {
    n += conv_count(b.in_channels, b.mid_channels, 1) + bn_count(b.mid_channels);
    n += conv_count(b.mid_channels, b.mid_channels, 3) + bn_count(b.mid_channels);
    n += conv_count(b.mid_channels, b.out_channels, 1) + bn_count(b.out_channels);
  }
  if (b.shortcut == ShortcutKind::projection) n += conv_count(b.in_channels, b.out_channels, 1) + bn_count(b.out_channels);
  return n;
}

}  // namespace detail

/// Scalar count of trainable parameters, derived from the NetworkSpec alone.
inline std::size_t count_params(const NetworkSpec& spec) {
  std::size_t n = 0;
  if (spec.stem) n += detail::conv_count(spec.input_shape[0], spec.stem->channels, spec.stem->kernel) + detail::bn_count(spec.stem->channels);
  for (const auto& stage : spec.stages)
    for (const auto& b : stage) n += detail::block_param_count(b);
  if (spec.head) n += spec.feature_channels() * spec.head->outputs() + spec.head->outputs();
  return n;
}

/// Parameters of a 1x1 projection shortcut (conv + batchnorm).
inline std::size_t projection_param_count(const BlockSpec& b) {
  return detail::conv_count(b.in_channels, b.out_channels, 1) + detail::bn_count(b.out_channels);
}

/// Architecture plus its weights and batchnorm running statistics.
template <class T>
struct Model {
  NetworkSpec spec;
  NamedTensors<T> params;
  NamedTensors<T> buffers;

  Model clone() const { return {spec, params.clone(), buffers.clone()}; }

  template <class U>
  Model<U> cast() const {
    Model<U> out{spec, {}, {}};
    for (auto& [n, t] : params) out.params.insert(n, t.template cast<U>());
    for (auto& [n, t] : buffers) out.buffers.insert(n, t.template cast<U>());
    return out;
  }
};

namespace detail {

inline std::uint64_t tensor_seed(std::uint64_t seed, const std::string& name) { return mix_seed(seed, fnv1a(name)); }

template <class T>
Tensor<T> he_normal(const std::string& name, Shape shape, std::uint64_t seed) {
  const std::size_t fan_in = shape[1] * shape[2] * shape[3];
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  Rng rng(tensor_seed(seed, name));
  Tensor<T> t(std::move(shape));
  for (auto& v : t.mutable_data()) v = static_cast<T>(sd * rng.normal());
  return t;
}

template <class T>
Tensor<T> glorot_uniform(const std::string& name, std::size_t in, std::size_t out, std::uint64_t seed) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Rng rng(tensor_seed(seed, name));
  Tensor<T> t({in, out});
  for (auto& v : t.mutable_data()) v = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

}  // namespace detail

inline std::string block_name(std::size_t stage, std::size_t block) {
  return "stage" + std::to_string(stage + 1) + ".block" + std::to_string(block + 1);
}

enum class InitKind { he_normal, glorot_uniform, zeros, ones };

/// One tensor a spec declares, in canonical order.
struct TensorSlot {
  std::string name;
  Shape shape;
  InitKind init;
  bool buffer;  // running statistic rather than trainable parameter
};

/// Every parameter and buffer of a network: names, shapes and initializers.
inline std::vector<TensorSlot> model_layout(const NetworkSpec& spec) {
  std::vector<TensorSlot> out;
  auto conv = [&](const std::string& n, std::size_t in, std::size_t o, std::size_t k) {
    out.push_back({n + ".weight", {o, in, k, k}, InitKind::he_normal, false});
  };
  auto bn = [&](const std::string& n, std::size_t c) {
    out.push_back({n + ".gamma", {c}, InitKind::ones, false});
    out.push_back({n + ".beta", {c}, InitKind::zeros, false});
    out.push_back({n + ".running_mean", {c}, InitKind::zeros, true});
    out.push_back({n + ".running_var", {c}, InitKind::ones, true});
  };
  if (spec.stem) {
    conv("stem.conv", spec.input_shape[0], spec.stem->channels, spec.stem->kernel);
    bn("stem.bn", spec.stem->channels);
  }
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    for (std::size_t b = 0; b < spec.stages[s].size(); ++b) {
      const auto& blk = spec.stages[s][b];
      const std::string p = block_name(s, b);
      if (blk.kind == BlockKind::basic) {
        conv(p + ".conv1", blk.in_channels, blk.mid_channels, 3);
        bn(p + ".bn1", blk.mid_channels);
        conv(p + ".conv2", blk.mid_channels, blk.out_channels, 3);
        bn(p + ".bn2", blk.out_channels);
      } else {
        conv(p + ".conv1", blk.in_channels, blk.mid_channels, 1);
        bn(p + ".bn1", blk.mid_channels);
        conv(p + ".conv2", blk.mid_channels, blk.mid_channels, 3);
        bn(p + ".bn2", blk.mid_channels);
        conv(p + ".conv3", blk.mid_channels, blk.out_channels, 1);
        bn(p + ".bn3", blk.out_channels);
      }
      if (blk.shortcut == ShortcutKind::projection) {
        conv(p + ".shortcut.conv", blk.in_channels, blk.out_channels, 1);
        bn(p + ".shortcut.bn", blk.out_channels);
      }
    }
  }
  if (spec.head) {
    out.push_back({"head.dense.weight", {spec.feature_channels(), spec.head->outputs()}, InitKind::glorot_uniform, false});
    out.push_back({"head.dense.bias", {spec.head->outputs()}, InitKind::zeros, false});
  }
  return out;
}

namespace detail {

template <class T>
Tensor<T> init_tensor(const TensorSlot& slot, std::uint64_t seed) {
  switch (slot.init) {
    case InitKind::he_normal: return he_normal<T>(slot.name, slot.shape, seed);
    case InitKind::glorot_uniform: return glorot_uniform<T>(slot.name, slot.shape[0], slot.shape[1], seed);
    case InitKind::zeros: return Tensor<T>::zeros(slot.shape);
    case InitKind::ones: break;
  }
  return Tensor<T>::ones(slot.shape);
}

}  // namespace detail

/// Allocates and initializes every tensor a spec declares: He-normal conv
/// weights, gamma=1, beta=0, zero dense bias, Glorot-uniform dense weight.
/// Each tensor's values depend only on (seed, tensor name).
template <class T>
Model<T> init_model(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model<T> m{spec, {}, {}};
  for (const auto& slot : model_layout(spec)) {
    auto t = detail::init_tensor<T>(slot, seed);
    if (slot.buffer) {
      m.buffers.insert(slot.name, std::move(t));
    } else {
      m.params.insert(slot.name, std::move(t.set_requires_grad(true)));
    }
  }
  return m;
}

template <class T>
Model<T> build_resnet(const ArchitectureConfig& arch, std::array<std::size_t, 3> input_shape,
                      std::optional<HeadSpec> head, std::uint64_t seed) {
  return init_model<T>(make_network_spec(arch, input_shape, head), seed);
}

template <class T>
Model<T> build_resnet(int depth, std::array<std::size_t, 3> input_shape, std::optional<HeadSpec> head,
                      std::uint64_t seed) {
  return build_resnet<T>(resnet_preset(depth), input_shape, head, seed);
}

/// Swaps the head for a freshly initialized one; body tensors are shared
/// with the source model, not copied or modified.
template <class T>
Model<T> replace_head(const Model<T>& model, const HeadSpec& new_head, std::uint64_t seed) {
  if (!model.spec.head) throw ContractError("replace_head: model has no head");
  new_head.validate();
  Model<T> out{model.spec, {}, model.buffers};
  out.spec.head = new_head;
  for (auto& [name, t] : model.params)
    if (name.rfind("head.", 0) != 0) out.params.insert(name, t);
  for (const auto& slot : model_layout(out.spec))
    if (slot.name.rfind("head.", 0) == 0) out.params.insert(slot.name, detail::init_tensor<T>(slot, seed).set_requires_grad(true));
  return out;
}

namespace detail {

template <class T>
struct ForwardContext {
  const Model<T>& model;
  Mode mode;
  Graph<T>* graph;

  const Tensor<T>& p(const std::string& name) const { return model.params.at(name); }

  Tensor<T> conv(const std::string& name, const Tensor<T>& x, std::size_t stride, std::size_t pad) const {
    return ops::conv2d(x, p(name + ".weight"), nullptr, stride, pad, graph);
  }

  Tensor<T> bn(const std::string& name, const Tensor<T>& x) const {
    ops::BatchNormState<T> st{model.buffers.at(name + ".running_mean"), model.buffers.at(name + ".running_var")};
    return ops::batchnorm2d(x, p(name + ".gamma"), p(name + ".beta"), st, model.spec.bn, mode, graph);
  }

  void check(const Tensor<T>& t, const std::string& layer) const {
    if (!t.all_finite()) throw NumericError("non-finite activation at " + layer);
  }
};

}  // namespace detail

/// One residual block: branch(x) + shortcut(x), then relu.
template <class T>
Tensor<T> residual_block(const Model<T>& model, std::size_t stage, std::size_t block, const Tensor<T>& x, Mode mode,
                         Graph<T>* g = nullptr) {
  const auto& blk = model.spec.stages.at(stage).at(block);
  const std::string p = block_name(stage, block);
  detail::ForwardContext<T> ctx{model, mode, g};
  Tensor<T> h;
  if (blk.kind == BlockKind::basic) {
    h = ops::relu(ctx.bn(p + ".bn1", ctx.conv(p + ".conv1", x, blk.stride, 1)), g);
    h = ctx.bn(p + ".bn2", ctx.conv(p + ".conv2", h, 1, 1));
  } else {
    h = ops::relu(ctx.bn(p + ".bn1", ctx.conv(p + ".conv1", x, blk.stride, 0)), g);
    h = ops::relu(ctx.bn(p + ".bn2", ctx.conv(p + ".conv2", h, 1, 1)), g);
    h = ctx.bn(p + ".bn3", ctx.conv(p + ".conv3", h, 1, 0));
  }
  Tensor<T> shortcut = x;
  if (blk.shortcut == ShortcutKind::projection) {
    shortcut = ctx.bn(p + ".shortcut.bn", ctx.conv(p + ".shortcut.conv", x, blk.stride, 0));
  }
  return ops::relu(ops::add(h, shortcut, g), g);
}

/// Body output before the head: stem and every residual stage.
template <class T>
Tensor<T> forward_features(const Model<T>& model, const Tensor<T>& batch, Mode mode, Graph<T>* g = nullptr) {
  const auto& spec = model.spec;
  if (batch.rank() != 4 || batch.dim(1) != spec.input_shape[0] || batch.dim(2) != spec.input_shape[1] ||
      batch.dim(3) != spec.input_shape[2]) {
    throw DimensionError("batch " + shape_string(batch.shape()) + " does not match network input [N," +
                         std::to_string(spec.input_shape[0]) + "," + std::to_string(spec.input_shape[1]) + "," +
                         std::to_string(spec.input_shape[2]) + "]");
  }
  detail::ForwardContext<T> ctx{model, mode, g};
  Tensor<T> x = batch;
  if (spec.stem) {
    x = ops::relu(ctx.bn("stem.bn", ctx.conv("stem.conv", x, spec.stem->stride, spec.stem->pad)), g);
    if (spec.stem->pool) x = ops::maxpool2d(x, spec.stem->pool->kernel, spec.stem->pool->stride, spec.stem->pool->pad, g);
    ctx.check(x, "stem");
  }
  for (std::size_t s = 0; s < spec.stages.size(); ++s)
    for (std::size_t b = 0; b < spec.stages[s].size(); ++b) {
      x = residual_block(model, s, b, x, mode, g);
      ctx.check(x, block_name(s, b));
    }
  return x;
}

template <class T>
struct ForwardOutput {
  /// Pre-activation head output ([N,K] or [N,1]); pooled features when headless.
  Tensor<T> logits;
  /// Class probabilities (softmax rows or sigmoid column).
  Tensor<T> probs;
};

/// Full forward pass. Train mode uses batch statistics and updates the
/// model's running statistics; eval mode reads them only.
template <class T>
ForwardOutput<T> forward(const Model<T>& model, const Tensor<T>& batch, Mode mode, Graph<T>* g = nullptr) {
  Tensor<T> x = forward_features(model, batch, mode, g);
  x = ops::flatten(ops::global_avgpool(x, g), g);
  if (!model.spec.head) return {x, x};
  Tensor<T> logits = ops::dense(x, model.params.at("head.dense.weight"), model.params.at("head.dense.bias"), g);
  if (!logits.all_finite()) throw NumericError("non-finite activation at head.dense");
  Tensor<T> probs = model.spec.head->kind == HeadKind::softmax_multiclass ? ops::softmax_rows(logits, g)
                                                                           : ops::sigmoid(logits, g);
  return {logits, probs};
}

/// Eval-mode probabilities; never touches running statistics.
template <class T>
Tensor<T> predict(const Model<T>& model, const Tensor<T>& batch) {
  return forward(model, batch, Mode::eval).probs;
}

// ---- architecture document -------------------------------------------------

inline constexpr int kNetworkDocVersion = 1;

inline nlohmann::json to_json(const NetworkSpec& spec) {
  using nlohmann::json;
  json j;
  j["format"] = "attrnet.network";
  j["version"] = kNetworkDocVersion;
  j["input_shape"] = spec.input_shape;
  if (spec.stem) {
    json s{{"channels", spec.stem->channels}, {"kernel", spec.stem->kernel}, {"stride", spec.stem->stride}, {"pad", spec.stem->pad}};
    s["pool"] = spec.stem->pool ? json{{"kernel", spec.stem->pool->kernel}, {"stride", spec.stem->pool->stride}, {"pad", spec.stem->pool->pad}}
                                : json(nullptr);
    j["stem"] = s;
  } else {
    j["stem"] = nullptr;
  }
  json stages = json::array();
  for (const auto& stage : spec.stages) {
    json blocks = json::array();
    for (const auto& b : stage) {
      blocks.push_back({{"kind", to_string(b.kind)},
                        {"in_channels", b.in_channels},
                        {"mid_channels", b.mid_channels},
                        {"out_channels", b.out_channels},
                        {"stride", b.stride},
                        {"shortcut", to_string(b.shortcut)}});
    }
    stages.push_back(blocks);
  }
  j["stages"] = stages;
  j["head"] = spec.head ? json{{"kind", to_string(spec.head->kind)}, {"num_classes", spec.head->num_classes}} : json(nullptr);
  j["batchnorm"] = {{"eps", spec.bn.eps}, {"momentum", spec.bn.momentum}};
  return j;
}

inline NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "attrnet.network") throw FormatError("not a network document");
    const int version = j.at("version").get<int>();
    if (version != kNetworkDocVersion) {
      throw VersionError("network document version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kNetworkDocVersion) + ")");
    }
    NetworkSpec spec;
    spec.input_shape = j.at("input_shape").get<std::array<std::size_t, 3>>();
    if (!j.at("stem").is_null()) {
      const auto& s = j.at("stem");
      StemSpec stem{s.at("channels"), s.at("kernel"), s.at("stride"), s.at("pad"), std::nullopt};
      if (!s.at("pool").is_null()) {
        const auto& p = s.at("pool");
        stem.pool = PoolSpec{p.at("kernel"), p.at("stride"), p.at("pad")};
      }
      spec.stem = stem;
    }
    for (const auto& stage : j.at("stages")) {
      std::vector<BlockSpec> blocks;
      for (const auto& b : stage) {
        BlockSpec blk;
        blk.kind = parse_block_kind(b.at("kind"));
        blk.in_channels = b.at("in_channels");
        blk.mid_channels = b.at("mid_channels");
        blk.out_channels = b.at("out_channels");
        blk.stride = b.at("stride");
        blk.shortcut = parse_shortcut_kind(b.at("shortcut"));
        blocks.push_back(blk);
      }
      spec.stages.push_back(std::move(blocks));
    }
    if (!j.at("head").is_null()) {
      spec.head = HeadSpec{parse_head_kind(j.at("head").at("kind")), j.at("head").at("num_classes")};
    }
    spec.bn.eps = j.at("batchnorm").at("eps");
    spec.bn.momentum = j.at("batchnorm").at("momentum");
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed network document: ") + e.what());
  }
}

}  // namespace attrnet
