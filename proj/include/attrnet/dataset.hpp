#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "attrnet/augment.hpp"
#include "attrnet/image.hpp"
#include "attrnet/manifest.hpp"
#include "attrnet/rng.hpp"
#include "attrnet/tensor.hpp"

namespace attrnet {

/// Decoded, resized samples for one attribute, each [C,H,W] in [0,1].
template <class T>
struct InMemoryDataset {
  std::vector<Tensor<T>> images;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
};

/// Reads every record's image (no cropping), resizes to input_size square
/// and takes the attribute's label. Decoding may use `workers` threads; the
/// result and the first reported error are independent of the worker count.
template <class T = float>
InMemoryDataset<T> load_dataset(const Manifest& manifest, const std::vector<SampleRecord>& records,
                                const AttributeSchema& attr, std::size_t input_size, unsigned workers = 1) {
  InMemoryDataset<T> ds;
  ds.num_classes = attr.classes.size();
  ds.images.resize(records.size());
  ds.labels.resize(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto it = records[i].labels.find(attr.name);
    if (it == records[i].labels.end()) throw CoverageError("record " + records[i].image + " has no " + attr.name + " label");
    if (it->second < 0 || static_cast<std::size_t>(it->second) >= ds.num_classes) {
      throw LabelError("record " + records[i].image + ": label " + std::to_string(it->second) + " out of range for " + attr.name);
    }
    ds.labels[i] = it->second;
  }
  std::vector<std::exception_ptr> errors(records.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < records.size();) {
      try {
        ds.images[i] = resize_rescale<T>(read_image(manifest.resolve(records[i])), input_size);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(records.size(), 1))));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return ds;
}

enum class Phase { train, eval };

template <class T>
struct Batch {
  Tensor<T> x;                       // [N,C,H,W]
  std::vector<int> labels;           // N
  std::vector<std::size_t> indices;  // dataset positions
};

/// Training batches follow a permutation drawn from (seed, epoch) and are
/// augmented per sample; evaluation batches keep dataset order and are never
/// augmented. The last batch may be short.
template <class T>
class BatchIterator {
 public:
  BatchIterator(const InMemoryDataset<T>& data, std::size_t batch_size, Phase phase, std::uint64_t seed = 0,
                std::uint64_t epoch = 0, AugmentConfig augment = AugmentConfig::none())
      : data_(data), batch_(batch_size), phase_(phase), seed_(seed), epoch_(epoch), augment_(augment),
        order_(data.size()) {
    if (batch_size == 0) throw ValidationError("batch size must be positive");
    augment_.validate();
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (phase_ == Phase::train) {
      Rng rng(mix_seed(seed_, epoch_));
      rng.shuffle(order_);
    }
  }

  std::size_t num_batches() const { return (order_.size() + batch_ - 1) / batch_; }
  const std::vector<std::size_t>& order() const { return order_; }

  bool next(Batch<T>& out) {
    if (pos_ >= order_.size()) return false;
    const std::size_t n = std::min(batch_, order_.size() - pos_);
    const Shape& s = data_.images[order_[pos_]].shape();
    const std::size_t per = shape_numel(s);
    out.x = Tensor<T>({n, s[0], s[1], s[2]});
    out.labels.assign(n, 0);
    out.indices.assign(n, 0);
    T* dst = out.x.mutable_ptr();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = order_[pos_ + i];
      const auto& img = data_.images[idx];
      if (img.shape() != s) throw DimensionError("dataset images differ in shape");
      if (phase_ == Phase::train && augment_.any()) {
        const auto a = augment(img, augment_, augment_seed(seed_, epoch_, idx));
        std::copy_n(a.ptr(), per, dst + i * per);
      } else {
        std::copy_n(img.ptr(), per, dst + i * per);
      }
      out.labels[i] = data_.labels[idx];
      out.indices[i] = idx;
    }
    pos_ += n;
    return true;
  }

 private:
  const InMemoryDataset<T>& data_;
  std::size_t batch_;
  Phase phase_;
  std::uint64_t seed_;
  std::uint64_t epoch_;
  AugmentConfig augment_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace attrnet
