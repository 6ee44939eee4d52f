#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attrnet/graph.hpp"
#include "attrnet/ops.hpp"
#include "attrnet/tensor.hpp"

namespace attrnet {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr double kProbClamp = 1e-7;

enum class TaskKind { multiclass, binary };

namespace detail {

inline double clamped_log(double p) {
  return std::log(std::clamp(p, kProbClamp, 1.0 - kProbClamp));
}

template <class T>
void check_onehot(const Tensor<T>& onehot, std::size_t n, std::size_t k) {
  if (onehot.rank() != 2 || onehot.dim(0) != n || onehot.dim(1) != k) {
    throw DimensionError("one-hot labels " + shape_string(onehot.shape()) +
                         " do not match predictions [" + std::to_string(n) + "," + std::to_string(k) + "]");
  }
  for (std::size_t i = 0; i < n; ++i) {
    int ones = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const T v = onehot[i * k + j];
      if (v == T{1}) {
        ++ones;
      } else if (v != T{0}) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) throw LabelError("invalid one-hot row " + std::to_string(i));
  }
}

template <class T>
void check_binary_labels(const Tensor<T>& labels, std::size_t n) {
  if (labels.numel() != n) {
    throw DimensionError("binary labels " + shape_string(labels.shape()) + " do not match " +
                         std::to_string(n) + " predictions");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != T{0} && labels[i] != T{1}) {
      throw LabelError("binary label outside {0,1} at row " + std::to_string(i));
    }
  }
}

}  // namespace detail

/// Mean of -log p[true class] over rows, with clamped probabilities.
template <class T>
double categorical_crossentropy(const Tensor<T>& probs, const Tensor<T>& onehot) {
  if (probs.rank() != 2) throw DimensionError("categorical_crossentropy expects [N,K] probabilities");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  detail::check_onehot(onehot, n, k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) row_sum += probs[i * k + j];
    if (std::abs(row_sum - 1.0) > 1e-3) {
      throw ContractError("probability row " + std::to_string(i) + " sums to " + std::to_string(row_sum));
    }
    for (std::size_t j = 0; j < k; ++j)
      if (onehot[i * k + j] == T{1}) total -= detail::clamped_log(probs[i * k + j]);
  }
  return total / static_cast<double>(n);
}

/// Mean of -[y log p + (1-y) log(1-p)] with clamped p.
template <class T>
double binary_crossentropy(const Tensor<T>& prob, const Tensor<T>& label) {
  const std::size_t n = prob.numel();
  detail::check_binary_labels(label, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = prob[i];
    total -= label[i] == T{1} ? detail::clamped_log(p) : detail::clamped_log(1.0 - p);
  }
  return total / static_cast<double>(n);
}

template <class T>
Tensor<T> one_hot(std::span<const int> labels, std::size_t num_classes) {
  Tensor<T> out({labels.size(), num_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw LabelError("class index " + std::to_string(labels[i]) + " out of range at row " + std::to_string(i));
    }
    out.mutable_ptr()[i * num_classes + static_cast<std::size_t>(labels[i])] = T{1};
  }
  return out;
}

namespace ops {

/// Softmax followed by categorical crossentropy, taking pre-softmax logits.
///
/// The reported value uses clamped log-probabilities so it agrees with
/// categorical_crossentropy on the softmax output; the gradient is the exact
/// (softmax - onehot) / N.
template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& onehot, Graph<T>* g = nullptr) {
  if (logits.rank() != 2) throw DimensionError("softmax_cross_entropy expects [N,K] logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  attrnet::detail::check_onehot(onehot, n, k);
  const bool tracked = tracks(g, {&logits});
  auto out = ops::detail::make_output<T>({1}, tracked);
  std::vector<T> probs(n * k);
  const double lo = std::log(kProbClamp), hi = std::log1p(-kProbClamp);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = logits.ptr() + i * k;
    const double mx = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(z[j]) - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < k; ++j) {
      const double logp = static_cast<double>(z[j]) - lse;
      probs[i * k + j] = static_cast<T>(std::exp(logp));
      if (onehot[i * k + j] == T{1}) total -= std::clamp(logp, lo, hi);
    }
  }
  out.mutable_ptr()[0] = static_cast<T>(total / static_cast<double>(n));
  if (tracked) {
    g->record("softmax_cross_entropy", {logits}, out,
              [logits, onehot, out, probs = std::move(probs), n]() mutable {
                const T go = out.grad()[0] / static_cast<T>(n);
                auto gz = logits.grad();
                for (std::size_t i = 0; i < probs.size(); ++i) gz[i] += go * (probs[i] - onehot[i]);
              });
  }
  return out;
}

/// Sigmoid followed by binary crossentropy, taking [N,1] logits.
template <class T>
Tensor<T> sigmoid_binary_cross_entropy(const Tensor<T>& logits, const Tensor<T>& labels,
                                       Graph<T>* g = nullptr) {
  const std::size_t n = logits.numel();
  if (logits.rank() != 2 || logits.dim(1) != 1) {
    throw DimensionError("sigmoid_binary_cross_entropy expects [N,1] logits, got " + shape_string(logits.shape()));
  }
  attrnet::detail::check_binary_labels(labels, n);
  const bool tracked = tracks(g, {&logits});
  auto out = ops::detail::make_output<T>({1}, tracked);
  std::vector<T> probs(n);
  const double lo = std::log(kProbClamp), hi = std::log1p(-kProbClamp);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits[i];
    // log sigmoid(z) = -softplus(-z), log(1 - sigmoid(z)) = -softplus(z)
    const double log_p = -(std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z))));
    const double log_q = -(std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))));
    probs[i] = sigmoid_scalar(static_cast<T>(z));
    total -= labels[i] == T{1} ? std::clamp(log_p, lo, hi) : std::clamp(log_q, lo, hi);
  }
  out.mutable_ptr()[0] = static_cast<T>(total / static_cast<double>(n));
  if (tracked) {
    g->record("sigmoid_binary_cross_entropy", {logits}, out,
              [logits, labels, out, probs = std::move(probs), n]() mutable {
                const T go = out.grad()[0] / static_cast<T>(n);
                auto gz = logits.grad();
                for (std::size_t i = 0; i < n; ++i) gz[i] += go * (probs[i] - labels[i]);
              });
  }
  return out;
}

}  // namespace ops

/// Predicted class per row: argmax for [N,K] (ties -> lowest index),
/// threshold 0.5 for [N,1] (p >= 0.5 -> class 1).
template <class T>
std::vector<int> predict_classes(const Tensor<T>& probs, TaskKind kind) {
  if (probs.rank() != 2) throw DimensionError("predictions must be [N,K], got " + shape_string(probs.shape()));
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (kind == TaskKind::binary) {
      if (k != 1) throw DimensionError("binary predictions must be [N,1]");
      out[i] = probs[i] >= T(0.5) ? 1 : 0;
    } else {
      const T* row = probs.ptr() + i * k;
      out[i] = static_cast<int>(std::max_element(row, row + k) - row);
    }
  }
  return out;
}

/// Running correct/total counts plus a K x K confusion matrix
/// (rows = true class, columns = predicted class).
class MetricAccumulator {
 public:
  explicit MetricAccumulator(std::size_t num_classes)
      : k_(num_classes), confusion_(num_classes * num_classes, 0) {
    if (num_classes < 2) throw ContractError("MetricAccumulator needs at least 2 classes");
  }

  void add(int truth, int predicted) {
    if (truth < 0 || static_cast<std::size_t>(truth) >= k_ || predicted < 0 ||
        static_cast<std::size_t>(predicted) >= k_) {
      throw LabelError("class index out of range in metric update");
    }
    ++total_;
    if (truth == predicted) ++correct_;
    ++confusion_[static_cast<std::size_t>(truth) * k_ + static_cast<std::size_t>(predicted)];
  }

  void add(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size()) throw DimensionError("metric update with mismatched lengths");
    for (std::size_t i = 0; i < truth.size(); ++i) add(truth[i], predicted[i]);
  }

  void merge(const MetricAccumulator& other) {
    if (other.k_ != k_) throw ContractError("merging metric accumulators with different class counts");
    correct_ += other.correct_;
    total_ += other.total_;
    for (std::size_t i = 0; i < confusion_.size(); ++i) confusion_[i] += other.confusion_[i];
  }

  std::size_t num_classes() const { return k_; }
  std::size_t correct() const { return correct_; }
  std::size_t total() const { return total_; }
  std::size_t confusion(std::size_t truth, std::size_t predicted) const { return confusion_[truth * k_ + predicted]; }
  std::vector<std::vector<std::size_t>> confusion_matrix() const {
    std::vector<std::vector<std::size_t>> m(k_, std::vector<std::size_t>(k_));
    for (std::size_t i = 0; i < k_; ++i)
      for (std::size_t j = 0; j < k_; ++j) m[i][j] = confusion(i, j);
    return m;
  }

  double accuracy() const {
    if (total_ == 0) throw ContractError("accuracy is undefined on an empty set");
    return static_cast<double>(correct_) / static_cast<double>(total_);
  }

 private:
  std::size_t k_;
  std::size_t correct_ = 0;
  std::size_t total_ = 0;
  std::vector<std::size_t> confusion_;
};

/// Fraction of correct predictions.
template <class T>
double accuracy(const Tensor<T>& probs, std::span<const int> labels, TaskKind kind,
                MetricAccumulator* confusion = nullptr) {
  if (labels.empty()) throw ContractError("accuracy is undefined on an empty set");
  const auto pred = predict_classes(probs, kind);
  if (pred.size() != labels.size()) throw DimensionError("accuracy: prediction/label count mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
  if (confusion) confusion->add(labels, pred);
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace attrnet
