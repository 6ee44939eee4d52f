#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "attrnet/adam.hpp"
#include "attrnet/checkpoint.hpp"
#include "attrnet/dataset.hpp"
#include "attrnet/losses.hpp"
#include "attrnet/model.hpp"
#include "attrnet/report.hpp"

namespace attrnet {

enum class LossKind { categorical, binary };

inline const char* to_string(LossKind k) { return k == LossKind::categorical ? "categorical" : "binary"; }

inline LossKind parse_loss_kind(const std::string& s) {
  if (s == "categorical" || s == "cce") return LossKind::categorical;
  if (s == "binary" || s == "bce") return LossKind::binary;
  throw ConfigError("unknown loss: " + s + " (use categorical or binary)");
}

inline LossKind loss_for_head(HeadKind h) {
  return h == HeadKind::softmax_multiclass ? LossKind::categorical : LossKind::binary;
}

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  /// Unset means "follow the head".
  std::optional<LossKind> loss;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::string attribute;
  std::vector<std::string> classes;
  /// Best checkpoint path; empty disables saving. The final model goes to
  /// `<path>.last`.
  std::filesystem::path checkpoint;
  AugmentConfig augment;
  std::string dataset;  // provenance label stored in checkpoints

  void validate() const {
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    try {
      adam.validate();
      augment.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
  }

  /// Resolved loss kind; throws ConfigError when it contradicts the head.
  LossKind loss_kind(const NetworkSpec& spec) const {
    if (!spec.head) throw ConfigError("training needs a network with a classification head");
    const LossKind expected = loss_for_head(spec.head->kind);
    if (loss && *loss != expected) {
      throw ConfigError(std::string("loss ") + to_string(*loss) + " is incompatible with a " + to_string(spec.head->kind) +
                        " head (use " + to_string(expected) + ")");
    }
    return expected;
  }
};

struct TrainHooks {
  /// Called after each optimizer step with the 1-based epoch and the batch.
  std::function<void(std::size_t epoch, std::size_t batch, const std::vector<std::size_t>& indices)> on_batch;
  std::function<void(const EpochRecord&)> on_epoch;
};

template <class T>
struct TrainResult {
  LossHistory history;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  Model<T> best;
  /// Epochs at which the best checkpoint was (re)written, in order.
  std::vector<std::size_t> saved_epochs;
};

namespace detail {

template <class T>
Tensor<T> batch_loss(const Tensor<T>& logits, const std::vector<int>& labels, LossKind kind, std::size_t classes,
                     Graph<T>* g) {
  if (kind == LossKind::categorical) return ops::softmax_cross_entropy(logits, one_hot<T>(labels, classes), g);
  Tensor<T> y({labels.size(), 1});
  for (std::size_t i = 0; i < labels.size(); ++i) y.mutable_ptr()[i] = static_cast<T>(labels[i]);
  return ops::sigmoid_binary_cross_entropy(logits, y, g);
}

inline TaskKind task_for(LossKind k) { return k == LossKind::categorical ? TaskKind::multiclass : TaskKind::binary; }

struct PassStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Eval-mode loss and accuracy over a whole dataset, sample-weighted.
template <class T>
PassStats eval_pass(const Model<T>& model, const InMemoryDataset<T>& data, LossKind kind, std::size_t batch_size) {
  BatchIterator<T> it(data, batch_size, Phase::eval);
  Batch<T> b;
  double loss = 0.0;
  std::size_t correct = 0;
  while (it.next(b)) {
    const auto out = forward(model, b.x, Mode::eval);
    loss += static_cast<double>(batch_loss<T>(out.logits, b.labels, kind, data.num_classes, nullptr)[0]) *
            static_cast<double>(b.labels.size());
    const auto pred = predict_classes(out.probs, task_for(kind));
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == b.labels[i] ? 1 : 0;
  }
  const double n = static_cast<double>(data.size());
  return {loss / n, static_cast<double>(correct) / n};
}

}  // namespace detail

/// Fixed-epoch minibatch Adam training with a validation pass after every
/// epoch. `model` holds the final-epoch weights on return; the result holds
/// the weights from the epoch of lowest validation loss. When a checkpoint
/// path is set, the best model is written each time validation loss strictly
/// improves and the final model is written to `<path>.last`.
template <class T>
TrainResult<T> train(Model<T>& model, const InMemoryDataset<T>& train_set, const InMemoryDataset<T>& val_set,
                     const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  const LossKind kind = cfg.loss_kind(model.spec);
  const std::size_t classes = model.spec.head->label_classes();
  if (train_set.empty()) throw ConfigError("training set is empty");
  if (val_set.empty()) throw ConfigError("validation set is empty");
  if (train_set.num_classes != classes || val_set.num_classes != classes) {
    throw ConfigError("dataset has " + std::to_string(train_set.num_classes) + " classes, the head predicts " +
                      std::to_string(classes));
  }

  CheckpointMeta meta;
  meta.adam = cfg.adam;
  meta.attribute = cfg.attribute;
  meta.classes = cfg.classes;
  meta.seed = cfg.seed;
  meta.dataset = cfg.dataset;

  TrainResult<T> result{{}, 0, std::numeric_limits<double>::infinity(), model.clone(), {}};
  AdamState<T> state;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    BatchIterator<T> it(train_set, cfg.batch_size, Phase::train, cfg.seed, epoch - 1, cfg.augment);
    Batch<T> b;
    double loss_sum = 0.0;
    std::size_t correct = 0, batch = 0;
    while (it.next(b)) {
      ++batch;
      const std::string where = "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch);
      model.params.zero_grad();
      Graph<T> g;
      Tensor<T> loss;
      std::vector<int> pred;
      try {
        const auto out = forward(model, b.x, Mode::train, &g);
        loss = detail::batch_loss(out.logits, b.labels, kind, classes, &g);
        pred = predict_classes(out.probs, detail::task_for(kind));
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at " + where);
      }
      const double lv = static_cast<double>(loss[0]);
      if (!std::isfinite(lv)) throw NumericError("non-finite loss at " + where);
      backward(loss, g);
      try {
        adam_step(model.params, state, cfg.adam);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at " + where);
      }
      loss_sum += lv * static_cast<double>(b.labels.size());
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == b.labels[i] ? 1 : 0;
      if (hooks.on_batch) hooks.on_batch(epoch, batch, b.indices);
    }
    const double n = static_cast<double>(train_set.size());
    const auto val = detail::eval_pass(model, val_set, kind, cfg.batch_size);
    if (!std::isfinite(val.loss)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    EpochRecord rec{epoch, loss_sum / n, static_cast<double>(correct) / n, val.loss, val.accuracy};
    result.history.epochs.push_back(rec);
    if (val.loss < result.best_val_loss) {
      result.best_val_loss = val.loss;
      result.best_epoch = epoch;
      result.best = model.clone();
      if (!cfg.checkpoint.empty()) {
        meta.epoch = epoch;
        meta.val_loss = val.loss;
        meta.val_accuracy = val.accuracy;
        save_checkpoint(cfg.checkpoint, model, meta);
      }
      result.saved_epochs.push_back(epoch);
    }
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  if (!cfg.checkpoint.empty()) {
    const auto& last = result.history.epochs.back();
    meta.epoch = last.epoch;
    meta.val_loss = last.val_loss;
    meta.val_accuracy = last.val_acc;
    save_checkpoint(cfg.checkpoint.string() + ".last", model, meta);
  }
  return result;
}

/// Builds a report from a confusion matrix ([true][predicted]).
inline EvalReport report_from_confusion(std::string attribute, std::vector<std::string> classes,
                                        std::vector<std::vector<std::size_t>> confusion) {
  const std::size_t k = confusion.size();
  EvalReport r;
  r.attribute = std::move(attribute);
  r.classes = std::move(classes);
  r.precision.assign(k, 0.0);
  r.recall.assign(k, 0.0);
  std::size_t trace = 0, total = 0;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += confusion[i][j];
      col += confusion[j][i];
    }
    trace += confusion[i][i];
    total += row;
    if (col) r.precision[i] = static_cast<double>(confusion[i][i]) / static_cast<double>(col);
    if (row) r.recall[i] = static_cast<double>(confusion[i][i]) / static_cast<double>(row);
  }
  if (total == 0) throw ContractError("cannot evaluate on an empty set");
  r.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  r.samples = total;
  r.confusion = std::move(confusion);
  return r;
}

/// Eval-mode predictions over `data` summarized as accuracy, per-class
/// precision/recall and a confusion matrix.
template <class T>
EvalReport evaluate(const Model<T>& model, const InMemoryDataset<T>& data, const std::string& attribute,
                    const std::vector<std::string>& classes, std::size_t batch_size = 64) {
  if (!model.spec.head) throw ConfigError("evaluation needs a network with a classification head");
  const std::size_t k = model.spec.head->label_classes();
  if (data.num_classes != k || classes.size() != k) {
    throw ConfigError("attribute " + attribute + " has " + std::to_string(classes.size()) + " classes, the model predicts " +
                      std::to_string(k));
  }
  if (data.empty()) throw ContractError("cannot evaluate on an empty set");
  const TaskKind task = model.spec.head->kind == HeadKind::softmax_multiclass ? TaskKind::multiclass : TaskKind::binary;
  MetricAccumulator acc(k);
  BatchIterator<T> it(data, batch_size, Phase::eval);
  Batch<T> b;
  while (it.next(b)) acc.add(b.labels, predict_classes(predict(model, b.x), task));
  return report_from_confusion(attribute, classes, acc.confusion_matrix());
}

/// Throws ConfigError unless the checkpoint was trained for this attribute
/// with the same class list.
inline void check_schema(const CheckpointMeta& meta, const AttributeSchema& attr) {
  if (meta.attribute != attr.name) {
    throw ConfigError("checkpoint was trained for attribute '" + meta.attribute + "', manifest attribute is '" + attr.name + "'");
  }
  if (meta.classes != attr.classes) throw ConfigError("checkpoint class list differs from the schema for " + attr.name);
}

}  // namespace attrnet
