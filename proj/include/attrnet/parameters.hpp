#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "attrnet/tensor.hpp"

namespace attrnet {

/// Insertion-ordered map from hierarchical name to tensor.
template <class T>
class NamedTensors {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  void insert(std::string name, Tensor<T> tensor) {
    if (index_.contains(name)) throw ValidationError("duplicate tensor name: " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(tensor));
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  const Tensor<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("no tensor named " + name);
    return entries_[it->second].second;
  }
  Tensor<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("no tensor named " + name);
    return entries_[it->second].second;
  }

  /// Replaces the tensor stored under an existing name.
  void assign(const std::string& name, Tensor<T> tensor) { at(name) = std::move(tensor); }

  /// Removes every entry whose name starts with `prefix`.
  void erase_prefix(const std::string& prefix) {
    std::vector<Entry> kept;
    for (auto& e : entries_)
      if (e.first.rfind(prefix, 0) != 0) kept.push_back(std::move(e));
    entries_ = std::move(kept);
    index_.clear();
    for (std::size_t i = 0; i < entries_.size(); ++i) index_.emplace(entries_[i].first, i);
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (auto& e : entries_) n += e.second.numel();
    return n;
  }

  /// Deep copy of every tensor.
  NamedTensors clone() const {
    NamedTensors out;
    for (auto& [name, t] : entries_) out.insert(name, t.clone());
    return out;
  }

  void zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace attrnet
