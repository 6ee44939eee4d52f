#pragma once

#include <functional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "attrnet/tensor.hpp"

namespace attrnet {

/// Tape of executed operations for reverse-mode differentiation.
///
/// Ops append themselves in execution order, so the tape is topologically
/// sorted by construction. A graph belongs to one thread.
template <class T>
class Graph {
 public:
  struct Node {
    std::string op;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    /// Reads output.grad() and accumulates into the inputs' gradients.
    std::function<void()> backward;
  };

  void record(std::string op, std::vector<Tensor<T>> inputs, Tensor<T> output,
              std::function<void()> backward) {
    nodes_.push_back({std::move(op), std::move(inputs), std::move(output), std::move(backward)});
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

/// True when an op should record itself: a graph is active and some input
/// needs a gradient.
template <class T>
bool tracks(const Graph<T>* g, std::initializer_list<const Tensor<T>*> inputs) {
  if (!g) return false;
  for (auto* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

/// Populates gradients of every requires_grad tensor reachable from `loss`.
///
/// Gradients of intermediate (op-produced) tensors are reset at the start of
/// each call; leaf gradients accumulate across calls. Leaves that took part
/// in the graph but received no signal end up with an explicit zero buffer.
template <class T>
void backward(const Tensor<T>& loss, Graph<T>& graph) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("loss does not depend on any tensor that requires grad");
  }
  std::unordered_set<const void*> produced;
  for (auto& node : graph.nodes()) produced.insert(node.output.id());
  if (!produced.contains(loss.id())) {
    throw ContractError("loss is not an output of the given graph");
  }
  // Leaf gradients from this pass are computed from zero and added to the
  // previous contents afterwards, so n passes give exactly n times one pass.
  std::vector<Tensor<T>> leaves;
  std::vector<std::vector<T>> previous;
  std::unordered_set<const void*> seen;
  for (auto& node : graph.nodes()) {
    if (node.output.has_grad()) node.output.zero_grad();
    for (const auto& in : node.inputs) {
      if (!in.requires_grad() || produced.contains(in.id()) || !seen.insert(in.id()).second) continue;
      auto g = in.grad();
      previous.emplace_back(g.begin(), g.end());
      std::fill(g.begin(), g.end(), T{0});
      leaves.push_back(in);
    }
  }
  loss.grad()[0] = T{1};
  const auto& nodes = graph.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
  }
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    auto g = leaves[i].grad();
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = previous[i][j] + g[j];
  }
}

/// Zeroes existing gradient buffers of the given tensors.
template <class T, class Range>
void zero_grads(Range&& tensors) {
  for (Tensor<T> t : tensors) t.zero_grad();
}

}  // namespace attrnet
