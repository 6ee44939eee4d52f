#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "attrnet/gradcheck.hpp"
#include "attrnet/losses.hpp"
#include "attrnet/model.hpp"
#include "attrnet/ops.hpp"
#include "attrnet/rng.hpp"

namespace attrnet {

struct GradcheckCase {
  std::string layer;  // layer kind, e.g. "conv2d s2 p1"
  GradCheckReport report;
};

struct GradcheckSuiteOptions {
  /// Also check every parameter of a small preset network end to end.
  bool whole_network = false;
  /// Perturbs the numeric side of the dense case so the suite must fail.
  bool inject_fault = false;
  std::uint64_t seed = 20240601;
  double h = 1e-5;
  double tolerance = 1e-4;
};

struct GradcheckSuiteResult {
  std::vector<GradcheckCase> cases;
  double seconds = 0.0;

  bool passed() const {
    for (const auto& c : cases)
      if (!c.report.passed()) return false;
    return !cases.empty();
  }
  double max_rel_error() const {
    double m = 0.0;
    for (const auto& c : cases) m = std::max(m, c.report.max_rel_error());
    return m;
  }
};

namespace detail {

inline Tensor<double> uniform_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor<double> away_from_zero(Shape shape, Rng& rng, double margin = 0.05) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.mutable_data()) {
    const double mag = rng.uniform(margin, 1.0);
    v = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

/// Scalar probe sum(out * r) with fixed random weights r.
inline Tensor<double> probe(const Tensor<double>& out, const Tensor<double>& r, Graph<double>* g) {
  return ops::sum(ops::mul(out, r, g), g);
}

}  // namespace detail

/// Central-difference gradient checks over every layer kind in the library,
/// all in 64-bit.
inline GradcheckSuiteResult run_gradcheck_suite(const GradcheckSuiteOptions& opt = {}) {
  using detail::away_from_zero;
  using detail::probe;
  using detail::uniform_tensor;
  using Fn = std::function<Tensor<double>(Graph<double>*)>;
  using Wrt = std::vector<std::pair<std::string, Tensor<double>>>;
  const auto start = std::chrono::steady_clock::now();
  Rng rng(opt.seed);
  GradcheckSuiteResult res;
  auto run = [&](const std::string& layer, const Fn& fn, Wrt wrt) {
    res.cases.push_back({layer, grad_check(fn, std::move(wrt), opt.h, opt.tolerance)});
  };

  {
    auto x = uniform_tensor({4, 5}, rng), w = uniform_tensor({5, 3}, rng), b = uniform_tensor({3}, rng);
    auto r = uniform_tensor({4, 3}, rng);
    const bool fault = opt.inject_fault;
    run(
        "dense",
        [=](Graph<double>* g) {
          auto l = probe(ops::dense(x, w, b, g), r, g);
          if (fault && !g) l.mutable_ptr()[0] *= 1.001;
          return l;
        },
        {{"x", x}, {"weight", w}, {"bias", b}});
  }
  for (std::size_t stride : {1, 2})
    for (std::size_t pad : {0, 1}) {
      auto x = uniform_tensor({2, 2, 6, 5}, rng), w = uniform_tensor({3, 2, 3, 3}, rng), b = uniform_tensor({3}, rng);
      const auto oh = ops::window_out(6, 3, stride, pad), ow = ops::window_out(5, 3, stride, pad);
      auto r = uniform_tensor({2, 3, oh, ow}, rng);
      run(
          "conv2d s" + std::to_string(stride) + " p" + std::to_string(pad),
          [=](Graph<double>* g) { return probe(ops::conv2d(x, w, &b, stride, pad, g), r, g); },
          {{"x", x}, {"weight", w}, {"bias", b}});
    }
  {
    auto x = uniform_tensor({3, 2, 3, 3}, rng, -2, 2), gamma = uniform_tensor({2}, rng, 0.5, 1.5),
         beta = uniform_tensor({2}, rng);
    auto r = uniform_tensor({3, 2, 3, 3}, rng);
    run(
        "batchnorm2d train",
        [=](Graph<double>* g) {
          auto st = ops::BatchNormState<double>::fresh(2);
          return probe(ops::batchnorm2d(x, gamma, beta, st, {}, Mode::train, g), r, g);
        },
        {{"x", x}, {"gamma", gamma}, {"beta", beta}});
  }
  {
    auto x = away_from_zero({3, 7}, rng);
    auto r = uniform_tensor({3, 7}, rng);
    run("relu", [=](Graph<double>* g) { return probe(ops::relu(x, g), r, g); }, {{"x", x}});
  }
  {
    auto x = uniform_tensor({2, 2, 5, 5}, rng);
    auto r = uniform_tensor({2, 2, 3, 3}, rng);
    run("maxpool2d", [=](Graph<double>* g) { return probe(ops::maxpool2d(x, 3, 2, 1, g), r, g); }, {{"x", x}});
  }
  {
    auto x = uniform_tensor({2, 3, 3, 4}, rng);
    auto r = uniform_tensor({2, 3}, rng);
    run(
        "global_avgpool", [=](Graph<double>* g) { return probe(ops::flatten(ops::global_avgpool(x, g), g), r, g); },
        {{"x", x}});
  }
  {
    auto z = uniform_tensor({5, 4}, rng, -3, 3);
    const auto onehot = one_hot<double>(std::vector<int>{0, 3, 1, 2, 3}, 4);
    run("softmax+cce", [=](Graph<double>* g) { return ops::softmax_cross_entropy(z, onehot, g); }, {{"logits", z}});
  }
  {
    auto z = uniform_tensor({6, 1}, rng, -3, 3);
    const Tensor<double> y({6, 1}, std::vector<double>{0, 1, 1, 0, 1, 0});
    run("sigmoid+bce", [=](Graph<double>* g) { return ops::sigmoid_binary_cross_entropy(z, y, g); }, {{"logits", z}});
  }
  if (opt.whole_network) {
    auto model = init_model<double>(make_network_spec(small_preset(), {3, 8, 8}, HeadSpec{HeadKind::softmax_multiclass, 3}),
                                    opt.seed);
    auto x = uniform_tensor({4, 3, 8, 8}, rng, 0, 1);
    const auto onehot = one_hot<double>(std::vector<int>{0, 2, 1, 2}, 3);
    Wrt wrt;
    for (const auto& [name, t] : model.params) wrt.emplace_back(name, t);
    run(
        "network small",
        [&](Graph<double>* g) { return ops::softmax_cross_entropy(forward(model, x, Mode::train, g).logits, onehot, g); },
        std::move(wrt));
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace attrnet
