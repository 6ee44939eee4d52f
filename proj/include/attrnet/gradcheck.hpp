#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "attrnet/graph.hpp"

namespace attrnet {

struct GradCheckEntry {
  std::string name;
  std::size_t elements = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 1e-4;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
  bool passed() const {
    return std::all_of(entries.begin(), entries.end(),
                       [&](const GradCheckEntry& e) { return e.max_rel_error <= tolerance; });
  }
};

/// Relative error with a floor on the denominator so that two tiny
/// gradients do not blow up the ratio.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares backward() against central differences (f(x+h) - f(x-h)) / 2h
/// for every element of every tensor in `wrt`.
///
/// `loss_fn` must build a scalar from the current tensor values; it is
/// called once with a graph (analytic pass) and twice per element with a
/// null graph.
inline GradCheckReport grad_check(const std::function<Tensor<double>(Graph<double>*)>& loss_fn,
                                  std::vector<std::pair<std::string, Tensor<double>>> wrt, double h = 1e-5,
                                  double tol = 1e-4) {
  for (auto& [name, t] : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Graph<double> graph;
  Tensor<double> loss = loss_fn(&graph);
  backward(loss, graph);

  GradCheckReport report;
  report.tolerance = tol;
  for (auto& [name, t] : wrt) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    GradCheckEntry entry{name, t.numel(), 0.0};
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double fp = loss_fn(nullptr).item();
      data[i] = saved - h;
      const double fm = loss_fn(nullptr).item();
      data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      entry.max_rel_error = std::max(entry.max_rel_error, relative_error(analytic[i], numeric));
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace attrnet
