// Acceptance checks. One PASS/FAIL line per criterion; thresholds are fixed
// below. Run everything, or a single criterion with --only ACnn.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "attrnet/adam.hpp"
#include "attrnet/celeba.hpp"
#include "attrnet/checkpoint.hpp"
#include "attrnet/crop.hpp"
#include "attrnet/losses.hpp"
#include "attrnet/oracles.hpp"
#include "attrnet/report.hpp"
#include "attrnet/synthetic.hpp"
#include "attrnet/train.hpp"
#include "support/crop_grid.hpp"
#include "support/temp_dir.hpp"

using namespace attrnet;
namespace fs = std::filesystem;

namespace {

// ---- pinned thresholds -------------------------------------------------------
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr std::size_t kOverfitEpochs = 300;
constexpr double kOverfitSeconds = 5 * 60.0;
constexpr std::size_t kLearnSamples = 3000;
constexpr std::size_t kLearnEpochs = 30;
constexpr double kLearnSeconds = 15 * 60.0;
constexpr double kMulticlassMinAcc = 0.95;
constexpr double kBinaryMinAcc = 0.97;
constexpr double kLossTol = 1e-6;
constexpr double kAdamStepTol = 1e-6;
constexpr std::size_t kRoundTripInputs = 10;

const fs::path kData = ATTRNET_TEST_DATA_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string id;
  std::string title;
  std::function<Outcome()> run;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

HeadSpec head_for(const AttributeSchema& a) {
  return a.head == HeadKind::sigmoid_binary ? HeadSpec{HeadKind::sigmoid_binary, 1}
                                            : HeadSpec{HeadKind::softmax_multiclass, a.classes.size()};
}

/// Two-stage residual network used by the desk-scale runs.
ArchitectureConfig two_stage_net() {
  ArchitectureConfig a;
  a.stem = StemSpec{16, 3, 1, 1, PoolSpec{2, 2, 0}};
  a.stages = {{BlockKind::basic, 1, 16, 1}, {BlockKind::basic, 1, 32, 2}};
  return a;
}

// ---- AC01 ----------------------------------------------------------------------

Outcome gradient_oracle() {
  GradcheckSuiteOptions opt;
  opt.whole_network = true;
  opt.tolerance = kGradTol;
  const auto res = run_gradcheck_suite(opt);
  const std::vector<std::string> required{"dense",        "conv2d s1 p0",      "conv2d s1 p1", "conv2d s2 p0",
                                          "conv2d s2 p1", "batchnorm2d train", "relu",         "maxpool2d",
                                          "softmax+cce",  "sigmoid+bce"};
  std::set<std::string> seen;
  for (const auto& c : res.cases) seen.insert(c.layer);
  std::string missing;
  for (const auto& r : required)
    if (!seen.contains(r)) missing += " " + r;
  const bool ok = res.passed() && missing.empty() && res.seconds <= kGradSeconds;
  return {ok, "cases=" + std::to_string(res.cases.size()) + " max_rel_error=" + fmt("%.3g", res.max_rel_error()) +
                  " (<= " + fmt("%g", kGradTol) + ") seconds=" + fmt("%.1f", res.seconds) + " (<= " +
                  fmt("%g", kGradSeconds) + ")" + (missing.empty() ? "" : " missing:" + missing)};
}

// ---- AC02 ----------------------------------------------------------------------

Outcome residual_identity() {
  NetworkSpec spec;
  spec.input_shape = {6, 5, 5};
  spec.stages = {{BlockSpec::make(BlockKind::basic, 6, 6, 1)}};
  spec.validate();
  auto model = init_model<double>(spec, 5);
  // Zero the last batchnorm of the branch: the branch contributes exactly 0.
  for (auto& v : model.params.at("stage1.block1.bn2.gamma").mutable_data()) v = 0.0;
  for (auto& v : model.params.at("stage1.block1.bn2.beta").mutable_data()) v = 0.0;
  Rng rng(8);
  Tensor<double> x({3, 6, 5, 5});
  for (auto& v : x.mutable_data()) v = rng.uniform(0.0, 2.0);  // post-relu activations
  bool identical = true;
  for (Mode mode : {Mode::train, Mode::eval}) {
    const auto y = residual_block(model, 0, 0, x, mode);
    identical = identical && y.shape() == x.shape() && std::memcmp(y.ptr(), x.ptr(), x.numel() * sizeof(double)) == 0;
  }

  auto with_projection = spec;
  with_projection.stages[0][0].shortcut = ShortcutKind::projection;
  with_projection.validate();
  const std::size_t allocated = init_model<double>(with_projection, 5).params.scalar_count() - model.params.scalar_count();
  const std::size_t counted = count_params(with_projection) - count_params(spec);
  const std::size_t path = projection_param_count(with_projection.stages[0][0]);

  // The same delta on a real downsampling block (16 -> 32, stride 2).
  const auto proj_block = BlockSpec::make(BlockKind::basic, 16, 32, 2);
  const std::size_t proj_expected = 16 * 32 + 2 * 32;

  const bool ok = identical && allocated == path && counted == path && path == 6 * 6 + 2 * 6 &&
                  projection_param_count(proj_block) == proj_expected && proj_block.shortcut == ShortcutKind::projection;
  return {ok, std::string("identity_exact=") + (identical ? "yes" : "no") + " projection_delta=" +
                  std::to_string(allocated) + " count_params_delta=" + std::to_string(counted) +
                  " projection_path=" + std::to_string(path)};
}

// ---- data helpers ----------------------------------------------------------------

struct SplitData {
  InMemoryDataset<float> train, val, test;
  AttributeSchema attr;
};

SplitData synthetic_split(const std::string& attribute, HeadKind head, std::size_t samples, std::uint64_t seed,
                          const fs::path& dir) {
  synthetic::SyntheticSpec spec;
  spec.attributes = {{attribute, head}};
  spec.samples = samples;
  spec.image_size = 32;
  synthetic::write(synthetic::generate(spec, seed), dir);
  const auto m = read_manifest(dir / "manifest.jsonl");
  const auto schema = read_schema(dir / "schema.json");
  validate_labels(m.records, schema);
  const auto& attr = schema.at(attribute);
  const auto s = split_manifest(m.records, attribute, SplitSpec{0.2, 0.2, seed, false});
  return {load_dataset<float>(m, s.train, attr, 32), load_dataset<float>(m, s.val, attr, 32),
          load_dataset<float>(m, s.test, attr, 32), attr};
}

// ---- AC03 ----------------------------------------------------------------------

Outcome tiny_overfit() {
  attrnet::testing::TempDir dir;
  synthetic::SyntheticSpec spec{{{"height"}}, 32, 32};
  synthetic::write(synthetic::generate(spec, 11), dir.path());
  const auto m = read_manifest(dir.path() / "manifest.jsonl");
  const auto attr = read_schema(dir.path() / "schema.json").at("height");
  const auto data = load_dataset<float>(m, m.records, attr, 32);

  const auto t0 = std::chrono::steady_clock::now();
  auto model = build_resnet<float>(two_stage_net(), {3, 32, 32}, head_for(attr), 1);
  TrainConfig cfg;
  cfg.epochs = kOverfitEpochs;
  cfg.batch_size = 32;
  cfg.seed = 1;
  cfg.augment = AugmentConfig::none();
  const auto res = train(model, data, data, cfg);
  const double secs = seconds_since(t0);
  std::size_t first = 0;
  for (const auto& e : res.history.epochs)
    if (e.train_acc == 1.0) {
      first = e.epoch;
      break;
    }
  const double eval_acc = evaluate(model, data, attr.name, attr.classes).accuracy;
  const bool ok = first != 0 && eval_acc == 1.0 && secs <= kOverfitSeconds;
  return {ok, "samples=32 first_epoch_train_acc_1=" + (first ? std::to_string(first) : std::string("never")) +
                  " (<= " + std::to_string(kOverfitEpochs) + ") eval_train_acc=" + fmt("%.4f", eval_acc) +
                  " seconds=" + fmt("%.1f", secs) + " (<= " + fmt("%g", kOverfitSeconds) + ")"};
}

// ---- AC04 / AC05 ---------------------------------------------------------------

Outcome learning_task(const std::string& attribute, HeadKind head, double min_acc) {
  attrnet::testing::TempDir dir;
  const auto t0 = std::chrono::steady_clock::now();
  const auto d = synthetic_split(attribute, head, kLearnSamples, 7, dir.path());
  auto model = build_resnet<float>(two_stage_net(), {3, 32, 32}, head_for(d.attr), 1);
  TrainConfig cfg;
  cfg.epochs = kLearnEpochs;
  cfg.batch_size = 32;
  cfg.seed = 1;
  cfg.attribute = attribute;
  cfg.classes = d.attr.classes;
  cfg.checkpoint = dir.path() / "best.ckpt";
  train(model, d.train, d.val, cfg);
  // Score the checkpoint as written to disk.
  const auto best = load_checkpoint<float>(cfg.checkpoint);
  const auto report = evaluate(best.model, d.test, attribute, d.attr.classes);
  const double secs = seconds_since(t0);
  const bool ok = report.accuracy >= min_acc && secs <= kLearnSeconds;
  return {ok, "attribute=" + attribute + " train/val/test=" + std::to_string(d.train.size()) + "/" +
                  std::to_string(d.val.size()) + "/" + std::to_string(d.test.size()) + " best_epoch=" +
                  std::to_string(best.meta.epoch) + " test_accuracy=" + fmt("%.4f", report.accuracy) + " (>= " +
                  fmt("%.2f", min_acc) + ") seconds=" + fmt("%.1f", secs) + " (<= " + fmt("%g", kLearnSeconds) + ")"};
}

// ---- AC06 ----------------------------------------------------------------------

Outcome analytic_losses() {
  const double cce = categorical_crossentropy(Tensor<double>({1, 3}, 1.0 / 3.0), one_hot<double>(std::vector<int>{1}, 3));
  const double bce = binary_crossentropy(Tensor<double>({1, 1}, 0.5), Tensor<double>({1, 1}, 1.0));
  bool ok = std::abs(cce - std::log(3.0)) <= kLossTol && std::abs(bce - std::log(2.0)) <= kLossTol;

  NamedTensors<double> p;
  p.insert("w", Tensor<double>({3}, std::vector<double>{0.5, -1.0, 2.0}).set_requires_grad(true));
  p.at("w").grad();
  AdamState<double> st;
  adam_step(p, st, AdamConfig{});
  const bool noop = p.at("w")[0] == 0.5 && p.at("w")[1] == -1.0 && p.at("w")[2] == 2.0;
  ok = ok && noop;

  double worst = 0.0;
  for (double g : {1e-3, 1.0, 1e3}) {
    NamedTensors<double> q;
    q.insert("w", Tensor<double>({1}, 1.0).set_requires_grad(true));
    q.at("w").grad()[0] = g;
    AdamState<double> s;
    AdamConfig cfg;
    adam_step(q, s, cfg);
    worst = std::max(worst, std::abs(std::abs(1.0 - q.at("w")[0]) - cfg.lr));
  }
  ok = ok && worst <= kAdamStepTol;
  return {ok, "cce_uniform3=" + fmt("%.9f", cce) + " (ln3 " + fmt("%.9f", std::log(3.0)) + ") bce_half=" +
                  fmt("%.9f", bce) + " (ln2 " + fmt("%.9f", std::log(2.0)) + ") zero_grad_noop=" + (noop ? "yes" : "no") +
                  " first_step_dev=" + fmt("%.3g", worst) + " (<= " + fmt("%g", kAdamStepTol) + ")"};
}

// ---- AC07 ----------------------------------------------------------------------

Outcome crop_arithmetic() {
  std::size_t grid_ok = 0;
  for (const auto& c : attrnet::testing::kCropGrid) grid_ok += padded_crop(400, 300, c.in) == c.expected ? 1 : 0;
  std::size_t sweep = 0, sweep_bad = 0;
  for (long W : {1L, 7L, 64L})
    for (long H : {1L, 5L, 48L})
      for (long x0 = 0; x0 < W; x0 += 2)
        for (long x1 = x0 + 1; x1 <= W; x1 += 3)
          for (long y0 = 0; y0 < H; y0 += 2)
            for (long y1 = y0 + 1; y1 <= H; y1 += 3) {
              const BBox b{x0, y0, x1, y1};
              const BBox r = padded_crop(static_cast<std::size_t>(W), static_cast<std::size_t>(H), b);
              ++sweep;
              if (!r.contains(b) || !BBox{0, 0, W, H}.contains(r)) ++sweep_bad;
            }
  const bool ok = grid_ok == attrnet::testing::kCropGrid.size() && sweep_bad == 0;
  return {ok, "grid=" + std::to_string(grid_ok) + "/" + std::to_string(attrnet::testing::kCropGrid.size()) +
                  " sweep_boxes=" + std::to_string(sweep) + " contain_and_in_bounds_violations=" + std::to_string(sweep_bad)};
}

// ---- AC08 ----------------------------------------------------------------------

Outcome determinism() {
  attrnet::testing::TempDir dir;
  const auto d = synthetic_split("height", HeadKind::softmax_multiclass, 120, 3, dir.path() / "data");
  auto run = [&](const std::string& name) {
    auto model = build_resnet<float>(two_stage_net(), {3, 32, 32}, head_for(d.attr), 9);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.seed = 9;
    cfg.attribute = "height";
    cfg.classes = d.attr.classes;
    cfg.checkpoint = dir.path() / (name + ".ckpt");
    const auto res = train(model, d.train, d.val, cfg);
    write_text(dir.path() / (name + ".csv"), history_to_csv(res.history));
  };
  run("a");
  run("b");
  const bool csv_same = slurp(dir.path() / "a.csv") == slurp(dir.path() / "b.csv");
  const bool ckpt_same = slurp(dir.path() / "a.ckpt") == slurp(dir.path() / "b.ckpt") &&
                         slurp(dir.path() / "a.ckpt.last") == slurp(dir.path() / "b.ckpt.last");

  const auto ckpt = load_checkpoint<float>(dir.path() / "a.ckpt");
  auto shuffled = d.test;
  std::vector<std::size_t> perm(d.test.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng(17).shuffle(perm);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.images[i] = d.test.images[perm[i]];
    shuffled.labels[i] = d.test.labels[perm[i]];
  }
  const auto r1 = evaluate(ckpt.model, d.test, "height", d.attr.classes);
  const auto r2 = evaluate(ckpt.model, shuffled, "height", d.attr.classes, 5);
  const bool perm_same = r1 == r2;
  return {csv_same && ckpt_same && perm_same, std::string("history_csv_identical=") + (csv_same ? "yes" : "no") +
                                                  " checkpoints_identical=" + (ckpt_same ? "yes" : "no") +
                                                  " eval_permutation_invariant=" + (perm_same ? "yes" : "no")};
}

// ---- AC09 ----------------------------------------------------------------------

Outcome checkpoint_round_trip() {
  attrnet::testing::TempDir dir;
  auto model = build_resnet<float>(two_stage_net(), {3, 32, 32}, HeadSpec{HeadKind::softmax_multiclass, 3}, 4);
  Rng rng(12);
  auto random_batch = [&](std::size_t n) {
    Tensor<float> x({n, 3, 32, 32});
    for (auto& v : x.mutable_data()) v = static_cast<float>(rng.uniform());
    return x;
  };
  for (int i = 0; i < 2; ++i) forward(model, random_batch(8), Mode::train);  // non-trivial running stats
  CheckpointMeta meta;
  meta.attribute = "height";
  meta.classes = synthetic::class_names("height");
  save_checkpoint(dir.path() / "m.ckpt", model, meta);
  const auto loaded = load_checkpoint<float>(dir.path() / "m.ckpt");
  std::size_t identical = 0;
  for (std::size_t i = 0; i < kRoundTripInputs; ++i) {
    const auto x = random_batch(2);
    const auto a = predict(model, x), b = predict(loaded.model, x);
    identical += a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.numel() * sizeof(float)) == 0 ? 1 : 0;
  }
  const std::string bytes = slurp(dir.path() / "m.ckpt");
  std::size_t rejected = 0, tried = 0;
  for (std::size_t n = 0; n < bytes.size(); n += 1 + n / 64) {
    ++tried;
    try {
      deserialize_checkpoint<float>(bytes.substr(0, n));
    } catch (const FormatError&) {
      ++rejected;
    }
  }
  const bool ok = identical == kRoundTripInputs && rejected == tried;
  return {ok, "bit_identical=" + std::to_string(identical) + "/" + std::to_string(kRoundTripInputs) +
                  " truncations_rejected=" + std::to_string(rejected) + "/" + std::to_string(tried) +
                  " bytes=" + std::to_string(bytes.size())};
}

// ---- AC10 ----------------------------------------------------------------------

Outcome celeba_harness() {
  const fs::path attr_file = kData / "celeba" / "list_attr_celeba.txt";
  const fs::path part_file = kData / "celeba" / "list_eval_partition.txt";
  const auto m = celeba::load(attr_file, part_file, "img_align_celeba");
  const std::string attr_text = slurp(attr_file), part_text = slurp(part_file);
  std::istringstream a(attr_text), p(part_text);
  const auto attrs = celeba::parse_attr(a);
  const auto parts = celeba::parse_partition(p);

  bool mapping = m.attributes.size() == 40 && m.splits.size() == 40;
  std::size_t checked = 0;
  for (std::size_t k = 0; k < attrs.names.size() && mapping; ++k) {
    const auto& s = m.splits.at(attrs.names[k]);
    std::size_t tr = 0, va = 0, te = 0;
    for (std::size_t r = 0; r < attrs.files.size(); ++r) {
      const auto code = parts.codes[r];
      const auto& list = code == celeba::Partition::train ? s.train : code == celeba::Partition::val ? s.val : s.test;
      std::size_t& idx = code == celeba::Partition::train ? tr : code == celeba::Partition::val ? va : te;
      const auto& rec = list.at(idx++);
      mapping = mapping && fs::path(rec.image).filename() == attrs.files[r] &&
                rec.labels.at(attrs.names[k]) == (attrs.values[r][k] == 1 ? 1 : 0);
      ++checked;
    }
    mapping = mapping && tr == s.train.size() && va == s.val.size() && te == s.test.size();
  }
  const auto& s0 = m.splits.at(attrs.names[0]);
  const bool partition = s0.train.size() == 6 && s0.val.size() == 2 && s0.test.size() == 2;
  const bool roundtrip = celeba::serialize_attr(attrs) == attr_text && celeba::serialize_partition(parts) == part_text;
  return {mapping && partition && roundtrip,
          "manifests=" + std::to_string(m.splits.size()) + " labels_checked=" + std::to_string(checked) +
              " mapping=" + (mapping ? "ok" : "bad") + " train/val/test=" + std::to_string(s0.train.size()) + "/" +
              std::to_string(s0.val.size()) + "/" + std::to_string(s0.test.size()) +
              " reserialization_identical=" + (roundtrip ? "yes" : "no")};
}

// ---- AC11 ----------------------------------------------------------------------

Outcome report_formatter() {
  const auto firw = report_table(read_reports(kData / "reports" / "firw_table.json"), ReportStyle::firw);
  const std::vector<std::pair<std::string, std::string>> expected{
      {"Body Type", "84.58"}, {"Ethnicity", "87.34"}, {"Gender", "97.97"}, {"Height", "70.51"}, {"Weight", "63.99"}};
  bool rows = firw.rows.size() == expected.size();
  for (std::size_t i = 0; rows && i < expected.size(); ++i)
    rows = firw.rows[i].first == expected[i].first && format_percent(firw.rows[i].second) == expected[i].second;

  const auto reports = read_reports(kData / "reports" / "celeba_table.jsonl");
  const auto cel = report_table(reports, ReportStyle::celeba);
  double sum = 0.0;
  for (const auto& r : reports) sum += 100.0 * r.accuracy;
  const std::string avg = format_percent(cel.rows.back().second);
  const bool average = reports.size() == 40 && cel.rows.size() == 41 && cel.rows.back().first == "Average" &&
                       avg == format_percent(sum / 40.0) && avg == "91.19";
  return {rows && average, std::string("firw_rows=") + (rows ? "match" : "differ") + " celeba_rows=" +
                               std::to_string(reports.size()) + " average=" + avg + " (expected 91.19)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attrnet acceptance checks"};
  std::string only;
  app.add_option("--only", only, "Run a single criterion (e.g. AC07)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {"AC01", "gradient oracle", gradient_oracle},
      {"AC02", "residual identity and projection delta", residual_identity},
      {"AC03", "tiny overfit", tiny_overfit},
      {"AC04", "synthetic multiclass learning",
       [] { return learning_task("height", HeadKind::softmax_multiclass, kMulticlassMinAcc); }},
      {"AC05", "synthetic binary learning (sigmoid + BCE)",
       [] { return learning_task("gender", HeadKind::sigmoid_binary, kBinaryMinAcc); }},
      {"AC06", "analytic loss values", analytic_losses},
      {"AC07", "crop arithmetic", crop_arithmetic},
      {"AC08", "determinism", determinism},
      {"AC09", "checkpoint round trip", checkpoint_round_trip},
      {"AC10", "CelebA format harness", celeba_harness},
      {"AC11", "report formatter", report_formatter},
  };

  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && c.id != only) continue;
    ++ran;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << c.id << ' ' << (o.pass ? "PASS" : "FAIL") << "  " << c.title << ": " << o.detail << std::endl;
  }
  if (ran == 0) {
    std::cerr << "unknown criterion: " << only << '\n';
    return 2;
  }
  return failed == 0 ? 0 : 1;
}
