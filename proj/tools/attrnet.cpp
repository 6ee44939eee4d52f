// attrnet: dataset synthesis, preprocessing, training, evaluation, reporting,
// plotting and gradient verification from one binary.
//
// Exit codes: 0 success, 1 verification failure, 2 usage/config error,
// 3 data ingest or write error, 4 numeric failure.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "attrnet/celeba.hpp"
#include "attrnet/config.hpp"
#include "attrnet/crop.hpp"
#include "attrnet/oracles.hpp"
#include "attrnet/plot.hpp"
#include "attrnet/report.hpp"
#include "attrnet/synthetic.hpp"
#include "attrnet/train.hpp"

namespace fs = std::filesystem;
using namespace attrnet;

namespace {

enum Exit : int { kOk = 0, kVerify = 1, kUsage = 2, kIngest = 3, kNumeric = 4 };

/// Usage errors raised by the command layer itself.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::mutex g_out;

void say(const std::string& line) {
  std::lock_guard lock(g_out);
  std::cout << line << '\n' << std::flush;
}

void note(const std::string& line) {
  std::lock_guard lock(g_out);
  std::cerr << line << '\n' << std::flush;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// Relative paths that do not exist are looked up under ATTRNET_DATA_ROOT.
fs::path data_path(const std::string& p) {
  fs::path path(p);
  if (path.is_relative() && !fs::exists(path)) {
    if (const char* root = std::getenv("ATTRNET_DATA_ROOT"); root && *root) {
      const fs::path alt = fs::path(root) / path;
      if (fs::exists(alt)) return alt;
    }
  }
  return path;
}

// ---- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string spec;
  std::string out;
  std::uint64_t seed = 0;
  std::optional<std::size_t> samples, size;
};

int cmd_synth(const SynthArgs& a) {
  std::ifstream in(a.spec);
  if (!in) throw ConfigError("cannot open synth spec " + a.spec);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(a.spec + ": " + e.what());
  }
  auto spec = synthetic::spec_from_json(j);
  if (a.samples) spec.samples = *a.samples;
  if (a.size) spec.image_size = *a.size;
  const auto d = synthetic::generate(spec, a.seed);
  synthetic::write(d, a.out);
  std::string attrs;
  for (const auto& s : spec.attributes) attrs += (attrs.empty() ? "" : ",") + s.name;
  say("samples=" + std::to_string(d.records.size()) + " attributes=" + attrs + " image_size=" +
      std::to_string(spec.image_size) + " seed=" + std::to_string(a.seed) + " manifest=" + (fs::path(a.out) / "manifest.jsonl").string());
  return kOk;
}

// ---- preprocess --------------------------------------------------------------

struct PreprocessArgs {
  std::string manifest;
  std::string out;
  std::string crop_rule = "default";
  std::string config;
};

CropRule resolve_crop_rule(const std::string& rule, const std::string& config) {
  RunConfig cfg;
  if (!config.empty()) cfg = read_run_config(config);
  if (rule != "default") {
    std::ifstream in(rule);
    if (!in) throw ConfigError("--crop-rule must be 'default' or a JSON file with pad_left/pad_right/pad_top/pad_bottom");
    try {
      apply_config(cfg, nlohmann::json{{"crop", nlohmann::json::parse(in)}});
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(rule + ": " + e.what());
    }
  }
  try {
    cfg.crop.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  return cfg.crop;
}

int cmd_preprocess(const PreprocessArgs& a) {
  const CropRule rule = resolve_crop_rule(a.crop_rule, a.config);
  const auto m = read_manifest(data_path(a.manifest));
  if (m.records.empty()) throw UsageError("manifest " + a.manifest + " has no records");
  const fs::path out(a.out);
  std::vector<SampleRecord> written;
  std::vector<std::string> offenders;
  std::size_t cropped = 0;
  for (const auto& r : m.records) {
    try {
      Image img = read_image(m.resolve(r));
      if (r.bbox) {
        validate_bbox(*r.bbox, img.width, img.height);
        img = crop_image(img, padded_crop(img.width, img.height, *r.bbox, rule));
        ++cropped;
      }
      fs::path rel = fs::path(r.image).is_absolute() ? fs::path(r.image).filename() : fs::path(r.image);
      fs::create_directories((out / rel).parent_path());
      write_image(out / rel, img);
      SampleRecord o = r;
      o.image = rel.generic_string();
      o.bbox.reset();
      written.push_back(std::move(o));
    } catch (const IngestError& e) {
      offenders.push_back(e.what());
    } catch (const ValidationError& e) {
      offenders.push_back(r.image + ": " + e.what());
    }
  }
  if (!offenders.empty()) {
    for (const auto& o : offenders) note("unreadable: " + o);
    note("error: " + std::to_string(offenders.size()) + " of " + std::to_string(m.records.size()) + " images could not be processed");
    return kIngest;
  }
  fs::create_directories(out);
  write_manifest(out / "manifest.jsonl", written);
  const fs::path schema = m.root / "schema.json";
  if (fs::exists(schema)) write_schema(out / "schema.json", read_schema(schema));
  say("records=" + std::to_string(written.size()) + " cropped=" + std::to_string(cropped) +
      " copied=" + std::to_string(written.size() - cropped) + " manifest=" + (out / "manifest.jsonl").string());
  return kOk;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string schema;
  std::vector<std::string> attributes;
  std::string config;
  std::optional<std::string> preset, loss;
  std::optional<std::size_t> epochs, batch, input_size;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<unsigned> jobs;
  bool no_augment = false;
  std::string out;
};

/// Manifest plus schema plus, when the directory holds train/val/test
/// files, the fixed partition.
struct DataSource {
  fs::path root;
  std::vector<SampleRecord> records;
  DatasetSchema schema;
  std::optional<Splits> fixed;
};

DataSource open_source(const std::string& manifest_arg, const std::string& schema_arg) {
  fs::path p = data_path(manifest_arg);
  DataSource s;
  fs::path schema_path;
  if (fs::is_directory(p)) {
    schema_path = p / "schema.json";
    if (fs::exists(p / "manifest.jsonl")) {
      auto m = read_manifest(p / "manifest.jsonl");
      s.root = m.root;
      s.records = std::move(m.records);
    } else if (fs::exists(p / "train.jsonl")) {
      Splits sp;
      sp.train = read_manifest(p / "train.jsonl").records;
      sp.val = read_manifest(p / "val.jsonl").records;
      sp.test = read_manifest(p / "test.jsonl").records;
      s.root = p;
      s.fixed = std::move(sp);
    } else {
      throw IngestError(p.string(), "directory holds neither manifest.jsonl nor train/val/test.jsonl");
    }
  } else {
    auto m = read_manifest(p);
    s.root = m.root;
    s.records = std::move(m.records);
    schema_path = p.parent_path() / "schema.json";
  }
  if (!schema_arg.empty()) schema_path = data_path(schema_arg);
  s.schema = read_schema(schema_path);
  if (s.fixed) {
    validate_labels(s.fixed->train, s.schema);
    validate_labels(s.fixed->val, s.schema);
    validate_labels(s.fixed->test, s.schema);
  } else {
    validate_labels(s.records, s.schema);
  }
  return s;
}

struct AttributeRun {
  std::string attribute;
  fs::path ckpt;
  std::string summary;
  std::exception_ptr error;
};

HeadSpec head_for(const AttributeSchema& a) {
  return a.head == HeadKind::sigmoid_binary ? HeadSpec{HeadKind::sigmoid_binary, 1}
                                            : HeadSpec{HeadKind::softmax_multiclass, a.classes.size()};
}

std::vector<SampleRecord> absolute_paths(const std::vector<SampleRecord>& recs, const fs::path& root) {
  std::vector<SampleRecord> out = recs;
  for (auto& r : out) r.image = fs::absolute(Manifest{root, {}}.resolve(r)).lexically_normal().string();
  return out;
}

void run_attribute(const DataSource& src, const RunConfig& cfg, AttributeRun& run) {
  const auto& attr = src.schema.at(run.attribute);
  const Splits splits = src.fixed ? *src.fixed : split_manifest(src.records, attr.name, cfg.split);
  if (splits.train.empty() || splits.val.empty() || splits.test.empty()) {
    throw ConfigError("attribute " + attr.name + ": split produced an empty partition (train " +
                      std::to_string(splits.train.size()) + ", val " + std::to_string(splits.val.size()) + ", test " +
                      std::to_string(splits.test.size()) + ")");
  }
  const std::size_t size = cfg.resolved_input_size();
  const Manifest m{src.root, {}};
  const auto train_set = load_dataset<float>(m, splits.train, attr, size);
  const auto val_set = load_dataset<float>(m, splits.val, attr, size);
  const auto test_set = load_dataset<float>(m, splits.test, attr, size);

  auto model = build_resnet<float>(cfg.arch, {3, size, size}, head_for(attr), cfg.train.seed);
  TrainConfig tc = cfg.train;
  tc.attribute = attr.name;
  tc.classes = attr.classes;
  tc.checkpoint = run.ckpt;
  if (tc.dataset.empty()) tc.dataset = src.root.string();
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& e) {
    note("attribute=" + attr.name + " epoch=" + std::to_string(e.epoch) + " train_loss=" + num(e.train_loss) +
         " train_acc=" + num(e.train_acc) + " val_loss=" + num(e.val_loss) + " val_acc=" + num(e.val_acc));
  };
  const auto res = train(model, train_set, val_set, tc, hooks);
  const fs::path history = run.ckpt.string() + ".history.csv";
  write_text(history, history_to_csv(res.history));
  write_manifest(run.ckpt.string() + ".test.jsonl", absolute_paths(splits.test, src.root));
  const auto report = evaluate(res.best, test_set, attr.name, attr.classes);
  write_text(run.ckpt.string() + ".eval.json", to_json(report).dump(2) + "\n");
  run.summary = "attribute=" + attr.name + " epochs=" + std::to_string(res.history.size()) +
                " best_epoch=" + std::to_string(res.best_epoch) + " best_val_loss=" + num(res.best_val_loss) +
                " test_accuracy=" + num(report.accuracy) + " train=" + std::to_string(train_set.size()) +
                " val=" + std::to_string(val_set.size()) + " test=" + std::to_string(test_set.size()) +
                " checkpoint=" + run.ckpt.string() + " history=" + history.string();
}

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : read_run_config(a.config);
  if (a.preset) cfg.set_preset(*a.preset);
  if (a.loss) cfg.train.loss = parse_loss_kind(*a.loss);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  if (a.batch) cfg.train.batch_size = *a.batch;
  if (a.input_size) cfg.input_size = *a.input_size;
  if (a.seed) {
    cfg.train.seed = *a.seed;
    cfg.split.seed = *a.seed;
  }
  if (a.lr) cfg.train.adam.lr = *a.lr;
  if (a.jobs) cfg.jobs = *a.jobs;
  if (a.no_augment) cfg.train.augment = AugmentConfig::none();
  if (!a.attributes.empty()) cfg.attributes = a.attributes;
  std::string manifest = a.manifest;
  if (manifest.empty()) {
    const char* root = std::getenv("ATTRNET_DATA_ROOT");
    if (!root || !*root) throw UsageError("--manifest is required (or set ATTRNET_DATA_ROOT)");
    manifest = root;
  }
  if (a.out.empty()) throw UsageError("--out is required");
  cfg.validate();

  const DataSource src = open_source(manifest, a.schema);
  if (cfg.attributes.empty())
    for (const auto& s : src.schema.attributes) cfg.attributes.push_back(s.name);
  for (const auto& name : cfg.attributes) {
    if (!src.schema.contains(name)) throw ConfigError("attribute " + name + " is not in the schema");
    // Surfaces loss/head conflicts before any data is read.
    cfg.train.loss_kind(NetworkSpec{{3, 1, 1}, std::nullopt, {}, head_for(src.schema.at(name)), {}});
  }
  if (cfg.resolved_input_size() == 0) throw ConfigError("input size must be positive");
  try {
    make_network_spec(cfg.arch, {3, cfg.resolved_input_size(), cfg.resolved_input_size()}, std::nullopt);
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  say("config=" + to_json(cfg).dump());

  std::vector<AttributeRun> runs;
  const bool single = cfg.attributes.size() == 1;
  if (!single) fs::create_directories(a.out);
  for (const auto& name : cfg.attributes) runs.push_back({name, single ? fs::path(a.out) : fs::path(a.out) / (name + ".ckpt"), {}, {}});
  if (single && fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < runs.size();) {
      try {
        run_attribute(src, cfg, runs[i]);
      } catch (...) {
        runs[i].error = std::current_exception();
      }
    }
  };
  const unsigned jobs = std::min<unsigned>(cfg.jobs, static_cast<unsigned>(runs.size()));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& r : runs)
    if (r.error) std::rethrow_exception(r.error);
  for (const auto& r : runs) say(r.summary);
  return kOk;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt;
  std::string manifest;
  std::string out;
};

int cmd_eval(const EvalArgs& a) {
  const fs::path ckpt_path = data_path(a.ckpt);
  if (!fs::exists(ckpt_path)) throw UsageError("checkpoint not found: " + a.ckpt);
  const auto ckpt = load_checkpoint<float>(ckpt_path);
  const auto& spec = ckpt.model.spec;
  if (!spec.head) throw ConfigError("checkpoint has no classification head");
  const AttributeSchema attr{ckpt.meta.attribute, ckpt.meta.classes, spec.head->kind};
  try {
    attr.validate();
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("checkpoint metadata: ") + e.what());
  }
  const auto m = read_manifest(data_path(a.manifest));
  const fs::path schema = m.root / "schema.json";
  if (fs::exists(schema)) {
    const auto s = read_schema(schema);
    if (s.contains(attr.name)) check_schema(ckpt.meta, s.at(attr.name));
  }
  std::vector<SampleRecord> recs;
  for (const auto& r : m.records)
    if (r.has(attr.name)) recs.push_back(r);
  if (recs.empty()) throw ConfigError("manifest has no records labelled for " + attr.name);
  if (spec.input_shape[1] != spec.input_shape[2]) throw ConfigError("only square network inputs are supported");
  const auto data = load_dataset<float>(m, recs, attr, spec.input_shape[1]);
  const auto report = evaluate(ckpt.model, data, attr.name, attr.classes);
  const fs::path out = a.out.empty() ? fs::path(ckpt_path.string() + ".eval.json") : fs::path(a.out);
  write_text(out, to_json(report).dump(2) + "\n");
  std::string per_class;
  for (std::size_t k = 0; k < report.classes.size(); ++k) {
    per_class += " precision[" + std::to_string(k) + "]=" + num(report.precision[k]) + " recall[" + std::to_string(k) +
                 "]=" + num(report.recall[k]);
  }
  say("attribute=" + report.attribute + " samples=" + std::to_string(report.samples) + " accuracy=" + num(report.accuracy) +
      per_class + " report=" + out.string());
  return kOk;
}

// ---- report / plot -----------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string style = "firw";
  std::string out;
  std::string jsonl;
};

int cmd_report(const ReportArgs& a) {
  const ReportStyle style = parse_report_style(a.style);
  std::vector<EvalReport> reports;
  for (const auto& in : a.inputs) {
    auto r = read_reports(data_path(in));
    reports.insert(reports.end(), r.begin(), r.end());
  }
  if (reports.empty()) throw UsageError("no reports in the given inputs");
  const auto t = report_table(reports, style);
  std::cout << t.text;
  if (!a.out.empty()) write_text(a.out, t.text);
  if (!a.jsonl.empty()) write_text(a.jsonl, t.jsonl);
  return kOk;
}

struct PlotArgs {
  std::string history;
  std::string out;
  std::string title = "Loss history";
};

int cmd_plot(const PlotArgs& a) {
  const fs::path in = data_path(a.history);
  LossHistory h;
  try {
    h = history_from_csv(read_text(in), in.string());
  } catch (const FormatError& e) {
    throw UsageError(std::string("malformed history: ") + e.what());
  }
  PlotOptions opt;
  opt.title = a.title;
  write_text(a.out, loss_plot_svg(h, opt));
  say("epochs=" + std::to_string(h.size()) + " svg=" + a.out);
  return kOk;
}

// ---- gradcheck ---------------------------------------------------------------

struct GradcheckArgs {
  std::string preset = "ops";
  bool inject_fault = false;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  if (a.preset != "ops" && a.preset != "small") throw UsageError("--preset must be ops or small");
  GradcheckSuiteOptions opt;
  opt.whole_network = a.preset == "small";
  opt.inject_fault = a.inject_fault;
  const auto res = run_gradcheck_suite(opt);
  for (const auto& c : res.cases) {
    std::string worst;
    double err = -1;
    for (const auto& e : c.report.entries)
      if (e.max_rel_error > err) err = e.max_rel_error, worst = e.name;
    say("layer=\"" + c.layer + "\" tensors=" + std::to_string(c.report.entries.size()) + " max_rel_error=" + num(err) +
        " worst=" + worst + " status=" + (c.report.passed() ? "ok" : "FAIL"));
  }
  char secs[32];
  std::snprintf(secs, sizeof secs, "%.2f", res.seconds);
  say(std::string("gradcheck=") + (res.passed() ? "pass" : "fail") + " cases=" + std::to_string(res.cases.size()) +
      " max_rel_error=" + num(res.max_rel_error()) + " tolerance=" + num(opt.tolerance) + " seconds=" + secs);
  return res.passed() ? kOk : kVerify;
}

// ---- celeba ------------------------------------------------------------------

struct CelebaArgs {
  std::string attr_file;
  std::string partition_file;
  std::string images;
  std::string out;
};

int cmd_celeba(const CelebaArgs& a) {
  const auto m = celeba::load(data_path(a.attr_file), data_path(a.partition_file), fs::absolute(data_path(a.images)));
  const fs::path out(a.out);
  for (const auto& name : m.attributes) {
    const fs::path dir = out / name;
    fs::create_directories(dir);
    write_schema(dir / "schema.json", DatasetSchema{{m.schema.at(name)}});
    const auto& s = m.splits.at(name);
    write_manifest(dir / "train.jsonl", s.train);
    write_manifest(dir / "val.jsonl", s.val);
    write_manifest(dir / "test.jsonl", s.test);
  }
  const auto& s0 = m.splits.at(m.attributes.front());
  say("attributes=" + std::to_string(m.attributes.size()) + " train=" + std::to_string(s0.train.size()) +
      " val=" + std::to_string(s0.val.size()) + " test=" + std::to_string(s0.test.size()) + " out=" + out.string());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attrnet: residual-network attribute classifiers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "attrnet 1.0");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic attribute dataset");
  s->add_option("--spec", synth.spec, "JSON spec {attributes, samples, image_size, noise}")->required();
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--seed", synth.seed, "Generator seed");
  s->add_option("--samples", synth.samples, "Override sample count");
  s->add_option("--size", synth.size, "Override image side (>= 16)");

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "Crop faces with the padded box rule and rewrite the manifest");
  p->add_option("--manifest", pre.manifest, "Input manifest (JSON lines)")->required();
  p->add_option("--out", pre.out, "Output directory")->required();
  p->add_option("--crop-rule", pre.crop_rule, "'default' or a JSON file of pad fractions");
  p->add_option("--config", pre.config, "Run config whose crop section is used");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one model per attribute");
  t->add_option("--manifest", tr.manifest, "Dataset directory or manifest file (default $ATTRNET_DATA_ROOT)");
  t->add_option("--schema", tr.schema, "Schema file (default: next to the manifest)");
  t->add_option("--attribute", tr.attributes, "Attribute to train (repeatable; default all)");
  t->add_option("--config", tr.config, "Run config JSON");
  t->add_option("--preset", tr.preset, "small|resnet18|resnet34|resnet50|custom");
  t->add_option("--loss", tr.loss, "categorical|binary (must match the head)");
  t->add_option("--epochs", tr.epochs, "Epochs");
  t->add_option("--batch", tr.batch, "Batch size");
  t->add_option("--input-size", tr.input_size, "Square input side");
  t->add_option("--seed", tr.seed, "Seed for init, split, shuffling and augmentation");
  t->add_option("--lr", tr.lr, "Adam learning rate");
  t->add_option("--jobs", tr.jobs, "Attributes trained in parallel");
  t->add_flag("--no-augment", tr.no_augment, "Disable training augmentation");
  t->add_option("--out", tr.out, "Checkpoint path (directory when training several attributes)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required();
  e->add_option("--manifest", ev.manifest, "Test manifest")->required();
  e->add_option("--out", ev.out, "Report JSON path (default <ckpt>.eval.json)");

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Accuracy table from evaluation reports");
  r->add_option("--inputs", rep.inputs, "Report JSON / JSON-lines files")->required();
  r->add_option("--style", rep.style, "firw|celeba");
  r->add_option("--out", rep.out, "Also write the table here");
  r->add_option("--jsonl", rep.jsonl, "Write the rows as JSON lines");

  PlotArgs pl;
  auto* l = app.add_subcommand("plot", "SVG loss chart from a history CSV");
  l->add_option("--history", pl.history, "History CSV")->required();
  l->add_option("--out", pl.out, "SVG output")->required();
  l->add_option("--title", pl.title, "Chart title");

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference gradient oracle over every layer kind");
  g->add_option("--preset", gc.preset, "ops (layers only) or small (layers plus a whole small network)");
  g->add_flag("--inject-fault", gc.inject_fault, "Corrupt one case; the run must fail");

  CelebaArgs cb;
  auto* c = app.add_subcommand("celeba", "Convert the CelebA attribute and partition lists into manifests");
  c->add_option("--attr-file", cb.attr_file, "list_attr_celeba.txt")->required();
  c->add_option("--partition-file", cb.partition_file, "list_eval_partition.txt")->required();
  c->add_option("--images", cb.images, "Image directory")->required();
  c->add_option("--out", cb.out, "Output directory (one subdirectory per attribute)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*p) return cmd_preprocess(pre);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*r) return cmd_report(rep);
    if (*l) return cmd_plot(pl);
    if (*g) return cmd_gradcheck(gc);
    if (*c) return cmd_celeba(cb);
  } catch (const UsageError& err) {
    note(std::string("error: ") + err.what());
    return kUsage;
  } catch (const NumericError& err) {
    note(std::string("numeric error: ") + err.what());
    return kNumeric;
  } catch (const IngestError& err) {
    note(std::string("ingest error: ") + err.what());
    return kIngest;
  } catch (const WriteError& err) {
    note(std::string("write error: ") + err.what());
    return kIngest;
  } catch (const FormatError& err) {
    note(std::string("format error: ") + err.what());
    return kIngest;
  } catch (const LabelError& err) {
    note(std::string("label error: ") + err.what());
    return kIngest;
  } catch (const Error& err) {
    // ConfigError, ValidationError and other contract violations.
    note(std::string("error: ") + err.what());
    return kUsage;
  } catch (const std::filesystem::filesystem_error& err) {
    note(std::string("filesystem error: ") + err.what());
    return kIngest;
  } catch (const std::exception& err) {
    note(std::string("internal error: ") + err.what());
    return kVerify;
  }
  return kUsage;
}
