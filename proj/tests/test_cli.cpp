#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "attrnet/crop.hpp"
#include "attrnet/image.hpp"
#include "attrnet/manifest.hpp"
#include "attrnet/report.hpp"
#include "support/temp_dir.hpp"

namespace fs = std::filesystem;
using namespace attrnet;

namespace {

const fs::path kData = ATTRNET_TEST_DATA_DIR;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

/// Runs the CLI with `args` in `cwd`; `env` is a prefix such as "VAR=x".
RunResult cli(const std::string& args, const fs::path& cwd = fs::current_path(), const std::string& env = "") {
  static int n = 0;
  const fs::path log = fs::temp_directory_path() / ("attrnet-cli-" + std::to_string(::getpid()) + "-" + std::to_string(n++));
  const std::string cmd = "cd " + quote(cwd.string()) + " && env -u ATTRNET_DATA_ROOT " + env + " " +
                          quote(ATTRNET_CLI) + " " + args + " > " + quote(log.string() + ".out") + " 2> " +
                          quote(log.string() + ".err");
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(log.string() + ".out");
  r.err = slurp(log.string() + ".err");
  fs::remove(log.string() + ".out");
  fs::remove(log.string() + ".err");
  return r;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

/// Value of `key=` in a key=value line.
std::string field(const std::string& text, const std::string& key) {
  const auto pos = text.find(key + "=");
  if (pos == std::string::npos) return {};
  const auto start = pos + key.size() + 1;
  return text.substr(start, text.find_first_of(" \n", start) - start);
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

// One small synthetic dataset and one trained checkpoint shared by the suite.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new attrnet::testing::TempDir;
    write_file(root() / "spec.json",
               R"({"attributes": ["height", {"name": "gender", "head": "sigmoid_binary"}], "samples": 60, "image_size": 16})");
    const auto s = cli("synth --spec " + quote((root() / "spec.json").string()) + " --out " + quote((root() / "data").string()) +
                       " --seed 3");
    ASSERT_EQ(s.code, 0) << s.err;
    train_ = new RunResult(cli(train_args(root() / "run" / "height.ckpt")));
    ASSERT_EQ(train_->code, 0) << train_->err;
  }
  static void TearDownTestSuite() {
    delete train_;
    delete dir_;
  }
  static fs::path root() { return dir_->path(); }
  static std::string train_args(const fs::path& out, const std::string& extra = "") {
    return "train --manifest " + quote((root() / "data").string()) +
           " --attribute height --epochs 2 --batch 16 --input-size 16 --seed 5 --out " + quote(out.string()) + " " + extra;
  }

  static attrnet::testing::TempDir* dir_;
  static RunResult* train_;
};

attrnet::testing::TempDir* Cli::dir_ = nullptr;
RunResult* Cli::train_ = nullptr;

TEST_F(Cli, SynthWritesRequestedSamplesDeterministically) {
  const auto spec = quote((root() / "spec.json").string());
  const auto a = root() / "synth_a", b = root() / "synth_b";
  ASSERT_EQ(cli("synth --spec " + spec + " --out " + quote(a.string()) + " --seed 9 --samples 300").code, 0);
  ASSERT_EQ(cli("synth --spec " + spec + " --out " + quote(b.string()) + " --seed 9 --samples 300").code, 0);
  EXPECT_EQ(count_lines(slurp(a / "manifest.jsonl")), 300u);
  EXPECT_EQ(slurp(a / "manifest.jsonl"), slurp(b / "manifest.jsonl"));
  EXPECT_EQ(slurp(a / "images" / "000123.png"), slurp(b / "images" / "000123.png"));
  EXPECT_EQ(read_schema(a / "schema.json").attributes.size(), 2u);
}

TEST_F(Cli, SynthRejectsTinyImages) {
  const auto r = cli("synth --spec " + quote((root() / "spec.json").string()) + " --out " +
                     quote((root() / "tiny").string()) + " --size 8");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("16"), std::string::npos);
}

TEST_F(Cli, PreprocessCropsBoxedRecordsAndCopiesTheRest) {
  const fs::path in = root() / "pre_in";
  fs::create_directories(in);
  write_image(in / "a.png", Image(400, 300, 90));
  write_image(in / "b.png", Image(40, 30, 10));
  write_file(in / "manifest.jsonl", R"({"image": "a.png", "bbox": [150, 100, 250, 200], "labels": {"height": 1}}
{"image": "b.png", "labels": {"height": 0}}
)");
  const auto r = cli("preprocess --manifest " + quote((in / "manifest.jsonl").string()) + " --out " +
                     quote((root() / "pre_out").string()));
  ASSERT_EQ(r.code, 0) << r.err;
  const BBox expect = padded_crop(400, 300, BBox{150, 100, 250, 200});
  const Image a = read_image(root() / "pre_out" / "a.png");
  EXPECT_EQ(static_cast<long>(a.width), expect.width());
  EXPECT_EQ(static_cast<long>(a.height), expect.height());
  const Image b = read_image(root() / "pre_out" / "b.png");
  EXPECT_EQ(b.width, 40u);
  EXPECT_EQ(b.height, 30u);
  const auto m = read_manifest(root() / "pre_out" / "manifest.jsonl");
  ASSERT_EQ(m.records.size(), 2u);
  EXPECT_FALSE(m.records[0].bbox.has_value());
  EXPECT_EQ(field(r.out, "cropped"), "1");
  EXPECT_EQ(field(r.out, "copied"), "1");
}

TEST_F(Cli, PreprocessEmptyManifestIsUsageError) {
  fs::create_directories(root() / "pre_empty");
  write_file(root() / "pre_empty" / "manifest.jsonl", "");
  EXPECT_EQ(cli("preprocess --manifest " + quote((root() / "pre_empty" / "manifest.jsonl").string()) + " --out " +
                quote((root() / "pre_empty_out").string()))
                .code,
            2);
}

TEST_F(Cli, PreprocessReportsEveryUnreadableImage) {
  const fs::path in = root() / "pre_bad";
  fs::create_directories(in);
  write_image(in / "ok.png", Image(20, 20, 1));
  write_file(in / "broken.png", "not an image");
  write_file(in / "manifest.jsonl", R"({"image": "ok.png"}
{"image": "broken.png"}
{"image": "missing.png"}
)");
  const auto r = cli("preprocess --manifest " + quote((in / "manifest.jsonl").string()) + " --out " +
                     quote((root() / "pre_bad_out").string()));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("broken.png"), std::string::npos);
  EXPECT_NE(r.err.find("missing.png"), std::string::npos);
  EXPECT_EQ(r.err.find("ok.png"), std::string::npos);
}

TEST_F(Cli, TrainWritesCheckpointHistoryAndReport) {
  const fs::path ckpt = root() / "run" / "height.ckpt";
  EXPECT_TRUE(fs::exists(ckpt));
  EXPECT_TRUE(fs::exists(ckpt.string() + ".last"));
  EXPECT_TRUE(fs::exists(ckpt.string() + ".eval.json"));
  EXPECT_TRUE(fs::exists(ckpt.string() + ".test.jsonl"));
  const auto h = history_from_csv(slurp(ckpt.string() + ".history.csv"));
  EXPECT_EQ(h.size(), 2u);
  EXPECT_NE(train_->out.find("config="), std::string::npos);
  EXPECT_EQ(field(train_->out, "epochs"), "2");
  EXPECT_EQ(field(train_->out, "train") + "/" + field(train_->out, "val") + "/" + field(train_->out, "test"), "39/9/12");
  // Per-epoch progress goes to stderr.
  EXPECT_NE(train_->err.find("epoch=2"), std::string::npos);
}

TEST_F(Cli, TrainSameSeedGivesIdenticalHistory) {
  const fs::path again = root() / "run_again" / "height.ckpt";
  const auto r = cli(train_args(again));
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path first = root() / "run" / "height.ckpt";
  EXPECT_EQ(slurp(first.string() + ".history.csv"), slurp(again.string() + ".history.csv"));
  EXPECT_EQ(slurp(first), slurp(again));
}

TEST_F(Cli, TrainLossHeadMismatchIsUsageError) {
  const auto r = cli("train --manifest " + quote((root() / "data").string()) +
                     " --attribute gender --loss categorical --epochs 1 --out " + quote((root() / "bad.ckpt").string()));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("incompatible"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(root() / "bad.ckpt"));
}

TEST_F(Cli, TrainUnknownConfigKeyIsUsageError) {
  write_file(root() / "bad_config.json", R"({"train": {"epochs": 1, "learning_rate": 0.1}})");
  const auto r = cli(train_args(root() / "bad_cfg.ckpt", "--config " + quote((root() / "bad_config.json").string())));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos);
}

TEST_F(Cli, EvalReportMatchesPrintedNumbers) {
  const fs::path ckpt = root() / "run" / "height.ckpt";
  const fs::path out = root() / "eval.json";
  const auto r = cli("eval --ckpt " + quote(ckpt.string()) + " --manifest " + quote(ckpt.string() + ".test.jsonl") +
                     " --out " + quote(out.string()));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(out));
  EXPECT_EQ(j.at("samples").get<std::size_t>(), 12u);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", j.at("accuracy").get<double>());
  EXPECT_EQ(field(r.out, "accuracy"), buf);
  // The report written during training is for the same checkpoint and test set.
  EXPECT_EQ(nlohmann::json::parse(slurp(ckpt.string() + ".eval.json")), j);
}

TEST_F(Cli, EvalMissingCheckpointIsUsageError) {
  EXPECT_EQ(cli("eval --ckpt " + quote((root() / "nope.ckpt").string()) + " --manifest " +
                quote((root() / "data" / "manifest.jsonl").string()))
                .code,
            2);
}

TEST_F(Cli, ReportRendersFixtureTable) {
  const auto r = cli("report --inputs " + quote((kData / "reports" / "firw_table.json").string()) + " --jsonl " +
                     quote((root() / "rows.jsonl").string()));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "Attribute  Accuracy (%)");
  EXPECT_NE(r.out.find("Body Type  84.58"), std::string::npos);
  EXPECT_EQ(count_lines(slurp(root() / "rows.jsonl")), 5u);
  EXPECT_EQ(cli("report --inputs " + quote((kData / "reports" / "firw_table.json").string()) + " --style fancy").code, 2);
}

TEST_F(Cli, PlotIsDeterministicAndRejectsMalformedHistory) {
  write_file(root() / "h.csv", "epoch,train_loss,train_acc,val_loss,val_acc\n1,1.0,0.5,1.1,0.4\n2,0.8,0.6,0.9,0.5\n3,0.6,0.7,0.8,0.6\n");
  const auto h = quote((root() / "h.csv").string());
  ASSERT_EQ(cli("plot --history " + h + " --out " + quote((root() / "a.svg").string())).code, 0);
  ASSERT_EQ(cli("plot --history " + h + " --out " + quote((root() / "b.svg").string())).code, 0);
  const std::string svg = slurp(root() / "a.svg");
  EXPECT_EQ(svg, slurp(root() / "b.svg"));
  EXPECT_NE(svg.find("id=\"train_loss\""), std::string::npos);
  EXPECT_NE(svg.find("id=\"val_loss\""), std::string::npos);
  write_file(root() / "bad.csv", "epoch,loss\n1,2\n");
  EXPECT_EQ(cli("plot --history " + quote((root() / "bad.csv").string()) + " --out " + quote((root() / "c.svg").string())).code,
            2);
}

TEST_F(Cli, RelativeInputsResolveAgainstDataRoot) {
  write_file(root() / "rel.csv", "epoch,train_loss,train_acc,val_loss,val_acc\n1,1.0,0.5,1.1,0.4\n");
  const fs::path elsewhere = root() / "elsewhere";
  fs::create_directories(elsewhere);
  EXPECT_NE(cli("plot --history rel.csv --out out.svg", elsewhere).code, 0);
  const auto r = cli("plot --history rel.csv --out out.svg", elsewhere, "ATTRNET_DATA_ROOT=" + quote(root().string()));
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(elsewhere / "out.svg"));
}

TEST_F(Cli, GradcheckPassesAndListsEveryLayerKind) {
  const auto r = cli("gradcheck");
  EXPECT_EQ(r.code, 0) << r.out;
  for (const char* layer : {"dense", "conv2d s1 p0", "conv2d s2 p1", "batchnorm2d train", "relu", "maxpool2d",
                            "global_avgpool", "softmax+cce", "sigmoid+bce"})
    EXPECT_NE(r.out.find(std::string("layer=\"") + layer + "\""), std::string::npos) << layer;
  EXPECT_NE(r.out.find("gradcheck=pass"), std::string::npos);
}

TEST_F(Cli, GradcheckInjectedFaultFails) {
  const auto r = cli("gradcheck --inject-fault");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("layer=\"dense\""), std::string::npos);
  EXPECT_NE(r.out.find("status=FAIL"), std::string::npos);
}

TEST_F(Cli, CelebaWritesOneSplitDirectoryPerAttribute) {
  const auto r = cli("celeba --attr-file " + quote((kData / "celeba" / "list_attr_celeba.txt").string()) +
                     " --partition-file " + quote((kData / "celeba" / "list_eval_partition.txt").string()) +
                     " --images img --out " + quote((root() / "celeba").string()));
  ASSERT_EQ(r.code, 0) << r.err;
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(root() / "celeba")) dirs += e.is_directory();
  EXPECT_EQ(dirs, 40u);
  EXPECT_EQ(count_lines(slurp(root() / "celeba" / "Smiling" / "train.jsonl")), 6u);
  EXPECT_EQ(read_schema(root() / "celeba" / "Smiling" / "schema.json").at("Smiling").head, HeadKind::sigmoid_binary);
}

TEST_F(Cli, UnknownSubcommandIsUsageError) { EXPECT_EQ(cli("frobnicate").code, 2); }

}  // namespace
