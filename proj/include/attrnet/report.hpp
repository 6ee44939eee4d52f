#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "attrnet/errors.hpp"

namespace attrnet {

/// One epoch of the training record.
struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct LossHistory {
  std::vector<EpochRecord> epochs;

  std::size_t size() const { return epochs.size(); }
  bool empty() const { return epochs.empty(); }
  bool operator==(const LossHistory&) const = default;
};

inline std::string history_to_csv(const LossHistory& h) {
  if (h.empty()) throw ContractError("cannot export an empty loss history");
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char line[160];
  for (const auto& e : h.epochs) {
    std::snprintf(line, sizeof line, "%zu,%.6g,%.6g,%.6g,%.6g\n", e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc);
    out += line;
  }
  return out;
}

inline LossHistory history_from_csv(const std::string& text, const std::string& origin = "<history>") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_loss,train_acc,val_loss,val_acc") {
    throw FormatError(origin + ": missing or wrong header");
  }
  LossHistory h;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    EpochRecord e;
    char tail = 0;
    const int n = std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf%c", &e.epoch, &e.train_loss, &e.train_acc, &e.val_loss,
                              &e.val_acc, &tail);
    if (n != 5) throw FormatError(origin + ":" + std::to_string(lineno) + ": expected 5 numeric fields");
    for (double v : {e.train_loss, e.train_acc, e.val_loss, e.val_acc})
      if (!std::isfinite(v)) throw FormatError(origin + ":" + std::to_string(lineno) + ": non-finite value");
    h.epochs.push_back(e);
  }
  if (h.empty()) throw FormatError(origin + ": no epochs");
  return h;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw WriteError(path.string(), "cannot open for writing");
  out << text;
  if (!out.flush()) throw WriteError(path.string(), "write failed");
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError(path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Test-set metrics for one attribute model.
struct EvalReport {
  std::string attribute;
  std::vector<std::string> classes;
  double accuracy = 0.0;
  std::vector<double> precision;  // per class; 0 when nothing was predicted as the class
  std::vector<double> recall;     // per class; 0 when the class is absent
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t samples = 0;

  bool operator==(const EvalReport&) const = default;
};

inline nlohmann::json to_json(const EvalReport& r) {
  return {{"attribute", r.attribute}, {"classes", r.classes},     {"accuracy", r.accuracy}, {"precision", r.precision},
          {"recall", r.recall},       {"confusion", r.confusion}, {"samples", r.samples}};
}

/// Accepts full reports and the reduced {attribute, accuracy} form.
inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.attribute = j.at("attribute").get<std::string>();
    r.accuracy = j.at("accuracy").get<double>();
    if (j.contains("classes")) r.classes = j["classes"].get<std::vector<std::string>>();
    if (j.contains("precision")) r.precision = j["precision"].get<std::vector<double>>();
    if (j.contains("recall")) r.recall = j["recall"].get<std::vector<double>>();
    if (j.contains("confusion")) r.confusion = j["confusion"].get<std::vector<std::vector<std::size_t>>>();
    if (j.contains("samples")) r.samples = j["samples"].get<std::size_t>();
    if (!(r.accuracy >= 0.0 && r.accuracy <= 1.0)) throw FormatError("accuracy outside [0,1] for " + r.attribute);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad evaluation report: ") + e.what());
  }
}

/// Reads a report file holding one object, an array of objects, or JSON lines.
inline std::vector<EvalReport> read_reports(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  std::vector<EvalReport> out;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.is_array()) {
      for (const auto& e : j) out.push_back(eval_report_from_json(e));
    } else {
      out.push_back(eval_report_from_json(j));
    }
    return out;
  } catch (const nlohmann::json::parse_error&) {
  }
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(eval_report_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  return out;
}

enum class ReportStyle { firw, celeba };

inline ReportStyle parse_report_style(const std::string& s) {
  if (s == "firw") return ReportStyle::firw;
  if (s == "celeba") return ReportStyle::celeba;
  throw ConfigError("unknown report style: " + s + " (use firw or celeba)");
}

struct ReportTable {
  std::vector<std::pair<std::string, double>> rows;  // attribute, accuracy in percent
  std::string text;
  std::string jsonl;
};

inline std::string format_percent(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", pct);
  return buf;
}

/// Accuracy table in percent with two decimals. The celeba style appends
/// an Average row holding the mean over all attributes.
inline ReportTable report_table(const std::vector<EvalReport>& reports, ReportStyle style) {
  if (reports.empty()) throw ContractError("report_table needs at least one report");
  ReportTable t;
  double sum = 0.0;
  for (const auto& r : reports) {
    t.rows.emplace_back(r.attribute, 100.0 * r.accuracy);
    sum += 100.0 * r.accuracy;
  }
  if (style == ReportStyle::celeba) t.rows.emplace_back("Average", sum / static_cast<double>(reports.size()));
  std::size_t width = std::string("Attribute").size();
  for (const auto& [name, pct] : t.rows) width = std::max(width, name.size());
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size() + 2, ' '); };
  t.text = pad("Attribute") + "Accuracy (%)\n";
  for (const auto& [name, pct] : t.rows) {
    t.text += pad(name) + format_percent(pct) + "\n";
    nlohmann::json j{{"attribute", name}, {"accuracy_pct", format_percent(pct)}};
    t.jsonl += j.dump() + "\n";
  }
  return t;
}

}  // namespace attrnet
