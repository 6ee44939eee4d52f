#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "attrnet/crop.hpp"
#include "attrnet/errors.hpp"
#include "attrnet/head.hpp"
#include "attrnet/rng.hpp"

namespace attrnet {

/// One image with an optional face box and any subset of attribute labels.
struct SampleRecord {
  std::string image;
  std::optional<BBox> bbox;
  std::map<std::string, int> labels;

  bool has(const std::string& attribute) const { return labels.contains(attribute); }
  bool operator==(const SampleRecord&) const = default;
};

struct AttributeSchema {
  std::string name;
  std::vector<std::string> classes;
  HeadKind head = HeadKind::softmax_multiclass;

  void validate() const {
    if (name.empty()) throw ValidationError("attribute schema: empty name");
    if (classes.size() < 2) throw ValidationError("attribute " + name + ": needs at least 2 classes");
    if (head == HeadKind::sigmoid_binary && classes.size() != 2) {
      throw ValidationError("attribute " + name + ": sigmoid head needs exactly 2 classes");
    }
  }
  bool operator==(const AttributeSchema&) const = default;
};

/// Ordered attribute list; class order fixes label indices.
struct DatasetSchema {
  std::vector<AttributeSchema> attributes;

  void validate() const {
    std::set<std::string> seen;
    for (const auto& a : attributes) {
      a.validate();
      if (!seen.insert(a.name).second) throw ValidationError("duplicate attribute in schema: " + a.name);
    }
  }

  const AttributeSchema& at(const std::string& name) const {
    for (const auto& a : attributes)
      if (a.name == name) return a;
    throw ValidationError("attribute not in schema: " + name);
  }
  bool contains(const std::string& name) const {
    return std::any_of(attributes.begin(), attributes.end(), [&](const auto& a) { return a.name == name; });
  }
  bool operator==(const DatasetSchema&) const = default;
};

/// Records plus the directory relative image paths resolve against.
struct Manifest {
  std::filesystem::path root;
  std::vector<SampleRecord> records;

  std::filesystem::path resolve(const SampleRecord& r) const {
    const std::filesystem::path p(r.image);
    return p.is_absolute() ? p : root / p;
  }
  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

// ---- JSON ------------------------------------------------------------------

inline nlohmann::json to_json(const SampleRecord& r) {
  nlohmann::json j;
  j["image"] = r.image;
  if (r.bbox) j["bbox"] = {r.bbox->x0, r.bbox->y0, r.bbox->x1, r.bbox->y1};
  if (!r.labels.empty()) j["labels"] = r.labels;
  return j;
}

inline SampleRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("manifest record is not an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "image" && it.key() != "bbox" && it.key() != "labels") throw FormatError("unknown record key: " + it.key());
  SampleRecord r;
  try {
    r.image = j.at("image").get<std::string>();
    if (j.contains("bbox") && !j["bbox"].is_null()) {
      const auto b = j["bbox"].get<std::vector<long>>();
      if (b.size() != 4) throw FormatError("bbox must have 4 values");
      r.bbox = BBox{b[0], b[1], b[2], b[3]};
      if (r.bbox->x0 < 0 || r.bbox->y0 < 0 || r.bbox->x0 >= r.bbox->x1 || r.bbox->y0 >= r.bbox->y1) {
        throw ValidationError("bbox " + r.bbox->str() + " is not a valid rectangle");
      }
    }
    if (j.contains("labels")) r.labels = j["labels"].get<std::map<std::string, int>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest record: ") + e.what());
  }
  if (r.image.empty()) throw FormatError("manifest record with empty image path");
  return r;
}

inline std::string manifest_to_jsonl(const std::vector<SampleRecord>& records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  return out;
}

inline std::vector<SampleRecord> manifest_from_jsonl(std::istream& in, const std::string& origin = "<manifest>") {
  std::vector<SampleRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(origin + ":" + std::to_string(n) + ": " + e.what());
    } catch (const Error& e) {
      throw FormatError(origin + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError(path.string(), "cannot open manifest");
  return {path.parent_path(), manifest_from_jsonl(in, path.string())};
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw WriteError(path.string(), "cannot open for writing");
  out << manifest_to_jsonl(records);
  if (!out.flush()) throw WriteError(path.string(), "write failed");
}

inline nlohmann::json to_json(const DatasetSchema& s) {
  nlohmann::json attrs = nlohmann::json::array();
  for (const auto& a : s.attributes) attrs.push_back({{"name", a.name}, {"classes", a.classes}, {"head", to_string(a.head)}});
  return {{"format", "attrnet.schema"}, {"version", 1}, {"attributes", attrs}};
}

inline DatasetSchema schema_from_json(const nlohmann::json& j) {
  DatasetSchema s;
  try {
    if (j.at("format").get<std::string>() != "attrnet.schema") throw FormatError("not a schema document");
    if (j.at("version").get<int>() != 1) throw VersionError("unsupported schema version");
    for (const auto& a : j.at("attributes")) {
      AttributeSchema as;
      as.name = a.at("name").get<std::string>();
      as.classes = a.at("classes").get<std::vector<std::string>>();
      as.head = a.contains("head") ? parse_head_kind(a["head"].get<std::string>())
                                   : (as.classes.size() == 2 ? HeadKind::sigmoid_binary : HeadKind::softmax_multiclass);
      s.attributes.push_back(std::move(as));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad schema document: ") + e.what());
  }
  s.validate();
  return s;
}

inline DatasetSchema read_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError(path.string(), "cannot open schema");
  try {
    return schema_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_schema(const std::filesystem::path& path, const DatasetSchema& s) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw WriteError(path.string(), "cannot open for writing");
  out << to_json(s).dump(2) << "\n";
  if (!out.flush()) throw WriteError(path.string(), "write failed");
}

/// Checks every present label against the schema's class counts.
inline void validate_labels(const std::vector<SampleRecord>& records, const DatasetSchema& schema) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (const auto& [attr, label] : records[i].labels) {
      if (!schema.contains(attr)) continue;
      const auto k = schema.at(attr).classes.size();
      if (label < 0 || static_cast<std::size_t>(label) >= k) {
        throw LabelError("record " + std::to_string(i) + " (" + records[i].image + "): label " + std::to_string(label) +
                         " for " + attr + " outside [0," + std::to_string(k) + ")");
      }
    }
  }
}

// ---- splits ----------------------------------------------------------------

struct SplitSpec {
  double test_fraction = 0.2;
  double val_fraction = 0.2;  // of what remains after the test carve
  std::uint64_t seed = 0;
  bool stratified = false;

  void validate() const {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ValidationError("split: test_fraction must be in (0,1)");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ValidationError("split: val_fraction must be in (0,1)");
  }
  bool operator==(const SplitSpec&) const = default;
};

struct Splits {
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> val;
  std::vector<SampleRecord> test;
};

namespace detail {

inline void carve(std::vector<SampleRecord> pool, const SplitSpec& spec, Rng& rng, Splits& out) {
  rng.shuffle(pool);
  const auto n = pool.size();
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.test_fraction));
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n - n_test) * spec.val_fraction));
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_test ? out.test : i < n_test + n_val ? out.val : out.train;
    dst.push_back(std::move(pool[i]));
  }
}

}  // namespace detail

/// Keeps records labeled for `attribute`, shuffles them with the seed, takes
/// floor(n * test_fraction) for test and floor(rest * val_fraction) for
/// validation. Stratified mode applies the same carve per class.
inline Splits split_manifest(const std::vector<SampleRecord>& records, const std::string& attribute, const SplitSpec& spec) {
  spec.validate();
  std::vector<SampleRecord> labeled;
  for (const auto& r : records)
    if (r.has(attribute)) labeled.push_back(r);
  if (labeled.empty()) throw CoverageError("no records carry attribute " + attribute);
  Splits out;
  Rng rng(mix_seed(spec.seed, fnv1a(attribute)));
  if (!spec.stratified) {
    detail::carve(std::move(labeled), spec, rng, out);
    return out;
  }
  std::map<int, std::vector<SampleRecord>> by_class;
  for (auto& r : labeled) by_class[r.labels.at(attribute)].push_back(std::move(r));
  for (auto& [label, pool] : by_class) detail::carve(std::move(pool), spec, rng, out);
  rng.shuffle(out.train);
  rng.shuffle(out.val);
  rng.shuffle(out.test);
  return out;
}

}  // namespace attrnet
