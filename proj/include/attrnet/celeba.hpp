#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "attrnet/errors.hpp"
#include "attrnet/manifest.hpp"

namespace attrnet::celeba {

inline const std::array<const char*, 40> kAttributeNames = {
    "5_o_Clock_Shadow", "Arched_Eyebrows", "Attractive", "Bags_Under_Eyes", "Bald",
    "Bangs", "Big_Lips", "Big_Nose", "Black_Hair", "Blond_Hair",
    "Blurry", "Brown_Hair", "Bushy_Eyebrows", "Chubby", "Double_Chin",
    "Eyeglasses", "Goatee", "Gray_Hair", "Heavy_Makeup", "High_Cheekbones",
    "Male", "Mouth_Slightly_Open", "Mustache", "Narrow_Eyes", "No_Beard",
    "Oval_Face", "Pale_Skin", "Pointy_Nose", "Receding_Hairline", "Rosy_Cheeks",
    "Sideburns", "Smiling", "Straight_Hair", "Wavy_Hair", "Wearing_Earrings",
    "Wearing_Hat", "Wearing_Lipstick", "Wearing_Necklace", "Wearing_Necktie", "Young"};

/// Contents of list_attr_celeba.txt; values keep the file's -1/1 coding.
struct AttrTable {
  std::vector<std::string> names;
  std::vector<std::string> files;
  std::vector<std::vector<int>> values;

  bool operator==(const AttrTable&) const = default;
};

enum class Partition { train = 0, val = 1, test = 2 };

/// Contents of list_eval_partition.txt in file order.
struct PartitionTable {
  std::vector<std::string> files;
  std::vector<Partition> codes;

  bool operator==(const PartitionTable&) const = default;
};

namespace detail {

inline std::vector<std::string> tokens(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string t; ss >> t;) out.push_back(t);
  return out;
}

inline bool next_content_line(std::istream& in, std::string& line, std::size_t& lineno) {
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

}  // namespace detail

inline AttrTable parse_attr(std::istream& in, const std::string& origin = "list_attr") {
  AttrTable t;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) { return FormatError(origin + ":" + std::to_string(lineno) + ": " + what); };
  if (!detail::next_content_line(in, line, lineno)) throw fail("missing image count");
  std::size_t count = 0;
  try {
    std::size_t pos = 0;
    count = std::stoul(line, &pos);
    if (line.find_first_not_of(" \t\r", pos) != std::string::npos) throw fail("bad image count");
  } catch (const std::logic_error&) {
    throw fail("bad image count");
  }
  if (!detail::next_content_line(in, line, lineno)) throw fail("missing attribute names");
  t.names = detail::tokens(line);
  if (t.names.empty()) throw fail("empty attribute name line");
  while (detail::next_content_line(in, line, lineno)) {
    auto tok = detail::tokens(line);
    if (tok.size() != t.names.size() + 1) {
      throw fail("expected " + std::to_string(t.names.size() + 1) + " fields, got " + std::to_string(tok.size()));
    }
    std::vector<int> row;
    row.reserve(t.names.size());
    for (std::size_t k = 1; k < tok.size(); ++k) {
      if (tok[k] == "1") row.push_back(1);
      else if (tok[k] == "-1") row.push_back(-1);
      else throw fail("attribute value must be -1 or 1, got '" + tok[k] + "'");
    }
    t.files.push_back(tok[0]);
    t.values.push_back(std::move(row));
  }
  if (t.files.size() != count) {
    throw FormatError(origin + ": header declares " + std::to_string(count) + " images, found " + std::to_string(t.files.size()));
  }
  return t;
}

inline PartitionTable parse_partition(std::istream& in, const std::string& origin = "list_eval_partition") {
  PartitionTable t;
  std::string line;
  std::size_t lineno = 0;
  while (detail::next_content_line(in, line, lineno)) {
    auto tok = detail::tokens(line);
    if (tok.size() != 2) throw FormatError(origin + ":" + std::to_string(lineno) + ": expected '<file> <code>'");
    if (tok[1] != "0" && tok[1] != "1" && tok[1] != "2") {
      throw FormatError(origin + ":" + std::to_string(lineno) + ": unknown partition code '" + tok[1] + "'");
    }
    t.files.push_back(tok[0]);
    t.codes.push_back(static_cast<Partition>(tok[1][0] - '0'));
  }
  return t;
}

/// Same layout as the distributed file: count line, names line, then one
/// row per image with each value right-aligned in a 2-wide field.
inline std::string serialize_attr(const AttrTable& t) {
  std::string out = std::to_string(t.files.size()) + "\n";
  for (std::size_t i = 0; i < t.names.size(); ++i) out += (i ? " " : "") + t.names[i];
  out += "\n";
  for (std::size_t r = 0; r < t.files.size(); ++r) {
    out += t.files[r];
    for (int v : t.values[r]) out += v < 0 ? " -1" : "  1";
    out += "\n";
  }
  return out;
}

inline std::string serialize_partition(const PartitionTable& t) {
  std::string out;
  for (std::size_t i = 0; i < t.files.size(); ++i) out += t.files[i] + " " + std::to_string(static_cast<int>(t.codes[i])) + "\n";
  return out;
}

/// One binary manifest per attribute, already split by the official partition.
struct Manifests {
  DatasetSchema schema;
  std::vector<std::string> attributes;
  std::map<std::string, Splits> splits;
};

/// Joins the two tables by file name, maps -1 -> 0 and 1 -> 1, and builds a
/// split per attribute. Image paths are `images_dir / file`.
inline Manifests build_manifests(const AttrTable& attrs, const PartitionTable& parts, const std::filesystem::path& images_dir) {
  if (attrs.files.size() != parts.files.size()) {
    throw FormatError("attribute file lists " + std::to_string(attrs.files.size()) + " images, partition file " +
                      std::to_string(parts.files.size()));
  }
  std::unordered_map<std::string, Partition> code;
  for (std::size_t i = 0; i < parts.files.size(); ++i) {
    if (!code.emplace(parts.files[i], parts.codes[i]).second) throw FormatError("duplicate partition entry " + parts.files[i]);
  }
  Manifests m;
  m.attributes = attrs.names;
  for (const auto& name : attrs.names) {
    m.schema.attributes.push_back({name, {"no", "yes"}, HeadKind::sigmoid_binary});
    m.splits[name];
  }
  m.schema.validate();
  for (std::size_t r = 0; r < attrs.files.size(); ++r) {
    auto it = code.find(attrs.files[r]);
    if (it == code.end()) throw FormatError("no partition entry for " + attrs.files[r]);
    const std::string image = (images_dir / attrs.files[r]).string();
    for (std::size_t k = 0; k < attrs.names.size(); ++k) {
      SampleRecord rec{image, std::nullopt, {{attrs.names[k], attrs.values[r][k] > 0 ? 1 : 0}}};
      auto& s = m.splits[attrs.names[k]];
      (it->second == Partition::train ? s.train : it->second == Partition::val ? s.val : s.test).push_back(std::move(rec));
    }
  }
  return m;
}

inline Manifests load(const std::filesystem::path& attr_file, const std::filesystem::path& partition_file,
                      const std::filesystem::path& images_dir) {
  std::ifstream a(attr_file), p(partition_file);
  if (!a) throw IngestError(attr_file.string(), "cannot open attribute list");
  if (!p) throw IngestError(partition_file.string(), "cannot open partition list");
  return build_manifests(parse_attr(a, attr_file.string()), parse_partition(p, partition_file.string()), images_dir);
}

}  // namespace attrnet::celeba
