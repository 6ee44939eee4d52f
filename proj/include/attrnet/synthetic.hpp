#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "attrnet/image.hpp"
#include "attrnet/manifest.hpp"
#include "attrnet/rng.hpp"

namespace attrnet::synthetic {

// Each proxy attribute maps a visual property of one drawn object to a
// class: vertical extent (height), bounding-box area (weight), outline
// (gender), hue (ethnicity), width/height ratio (body_type).

struct AttributeRequest {
  std::string name;
  HeadKind head = HeadKind::softmax_multiclass;
  bool operator==(const AttributeRequest&) const = default;
};

struct SyntheticSpec {
  std::vector<AttributeRequest> attributes;
  std::size_t samples = 300;
  std::size_t image_size = 32;
  double noise = 8.0;  // std-dev of additive pixel noise, in 0..255 units

  void validate() const;
};

inline const std::vector<std::string>& known_attributes() {
  static const std::vector<std::string> names{"height", "weight", "gender", "ethnicity", "body_type"};
  return names;
}

inline std::vector<std::string> class_names(const std::string& attribute) {
  if (attribute == "height") return {"<5'7", "5'7-6'1", "≥6'1"};
  if (attribute == "weight") return {"<141 lbs", "141-201 lbs", "≥201 lbs"};
  if (attribute == "gender") return {"Female", "Male"};
  if (attribute == "ethnicity")
    return {"Black", "Asian", "White", "Indian", "Hispanic/Latino", "Middle Eastern", "Native American"};
  if (attribute == "body_type") return {"Average", "Curvy", "Large"};
  throw ValidationError("unknown synthetic attribute: " + attribute);
}

inline void SyntheticSpec::validate() const {
  if (image_size < 16) throw ValidationError("synthetic image_size must be >= 16, got " + std::to_string(image_size));
  if (samples == 0) throw ValidationError("synthetic samples must be positive");
  if (attributes.empty()) throw ValidationError("synthetic spec lists no attributes");
  if (!(noise >= 0.0)) throw ValidationError("synthetic noise must be >= 0");
  std::vector<std::string> seen;
  for (const auto& a : attributes) {
    const auto k = class_names(a.name).size();
    if (std::find(seen.begin(), seen.end(), a.name) != seen.end()) throw ValidationError("duplicate attribute " + a.name);
    if (a.head == HeadKind::sigmoid_binary && k != 2) {
      throw ValidationError("attribute " + a.name + " has " + std::to_string(k) + " classes; sigmoid head needs 2");
    }
    seen.push_back(a.name);
  }
  auto has = [&](const char* n) { return std::find(seen.begin(), seen.end(), n) != seen.end(); };
  if (has("weight") && (has("height") || has("body_type"))) {
    throw ValidationError("weight (area) cannot be combined with height or body_type: the object size is over-determined");
  }
}

inline SyntheticSpec spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      if (k != "attributes" && k != "samples" && k != "image_size" && k != "noise") throw ValidationError("unknown synth spec key: " + k);
    }
    for (const auto& a : j.at("attributes")) {
      if (a.is_string()) {
        s.attributes.push_back({a.get<std::string>()});
      } else {
        AttributeRequest r{a.at("name").get<std::string>()};
        if (a.contains("head")) r.head = parse_head_kind(a["head"].get<std::string>());
        s.attributes.push_back(r);
      }
    }
    if (j.contains("samples")) s.samples = j["samples"].get<std::size_t>();
    if (j.contains("image_size")) s.image_size = j["image_size"].get<std::size_t>();
    if (j.contains("noise")) s.noise = j["noise"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

struct Dataset {
  DatasetSchema schema;
  std::vector<SampleRecord> records;
  std::vector<Image> images;
};

namespace detail {

struct Range {
  double lo, hi;
};

inline const std::array<Range, 3> kHeight{{{0.18, 0.25}, {0.31, 0.40}, {0.49, 0.62}}};
inline const std::array<Range, 3> kAspect{{{0.5, 0.7}, {0.9, 1.1}, {1.4, 2.0}}};
inline const std::array<Range, 3> kArea{{{0.03, 0.05}, {0.08, 0.12}, {0.18, 0.26}}};
// With both height and aspect fixed the width can exceed the drawable
// margin, so heights are scaled down in that combination.
inline constexpr double kHeightScaleWithAspect = 0.6;
inline constexpr double kMargin = 0.12;

inline std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h, 360.0) / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = v - c;
  return {255.0 * (r + m), 255.0 * (g + m), 255.0 * (b + m)};
}

inline double pick(Rng& rng, const Range& r) { return rng.uniform(r.lo, r.hi); }

inline Image render(const std::map<std::string, int>& labels, std::size_t size, double noise, Rng& rng) {
  auto label = [&](const char* n) -> int {
    auto it = labels.find(n);
    return it == labels.end() ? -1 : it->second;
  };
  const int height = label("height"), weight = label("weight"), gender = label("gender"), ethnicity = label("ethnicity"),
            body = label("body_type");
  double w = 0, h = 0;
  if (weight >= 0) {
    const double area = pick(rng, kArea[weight]);
    const double aspect = rng.uniform(0.7, 1.4);
    h = std::sqrt(area / aspect);
    w = std::sqrt(area * aspect);
  } else if (height >= 0 && body >= 0) {
    h = kHeightScaleWithAspect * pick(rng, kHeight[height]);
    w = h * pick(rng, kAspect[body]);
  } else if (height >= 0) {
    h = pick(rng, kHeight[height]);
    w = rng.uniform(0.2, 0.5);
  } else if (body >= 0) {
    h = rng.uniform(0.25, 0.38);
    w = h * pick(rng, kAspect[body]);
  } else {
    h = rng.uniform(0.25, 0.5);
    w = rng.uniform(0.25, 0.5);
  }
  const double span = 1.0 - 2.0 * kMargin;
  const double x0 = kMargin + rng.uniform() * (span - w);
  const double y0 = kMargin + rng.uniform() * (span - h);
  const bool ellipse = gender >= 0 ? gender == 0 : rng.bernoulli(0.5);
  const double hue = ethnicity >= 0 ? 360.0 * ethnicity / 7.0 : rng.uniform(0.0, 360.0);
  const auto color = hsv_to_rgb(hue, 0.75, 0.9);
  const double gray = rng.uniform(90.0, 130.0);

  const double S = static_cast<double>(size);
  const double cx = (x0 + w / 2) * S, cy = (y0 + h / 2) * S, rx = w * S / 2, ry = h * S / 2;
  Image img(size, size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      const double dx = (px - cx) / rx, dy = (py - cy) / ry;
      const bool inside = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = inside ? color[c] : gray;
        const double v = base + noise * rng.normal();
        img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return img;
}

}  // namespace detail

/// Renders `spec.samples` images. Labels are balanced per attribute (class
/// counts differ by at most one) and everything is a function of the seed.
inline Dataset generate(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Dataset d;
  for (const auto& a : spec.attributes) d.schema.attributes.push_back({a.name, class_names(a.name), a.head});
  d.schema.validate();
  std::vector<std::vector<int>> labels;
  for (const auto& a : spec.attributes) {
    const auto k = class_names(a.name).size();
    std::vector<int> l(spec.samples);
    for (std::size_t i = 0; i < spec.samples; ++i) l[i] = static_cast<int>(i % k);
    Rng rng(mix_seed(seed, fnv1a("labels:" + a.name)));
    rng.shuffle(l);
    labels.push_back(std::move(l));
  }
  for (std::size_t i = 0; i < spec.samples; ++i) {
    SampleRecord r;
    char name[32];
    std::snprintf(name, sizeof name, "images/%06zu.png", i);
    r.image = name;
    for (std::size_t a = 0; a < spec.attributes.size(); ++a) r.labels[spec.attributes[a].name] = labels[a][i];
    Rng rng(mix_seed(seed, i));
    d.images.push_back(detail::render(r.labels, spec.image_size, spec.noise, rng));
    d.records.push_back(std::move(r));
  }
  return d;
}

/// Writes images/, manifest.jsonl and schema.json under `dir`.
inline void write(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  for (std::size_t i = 0; i < d.records.size(); ++i) write_image(dir / d.records[i].image, d.images[i]);
  write_manifest(dir / "manifest.jsonl", d.records);
  write_schema(dir / "schema.json", d.schema);
}

}  // namespace attrnet::synthetic
