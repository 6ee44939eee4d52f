#pragma once

#include <string>

#include "attrnet/errors.hpp"

namespace attrnet {

enum class HeadKind { softmax_multiclass, sigmoid_binary };

inline const char* to_string(HeadKind k) {
  return k == HeadKind::softmax_multiclass ? "softmax_multiclass" : "sigmoid_binary";
}

inline HeadKind parse_head_kind(const std::string& s) {
  if (s == "softmax_multiclass" || s == "softmax") return HeadKind::softmax_multiclass;
  if (s == "sigmoid_binary" || s == "sigmoid") return HeadKind::sigmoid_binary;
  throw ValidationError("unknown head kind: " + s);
}

}  // namespace attrnet
