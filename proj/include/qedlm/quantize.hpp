#pragma once

// Fake quantizers for embedding vectors. Each forward lands values on the
// quantizer grid (stored as doubles); each backward is straight-through,
// masked to the quantizer's clip region.

#include <string>
#include <string_view>

#include "qedlm/tensor.hpp"

namespace qedlm {

enum class QuantKind { none, binary, ternary, points, fixed_point, part_select };

struct QuantizerSpec {
  QuantKind kind = QuantKind::none;
  int n_bits = 8;
  // part_select only: -1 selects the fractional part, +1 the integer part.
  int s = -1;
  double v_min = -1.0;
  double v_max = 1.0;
  // Name the spec was parsed from ("Q0i.8f", "ternary", ...); kept verbatim
  // for checkpoint metadata.
  std::string label = "none";

  void validate() const;
  bool enabled() const { return kind != QuantKind::none; }

  static QuantizerSpec none();
  static QuantizerSpec binary();
  static QuantizerSpec ternary();
  static QuantizerSpec points(int n_bits, double v_min, double v_max);
  static QuantizerSpec fixed_point(int n_bits);
  // Power-of-two selector. Default magnitude range is [2^-n, 1] for the
  // fractional part and [1, 2^n] for the integer part.
  static QuantizerSpec part_select(int s, int n_bits);
  static QuantizerSpec part_select(int s, int n_bits, double v_min, double v_max);
};

// Accepts "none", "binary"/"bnn", "ternary"/"tern", "points<n>",
// "fixed<n>", and the Qαi.βf names ("Q0i.8f", "Q8i.0f", "Q0i8f").
QuantizerSpec parse_quantizer(std::string_view name);
std::string_view to_string(QuantKind kind);
QuantKind parse_quant_kind(std::string_view name);

// Scalar forward rules.
double binarize_value(double x);
double ternarize_value(double x);
double points_value(double x, int n_bits, double v_min, double v_max);
double fixed_point_value(double x, int n_bits);
double part_select_value(double x, int s, double v_min, double v_max);
double quantize_value(double x, const QuantizerSpec& spec);
// True when the straight-through backward passes the gradient at x.
bool passes_gradient(double x, const QuantizerSpec& spec);

Tensor binarize(const Tensor& x);
Tensor ternarize(const Tensor& x);
Tensor points_quantize(const Tensor& x, const QuantizerSpec& spec);
Tensor fixed_point_quantize(const Tensor& x, int n_bits);
Tensor part_select_quantize(const Tensor& x, const QuantizerSpec& spec);
// Dispatch on spec.kind; kind none returns x unchanged (same node).
Tensor quantize(const Tensor& x, const QuantizerSpec& spec);

}  // namespace qedlm
