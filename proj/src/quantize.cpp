#include "qedlm/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

#include "qedlm/errors.hpp"

namespace qedlm {

namespace {

// Half-up rounding; keeps the sign selector s meaningful at exact ties.
double round_half_up(double y) { return std::floor(y + 0.5); }

template <class Forward, class Pass>
Tensor straight_through(const char* op, const Tensor& x, Forward forward, Pass pass) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  std::vector<char> mask(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = forward(xv[i]);
    mask[i] = pass(xv[i]) ? 1 : 0;
  }
  return Tensor::make_op(op, x.shape(), std::move(out), {x},
                         [mask = std::move(mask)](auto, std::span<const double> g,
                                                  const std::vector<Tensor>& in) {
                           auto gx = grad_buffer(in[0]);
                           for (std::size_t i = 0; i < gx.size(); ++i)
                             if (mask[i]) gx[i] += g[i];
                         });
}

}  // namespace

void QuantizerSpec::validate() const {
  if (kind == QuantKind::none) return;
  if (kind == QuantKind::points || kind == QuantKind::fixed_point || kind == QuantKind::part_select) {
    if (n_bits < 1 || n_bits > 16) {
      throw SpecError("quantizer '" + label + "': n_bits " + std::to_string(n_bits) + " outside [1, 16]");
    }
  }
  if (kind == QuantKind::part_select && s != -1 && s != 1) {
    throw SpecError("quantizer '" + label + "': part selector s must be -1 or +1");
  }
  if (!(v_min < v_max)) throw SpecError("quantizer '" + label + "': v_min must be below v_max");
}

QuantizerSpec QuantizerSpec::none() { return {}; }

QuantizerSpec QuantizerSpec::binary() {
  return {QuantKind::binary, 1, -1, -1.0, 1.0, "binary"};
}

QuantizerSpec QuantizerSpec::ternary() {
  return {QuantKind::ternary, 2, 1, -1.0, 1.0, "ternary"};
}

QuantizerSpec QuantizerSpec::points(int n_bits, double v_min, double v_max) {
  QuantizerSpec q{QuantKind::points, n_bits, 1, v_min, v_max, "points" + std::to_string(n_bits)};
  q.validate();
  return q;
}

QuantizerSpec QuantizerSpec::fixed_point(int n_bits) {
  QuantizerSpec q{QuantKind::fixed_point, n_bits, 1, 0.0, std::ldexp(1.0, n_bits) - 1.0,
                  "fixed" + std::to_string(n_bits)};
  q.validate();
  return q;
}

QuantizerSpec QuantizerSpec::part_select(int s, int n_bits) {
  if (n_bits < 1 || n_bits > 16) throw SpecError("part_select: n_bits outside [1, 16]");
  return s < 0 ? part_select(s, n_bits, std::ldexp(1.0, -n_bits), 1.0)
               : part_select(s, n_bits, 1.0, std::ldexp(1.0, n_bits));
}

QuantizerSpec QuantizerSpec::part_select(int s, int n_bits, double v_min, double v_max) {
  const std::string name = s < 0 ? "Q0i." + std::to_string(n_bits) + "f"
                                 : "Q" + std::to_string(n_bits) + "i.0f";
  QuantizerSpec q{QuantKind::part_select, n_bits, s, v_min, v_max, name};
  q.validate();
  return q;
}

std::string_view to_string(QuantKind kind) {
  switch (kind) {
    case QuantKind::none: return "none";
    case QuantKind::binary: return "binary";
    case QuantKind::ternary: return "ternary";
    case QuantKind::points: return "points";
    case QuantKind::fixed_point: return "fixed_point";
    case QuantKind::part_select: return "part_select";
  }
  return "none";
}

QuantKind parse_quant_kind(std::string_view name) {
  for (auto k : {QuantKind::none, QuantKind::binary, QuantKind::ternary, QuantKind::points,
                 QuantKind::fixed_point, QuantKind::part_select}) {
    if (to_string(k) == name) return k;
  }
  throw SpecError("unknown quantizer kind '" + std::string(name) + "'");
}

QuantizerSpec parse_quantizer(std::string_view name) {
  const std::string s(name);
  if (s.empty() || s == "none" || s == "original") return QuantizerSpec::none();
  if (s == "binary" || s == "bnn") return QuantizerSpec::binary();
  if (s == "ternary" || s == "tern") return QuantizerSpec::ternary();

  static const std::regex qform(R"(^Q(\d+)i\.?(\d+)f$)");
  static const std::regex points_form(R"(^points(\d+)$)");
  static const std::regex fixed_form(R"(^fixed(\d+)$)");
  std::smatch m;
  if (std::regex_match(s, m, qform)) {
    const int alpha = std::stoi(m[1]);
    const int beta = std::stoi(m[2]);
    if ((alpha == 0) == (beta == 0)) {
      throw SpecError("quantizer '" + s + "': exactly one of the integer/fractional bit counts must be nonzero");
    }
    auto q = alpha == 0 ? QuantizerSpec::part_select(-1, beta) : QuantizerSpec::part_select(1, alpha);
    q.label = s;
    return q;
  }
  if (std::regex_match(s, m, points_form)) {
    const int n = std::stoi(m[1]);
    if (n < 1 || n > 16) throw SpecError("quantizer '" + s + "': n_bits outside [1, 16]");
    return QuantizerSpec::points(n, -std::ldexp(1.0, n), std::ldexp(1.0, n));
  }
  if (std::regex_match(s, m, fixed_form)) {
    const int n = std::stoi(m[1]);
    if (n < 1 || n > 16) throw SpecError("quantizer '" + s + "': n_bits outside [1, 16]");
    return QuantizerSpec::fixed_point(n);
  }
  throw SpecError("unknown quantizer '" + s + "'");
}

// ---- scalar rules -------------------------------------------------------------

double binarize_value(double x) { return x >= 0.0 ? 1.0 : -1.0; }

double ternarize_value(double x) {
  if (x > 0.5) return 1.0;
  if (std::abs(x) <= 0.5) return 0.0;
  return -1.0;
}

double points_value(double x, int n_bits, double v_min, double v_max) {
  const double levels = std::ldexp(1.0, n_bits) - 1.0;
  const double q = std::round(x / levels) * std::ldexp(1.0, n_bits - 1);
  return std::clamp(q, v_min, v_max);
}

double fixed_point_value(double x, int n_bits) {
  const double hi = std::ldexp(1.0, n_bits) - 1.0;
  return std::ldexp(std::round(std::ldexp(std::clamp(x, 0.0, hi), n_bits)), -n_bits);
}

double part_select_value(double x, int s, double v_min, double v_max) {
  if (x == 0.0) return 0.0;
  const double mag = std::abs(x);
  const double sd = static_cast<double>(s);
  const double power = sd * round_half_up(sd * std::log2(mag));
  const double q = std::clamp(std::exp2(power), v_min, v_max);
  return x < 0.0 ? -q : q;
}

double quantize_value(double x, const QuantizerSpec& spec) {
  switch (spec.kind) {
    case QuantKind::none: return x;
    case QuantKind::binary: return binarize_value(x);
    case QuantKind::ternary: return ternarize_value(x);
    case QuantKind::points: return points_value(x, spec.n_bits, spec.v_min, spec.v_max);
    case QuantKind::fixed_point: return fixed_point_value(x, spec.n_bits);
    case QuantKind::part_select: return part_select_value(x, spec.s, spec.v_min, spec.v_max);
  }
  return x;
}

bool passes_gradient(double x, const QuantizerSpec& spec) {
  switch (spec.kind) {
    case QuantKind::none: return true;
    case QuantKind::binary:
    case QuantKind::ternary: return std::abs(x) <= 1.0;
    case QuantKind::points: return x >= spec.v_min && x <= spec.v_max;
    case QuantKind::fixed_point: return x >= 0.0 && x <= std::ldexp(1.0, spec.n_bits) - 1.0;
    case QuantKind::part_select: {
      const double mag = std::abs(x);
      return mag >= spec.v_min && mag <= spec.v_max;
    }
  }
  return true;
}

// ---- tensor ops -----------------------------------------------------------------

Tensor binarize(const Tensor& x) {
  return straight_through("binarize", x, binarize_value,
                          [](double v) { return std::abs(v) <= 1.0; });
}

Tensor ternarize(const Tensor& x) {
  return straight_through("ternarize", x, ternarize_value,
                          [](double v) { return std::abs(v) <= 1.0; });
}

Tensor points_quantize(const Tensor& x, const QuantizerSpec& spec) {
  if (spec.kind != QuantKind::points) throw SpecError("points_quantize: spec kind is not points");
  spec.validate();
  return straight_through(
      "points_quantize", x, [&](double v) { return points_value(v, spec.n_bits, spec.v_min, spec.v_max); },
      [&](double v) { return passes_gradient(v, spec); });
}

Tensor fixed_point_quantize(const Tensor& x, int n_bits) {
  const auto spec = QuantizerSpec::fixed_point(n_bits);
  return straight_through(
      "fixed_point_quantize", x, [n_bits](double v) { return fixed_point_value(v, n_bits); },
      [&](double v) { return passes_gradient(v, spec); });
}

Tensor part_select_quantize(const Tensor& x, const QuantizerSpec& spec) {
  if (spec.kind != QuantKind::part_select) throw SpecError("part_select_quantize: spec kind is not part_select");
  spec.validate();
  return straight_through(
      "part_select_quantize", x,
      [&](double v) { return part_select_value(v, spec.s, spec.v_min, spec.v_max); },
      [&](double v) { return passes_gradient(v, spec); });
}

Tensor quantize(const Tensor& x, const QuantizerSpec& spec) {
  switch (spec.kind) {
    case QuantKind::none: return x;
    case QuantKind::binary: return binarize(x);
    case QuantKind::ternary: return ternarize(x);
    case QuantKind::points: return points_quantize(x, spec);
    case QuantKind::fixed_point: return fixed_point_quantize(x, spec.n_bits);
    case QuantKind::part_select: return part_select_quantize(x, spec);
  }
  return x;
}

}  // namespace qedlm
