#include "qedlm/bench.hpp"

#include <chrono>
#include <cmath>

namespace qedlm {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

double meps(std::size_t elements, double secs) {
  return secs > 0 ? static_cast<double>(elements) / secs / 1e6 : 0.0;
}

}  // namespace

QuantBenchRow bench_quantizer(const QuantizerSpec& spec, const std::vector<double>& inputs, int repeats) {
  spec.validate();
  QuantBenchRow row;
  row.label = spec.label;
  if (inputs.empty()) return row;

  double err = 0;
  for (double x : inputs) err += std::abs(x - quantize_value(x, spec));
  row.mean_abs_error = err / static_cast<double>(inputs.size());

  const Shape shape{inputs.size()};
  const std::size_t total = inputs.size() * static_cast<std::size_t>(std::max(repeats, 1));
  {
    const auto x = Tensor::from(shape, inputs);
    NoGradGuard no_grad;
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < std::max(repeats, 1); ++i) (void)quantize(x, spec);
    row.forward_meps = meps(total, seconds_since(start));
  }
  {
    auto x = Tensor::parameter(shape, inputs);
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < std::max(repeats, 1); ++i) {
      sum(quantize(x, spec)).backward();
      x.zero_grad();
    }
    row.backward_meps = meps(total, seconds_since(start));
  }
  return row;
}

std::vector<FormulaRow> formula_table(const DenoiserConfig& cfg, int quant_alpha, int quant_beta, std::size_t h,
                                      int r) {
  std::vector<FormulaRow> rows;
  for (auto mode : {FtMode::full_ft, FtMode::full_ft_quant, FtMode::lora_ft, FtMode::lora_ft_quant}) {
    rows.push_back({mode, count_params(cfg, mode, quant_alpha, quant_beta, h, r)});
  }
  return rows;
}

std::pair<int, int> quant_bits(const QuantizerSpec& spec) {
  switch (spec.kind) {
    case QuantKind::none: return {0, 0};
    case QuantKind::binary: return {0, 1};
    case QuantKind::ternary: return {0, 2};
    case QuantKind::points:
    case QuantKind::fixed_point: return {0, spec.n_bits};
    case QuantKind::part_select: return spec.s > 0 ? std::pair{spec.n_bits, 0} : std::pair{0, spec.n_bits};
  }
  return {0, 0};
}

}  // namespace qedlm
