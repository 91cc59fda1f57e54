#pragma once

#include <string>
#include <vector>

#include "qedlm/denoiser.hpp"
#include "qedlm/quantize.hpp"

namespace qedlm {

struct QuantBenchRow {
  std::string label;
  double mean_abs_error = 0;  // mean |x - q(x)|
  double forward_meps = 0;    // million elements per second, forward only
  double backward_meps = 0;   // forward + backward through the STE
};

// Times quantize() over `inputs` (repeated `repeats` times) and measures the
// reconstruction error once.
QuantBenchRow bench_quantizer(const QuantizerSpec& spec, const std::vector<double>& inputs, int repeats = 3);

struct FormulaRow {
  FtMode mode;
  ParamCount count;
};

// count_params for all four fine-tuning modes.
std::vector<FormulaRow> formula_table(const DenoiserConfig& cfg, int quant_alpha, int quant_beta, std::size_t h,
                                      int r);

// Integer / fractional bit split used by the formula's embedding term:
// Qαi.βf gives (α, β); other quantizers count their bits as fractional.
std::pair<int, int> quant_bits(const QuantizerSpec& spec);

}  // namespace qedlm
