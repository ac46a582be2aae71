#pragma once

// Closed-form counter predictions per variant and configuration, the
// measured-vs-predicted comparison, and a weighted cost proxy. Predictions
// are exact (not asymptotic), including tail blocks; any inequality with a
// measured CounterSet is a hard failure.
//
// The cost proxy is a dimensionless weighted sum of counters. It is NOT
// comparable to hardware throughput or latency percentages; the weights
// are illustrative configuration defaults.

#include <cstdint>
#include <string_view>
#include <vector>

#include "qgemm/kernels.hpp"
#include "qgemm/simt.hpp"

namespace qgemm::perf {

using CounterPrediction = sim::CounterSet;

struct ProblemDims {
  std::uint32_t m = 0;
  std::uint32_t k = 0;
  std::uint32_t n = 0;
};

// Exact expected counters for one kernel launch.
CounterPrediction predict(const ProblemDims& dims,
                          const kernels::TileParams& tile,
                          kernels::VariantFlags flags, bool perm_present);

struct CounterRow {
  std::string_view name;
  std::uint64_t measured = 0;
  std::uint64_t predicted = 0;
  bool equal = false;
};

struct CompareReport {
  std::vector<CounterRow> rows;
  bool all_match = false;
};

CompareReport compare(const sim::CounterSet& measured,
                      const CounterPrediction& predicted);

struct CostWeights {
  double atomic = 1.0;
  double load16 = 0.25;
  double load32 = 0.4;
  double valu_scalar = 0.05;
  double valu_packed = 0.08;
  double shared = 0.01;  // applied to shared reads + writes
};

double cost_proxy(const sim::CounterSet& counters, const CostWeights& weights);

// 100 * (1 - opt/base); 0 when base is 0.
double reduction_pct(double base, double opt);

}  // namespace qgemm::perf
