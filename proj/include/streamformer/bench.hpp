#pragma once

#include <iosfwd>
#include <vector>

#include "streamformer/flops.hpp"
#include "streamformer/model.hpp"

// Streaming-efficiency micro-benchmark: the marginal cost of producing
// features when frame t arrives, per regime. Runs tape-free on one thread.

namespace sf::bench {

struct BenchRecord {
  BenchMode mode;
  int64_t t = 0;
  double latency_us_median = 0;
  double latency_us_p90 = 0;
  int64_t cache_floats = 0;  // KV-cache residency; 0 for recompute modes
  int64_t flops = 0;         // analytic MAC count
};

struct BenchOptions {
  std::vector<int64_t> t_list = {1, 4, 16, 64, 256};
  int reps = 7;     // timed repetitions (median/p90 over these)
  int warmups = 2;
  uint64_t seed = 0;
  bool verify_parity = true;  // assert cached == recompute features first
};

struct BenchSummary {
  std::vector<BenchRecord> records;
  double cached_ratio = 0;             // cached(t_max) / cached(t_min)
  double recompute_vs_cached = 0;      // recompute(t_max) / cached(t_max)
};

BenchSummary run_bench(const ModelConfig& cfg, const BenchOptions& opt);

// CSV schema: mode,t,latency_us_median,latency_us_p90,cache_floats,flops
void write_csv(std::ostream& os, const std::vector<BenchRecord>& records);

}  // namespace sf::bench
