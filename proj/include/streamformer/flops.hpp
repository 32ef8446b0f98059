#pragma once

#include "streamformer/model.hpp"

// Closed-form multiply-accumulate counts for processing the t-th frame in
// each streaming regime. Counts cover matrix products only (projections,
// attention scores and weighted sums), matching what the instrumented
// kernels count; bias adds, normalizations and activations are excluded.
//
// Per-frame constants (S = hw tokens, d = d_model, r = lora rank, d' = proj):
//   patchify            S * 3p^2 * d
//   temporal qkv        3 S d^2          (per layer)
//   temporal attend     2 S c d          (context length c, per layer)
//   spatial attention   3 S d^2 + 6 S d r + 2 S^2 d + S d^2   (per layer)
//   ffn                 2 S d (ffn_mult d)                    (per layer)
//   attention pool      2 S d^2 + 2 S d + 2 d^2
//   projector           (S + 1) d d'
//
//   cached-causal(t)      = const + L * 2 S d t
//   recompute-causal(t)   = t * const + L * S d t (t + 1)
//   bidirectional-full(t) = t * const + L * 2 S d t^2

namespace sf {

enum class BenchMode { cached_causal, recompute_causal, bidirectional_full };

const char* bench_mode_name(BenchMode m);

// MACs to produce features when frame t (1-based) arrives.
int64_t flop_model(const ModelConfig& cfg, BenchMode mode, int64_t t);

// per-frame constant term (everything except the temporal attend)
int64_t flop_frame_const(const ModelConfig& cfg);

}  // namespace sf
