#include "streamformer/flops.hpp"

namespace sf {

const char* bench_mode_name(BenchMode m) {
  switch (m) {
    case BenchMode::cached_causal: return "cached-causal";
    case BenchMode::recompute_causal: return "recompute-causal";
    case BenchMode::bidirectional_full: return "bidirectional-full";
  }
  return "?";
}

int64_t flop_frame_const(const ModelConfig& cfg) {
  const int64_t s = cfg.tokens(), d = cfg.d_model, r = cfg.lora_rank;
  const int64_t patchify = s * cfg.patch_dim() * d;
  const int64_t temporal_qkv = 3 * s * d * d;
  const int64_t spatial = 3 * s * d * d + 6 * s * d * r + 2 * s * s * d + s * d * d;
  const int64_t ffn = 2 * s * d * (cfg.ffn_mult * d);
  const int64_t per_layer = temporal_qkv + spatial + ffn;
  const int64_t pool = 2 * s * d * d + 2 * s * d + 2 * d * d;
  const int64_t proj = (s + 1) * d * cfg.proj_dim;
  return patchify + cfg.n_layers * per_layer + pool + proj;
}

int64_t flop_model(const ModelConfig& cfg, BenchMode mode, int64_t t) {
  if (t < 1) throw InputError("flop_model: t must be >= 1");
  const int64_t s = cfg.tokens(), d = cfg.d_model, l = cfg.n_layers;
  const int64_t c = flop_frame_const(cfg);
  switch (mode) {
    case BenchMode::cached_causal:
      return c + l * 2 * s * d * t;
    case BenchMode::recompute_causal:
      // sum over frames i=1..t of the 2*S*d*i attend term
      return t * c + l * s * d * t * (t + 1);
    case BenchMode::bidirectional_full:
      return t * c + l * 2 * s * d * t * t;
  }
  return 0;
}

}  // namespace sf
