#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "streamformer/attention.hpp"
#include "streamformer/ops.hpp"

namespace sf {

enum class TemporalMode { none, causal, bidirectional };

inline const char* temporal_mode_name(TemporalMode m) {
  switch (m) {
    case TemporalMode::none: return "none";
    case TemporalMode::causal: return "causal";
    case TemporalMode::bidirectional: return "bidirectional";
  }
  return "?";
}

inline TemporalMode temporal_mode_from(const std::string& s) {
  if (s == "none") return TemporalMode::none;
  if (s == "causal") return TemporalMode::causal;
  if (s == "bidirectional") return TemporalMode::bidirectional;
  throw ParseError("unknown temporal mode '" + s + "'");
}

struct ModelConfig {
  int64_t image_size = 32;
  int64_t patch_size = 8;
  int64_t d_model = 64;
  int64_t n_layers = 4;
  int64_t n_heads = 4;
  int64_t lora_rank = 8;
  int64_t max_frames = 512;
  int64_t proj_dim = 32;
  int64_t ffn_mult = 4;
  TemporalMode temporal_mode = TemporalMode::causal;

  int64_t grid() const { return image_size / patch_size; }     // tokens per side
  int64_t tokens() const { return grid() * grid(); }           // hw
  int64_t head_dim() const { return d_model / n_heads; }
  int64_t patch_dim() const { return patch_size * patch_size * 3; }

  void validate() const {
    if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
      throw ShapeError("config: image_size must be a positive multiple of patch_size");
    if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
      throw ShapeError("config: d_model must be a positive multiple of n_heads");
    if (lora_rank <= 0 || lora_rank >= d_model)
      throw ShapeError("config: lora rank must satisfy 0 < r < d_model");
    if (n_layers <= 0 || max_frames <= 0 || proj_dim <= 0 || ffn_mult <= 0)
      throw ShapeError("config: non-positive extent");
  }

  // Runs every invariant test in seconds.
  static ModelConfig desk() { return ModelConfig{}; }

  // Reference scale of the adapted image tower: 12 blocks, patch 16,
  // rank 32, 224px inputs. Documented preset; not used by the tests.
  static ModelConfig paper() {
    ModelConfig c;
    c.image_size = 224;
    c.patch_size = 16;
    c.d_model = 768;
    c.n_layers = 12;
    c.n_heads = 12;
    c.lora_rank = 32;
    c.max_frames = 4096;
    c.proj_dim = 768;
    c.ffn_mult = 4;
    return c;
  }
};

// Projected features of a processed clip (or of a single streamed frame):
// v — global feature, the last row of f; f — one vector per frame;
// F — one vector per patch cell. All rows unit-L2.
template <typename T>
struct FrameFeatures {
  Tensor<T> v;  // [d']
  Tensor<T> f;  // [t, d']
  Tensor<T> F;  // [t, h, w, d']
};

template <typename T>
struct LinearLayer {
  Parameter<T> w;  // [in, out]
  Parameter<T> b;  // [out]

  Tensor<T> operator()(const Tensor<T>& x) const { return ops::linear(x, w.value, &b.value); }
};

template <typename T>
struct LayerNormLayer {
  Parameter<T> gamma, beta;
  T eps = T(1e-5);

  Tensor<T> operator()(const Tensor<T>& x) const {
    return ops::layer_norm(x, gamma.value, beta.value, eps);
  }
};

// Frozen base projection plus trainable low-rank delta:
// out = x W + b + (x A) B. B starts at zero, so the delta starts inert.
template <typename T>
struct LoraLinear {
  Parameter<T> w, b;   // frozen
  Parameter<T> down;   // A: [d, r]
  Parameter<T> up;     // B: [r, d]

  Tensor<T> operator()(const Tensor<T>& x) const {
    Tensor<T> base = ops::linear(x, w.value, &b.value);
    Tensor<T> delta = ops::matmul(ops::matmul(x, down.value), up.value);
    return ops::add(base, delta);
  }
};

template <typename T>
struct Block {
  LayerNormLayer<T> ln_time;
  LinearLayer<T> time_q, time_k, time_v;
  Parameter<T> gate;  // scalar; branch is scaled by tanh(gate)

  LayerNormLayer<T> ln_space;
  LoraLinear<T> space_q, space_k, space_v;
  LinearLayer<T> space_o;  // frozen

  LayerNormLayer<T> ln_ffn;
  LinearLayer<T> ffn_in, ffn_out;
};

// Per-video mutable stream state: one K/V row block per processed frame and
// per layer, plus the frame counter. Single-owner; distinct sessions over
// the same model may run on different threads.
template <typename T>
class StreamSession {
 public:
  int64_t frames_seen() const { return t_; }
  bool is_open() const { return open_; }
  void close() { open_ = false; }
  const ModelConfig& config() const { return cfg_; }

  int64_t cache_floats() const {
    return cfg_.n_layers * 2 * t_ * cfg_.tokens() * cfg_.d_model;
  }

  // Drops the most recent frame from the caches. Exists so the latency
  // benchmark can re-measure the same step without re-priming a session.
  void rollback_last_frame() {
    if (t_ == 0) throw StateError("rollback: no frames in session");
    const size_t row = static_cast<size_t>(cfg_.tokens() * cfg_.d_model);
    for (auto& c : kcache_) c.resize(c.size() - row);
    for (auto& c : vcache_) c.resize(c.size() - row);
    --t_;
  }

 private:
  template <typename U>
  friend class StreamFormer;

  explicit StreamSession(const ModelConfig& cfg) : cfg_(cfg) {
    kcache_.resize(static_cast<size_t>(cfg.n_layers));
    vcache_.resize(static_cast<size_t>(cfg.n_layers));
    const size_t cap = static_cast<size_t>(cfg.max_frames * cfg.tokens() * cfg.d_model);
    for (auto& c : kcache_) c.reserve(cap);
    for (auto& c : vcache_) c.reserve(cap);
  }

  ModelConfig cfg_;
  int64_t t_ = 0;
  bool open_ = true;
  std::vector<std::vector<T>> kcache_, vcache_;
};

// The streaming video encoder: patch + position embeddings, a stack of
// divided space-time blocks (gated causal temporal attention, LoRA spatial
// attention, FFN, pre-norm), and the three-granularity feature heads.
template <typename T>
class StreamFormer {
 public:
  StreamFormer(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(splitmix64(seed ^ 0x5ff0123456789abcull));
    init_params(rng);
    collect_params();
  }

  StreamFormer(const StreamFormer&) = delete;
  StreamFormer& operator=(const StreamFormer&) = delete;

  const ModelConfig& config() const { return cfg_; }

  std::vector<Parameter<T>*>& parameters() { return params_; }

  Parameter<T>* find_parameter(const std::string& name) {
    for (auto* p : params_)
      if (p->name == name) return p;
    return nullptr;
  }

  // ---- batch path ---------------------------------------------------------

  // clip [T, H, W, 3] -> tokens [T, hw, d]. Patch flattening, linear
  // projection, spatial position table, temporal position rows starting at
  // t_offset (streaming passes the absolute frame index).
  Tensor<T> patchify(const Tensor<T>& clip, int64_t t_offset = 0) const {
    check_clip(clip);
    const int64_t t = clip.shape()[0];
    if (t_offset + t > cfg_.max_frames)
      throw CapacityError("patchify: frames " + std::to_string(t_offset + t) + " exceed max_frames " +
                          std::to_string(cfg_.max_frames));
    Tensor<T> tokens = extract_patches(clip);                       // [T, hw, p*p*3]
    Tensor<T> z = ops::linear(tokens, patch_w_.value, &patch_b_.value);  // [T, hw, d]
    z = ops::add_bc(z, ops::reshape(pos_spatial_.value, {1, cfg_.tokens(), cfg_.d_model}));
    Tensor<T> rows = ops::slice(pos_temporal_.value, 0, t_offset, t);    // [T, d]
    z = ops::add_bc(z, ops::reshape(rows, {t, int64_t{1}, cfg_.d_model}));
    return z;
  }

  Tensor<T> block_forward(const Block<T>& blk, const Tensor<T>& z_in, TemporalMode mode) const {
    Tensor<T> z = z_in;
    if (mode != TemporalMode::none) {
      const int64_t t = z.shape()[0];
      Tensor<T> u = blk.ln_time(z);
      Tensor<T> q = heads_view(blk.time_q(u));
      Tensor<T> k = heads_view(blk.time_k(u));
      Tensor<T> v = heads_view(blk.time_v(u));
      Tensor<T> a = attn::temporal_attention(q, k, v, 0, mode == TemporalMode::causal);
      a = ops::reshape(a, {t, cfg_.tokens(), cfg_.d_model});
      z = ops::add(z, ops::scale_by(a, ops::tanh(blk.gate.value)));
    }
    z = ops::add(z, spatial_attention(blk, z));
    z = ops::add(z, feed_forward(blk, z));
    return z;
  }

  // Full encoder: hidden states of the last layer, [T, hw, d].
  Tensor<T> encode(const Tensor<T>& clip, int64_t t_offset = 0,
                   std::optional<TemporalMode> mode_override = {}) const {
    const TemporalMode mode = mode_override.value_or(cfg_.temporal_mode);
    Tensor<T> z = patchify(clip, t_offset);
    for (const auto& blk : blocks_) z = block_forward(blk, z, mode);
    return z;
  }

  // One attended vector per frame from that frame's tokens: a learned query
  // cross-attends over the hw tokens (one head), then a residual MLP.
  Tensor<T> attention_pool(const Tensor<T>& hidden) const {
    const int64_t t = hidden.shape()[0];
    Tensor<T> k = pool_k_(hidden);  // [T, hw, d]
    Tensor<T> v = pool_v_(hidden);
    Tensor<T> scores = ops::matmul(k, ops::reshape(pool_query_.value, {cfg_.d_model, int64_t{1}}));
    scores = ops::scale(scores, T(1) / std::sqrt(T(cfg_.d_model)));   // [T, hw, 1]
    Tensor<T> w = ops::softmax(scores, 1);
    Tensor<T> pooled = ops::matmul(ops::transpose(w, 1, 2), v);       // [T, 1, d]
    pooled = ops::reshape(pooled, {t, cfg_.d_model});
    Tensor<T> h = pool_mlp_out_(ops::gelu(pool_mlp_in_(pool_ln_(pooled))));
    return ops::add(pooled, h);
  }

  // Visual projector: linear map into the shared visual-text space, each
  // vector L2-normalized.
  Tensor<T> project(const Tensor<T>& x) const {
    return ops::l2_normalize(ops::linear(x, proj_w_.value));
  }

  FrameFeatures<T> features(const Tensor<T>& hidden) const {
    const int64_t t = hidden.shape()[0];
    const int64_t g = cfg_.grid();
    FrameFeatures<T> out;
    out.f = project(attention_pool(hidden));                                   // [T, d']
    out.F = ops::reshape(project(hidden), {t, g, g, cfg_.proj_dim});           // [T, h, w, d']
    out.v = ops::reshape(ops::slice(out.f, 0, t - 1, 1), {cfg_.proj_dim});     // [d']
    return out;
  }

  std::pair<Tensor<T>, FrameFeatures<T>> forward_clip(const Tensor<T>& clip) const {
    Tensor<T> hidden = encode(clip);
    return {hidden, features(hidden)};
  }

  // ---- streaming path -------------------------------------------------------

  StreamSession<T> stream_open() const { return StreamSession<T>(cfg_); }

  // Processes exactly one frame [H, W, 3] through all layers against the
  // cached keys/values, appending one time row per layer. Inference only.
  FrameFeatures<T> stream_step(StreamSession<T>& s, const Tensor<T>& frame) const {
    if (!s.is_open()) throw StateError("stream_step: session is closed");
    if (s.config().image_size != cfg_.image_size || s.config().d_model != cfg_.d_model ||
        s.config().n_layers != cfg_.n_layers || s.config().n_heads != cfg_.n_heads)
      throw StateError("stream_step: session config does not match model");
    if (cfg_.temporal_mode == TemporalMode::bidirectional)
      throw UsageError("stream_step: bidirectional temporal attention cannot stream");
    if (s.frames_seen() >= cfg_.max_frames)
      throw CapacityError("stream_step: session at max_frames " + std::to_string(cfg_.max_frames));
    if (current_tape<T>())
      throw UsageError("stream_step: streaming is an inference path; no recording tape may be active");
    if (frame.rank() != 3)
      throw UsageError("stream_step: expected a single [H, W, 3] frame, got " + shape_str(frame.shape()));

    const int64_t t = s.frames_seen();
    Tensor<T> z = patchify(frame.view_as({1, cfg_.image_size, cfg_.image_size, 3}), t);
    for (int64_t l = 0; l < cfg_.n_layers; ++l) {
      const Block<T>& blk = blocks_[static_cast<size_t>(l)];
      if (cfg_.temporal_mode == TemporalMode::causal) {
        Tensor<T> u = blk.ln_time(z);
        Tensor<T> q = blk.time_q(u);
        Tensor<T> k = blk.time_k(u);
        Tensor<T> v = blk.time_v(u);
        auto& kc = s.kcache_[static_cast<size_t>(l)];
        auto& vc = s.vcache_[static_cast<size_t>(l)];
        kc.insert(kc.end(), k.data(), k.data() + k.numel());
        vc.insert(vc.end(), v.data(), v.data() + v.numel());
        Tensor<T> a({1, cfg_.tokens(), cfg_.d_model});
        attn::attend_forward(q.data(), kc.data(), vc.data(), a.data(), int64_t{1}, t + 1,
                             cfg_.tokens() * cfg_.n_heads, cfg_.head_dim(), t, true);
        z = ops::add(z, ops::scale_by(a, ops::tanh(blk.gate.value)));
      }
      z = ops::add(z, spatial_attention(blk, z));
      z = ops::add(z, feed_forward(blk, z));
    }
    s.t_ = t + 1;
    return features(z);
  }

  // ---- introspection ---------------------------------------------------------

  int64_t param_floats() const {
    int64_t n = 0;
    for (const auto* p : params_) n += p->value.numel();
    return n;
  }

 private:
  void check_clip(const Tensor<T>& clip) const {
    if (clip.rank() != 4 || clip.shape()[3] != 3)
      throw ShapeError("clip must be [T, H, W, 3], got " + shape_str(clip.shape()));
    if (clip.shape()[1] != cfg_.image_size || clip.shape()[2] != cfg_.image_size)
      throw ShapeError("clip resolution " + shape_str(clip.shape()) + " does not match image_size " +
                       std::to_string(cfg_.image_size));
  }

  // [T, H, W, 3] -> [T, hw, p*p*3]; pure data movement, nothing to track
  Tensor<T> extract_patches(const Tensor<T>& clip) const {
    const int64_t t = clip.shape()[0];
    const int64_t g = cfg_.grid(), p = cfg_.patch_size, im = cfg_.image_size;
    Tensor<T> out({t, cfg_.tokens(), cfg_.patch_dim()});
    const T* src = clip.data();
    T* dst = out.data();
    for (int64_t f = 0; f < t; ++f) {
      for (int64_t py = 0; py < g; ++py) {
        for (int64_t px = 0; px < g; ++px) {
          T* cell = dst + ((f * cfg_.tokens()) + py * g + px) * cfg_.patch_dim();
          for (int64_t i = 0; i < p; ++i) {
            const T* row = src + ((f * im + (py * p + i)) * im + px * p) * 3;
            std::memcpy(cell + i * p * 3, row, static_cast<size_t>(p * 3) * sizeof(T));
          }
        }
      }
    }
    return out;
  }

  // [T, hw, d] -> [T, hw*heads, d/heads]; free re-interpretation, the head
  // chunks are already contiguous
  Tensor<T> heads_view(const Tensor<T>& x) const {
    return ops::reshape(x, {x.shape()[0], cfg_.tokens() * cfg_.n_heads, cfg_.head_dim()});
  }

  // Per-frame multi-head self-attention over the hw tokens with LoRA-adapted
  // projections; returns the residual branch (caller adds).
  Tensor<T> spatial_attention(const Block<T>& blk, const Tensor<T>& z) const {
    const int64_t t = z.shape()[0];
    const int64_t hw = cfg_.tokens(), nh = cfg_.n_heads, hd = cfg_.head_dim();
    Tensor<T> u = blk.ln_space(z);
    Tensor<T> q = ops::transpose(ops::reshape(blk.space_q(u), {t, hw, nh, hd}), 1, 2);
    Tensor<T> k = ops::transpose(ops::reshape(blk.space_k(u), {t, hw, nh, hd}), 1, 2);
    Tensor<T> v = ops::transpose(ops::reshape(blk.space_v(u), {t, hw, nh, hd}), 1, 2);
    Tensor<T> scores = ops::matmul(q, ops::transpose(k, 2, 3));          // [T, nh, hw, hw]
    scores = ops::scale(scores, T(1) / std::sqrt(T(hd)));
    Tensor<T> w = ops::softmax(scores, 3);
    Tensor<T> ctx = ops::matmul(w, v);                                   // [T, nh, hw, hd]
    ctx = ops::reshape(ops::transpose(ctx, 1, 2), {t, hw, cfg_.d_model});
    return blk.space_o(ctx);
  }

  Tensor<T> feed_forward(const Block<T>& blk, const Tensor<T>& z) const {
    return blk.ffn_out(ops::gelu(blk.ffn_in(blk.ln_ffn(z))));
  }

  // ---- construction ------------------------------------------------------

  Parameter<T> make_linear_w(const std::string& name, int64_t in, int64_t out, Rng& rng,
                             bool frozen, bool gaussian) {
    Tensor<T> w = gaussian ? Tensor<T>::gaussian({in, out}, rng, T(0.02))
                           : Tensor<T>::xavier_uniform({in, out}, rng, in, out);
    return Parameter<T>(name, std::move(w), frozen);
  }

  LinearLayer<T> make_linear(const std::string& name, int64_t in, int64_t out, Rng& rng,
                             bool frozen = false, bool gaussian = false) {
    LinearLayer<T> l;
    l.w = make_linear_w(name + ".w", in, out, rng, frozen, gaussian);
    l.b = Parameter<T>(name + ".b", Tensor<T>({out}), frozen);
    return l;
  }

  LayerNormLayer<T> make_ln(const std::string& name, int64_t d) {
    LayerNormLayer<T> l;
    l.gamma = Parameter<T>(name + ".gamma", Tensor<T>::full({d}, T(1)));
    l.beta = Parameter<T>(name + ".beta", Tensor<T>({d}));
    return l;
  }

  LoraLinear<T> make_lora(const std::string& name, Rng& rng) {
    const int64_t d = cfg_.d_model, r = cfg_.lora_rank;
    LoraLinear<T> l;
    l.w = make_linear_w(name + ".w", d, d, rng, /*frozen=*/true, /*gaussian=*/false);
    l.b = Parameter<T>(name + ".b", Tensor<T>({d}), /*frozen=*/true);
    l.down = Parameter<T>(name + ".lora_a", Tensor<T>::gaussian({d, r}, rng, T(0.02)));
    l.up = Parameter<T>(name + ".lora_b", Tensor<T>({r, d}));  // zero: delta starts inert
    return l;
  }

  void init_params(Rng& rng) {
    const int64_t d = cfg_.d_model;
    patch_w_ = make_linear_w("patch.w", cfg_.patch_dim(), d, rng, false, false);
    patch_b_ = Parameter<T>("patch.b", Tensor<T>({d}));
    pos_spatial_ = Parameter<T>("pos.spatial", Tensor<T>::gaussian({cfg_.tokens(), d}, rng, T(0.02)));
    pos_temporal_ = Parameter<T>("pos.temporal", Tensor<T>::gaussian({cfg_.max_frames, d}, rng, T(0.02)));
    blocks_.resize(static_cast<size_t>(cfg_.n_layers));
    for (int64_t i = 0; i < cfg_.n_layers; ++i) {
      Block<T>& b = blocks_[static_cast<size_t>(i)];
      const std::string pre = "layer" + std::to_string(i) + ".";
      b.ln_time = make_ln(pre + "ln_time", d);
      b.time_q = make_linear(pre + "time_q", d, d, rng, false, /*gaussian=*/true);
      b.time_k = make_linear(pre + "time_k", d, d, rng, false, /*gaussian=*/true);
      b.time_v = make_linear(pre + "time_v", d, d, rng, false, /*gaussian=*/true);
      b.gate = Parameter<T>(pre + "gate", Tensor<T>({1}));  // zero: branch starts inert
      b.ln_space = make_ln(pre + "ln_space", d);
      b.space_q = make_lora(pre + "space_q", rng);
      b.space_k = make_lora(pre + "space_k", rng);
      b.space_v = make_lora(pre + "space_v", rng);
      b.space_o = make_linear(pre + "space_o", d, d, rng, /*frozen=*/true);
      b.ln_ffn = make_ln(pre + "ln_ffn", d);
      b.ffn_in = make_linear(pre + "ffn_in", d, d * cfg_.ffn_mult, rng);
      b.ffn_out = make_linear(pre + "ffn_out", d * cfg_.ffn_mult, d, rng);
    }
    pool_query_ = Parameter<T>("pool.query", Tensor<T>::gaussian({d}, rng, T(0.02)));
    pool_k_ = make_linear("pool.k", d, d, rng);
    pool_v_ = make_linear("pool.v", d, d, rng);
    pool_ln_ = make_ln("pool.ln", d);
    pool_mlp_in_ = make_linear("pool.mlp_in", d, d, rng);
    pool_mlp_out_ = make_linear("pool.mlp_out", d, d, rng);
    proj_w_ = make_linear_w("proj.w", d, cfg_.proj_dim, rng, false, false);
  }

  void add_linear(LinearLayer<T>& l) {
    params_.push_back(&l.w);
    params_.push_back(&l.b);
  }

  void collect_params() {
    params_.clear();
    params_.push_back(&patch_w_);
    params_.push_back(&patch_b_);
    params_.push_back(&pos_spatial_);
    params_.push_back(&pos_temporal_);
    for (auto& b : blocks_) {
      params_.push_back(&b.ln_time.gamma);
      params_.push_back(&b.ln_time.beta);
      add_linear(b.time_q);
      add_linear(b.time_k);
      add_linear(b.time_v);
      params_.push_back(&b.gate);
      params_.push_back(&b.ln_space.gamma);
      params_.push_back(&b.ln_space.beta);
      for (auto* lora : {&b.space_q, &b.space_k, &b.space_v}) {
        params_.push_back(&lora->w);
        params_.push_back(&lora->b);
        params_.push_back(&lora->down);
        params_.push_back(&lora->up);
      }
      add_linear(b.space_o);
      params_.push_back(&b.ln_ffn.gamma);
      params_.push_back(&b.ln_ffn.beta);
      add_linear(b.ffn_in);
      add_linear(b.ffn_out);
    }
    params_.push_back(&pool_query_);
    add_linear(pool_k_);
    add_linear(pool_v_);
    params_.push_back(&pool_ln_.gamma);
    params_.push_back(&pool_ln_.beta);
    add_linear(pool_mlp_in_);
    add_linear(pool_mlp_out_);
    params_.push_back(&proj_w_);
  }

  ModelConfig cfg_;
  Parameter<T> patch_w_, patch_b_, pos_spatial_, pos_temporal_;
  std::vector<Block<T>> blocks_;
  Parameter<T> pool_query_;
  LinearLayer<T> pool_k_, pool_v_;
  LayerNormLayer<T> pool_ln_;
  LinearLayer<T> pool_mlp_in_, pool_mlp_out_;
  Parameter<T> proj_w_;
  std::vector<Parameter<T>*> params_;

  template <typename U>
  friend class StreamFormerInspector;

 public:
  // test access to block internals
  const std::vector<Block<T>>& blocks() const { return blocks_; }
  std::vector<Block<T>>& blocks() { return blocks_; }
  const Parameter<T>& pos_temporal() const { return pos_temporal_; }
};

}  // namespace sf
