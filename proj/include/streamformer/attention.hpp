#pragma once

#include <cmath>
#include <vector>

#include "streamformer/ops.hpp"

// Attention along the leading (time) axis, independently per group on the
// second axis. Tensors are [t, groups, depth] row-major, so a [T, hw, d]
// token block reinterpreted as [T, hw*heads, d/heads] attends per spatial
// position and head, which is exactly the divided space-time temporal step.
//
// Causality is structural: query i reads keys j <= i + offset only, so
// outputs at a timestep can never depend on later frames, bit for bit. The
// same routine serves batch forwards (offset 0, tq == tk) and KV-cached
// streaming steps (tq == 1, offset = cached frames).

namespace sf::attn {

template <typename T>
void attend_forward(const T* q, const T* k, const T* v, T* out, int64_t tq, int64_t tk,
                    int64_t groups, int64_t depth, int64_t offset, bool causal) {
  const T scale = T(1) / std::sqrt(T(depth));
  const int64_t row = groups * depth;
  std::vector<T> w(static_cast<size_t>(tk));
  int64_t macs = 0;
  for (int64_t g = 0; g < groups; ++g) {
    for (int64_t i = 0; i < tq; ++i) {
      const int64_t ctx = causal ? std::min(offset + i + 1, tk) : tk;
      const T* qi = q + i * row + g * depth;
      T mx = -std::numeric_limits<T>::infinity();
      for (int64_t j = 0; j < ctx; ++j) {
        w[static_cast<size_t>(j)] = scale * kern::dot(qi, k + j * row + g * depth, depth);
        mx = std::max(mx, w[static_cast<size_t>(j)]);
      }
      T denom = T(0);
      for (int64_t j = 0; j < ctx; ++j) {
        T e = std::exp(w[static_cast<size_t>(j)] - mx);
        w[static_cast<size_t>(j)] = e;
        denom += e;
      }
      const T inv = T(1) / denom;
      T* oi = out + i * row + g * depth;
      for (int64_t d = 0; d < depth; ++d) oi[d] = T(0);
      for (int64_t j = 0; j < ctx; ++j)
        kern::axpy(w[static_cast<size_t>(j)] * inv, v + j * row + g * depth, oi, depth);
      macs += 2 * ctx * depth;
    }
  }
  if (kern::mac_counting_enabled()) kern::mac_add(macs);
}

// Accumulates input gradients (+=). Recomputes the attention weights.
template <typename T>
void attend_backward(const T* q, const T* k, const T* v, const T* gout, T* gq, T* gk, T* gv,
                     int64_t tq, int64_t tk, int64_t groups, int64_t depth, int64_t offset,
                     bool causal) {
  const T scale = T(1) / std::sqrt(T(depth));
  const int64_t row = groups * depth;
  std::vector<T> w(static_cast<size_t>(tk)), dw(static_cast<size_t>(tk));
  for (int64_t g = 0; g < groups; ++g) {
    for (int64_t i = 0; i < tq; ++i) {
      const int64_t ctx = causal ? std::min(offset + i + 1, tk) : tk;
      const T* qi = q + i * row + g * depth;
      const T* gi = gout + i * row + g * depth;
      T mx = -std::numeric_limits<T>::infinity();
      for (int64_t j = 0; j < ctx; ++j) {
        w[static_cast<size_t>(j)] = scale * kern::dot(qi, k + j * row + g * depth, depth);
        mx = std::max(mx, w[static_cast<size_t>(j)]);
      }
      T denom = T(0);
      for (int64_t j = 0; j < ctx; ++j) {
        T e = std::exp(w[static_cast<size_t>(j)] - mx);
        w[static_cast<size_t>(j)] = e;
        denom += e;
      }
      for (int64_t j = 0; j < ctx; ++j) w[static_cast<size_t>(j)] /= denom;

      T wdot = T(0);
      for (int64_t j = 0; j < ctx; ++j) {
        dw[static_cast<size_t>(j)] = kern::dot(gi, v + j * row + g * depth, depth);
        wdot += w[static_cast<size_t>(j)] * dw[static_cast<size_t>(j)];
      }
      T* gqi = gq + i * row + g * depth;
      for (int64_t j = 0; j < ctx; ++j) {
        const T ds = w[static_cast<size_t>(j)] * (dw[static_cast<size_t>(j)] - wdot);
        kern::axpy(ds * scale, k + j * row + g * depth, gqi, depth);
        kern::axpy(ds * scale, qi, gk + j * row + g * depth, depth);
        kern::axpy(w[static_cast<size_t>(j)], gi, gv + j * row + g * depth, depth);
      }
    }
  }
}

// Differentiable wrapper. q: [tq, groups, depth]; k, v: [tk, groups, depth].
template <typename T>
Tensor<T> temporal_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                             int64_t offset, bool causal) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3)
    throw ShapeError("temporal_attention: operands must be [t, groups, depth]");
  ops::require_same_shape(k, v, "temporal_attention");
  if (q.shape()[1] != k.shape()[1] || q.shape()[2] != k.shape()[2])
    throw ShapeError("temporal_attention: query " + shape_str(q.shape()) +
                     " incompatible with keys " + shape_str(k.shape()));
  const int64_t tq = q.shape()[0], tk = k.shape()[0];
  const int64_t groups = q.shape()[1], depth = q.shape()[2];
  if (causal && offset + 1 <= 0)
    throw UsageError("temporal_attention: first query has empty context");
  Tensor<T> out(q.shape());
  attend_forward(q.data(), k.data(), v.data(), out.data(), tq, tk, groups, depth, offset, causal);
  if (Tape<T>* tp = ops::tape_for<T>({&q, &k, &v})) {
    ops::track_out(out, *tp);
    int64_t qv = ops::var_in(q, *tp), kv = ops::var_in(k, *tp), vv = ops::var_in(v, *tp);
    int64_t ov = out.var();
    Tensor<T> qs = q, ks = k, vs = v;
    tp->record([qs, ks, vs, qv, kv, vv, ov, tq, tk, groups, depth, offset, causal](Tape<T>& t) {
      auto go = t.grad(ov);
      // the three gradients share one sweep; untracked inputs get scratch
      std::vector<T> scratch_q, scratch_k, scratch_v;
      T* gq;
      T* gk;
      T* gv;
      if (qv >= 0) {
        gq = t.grad(qv).data();
      } else {
        scratch_q.assign(static_cast<size_t>(qs.numel()), T(0));
        gq = scratch_q.data();
      }
      if (kv >= 0) {
        gk = t.grad(kv).data();
      } else {
        scratch_k.assign(static_cast<size_t>(ks.numel()), T(0));
        gk = scratch_k.data();
      }
      if (vv >= 0) {
        gv = t.grad(vv).data();
      } else {
        scratch_v.assign(static_cast<size_t>(vs.numel()), T(0));
        gv = scratch_v.data();
      }
      attend_backward(qs.data(), ks.data(), vs.data(), go.data(), gq, gk, gv, tq, tk, groups,
                      depth, offset, causal);
    });
  }
  return out;
}

}  // namespace sf::attn
