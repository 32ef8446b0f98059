#pragma once

#include <iostream>
#include <vector>

#include "streamformer/ops.hpp"
#include "streamformer/text.hpp"

// The six alignment losses over the three feature granularities. Labels use
// y = +1 for aligned pairs and y = -1 otherwise. Reduction is the MEAN over
// all pairs including the class axis, so loss magnitudes stay comparable
// across tasks with very different pair counts.
//
// Label conventions: AR labels are 0-based indices into the class-text rows;
// frame labels and segmentation masks use 0 for background and c for class
// index c-1 (background rows/pixels are all-negative).

namespace sf {

// Learnable temperature and bias of the sigmoid loss. tau > 0 is enforced
// by storing log(tau) and exponentiating.
template <typename T>
struct SigmoidHead {
  Parameter<T> log_tau;
  Parameter<T> bias;

  static SigmoidHead make(T tau = T(10), T b = T(-10)) {
    SigmoidHead h;
    h.log_tau = Parameter<T>("head.log_tau", Tensor<T>::scalar(std::log(tau)));
    h.bias = Parameter<T>("head.bias", Tensor<T>::scalar(b));
    return h;
  }

  T tau() const { return std::exp(log_tau.value.item()); }
  std::vector<Parameter<T>*> parameters() { return {&log_tau, &bias}; }
};

namespace ops_loss {

// mean over pairs of log(1 + exp(y * (-tau * s + b))), the stable log1p-exp
// form; gradients flow to s, log_tau and b.
template <typename T>
Tensor<T> sigmoid_pair_loss(const Tensor<T>& s, const std::vector<int8_t>& y,
                            const Tensor<T>& log_tau, const Tensor<T>& bias) {
  const int64_t n = s.numel();
  if (static_cast<int64_t>(y.size()) != n)
    throw ShapeError("sigmoid_pair_loss: " + std::to_string(y.size()) + " labels for " +
                     std::to_string(n) + " scores");
  if (log_tau.numel() != 1 || bias.numel() != 1)
    throw ShapeError("sigmoid_pair_loss: head parameters must be scalars");
  const T tau = std::exp(log_tau.item());
  const T b = bias.item();
  auto softplus = [](T u) {
    return u > T(0) ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
  };
  T acc = T(0);
  for (int64_t i = 0; i < n; ++i) {
    const T u = T(y[static_cast<size_t>(i)]) * (-tau * s.data()[i] + b);
    acc += softplus(u);
  }
  Tensor<T> out = Tensor<T>::scalar(acc / T(n));

  if (Tape<T>* tp = ops::tape_for<T>({&s, &log_tau, &bias})) {
    ops::track_out(out, *tp);
    int64_t sv = ops::var_in(s, *tp), tv = ops::var_in(log_tau, *tp),
            bv = ops::var_in(bias, *tp), ov = out.var();
    Tensor<T> ss = s;
    tp->record([ss, y, tau, b, sv, tv, bv, ov, n](Tape<T>& t) {
      const T go = t.grad(ov)[0];
      const T inv_n = T(1) / T(n);
      T dtau = T(0), db = T(0);
      auto gs = sv >= 0 ? t.grad(sv) : std::span<T>{};
      for (int64_t i = 0; i < n; ++i) {
        const T yi = T(y[static_cast<size_t>(i)]);
        const T si = ss.data()[i];
        const T u = yi * (-tau * si + b);
        const T sig = ops::detail::sigmoid_val(u);
        const T common = go * sig * inv_n;
        if (sv >= 0) gs[i] += -tau * yi * common;
        db += yi * common;
        dtau += -yi * si * common;
      }
      if (bv >= 0) t.grad(bv)[0] += db;
      if (tv >= 0) t.grad(tv)[0] += tau * dtau;  // d/dlog_tau = tau * d/dtau
    });
  }
  return out;
}

// Bilinear interpolation of [..., h, w, C] to [..., H, W, C], the
// align-corners=false convention with edge replication. Zero-weight corners
// are skipped, so identity-size targets copy values bit-exactly.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
  if (x.rank() < 3) throw ShapeError("upsample: input must be [..., h, w, C]");
  const int64_t c = x.dim(-1), w_in = x.dim(-2), h_in = x.dim(-3);
  if (out_h < h_in || out_w < w_in)
    throw ShapeError("upsample: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " smaller than source");
  const int64_t batch = x.numel() / (h_in * w_in * c);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 3] = out_h;
  out_shape[out_shape.size() - 2] = out_w;
  Tensor<T> out(out_shape);

  struct Axis {
    int64_t i0, i1;
    T w1;  // weight of i1; weight of i0 is 1-w1
  };
  auto make_axis = [](int64_t n_in, int64_t n_out) {
    std::vector<Axis> a(static_cast<size_t>(n_out));
    for (int64_t o = 0; o < n_out; ++o) {
      double src = (double(o) + 0.5) * double(n_in) / double(n_out) - 0.5;
      if (src < 0) src = 0;
      int64_t i0 = static_cast<int64_t>(src);
      if (i0 > n_in - 1) i0 = n_in - 1;
      int64_t i1 = std::min(i0 + 1, n_in - 1);
      a[static_cast<size_t>(o)] = {i0, i1, T(src - double(i0))};
    }
    return a;
  };
  const auto ys = make_axis(h_in, out_h);
  const auto xs = make_axis(w_in, out_w);

  const T* src = x.data();
  T* dst = out.data();
  for (int64_t bi = 0; bi < batch; ++bi) {
    const T* sp = src + bi * h_in * w_in * c;
    T* dp = dst + bi * out_h * out_w * c;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      const Axis ay = ys[static_cast<size_t>(oy)];
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const Axis ax = xs[static_cast<size_t>(ox)];
        T* cell = dp + (oy * out_w + ox) * c;
        const T w00 = (T(1) - ay.w1) * (T(1) - ax.w1);
        const T w01 = (T(1) - ay.w1) * ax.w1;
        const T w10 = ay.w1 * (T(1) - ax.w1);
        const T w11 = ay.w1 * ax.w1;
        const T* p00 = sp + (ay.i0 * w_in + ax.i0) * c;
        for (int64_t ch = 0; ch < c; ++ch) cell[ch] = w00 * p00[ch];
        if (w01 != T(0)) kern::axpy(w01, sp + (ay.i0 * w_in + ax.i1) * c, cell, c);
        if (w10 != T(0)) kern::axpy(w10, sp + (ay.i1 * w_in + ax.i0) * c, cell, c);
        if (w11 != T(0)) kern::axpy(w11, sp + (ay.i1 * w_in + ax.i1) * c, cell, c);
        if (w00 == T(1)) std::memcpy(cell, p00, static_cast<size_t>(c) * sizeof(T));
      }
    }
  }

  if (Tape<T>* tp = ops::tape_for<T>({&x})) {
    ops::track_out(out, *tp);
    int64_t xv = ops::var_in(x, *tp), ov = out.var();
    tp->record([xv, ov, ys, xs, batch, h_in, w_in, out_h, out_w, c](Tape<T>& t) {
      if (xv < 0) return;
      auto go = t.grad(ov);
      auto gx = t.grad(xv);
      for (int64_t bi = 0; bi < batch; ++bi) {
        const T* gp = go.data() + bi * out_h * out_w * c;
        T* sp = gx.data() + bi * h_in * w_in * c;
        for (int64_t oy = 0; oy < out_h; ++oy) {
          const Axis ay = ys[static_cast<size_t>(oy)];
          for (int64_t ox = 0; ox < out_w; ++ox) {
            const Axis ax = xs[static_cast<size_t>(ox)];
            const T* cell = gp + (oy * out_w + ox) * c;
            const T w00 = (T(1) - ay.w1) * (T(1) - ax.w1);
            const T w01 = (T(1) - ay.w1) * ax.w1;
            const T w10 = ay.w1 * (T(1) - ax.w1);
            const T w11 = ay.w1 * ax.w1;
            if (w00 != T(0)) kern::axpy(w00, cell, sp + (ay.i0 * w_in + ax.i0) * c, c);
            if (w01 != T(0)) kern::axpy(w01, cell, sp + (ay.i0 * w_in + ax.i1) * c, c);
            if (w10 != T(0)) kern::axpy(w10, cell, sp + (ay.i1 * w_in + ax.i0) * c, c);
            if (w11 != T(0)) kern::axpy(w11, cell, sp + (ay.i1 * w_in + ax.i1) * c, c);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace ops_loss

// re-exported under the loss namespace for call-site clarity
using ops_loss::sigmoid_pair_loss;

template <typename T>
Tensor<T> upsample_logits(const Tensor<T>& patch_logits, int64_t out_h, int64_t out_w) {
  return ops_loss::upsample_bilinear(patch_logits, out_h, out_w);
}

// half-open frame span [start, end); empty when start == end
struct FrameInterval {
  int64_t start = 0;
  int64_t end = 0;
};

// class-id grid (frame labels, segmentation masks); 0 is background
struct LabelGrid {
  Shape shape;
  std::vector<int32_t> ids;

  int64_t numel() const { return static_cast<int64_t>(ids.size()); }
};

// --- global level -----------------------------------------------------------

// videos vs the closed class set; positives on the labeled class
template <typename T>
Tensor<T> loss_ar(const Tensor<T>& v, const Tensor<T>& class_texts,
                  const std::vector<int64_t>& labels, SigmoidHead<T>& head) {
  if (v.rank() != 2 || class_texts.rank() != 2 || v.dim(1) != class_texts.dim(1))
    throw ShapeError("loss_ar: v " + shape_str(v.shape()) + " vs texts " +
                     shape_str(class_texts.shape()));
  const int64_t b = v.dim(0), c = class_texts.dim(0);
  if (static_cast<int64_t>(labels.size()) != b) throw InputError("loss_ar: label count mismatch");
  for (int64_t l : labels)
    if (l < 0 || l >= c)
      throw InputError("loss_ar: label id " + std::to_string(l) + " out of range [0," +
                       std::to_string(c) + ")");
  Tensor<T> s = ops::matmul(v, ops::transpose(class_texts, 0, 1));  // [B, C]
  std::vector<int8_t> y(static_cast<size_t>(b * c), -1);
  for (int64_t i = 0; i < b; ++i) y[static_cast<size_t>(i * c + labels[static_cast<size_t>(i)])] = 1;
  return sigmoid_pair_loss(s, y, head.log_tau.value, head.bias.value);
}

// videos vs their own captions; in-batch negatives off the diagonal
template <typename T>
Tensor<T> loss_vtr(const Tensor<T>& v, const Tensor<T>& captions, SigmoidHead<T>& head) {
  ops::require_same_shape(v, captions, "loss_vtr");
  const int64_t b = v.dim(0);
  if (b == 1)
    std::cerr << "loss_vtr: degenerate batch of 1, no in-batch negatives\n";
  Tensor<T> s = ops::matmul(v, ops::transpose(captions, 0, 1));  // [B, B]
  std::vector<int8_t> y(static_cast<size_t>(b * b), -1);
  for (int64_t i = 0; i < b; ++i) y[static_cast<size_t>(i * b + i)] = 1;
  return sigmoid_pair_loss(s, y, head.log_tau.value, head.bias.value);
}

// --- temporal level -----------------------------------------------------------

// per-frame features vs the class set; background frames are all-negative
template <typename T>
Tensor<T> loss_tal(const Tensor<T>& f, const Tensor<T>& class_texts, const LabelGrid& frame_labels,
                   SigmoidHead<T>& head) {
  if (f.rank() != 3) throw ShapeError("loss_tal: f must be [B, T, d']");
  const int64_t b = f.dim(0), t = f.dim(1), c = class_texts.dim(0);
  if (frame_labels.shape != Shape{b, t}) throw InputError("loss_tal: frame label grid mismatch");
  Tensor<T> flat = ops::reshape(f, {b * t, f.dim(2)});
  Tensor<T> s = ops::matmul(flat, ops::transpose(class_texts, 0, 1));  // [B*T, C]
  std::vector<int8_t> y(static_cast<size_t>(b * t * c), -1);
  for (int64_t i = 0; i < b * t; ++i) {
    const int32_t lab = frame_labels.ids[static_cast<size_t>(i)];
    if (lab < 0 || lab > c) throw InputError("loss_tal: frame label " + std::to_string(lab));
    if (lab > 0) y[static_cast<size_t>(i * c + (lab - 1))] = 1;
  }
  return sigmoid_pair_loss(s, y, head.log_tau.value, head.bias.value);
}

// frames vs free-form queries: positive iff the frame lies inside its own
// video's query interval; in-interval frames pair negatively with other
// queries, background frames pair negatively with every query
template <typename T>
Tensor<T> loss_tvg(const Tensor<T>& f, const Tensor<T>& queries,
                   const std::vector<FrameInterval>& intervals, SigmoidHead<T>& head) {
  if (f.rank() != 3 || queries.rank() != 2) throw ShapeError("loss_tvg: expected f [B,T,d'], queries [B,d']");
  const int64_t b = f.dim(0), t = f.dim(1);
  if (queries.dim(0) != b || static_cast<int64_t>(intervals.size()) != b)
    throw InputError("loss_tvg: batch size mismatch");
  for (const auto& iv : intervals)
    if (iv.start < 0 || iv.start > iv.end || iv.end > t)
      throw InputError("loss_tvg: bad interval [" + std::to_string(iv.start) + "," +
                       std::to_string(iv.end) + ") for T=" + std::to_string(t));
  Tensor<T> flat = ops::reshape(f, {b * t, f.dim(2)});
  Tensor<T> s = ops::matmul(flat, ops::transpose(queries, 0, 1));  // [B*T, B]
  std::vector<int8_t> y(static_cast<size_t>(b * t * b), -1);
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t ft = intervals[static_cast<size_t>(i)].start;
         ft < intervals[static_cast<size_t>(i)].end; ++ft)
      y[static_cast<size_t>((i * t + ft) * b + i)] = 1;
  }
  return sigmoid_pair_loss(s, y, head.log_tau.value, head.bias.value);
}

// --- spatial level -----------------------------------------------------------

namespace detail_loss {

// patch features -> upsampled per-pixel logit grid [B, T, H, W, C]
template <typename T>
Tensor<T> pixel_logits(const Tensor<T>& feat, const Tensor<T>& texts, int64_t out_h, int64_t out_w) {
  const int64_t b = feat.dim(0), t = feat.dim(1), h = feat.dim(2), w = feat.dim(3), d = feat.dim(4);
  const int64_t c = texts.dim(0);
  Tensor<T> flat = ops::reshape(feat, {b * t * h * w, d});
  Tensor<T> logits = ops::matmul(flat, ops::transpose(texts, 0, 1));
  logits = ops::reshape(logits, {b, t, h, w, c});
  return upsample_logits(logits, out_h, out_w);
}

}  // namespace detail_loss

// per-pixel class segmentation: patch-text dot products, upsampled, sigmoid
// pair loss against the mask grid; background pixels all-negative
template <typename T>
Tensor<T> loss_vos(const Tensor<T>& feat, const Tensor<T>& class_texts, const LabelGrid& masks,
                   SigmoidHead<T>& head) {
  if (feat.rank() != 5) throw ShapeError("loss_vos: F must be [B, T, h, w, d']");
  const int64_t b = feat.dim(0), t = feat.dim(1);
  const int64_t c = class_texts.dim(0);
  if (masks.shape.size() != 4 || masks.shape[0] != b || masks.shape[1] != t)
    throw InputError("loss_vos: mask grid " + (masks.shape.empty() ? std::string("[]") : shape_str(masks.shape)) +
                     " does not match clip batch");
  const int64_t out_h = masks.shape[2], out_w = masks.shape[3];
  Tensor<T> logits = detail_loss::pixel_logits(feat, class_texts, out_h, out_w);
  std::vector<int8_t> y(static_cast<size_t>(b * t * out_h * out_w * c), -1);
  for (int64_t i = 0; i < b * t * out_h * out_w; ++i) {
    const int32_t lab = masks.ids[static_cast<size_t>(i)];
    if (lab < 0 || lab > c) throw InputError("loss_vos: mask class " + std::to_string(lab));
    if (lab > 0) y[static_cast<size_t>(i * c + (lab - 1))] = 1;
  }
  return sigmoid_pair_loss(logits, y, head.log_tau.value, head.bias.value);
}

// per-pixel grounding of free-form queries: positive iff own query and
// foreground; foreground pairs negatively with other queries, background
// with every query. Masks are binary.
template <typename T>
Tensor<T> loss_rvos(const Tensor<T>& feat, const Tensor<T>& queries, const LabelGrid& masks,
                    SigmoidHead<T>& head) {
  if (feat.rank() != 5 || queries.rank() != 2) throw ShapeError("loss_rvos: expected F [B,T,h,w,d'], queries [B,d']");
  const int64_t b = feat.dim(0), t = feat.dim(1);
  if (queries.dim(0) != b) throw InputError("loss_rvos: query count mismatch");
  if (masks.shape.size() != 4 || masks.shape[0] != b || masks.shape[1] != t)
    throw InputError("loss_rvos: mask grid does not match clip batch");
  const int64_t out_h = masks.shape[2], out_w = masks.shape[3];
  const int64_t px = out_h * out_w;
  Tensor<T> logits = detail_loss::pixel_logits(feat, queries, out_h, out_w);  // [B,T,H,W,B]
  std::vector<int8_t> y(static_cast<size_t>(b * t * px * b), -1);
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t p = 0; p < t * px; ++p) {
      const int32_t m = masks.ids[static_cast<size_t>(i * t * px + p)];
      if (m != 0 && m != 1) throw InputError("loss_rvos: mask must be binary");
      if (m == 1) y[static_cast<size_t>((i * t * px + p) * b + i)] = 1;
    }
  }
  return sigmoid_pair_loss(logits, y, head.log_tau.value, head.bias.value);
}

}  // namespace sf
