#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <initializer_list>
#include <limits>

#include "streamformer/autodiff.hpp"
#include "streamformer/tensor.hpp"

// Differentiable operation set. Every op computes its result through the
// kernel layer and, when a Recording is active and an input is tracked,
// appends a backward closure to the tape. The op set is fixed; anything
// else is composed from it.

namespace sf::ops {

template <typename T>
inline Tape<T>* tape_for(std::initializer_list<const Tensor<T>*> ins) {
  Tape<T>* tp = current_tape<T>();
  if (!tp) return nullptr;
  for (const Tensor<T>* t : ins)
    if (t->tracked_in(tp->generation())) return tp;
  return nullptr;
}

template <typename T>
inline int64_t var_in(const Tensor<T>& t, const Tape<T>& tp) {
  return t.tracked_in(tp.generation()) ? t.var() : -1;
}

template <typename T>
inline void track_out(Tensor<T>& out, Tape<T>& tp) {
  out.set_var(tp.alloc_var(out.numel()), tp.generation());
}

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

// ---- elementwise ---------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  kern::add(a.data(), b.data(), out.data(), a.numel());
  if (Tape<T>* tp = tape_for<T>({&a, &b})) {
    track_out(out, *tp);
    int64_t av = var_in(a, *tp), bv = var_in(b, *tp), ov = out.var();
    int64_t n = a.numel();
    tp->record([av, bv, ov, n](Tape<T>& t) {
      auto go = t.grad(ov);
      if (av >= 0) kern::add(t.grad(av).data(), go.data(), t.grad(av).data(), n);
      if (bv >= 0) kern::add(t.grad(bv).data(), go.data(), t.grad(bv).data(), n);
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  kern::sub(a.data(), b.data(), out.data(), a.numel());
  if (Tape<T>* tp = tape_for<T>({&a, &b})) {
    track_out(out, *tp);
    int64_t av = var_in(a, *tp), bv = var_in(b, *tp), ov = out.var();
    int64_t n = a.numel();
    tp->record([av, bv, ov, n](Tape<T>& t) {
      auto go = t.grad(ov);
      if (av >= 0) kern::add(t.grad(av).data(), go.data(), t.grad(av).data(), n);
      if (bv >= 0) kern::axpy(T(-1), go.data(), t.grad(bv).data(), n);
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  kern::mul(a.data(), b.data(), out.data(), a.numel());
  if (Tape<T>* tp = tape_for<T>({&a, &b})) {
    track_out(out, *tp);
    int64_t av = var_in(a, *tp), bv = var_in(b, *tp), ov = out.var();
    tp->record([a, b, av, bv, ov](Tape<T>& t) {
      auto go = t.grad(ov);
      int64_t n = a.numel();
      if (av >= 0) {
        auto ga = t.grad(av);
        for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * b.data()[i];
      }
      if (bv >= 0) {
        auto gb = t.grad(bv);
        for (int64_t i = 0; i < n; ++i) gb[i] += go[i] * a.data()[i];
      }
    });
  }
  return out;
}

// out = x + b, with b right-aligned against x: shapes match after left-
// padding b's shape with 1s, and every b extent is either equal or 1.
// Covers bias rows, position tables, and per-frame row offsets.
template <typename T>
Tensor<T> add_bc(const Tensor<T>& x, const Tensor<T>& b) {
  const int xr = x.rank(), br = b.rank();
  if (br > xr)
    throw ShapeError("add_bc: rhs rank exceeds lhs " + shape_str(x.shape()) + " vs " +
                     shape_str(b.shape()));
  Shape bs(static_cast<size_t>(xr), 1);
  for (int i = 0; i < br; ++i) bs[static_cast<size_t>(xr - br + i)] = b.shape()[static_cast<size_t>(i)];
  for (int i = 0; i < xr; ++i) {
    if (bs[static_cast<size_t>(i)] != 1 && bs[static_cast<size_t>(i)] != x.shape()[static_cast<size_t>(i)])
      throw ShapeError("add_bc: incompatible shapes " + shape_str(x.shape()) + " vs " +
                       shape_str(b.shape()));
  }
  // strides of b in x's index space (0 where broadcast)
  std::vector<int64_t> bstride(static_cast<size_t>(xr), 0);
  int64_t acc = 1;
  for (int i = xr - 1; i >= 0; --i) {
    bstride[static_cast<size_t>(i)] = (bs[static_cast<size_t>(i)] == 1) ? 0 : acc;
    acc *= bs[static_cast<size_t>(i)];
  }
  Tensor<T> out(x.shape());
  const int64_t n = x.numel();
  {
    std::vector<int64_t> idx(static_cast<size_t>(xr), 0);
    const T* xd = x.data();
    const T* bd = b.data();
    T* od = out.data();
    int64_t boff = 0;
    for (int64_t f = 0; f < n; ++f) {
      od[f] = xd[f] + bd[boff];
      for (int i = xr - 1; i >= 0; --i) {
        idx[static_cast<size_t>(i)]++;
        boff += bstride[static_cast<size_t>(i)];
        if (idx[static_cast<size_t>(i)] < x.shape()[static_cast<size_t>(i)]) break;
        boff -= bstride[static_cast<size_t>(i)] * x.shape()[static_cast<size_t>(i)];
        idx[static_cast<size_t>(i)] = 0;
      }
    }
  }
  if (Tape<T>* tp = tape_for<T>({&x, &b})) {
    track_out(out, *tp);
    int64_t xv = var_in(x, *tp), bv = var_in(b, *tp), ov = out.var();
    Shape xshape = x.shape();
    tp->record([xv, bv, ov, xshape, bstride, n, xr](Tape<T>& t) {
      auto go = t.grad(ov);
      if (xv >= 0) kern::add(t.grad(xv).data(), go.data(), t.grad(xv).data(), n);
      if (bv >= 0) {
        auto gb = t.grad(bv);
        std::vector<int64_t> idx(static_cast<size_t>(xr), 0);
        int64_t boff = 0;
        for (int64_t f = 0; f < n; ++f) {
          gb[static_cast<size_t>(boff)] += go[static_cast<size_t>(f)];
          for (int i = xr - 1; i >= 0; --i) {
            idx[static_cast<size_t>(i)]++;
            boff += bstride[static_cast<size_t>(i)];
            if (idx[static_cast<size_t>(i)] < xshape[static_cast<size_t>(i)]) break;
            boff -= bstride[static_cast<size_t>(i)] * xshape[static_cast<size_t>(i)];
            idx[static_cast<size_t>(i)] = 0;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  Tensor<T> out(x.shape());
  kern::scale(x.data(), c, out.data(), x.numel());
  if (Tape<T>* tp = tape_for<T>({&x})) {
    track_out(out, *tp);
    int64_t xv = var_in(x, *tp), ov = out.var();
    int64_t n = x.numel();
    tp->record([xv, ov, c, n](Tape<T>& t) {
      if (xv >= 0) kern::axpy(c, t.grad(ov).data(), t.grad(xv).data(), n);
    });
  }
  return out;
}

// out = x * s where s is a one-element tensor (the tanh gate path).
template <typename T>
Tensor<T> scale_by(const Tensor<T>& x, const Tensor<T>& s) {
  if (s.numel() != 1) throw ShapeError("scale_by: scale must be scalar, got " + shape_str(s.shape()));
  Tensor<T> out(x.shape());
  kern::scale(x.data(), s.item(), out.data(), x.numel());
  if (Tape<T>* tp = tape_for<T>({&x, &s})) {
    track_out(out, *tp);
    int64_t xv = var_in(x, *tp), sv = var_in(s, *tp), ov = out.var();
    tp->record([x, s, xv, sv, ov](Tape<T>& t) {
      auto go = t.grad(ov);
      if (xv >= 0) kern::axpy(s.item(), go.data(), t.grad(xv).data(), x.numel());
      if (sv >= 0) t.grad(sv)[0] += kern::dot(go.data(), x.data(), x.numel());
    });
  }
  return out;
}

namespace detail {

template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df, const char*) {
  Tensor<T> out(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) out.data()[i] = f(x.data()[i]);
  if (Tape<T>* tp = tape_for<T>({&x})) {
    track_out(out, *tp);
    int64_t xv = var_in(x, *tp), ov = out.var();
    Tensor<T> saved_x = x;
    Tensor<T> saved_y = out;
    tp->record([saved_x, saved_y, df, xv, ov](Tape<T>& t) {
      if (xv < 0) return;
      auto go = t.grad(ov);
      auto gx = t.grad(xv);
      for (int64_t i = 0; i < saved_x.numel(); ++i)
        gx[i] += go[i] * df(saved_x.data()[i], saved_y.data()[i]);
    });
  }
  return out;
}

template <typename T>
inline T sigmoid_val(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; }, "tanh");
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return detail::unary(
      x,
      [](T v) { return T(0.5) * v * (T(1) + T(std::erf(double(v) * inv_sqrt2))); },
      [](T v, T) {
        double cdf = 0.5 * (1.0 + std::erf(double(v) * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * double(v) * double(v));
        return T(cdf + double(v) * pdf);
      },
      "gelu");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return detail::sigmoid_val(v); },
      [](T, T y) { return y * (T(1) - y); }, "sigmoid");
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; }, "exp");
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  for (int64_t i = 0; i < x.numel(); ++i)
    if (x.data()[i] <= T(0)) throw NumericError("log: non-positive input");
  return detail::unary(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; }, "log");
}

// ---- reductions -----------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::scalar(kern::sum(x.data(), x.numel()));
  if (Tape<T>* tp = tape_for<T>({&x})) {
    track_out(out, *tp);
    int64_t xv = var_in(x, *tp), ov = out.var();
    int64_t n = x.numel();
    tp->record([xv, ov, n](Tape<T>& t) {
      if (xv < 0) return;
      T g = t.grad(ov)[0];
      auto gx = t.grad(xv);
      for (int64_t i = 0; i < n; ++i) gx[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const int64_t n = x.numel();
  Tensor<T> out = Tensor<T>::scalar(kern::sum(x.data(), n) / T(n));
  if (Tape<T>* tp = tape_for<T>({&x})) {
    track_out(out, *tp);
    int64_t xv = var_in(x, *tp), ov = out.var();
    tp->record([xv, ov, n](Tape<T>& t) {
      if (xv < 0) return;
      T g = t.grad(ov)[0] / T(n);
      auto gx = t.grad(xv);
      for (int64_t i = 0; i < n; ++i) gx[i] += g;
    });
  }
  return out;
}

// ---- shape ops -------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  Tensor<T> out = x.view_as(std::move(shape));
  if (Tape<T>* tp = tape_for<T>({&x})) {
    track_out(out, *tp);
    int64_t xv = var_in(x, *tp), ov = out.var();
    int64_t n = x.numel();
    tp->record([xv, ov, n](Tape<T>& t) {
      if (xv >= 0) kern::add(t.grad(xv).data(), t.grad(ov).data(), t.grad(xv).data(), n);
    });
  }
  return out;
}

namespace detail {

inline std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

// copies src into dst with axes a and b of src swapped
template <typename T>
void transpose_copy(const T* src, T* dst, const Shape& in_shape, int a, int b) {
  const int r = static_cast<int>(in_shape.size());
  Shape out_shape = in_shape;
  std::swap(out_shape[static_cast<size_t>(a)], out_shape[static_cast<size_t>(b)]);
  auto in_strides = strides_of(in_shape);
  // stride of each out axis in the input
  std::vector<int64_t> map(in_strides);
  std::swap(map[static_cast<size_t>(a)], map[static_cast<size_t>(b)]);
  std::vector<int64_t> idx(static_cast<size_t>(r), 0);
  const int64_t n = shape_numel(in_shape);
  int64_t src_off = 0;
  for (int64_t f = 0; f < n; ++f) {
    dst[f] = src[src_off];
    for (int i = r - 1; i >= 0; --i) {
      idx[static_cast<size_t>(i)]++;
      src_off += map[static_cast<size_t>(i)];
      if (idx[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) break;
      src_off -= map[static_cast<size_t>(i)] * out_shape[static_cast<size_t>(i)];
      idx[static_cast<size_t>(i)] = 0;
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int a, int b) {
  const int r = x.rank();
  if (a < 0) a += r;
  if (b < 0) b += r;
  if (a < 0 || a >= r || b < 0 || b >= r)
    throw ShapeError("transpose: axes out of range for " + shape_str(x.shape()));
  Shape out_shape = x.shape();
  std::swap(out_shape[static_cast<size_t>(a)], out_shape[static_cast<size_t>(b)]);
  Tensor<T> out(out_shape);
  detail::transpose_copy(x.data(), out.data(), x.shape(), a, b);
  if (Tape<T>* tp = tape_for<T>({&x})) {
    track_out(out, *tp);
    int64_t xv = var_in(x, *tp), ov = out.var();
    Shape oshape = out_shape;
    tp->record([xv, ov, oshape, a, b](Tape<T>& t) {
      if (xv < 0) return;
      auto go = t.grad(ov);
      std::vector<T> tmp(go.size());
      detail::transpose_copy(go.data(), tmp.data(), oshape, a, b);
      kern::add(t.grad(xv).data(), tmp.data(), t.grad(xv).data(), static_cast<int64_t>(tmp.size()));
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t len) {
  const int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("slice: bad axis for " + shape_str(x.shape()));
  const int64_t extent = x.shape()[static_cast<size_t>(axis)];
  if (start < 0 || len <= 0 || start + len > extent)
    throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") out of bounds for extent " + std::to_string(extent));
  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(axis)] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.shape()[static_cast<size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= x.shape()[static_cast<size_t>(i)];
  Tensor<T> out(out_shape);
  for (int64_t o = 0; o < outer; ++o)
    std::memcpy(out.data() + o * len * inner, x.data() + (o * extent + start) * inner,
                static_cast<size_t>(len * inner) * sizeof(T));
  if (Tape<T>* tp = tape_for<T>({&x})) {
    track_out(out, *tp);
    int64_t xv = var_in(x, *tp), ov = out.var();
    tp->record([xv, ov, outer, inner, extent, start, len](Tape<T>& t) {
      if (xv < 0) return;
      auto go = t.grad(ov);
      auto gx = t.grad(xv);
      for (int64_t o = 0; o < outer; ++o)
        kern::add(gx.data() + (o * extent + start) * inner, go.data() + o * len * inner,
                  gx.data() + (o * extent + start) * inner, len * inner);
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: empty input list");
  const int r = xs[0].rank();
  if (axis < 0) axis += r;
  int64_t total = 0;
  for (const auto& x : xs) {
    if (x.rank() != r) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis && x.shape()[static_cast<size_t>(i)] != xs[0].shape()[static_cast<size_t>(i)])
        throw ShapeError("concat: shape mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(xs[0].shape()));
    total += x.shape()[static_cast<size_t>(axis)];
  }
  Shape out_shape = xs[0].shape();
  out_shape[static_cast<size_t>(axis)] = total;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= out_shape[static_cast<size_t>(i)];
  Tensor<T> out(out_shape);
  int64_t off = 0;
  for (const auto& x : xs) {
    const int64_t len = x.shape()[static_cast<size_t>(axis)];
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(out.data() + (o * total + off) * inner, x.data() + o * len * inner,
                  static_cast<size_t>(len * inner) * sizeof(T));
    off += len;
  }
  Tape<T>* tp = nullptr;
  for (const auto& x : xs) {
    tp = tape_for<T>({&x});
    if (tp) break;
  }
  if (tp) {
    track_out(out, *tp);
    std::vector<int64_t> vars;
    std::vector<int64_t> lens;
    for (const auto& x : xs) {
      vars.push_back(var_in(x, *tp));
      lens.push_back(x.shape()[static_cast<size_t>(axis)]);
    }
    int64_t ov = out.var();
    tp->record([vars, lens, ov, outer, inner, total](Tape<T>& t) {
      auto go = t.grad(ov);
      int64_t off = 0;
      for (size_t i = 0; i < vars.size(); ++i) {
        if (vars[i] >= 0) {
          auto gx = t.grad(vars[i]);
          for (int64_t o = 0; o < outer; ++o)
            kern::add(gx.data() + o * lens[i] * inner, go.data() + (o * total + off) * inner,
                      gx.data() + o * lens[i] * inner, lens[i] * inner);
        }
        off += lens[i];
      }
    });
  }
  return out;
}

// rows of an embedding table; ids are not differentiable, the table is
template <typename T>
Tensor<T> gather(const Tensor<T>& table, const std::vector<int64_t>& ids) {
  if (table.rank() != 2) throw ShapeError("gather: table must be 2-d, got " + shape_str(table.shape()));
  const int64_t rows = table.shape()[0], d = table.shape()[1];
  for (int64_t id : ids)
    if (id < 0 || id >= rows)
      throw InputError("gather: id " + std::to_string(id) + " out of range [0," + std::to_string(rows) + ")");
  Tensor<T> out({static_cast<int64_t>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i)
    std::memcpy(out.data() + static_cast<int64_t>(i) * d, table.data() + ids[i] * d,
                static_cast<size_t>(d) * sizeof(T));
  if (Tape<T>* tp = tape_for<T>({&table})) {
    track_out(out, *tp);
    int64_t tv = var_in(table, *tp), ov = out.var();
    tp->record([tv, ov, ids, d](Tape<T>& t) {
      if (tv < 0) return;
      auto go = t.grad(ov);
      auto gt = t.grad(tv);
      for (size_t i = 0; i < ids.size(); ++i)
        kern::add(gt.data() + ids[i] * d, go.data() + static_cast<int64_t>(i) * d,
                  gt.data() + ids[i] * d, d);
    });
  }
  return out;
}

// ---- matmul ----------------------------------------------------------------

namespace detail {

struct MatmulDims {
  int64_t batch;      // number of matrix products
  int64_t m, k, n;
  bool a_batched, b_batched;
  Shape out_shape;
};

inline MatmulDims matmul_dims(const Shape& a, const Shape& b) {
  if (a.size() < 2 || b.size() < 2)
    throw ShapeError("matmul: operands must have rank >= 2, got " + shape_str(a) + " and " + shape_str(b));
  MatmulDims d;
  d.m = a[a.size() - 2];
  d.k = a[a.size() - 1];
  const int64_t bk = b[b.size() - 2];
  d.n = b[b.size() - 1];
  if (d.k != bk)
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a) + " x " + shape_str(b));
  Shape abatch(a.begin(), a.end() - 2), bbatch(b.begin(), b.end() - 2);
  if (abatch == bbatch) {
    d.a_batched = d.b_batched = !abatch.empty();
    d.batch = shape_numel(abatch);
    d.out_shape = abatch;
  } else if (bbatch.empty()) {
    d.a_batched = true;
    d.b_batched = false;
    d.batch = shape_numel(abatch);
    d.out_shape = abatch;
  } else if (abatch.empty()) {
    d.a_batched = false;
    d.b_batched = true;
    d.batch = shape_numel(bbatch);
    d.out_shape = bbatch;
  } else {
    throw ShapeError("matmul: batch dimensions disagree, " + shape_str(a) + " x " + shape_str(b));
  }
  d.out_shape.push_back(d.m);
  d.out_shape.push_back(d.n);
  return d;
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  auto d = detail::matmul_dims(a.shape(), b.shape());
  Tensor<T> out(d.out_shape);
  const int64_t as = d.a_batched ? d.m * d.k : 0;
  const int64_t bs = d.b_batched ? d.k * d.n : 0;
  for (int64_t i = 0; i < d.batch; ++i)
    kern::gemm_nn(a.data() + i * as, b.data() + i * bs, out.data() + i * d.m * d.n, d.m, d.k, d.n, false);
  if (Tape<T>* tp = tape_for<T>({&a, &b})) {
    track_out(out, *tp);
    int64_t av = var_in(a, *tp), bv = var_in(b, *tp), ov = out.var();
    tp->record([a, b, d, as, bs, av, bv, ov](Tape<T>& t) {
      auto go = t.grad(ov);
      for (int64_t i = 0; i < d.batch; ++i) {
        const T* gi = go.data() + i * d.m * d.n;
        if (av >= 0)
          kern::gemm_nt(gi, b.data() + i * bs, t.grad(av).data() + i * as, d.m, d.n, d.k, true);
        if (bv >= 0)
          kern::gemm_tn(a.data() + i * as, gi, t.grad(bv).data() + i * bs, d.k, d.m, d.n, true);
      }
    });
  }
  return out;
}

// out = x @ w (+ bias), with x's leading dims flattened. w is [in, out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias = nullptr) {
  if (w.rank() != 2) throw ShapeError("linear: weight must be 2-d, got " + shape_str(w.shape()));
  const int64_t in = w.shape()[0], out_dim = w.shape()[1];
  if (x.dim(-1) != in)
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()));
  if (bias && (bias->rank() != 1 || bias->shape()[0] != out_dim))
    throw ShapeError("linear: bias shape " + shape_str(bias->shape()));
  const int64_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = out_dim;
  Tensor<T> out(out_shape);
  if (bias) {
    for (int64_t r = 0; r < rows; ++r)
      std::memcpy(out.data() + r * out_dim, bias->data(), static_cast<size_t>(out_dim) * sizeof(T));
    kern::gemm_nn(x.data(), w.data(), out.data(), rows, in, out_dim, true);
  } else {
    kern::gemm_nn(x.data(), w.data(), out.data(), rows, in, out_dim, false);
  }
  Tape<T>* tp = bias ? tape_for<T>({&x, &w, bias}) : tape_for<T>({&x, &w});
  if (tp) {
    track_out(out, *tp);
    int64_t xv = var_in(x, *tp), wv = var_in(w, *tp), ov = out.var();
    int64_t bv = bias ? var_in(*bias, *tp) : -1;
    Tensor<T> xs = x, ws = w;
    tp->record([xs, ws, xv, wv, bv, ov, rows, in, out_dim](Tape<T>& t) {
      auto go = t.grad(ov);
      if (xv >= 0) kern::gemm_nt(go.data(), ws.data(), t.grad(xv).data(), rows, out_dim, in, true);
      if (wv >= 0) kern::gemm_tn(xs.data(), go.data(), t.grad(wv).data(), in, rows, out_dim, true);
      if (bv >= 0) {
        auto gb = t.grad(bv);
        for (int64_t r = 0; r < rows; ++r)
          kern::add(gb.data(), go.data() + r * out_dim, gb.data(), out_dim);
      }
    });
  }
  return out;
}

// ---- softmax / normalization ------------------------------------------------

// Softmax along `axis`. -inf entries are masked positions and map to exactly
// zero; a slice with no finite entry is an error.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("softmax: bad axis for " + shape_str(x.shape()));
  const int64_t len = x.shape()[static_cast<size_t>(axis)];
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.shape()[static_cast<size_t>(i)];
  for (int i = axis + 1; i < r; ++i) inner *= x.shape()[static_cast<size_t>(i)];
  Tensor<T> out(x.shape());
  const T* xd = x.data();
  T* od = out.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * len * inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (int64_t j = 0; j < len; ++j) mx = std::max(mx, xd[base + j * inner]);
      if (!(mx > -std::numeric_limits<T>::infinity()))
        throw NumericError("softmax: slice has no unmasked entry");
      T denom = T(0);
      for (int64_t j = 0; j < len; ++j) {
        T e = std::exp(xd[base + j * inner] - mx);
        od[base + j * inner] = e;
        denom += e;
      }
      const T inv = T(1) / denom;
      for (int64_t j = 0; j < len; ++j) od[base + j * inner] *= inv;
    }
  }
  if (Tape<T>* tp = tape_for<T>({&x})) {
    track_out(out, *tp);
    int64_t xv = var_in(x, *tp), ov = out.var();
    Tensor<T> p = out;
    tp->record([p, xv, ov, outer, inner, len](Tape<T>& t) {
      if (xv < 0) return;
      auto go = t.grad(ov);
      auto gx = t.grad(xv);
      const T* pd = p.data();
      for (int64_t o = 0; o < outer; ++o) {
        for (int64_t i = 0; i < inner; ++i) {
          const int64_t base = o * len * inner + i;
          T dotv = T(0);
          for (int64_t j = 0; j < len; ++j) dotv += go[base + j * inner] * pd[base + j * inner];
          for (int64_t j = 0; j < len; ++j)
            gx[base + j * inner] += pd[base + j * inner] * (go[base + j * inner] - dotv);
        }
      }
    });
  }
  return out;
}

// LayerNorm over the last dimension, then affine with gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const int64_t d = x.dim(-1);
  if (gamma.numel() != d || beta.numel() != d)
    throw ShapeError("layer_norm: affine params must have length " + std::to_string(d));
  const int64_t rows = x.numel() / d;
  Tensor<T> out(x.shape());
  const T* xd = x.data();
  T* od = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = xd + r * d;
    T mu = kern::sum(xr, d) / T(d);
    T var = T(0);
    for (int64_t i = 0; i < d; ++i) {
      T c = xr[i] - mu;
      var += c * c;
    }
    var /= T(d);
    const T inv = T(1) / std::sqrt(var + eps);
    T* orow = od + r * d;
    for (int64_t i = 0; i < d; ++i) orow[i] = gamma.data()[i] * ((xr[i] - mu) * inv) + beta.data()[i];
  }
  Tape<T>* tp = tape_for<T>({&x, &gamma, &beta});
  if (tp) {
    track_out(out, *tp);
    int64_t xv = var_in(x, *tp), gv = var_in(gamma, *tp), bv = var_in(beta, *tp), ov = out.var();
    Tensor<T> xs = x, gs = gamma;
    tp->record([xs, gs, xv, gv, bv, ov, rows, d, eps](Tape<T>& t) {
      auto go = t.grad(ov);
      std::vector<T> xhat(static_cast<size_t>(d));
      for (int64_t r = 0; r < rows; ++r) {
        const T* xr = xs.data() + r * d;
        const T* gr = go.data() + r * d;
        T mu = kern::sum(xr, d) / T(d);
        T var = T(0);
        for (int64_t i = 0; i < d; ++i) {
          T c = xr[i] - mu;
          var += c * c;
        }
        var /= T(d);
        const T inv = T(1) / std::sqrt(var + eps);
        for (int64_t i = 0; i < d; ++i) xhat[static_cast<size_t>(i)] = (xr[i] - mu) * inv;
        if (gv >= 0) {
          auto gg = t.grad(gv);
          for (int64_t i = 0; i < d; ++i) gg[i] += gr[i] * xhat[static_cast<size_t>(i)];
        }
        if (bv >= 0) {
          auto gb = t.grad(bv);
          kern::add(gb.data(), gr, gb.data(), d);
        }
        if (xv >= 0) {
          auto gx = t.grad(xv);
          T mean_gy = T(0), mean_gyx = T(0);
          for (int64_t i = 0; i < d; ++i) {
            T gy = gr[i] * gs.data()[i];
            mean_gy += gy;
            mean_gyx += gy * xhat[static_cast<size_t>(i)];
          }
          mean_gy /= T(d);
          mean_gyx /= T(d);
          for (int64_t i = 0; i < d; ++i) {
            T gy = gr[i] * gs.data()[i];
            gx[r * d + i] += inv * (gy - mean_gy - xhat[static_cast<size_t>(i)] * mean_gyx);
          }
        }
      }
    });
  }
  return out;
}

// Each vector along the last dimension scaled to unit L2 norm.
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x) {
  const int64_t d = x.dim(-1);
  const int64_t rows = x.numel() / d;
  constexpr T kMinNorm = T(1e-12);
  Tensor<T> out(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * d;
    T n = std::sqrt(kern::dot(xr, xr, d));
    if (n < kMinNorm) throw NumericError("l2_normalize: zero-norm vector");
    kern::scale(xr, T(1) / n, out.data() + r * d, d);
  }
  if (Tape<T>* tp = tape_for<T>({&x})) {
    track_out(out, *tp);
    int64_t xv = var_in(x, *tp), ov = out.var();
    Tensor<T> xs = x, ys = out;
    tp->record([xs, ys, xv, ov, rows, d](Tape<T>& t) {
      if (xv < 0) return;
      auto go = t.grad(ov);
      auto gx = t.grad(xv);
      for (int64_t r = 0; r < rows; ++r) {
        const T* xr = xs.data() + r * d;
        const T* yr = ys.data() + r * d;
        const T* gr = go.data() + r * d;
        T n = std::sqrt(kern::dot(xr, xr, d));
        T gy = kern::dot(gr, yr, d);
        for (int64_t i = 0; i < d; ++i) gx[r * d + i] += (gr[i] - yr[i] * gy) / n;
      }
    });
  }
  return out;
}

// The temporal causal mask of the attention mechanism: 0 on and below the
// diagonal (key index <= query index), -inf above.
template <typename T>
Tensor<T> causal_mask(int64_t t) {
  Tensor<T> m({t, t});
  const T ninf = -std::numeric_limits<T>::infinity();
  for (int64_t i = 0; i < t; ++i)
    for (int64_t j = 0; j < t; ++j) m.data()[i * t + j] = (i >= j) ? T(0) : ninf;
  return m;
}

}  // namespace sf::ops
