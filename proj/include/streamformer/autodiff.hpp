#pragma once

#include <atomic>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "streamformer/tensor.hpp"

namespace sf {

// A tensor plus its gradient accumulator; the unit of optimization.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool frozen = false;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, bool frz = false)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), frozen(frz) {}

  void zero_grad() {
    T* g = grad.data();
    for (int64_t i = 0; i < grad.numel(); ++i) g[i] = T(0);
  }
};

inline uint64_t next_tape_generation() {
  static std::atomic<uint64_t> counter{1};
  return counter.fetch_add(1);
}

// Ordered record of executed differentiable operations. Each node is a
// closure that propagates the output gradient to its inputs' gradient
// buffers. backward() replays nodes in reverse execution order exactly once,
// then flushes leaf gradients into the watched Parameters (accumulating).
template <typename T>
class Tape {
 public:
  Tape() : gen_(next_tape_generation()) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  uint64_t generation() const { return gen_; }
  bool recording() const { return recording_; }
  size_t num_nodes() const { return nodes_.size(); }

  int64_t alloc_var(int64_t numel) {
    sizes_.push_back(numel);
    grads_.emplace_back();
    return static_cast<int64_t>(sizes_.size()) - 1;
  }

  std::span<T> grad(int64_t var) {
    auto& g = grads_[static_cast<size_t>(var)];
    if (g.empty()) g.assign(static_cast<size_t>(sizes_[static_cast<size_t>(var)]), T(0));
    return {g.data(), g.size()};
  }

  void record(std::function<void(Tape&)> fn) { nodes_.push_back(std::move(fn)); }

  // Registers a parameter as a differentiable leaf. Frozen parameters are
  // skipped: they never get a var id, so no operation tracks them and no
  // gradient can reach them.
  void watch(Parameter<T>& p) {
    if (p.frozen) return;
    int64_t v = alloc_var(p.value.numel());
    p.value.set_var(v, gen_);
    watched_.emplace_back(v, &p);
  }

  void watch_all(const std::vector<Parameter<T>*>& params) {
    for (auto* p : params) watch(*p);
  }

  // Accumulates dLoss/dParameter into every watched parameter's grad.
  // Repeatable: each call re-seeds and re-sweeps, so calling twice adds the
  // same gradients twice.
  void backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.tracked_in(gen_))
      throw StateError("backward: loss was not recorded on this tape");
    for (auto& g : grads_) {
      for (auto& x : g) x = T(0);
    }
    grad(loss.var())[0] = T(1);
    for (size_t i = nodes_.size(); i-- > 0;) nodes_[i](*this);
    for (auto& [v, p] : watched_) {
      auto& g = grads_[static_cast<size_t>(v)];
      if (g.empty()) continue;
      kern::add(p->grad.data(), g.data(), p->grad.data(), p->grad.numel());
    }
  }

  // scoped recording control (used by the Recording guard)
  void set_recording(bool on) { recording_ = on; }

 private:
  uint64_t gen_;
  bool recording_ = false;
  std::vector<std::function<void(Tape&)>> nodes_;
  std::vector<std::vector<T>> grads_;
  std::vector<int64_t> sizes_;
  std::vector<std::pair<int64_t, Parameter<T>*>> watched_;
};

template <typename T>
inline Tape<T>*& tls_tape() {
  thread_local Tape<T>* t = nullptr;
  return t;
}

template <typename T>
inline Tape<T>* current_tape() {
  Tape<T>* t = tls_tape<T>();
  return (t && t->recording()) ? t : nullptr;
}

// RAII guard: installs a tape as the thread's recording context. Operations
// executed while a Recording is alive are added to the tape; everything else
// runs tape-free.
template <typename T>
class Recording {
 public:
  explicit Recording(Tape<T>& t) : prev_(tls_tape<T>()) {
    tls_tape<T>() = &t;
    t.set_recording(true);
  }
  ~Recording() {
    tls_tape<T>()->set_recording(false);
    tls_tape<T>() = prev_;
  }
  Recording(const Recording&) = delete;
  Recording& operator=(const Recording&) = delete;

 private:
  Tape<T>* prev_;
};

}  // namespace sf
