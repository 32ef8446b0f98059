#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <memory>

#include "streamformer/checkpoint.hpp"
#include "streamformer/losses.hpp"
#include "streamformer/model.hpp"
#include "streamformer/synth.hpp"
#include "streamformer/text.hpp"

namespace sf {

// Key-value text config for the train command.
struct TrainConfig {
  std::string preset = "desk";  // desk | paper
  int64_t steps = 300;
  double lr = 3e-4;
  uint64_t seed = 0;
  int64_t batch_global = 16;  // AR, VTR, TAL, TVG
  int64_t batch_pixel = 4;    // VOS, RVOS (pair counts scale with T*H*W)
  int64_t frames = 8;
  std::string checkpoint_path;
  std::string metrics_csv;

  static TrainConfig parse_file(const std::string& path);
  static TrainConfig parse_text(std::istream& is, const std::string& origin);

  ModelConfig model_config() const {
    ModelConfig c = preset == "paper" ? ModelConfig::paper() : ModelConfig::desk();
    return c;
  }
};

// The full trainable system: backbone + text tower + shared sigmoid head.
template <typename T>
struct Pipeline {
  ModelConfig mcfg;
  StreamFormer<T> model;
  TextEncoder<T> text;
  SigmoidHead<T> head;
  std::vector<Parameter<T>*> params;

  Pipeline(const ModelConfig& cfg, uint64_t seed)
      : mcfg(cfg),
        model(cfg, seed),
        text(Vocabulary::default_vocab(), cfg.d_model, cfg.proj_dim, seed),
        head(SigmoidHead<T>::make()) {
    collect();
  }

  Pipeline(const ModelConfig& cfg, uint64_t seed, Vocabulary vocab)
      : mcfg(cfg),
        model(cfg, seed),
        text(std::move(vocab), cfg.d_model, cfg.proj_dim, seed),
        head(SigmoidHead<T>::make()) {
    collect();
  }

  void collect() {
    params.clear();
    for (auto* p : model.parameters()) params.push_back(p);
    for (auto* p : text.parameters()) params.push_back(p);
    for (auto* p : head.parameters()) params.push_back(p);
  }

  void zero_grads() {
    for (auto* p : params) p->zero_grad();
  }

  Parameter<T>* find(const std::string& name) {
    for (auto* p : params)
      if (p->name == name) return p;
    return nullptr;
  }
};

// one task's visit order for one epoch of length epoch_len: a shuffled
// permutation when the task already fills the epoch, otherwise uniform
// resampling with replacement (over-sampling the smaller pool)
inline std::vector<int64_t> balance_order(int64_t size, int64_t epoch_len, uint64_t seed) {
  if (size < 1) throw InputError("balance_order: dataset size must be >= 1");
  if (size > epoch_len) throw InputError("balance_order: size exceeds epoch length");
  Rng rng(seed);
  std::vector<int64_t> ord;
  if (size == epoch_len) {
    ord.resize(static_cast<size_t>(epoch_len));
    for (int64_t i = 0; i < epoch_len; ++i) ord[static_cast<size_t>(i)] = i;
    for (int64_t i = epoch_len - 1; i > 0; --i)
      std::swap(ord[static_cast<size_t>(i)], ord[static_cast<size_t>(rng.uniform_int(i + 1))]);
  } else {
    ord.reserve(static_cast<size_t>(epoch_len));
    for (int64_t i = 0; i < epoch_len; ++i) ord.push_back(rng.uniform_int(size));
  }
  return ord;
}

// epoch sampling plan: every task visits max(size) samples per epoch,
// smaller tasks resampled with replacement
struct SamplingPlan {
  std::vector<std::vector<int64_t>> order;  // per task, length = max size
  int64_t epoch_len = 0;
};

inline SamplingPlan balance_schedule(const std::vector<int64_t>& sizes, uint64_t seed) {
  if (sizes.empty()) throw InputError("balance_schedule: no tasks");
  int64_t mx = 0;
  for (int64_t s : sizes) {
    if (s < 1) throw InputError("balance_schedule: dataset size must be >= 1");
    mx = std::max(mx, s);
  }
  SamplingPlan plan;
  plan.epoch_len = mx;
  for (size_t k = 0; k < sizes.size(); ++k)
    plan.order.push_back(balance_order(
        sizes[k], mx, splitmix64(seed ^ (0xb7e15163ull + 0x9e37ull * static_cast<uint64_t>(k)))));
  return plan;
}

// Adam; frozen parameters are excluded from updates by contract.
template <typename T>
class Adam {
 public:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  explicit Adam(std::vector<Parameter<T>*> params) : params_(std::move(params)) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  int64_t steps_taken() const { return t_; }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, double(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, double(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Parameter<T>* p = params_[i];
      if (p->frozen) continue;
      T* w = p->value.data();
      const T* g = p->grad.data();
      T* m = m_[i].data();
      T* v = v_[i].data();
      for (int64_t j = 0; j < p->value.numel(); ++j) {
        m[j] = T(kBeta1) * m[j] + T(1.0 - kBeta1) * g[j];
        v[j] = T(kBeta2) * v[j] + T(1.0 - kBeta2) * g[j] * g[j];
        const double mhat = double(m[j]) / bc1;
        const double vhat = double(v[j]) / bc2;
        w[j] -= T(lr * mhat / (std::sqrt(vhat) + kEps));
      }
    }
  }

  // checkpoint access
  const std::vector<Tensor<T>>& moments_m() const { return m_; }
  const std::vector<Tensor<T>>& moments_v() const { return v_; }
  std::vector<Tensor<T>>& moments_m() { return m_; }
  std::vector<Tensor<T>>& moments_v() { return v_; }
  void set_steps_taken(int64_t t) { t_ = t; }
  const std::vector<Parameter<T>*>& params() const { return params_; }

 private:
  std::vector<Parameter<T>*> params_;
  std::vector<Tensor<T>> m_, v_;
  int64_t t_ = 0;
};

// Joint optimization of the six-task objective: per step, visit the tasks in
// fixed order, accumulate gradients across all six backward passes, then
// apply one optimizer update.
template <typename T>
class Trainer {
 public:
  // desk-scale stand-ins for unequal dataset sizes; the epoch plan
  // over-samples the smaller pools to balance
  static constexpr int64_t kPoolSizes[kNumTasks] = {288, 240, 192, 192, 96, 96};

  Trainer(Pipeline<T>& pipe, TrainConfig cfg)
      : pipe_(pipe), cfg_(cfg), adam_(pipe.params) {
    synth_cfg_.frames = cfg.frames;
    synth_cfg_.image = pipe.mcfg.image_size;
    epoch_len_ = *std::max_element(kPoolSizes, kPoolSizes + kNumTasks);
    cached_epoch_.fill(-1);
    draws_.fill(0);
  }

  int64_t step_index() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  Adam<T>& optimizer() { return adam_; }

  int64_t batch_size(Task t) const {
    return (t == Task::VOS || t == Task::RVOS) ? cfg_.batch_pixel : cfg_.batch_global;
  }

  // seed for sample `index` of `task`'s pool: pure function of the run seed
  uint64_t sample_seed(Task task, int64_t index) const {
    const auto k = static_cast<uint64_t>(task);
    // keep each pool stratified over the 9 classes
    return cfg_.seed * 1000003ull + k * 100003ull + static_cast<uint64_t>(index);
  }

  // pool index for the n-th sample this task ever draws; pure in (seed, task, n)
  int64_t pool_index(Task task, int64_t n) {
    const auto k = static_cast<size_t>(task);
    const int64_t epoch = n / epoch_len_, pos = n % epoch_len_;
    if (cached_epoch_[k] != epoch) {
      epoch_order_[k] = balance_order(
          kPoolSizes[k], epoch_len_,
          splitmix64(cfg_.seed * 977ull ^ (0xb7e15163ull + 0x9e37ull * static_cast<uint64_t>(k)) ^
                     (0x51ull * static_cast<uint64_t>(epoch + 1))));
      cached_epoch_[k] = epoch;
    }
    return epoch_order_[k][static_cast<size_t>(pos)];
  }

  synth::TaskBatch<T> draw_batch(Task task) {
    const int64_t b = batch_size(task);
    const auto k = static_cast<size_t>(task);
    synth::TaskBatch<T> batch;
    batch.task = task;
    synth::SynthConfig c = synth_cfg_;
    c.full_interval = (task == Task::AR || task == Task::VTR);
    batch.samples.reserve(static_cast<size_t>(b));
    for (int64_t i = 0; i < b; ++i) {
      batch.samples.push_back(
          synth::make_sample<T>(sample_seed(task, pool_index(task, draws_[k]++)), c));
    }
    return batch;
  }

  // the per-task loss over one batch (forward through backbone + text tower)
  Tensor<T> task_loss(const synth::TaskBatch<T>& batch) {
    const int64_t b = static_cast<int64_t>(batch.samples.size());
    const Task task = batch.task;

    if (task == Task::AR || task == Task::VTR) {
      std::vector<Tensor<T>> vs;
      vs.reserve(static_cast<size_t>(b));
      for (const auto& s : batch.samples) {
        auto [hidden, feats] = pipe_.model.forward_clip(s.clip);
        vs.push_back(ops::reshape(feats.v, {int64_t{1}, pipe_.mcfg.proj_dim}));
      }
      Tensor<T> v = ops::concat(vs, 0);
      if (task == Task::AR) {
        std::vector<int64_t> labels;
        for (const auto& s : batch.samples) labels.push_back(s.class_id - 1);
        return loss_ar(v, class_texts(Task::AR), labels, pipe_.head);
      }
      std::vector<std::string> caps;
      for (const auto& s : batch.samples) caps.push_back(apply_template(s.caption, Task::VTR));
      return loss_vtr(v, pipe_.text.encode_batch(caps), pipe_.head);
    }

    if (task == Task::TAL || task == Task::TVG) {
      std::vector<Tensor<T>> fs;
      for (const auto& s : batch.samples) {
        auto [hidden, feats] = pipe_.model.forward_clip(s.clip);
        fs.push_back(ops::reshape(feats.f, {int64_t{1}, cfg_.frames, pipe_.mcfg.proj_dim}));
      }
      Tensor<T> f = ops::concat(fs, 0);
      if (task == Task::TAL) {
        LabelGrid grid;
        grid.shape = {b, cfg_.frames};
        for (const auto& s : batch.samples)
          grid.ids.insert(grid.ids.end(), s.frame_labels.begin(), s.frame_labels.end());
        return loss_tal(f, class_texts(Task::TAL), grid, pipe_.head);
      }
      std::vector<std::string> caps;
      std::vector<FrameInterval> ivs;
      for (const auto& s : batch.samples) {
        caps.push_back(s.caption);
        ivs.push_back(s.interval);
      }
      return loss_tvg(f, pipe_.text.encode_batch(caps), ivs, pipe_.head);
    }

    // pixel tasks
    std::vector<Tensor<T>> Fs;
    for (const auto& s : batch.samples) {
      auto [hidden, feats] = pipe_.model.forward_clip(s.clip);
      const auto& fsh = feats.F.shape();
      Fs.push_back(ops::reshape(feats.F, {int64_t{1}, fsh[0], fsh[1], fsh[2], fsh[3]}));
    }
    Tensor<T> F = ops::concat(Fs, 0);
    LabelGrid masks;
    masks.shape = {b, cfg_.frames, pipe_.mcfg.image_size, pipe_.mcfg.image_size};
    if (task == Task::VOS) {
      for (const auto& s : batch.samples) masks.ids.insert(masks.ids.end(), s.mask.begin(), s.mask.end());
      return loss_vos(F, class_texts(Task::VOS), masks, pipe_.head);
    }
    for (const auto& s : batch.samples)
      for (int32_t m : s.mask) masks.ids.push_back(m != 0 ? 1 : 0);
    std::vector<std::string> caps;
    for (const auto& s : batch.samples) caps.push_back(s.caption);
    return loss_rvos(F, pipe_.text.encode_batch(caps), masks, pipe_.head);
  }

  // the nine class prompts, re-encoded each call (the text tower trains)
  Tensor<T> class_texts(Task task) {
    std::vector<std::string> prompts;
    for (int64_t c = 1; c <= synth::kNumClasses; ++c)
      prompts.push_back(apply_template(synth::class_label(c), task));
    return pipe_.text.encode_batch(prompts);
  }

  // One full round-robin pass: six batches, six backward passes accumulating
  // into the shared grads, one Adam step, grads zeroed. Returns the six
  // per-task losses.
  std::array<double, kNumTasks> round_robin_step() {
    std::array<double, kNumTasks> losses{};
    for (int k = 0; k < kNumTasks; ++k) {
      const Task task = kAllTasks[k];
      synth::TaskBatch<T> batch = draw_batch(task);
      Tape<T> tape;
      Recording<T> rec(tape);
      tape.watch_all(pipe_.params);
      Tensor<T> loss = task_loss(batch);
      const double lv = double(loss.item());
      if (!std::isfinite(lv))
        throw NumericError(std::string("non-finite loss for task ") + task_name(task) +
                           " at step " + std::to_string(step_));
      tape.backward(loss);
      losses[static_cast<size_t>(k)] = lv;
    }
    adam_.step(cfg_.lr);
    pipe_.zero_grads();
    ++step_;
    return losses;
  }

  // ---- checkpointing ----------------------------------------------------------

  void save(const std::string& path) const {
    std::vector<std::pair<std::string, const Tensor<T>*>> tensors;
    std::vector<std::string> frozen;
    for (auto* p : pipe_.params) {
      tensors.emplace_back(p->name, &p->value);
      if (p->frozen) frozen.push_back(p->name);
    }
    const auto& am = adam_.moments_m();
    const auto& av = adam_.moments_v();
    for (size_t i = 0; i < pipe_.params.size(); ++i) {
      tensors.emplace_back("adam.m." + pipe_.params[i]->name, &am[i]);
      tensors.emplace_back("adam.v." + pipe_.params[i]->name, &av[i]);
    }
    std::map<std::string, std::string> kv;
    kv["step"] = std::to_string(step_);
    kv["adam_t"] = std::to_string(adam_.steps_taken());
    kv["seed"] = std::to_string(cfg_.seed);
    ckpt::save_file<T>(path, pipe_.mcfg, pipe_.text.vocab().words(), kv, std::move(tensors), frozen);
  }

  void restore(const ckpt::Loaded& l) {
    for (auto* p : pipe_.params) {
      Tensor<T> v = l.tensor<T>(p->name);
      if (v.shape() != p->value.shape())
        throw ParseError("checkpoint: tensor '" + p->name + "' has shape " + shape_str(v.shape()) +
                         ", expected " + shape_str(p->value.shape()));
      p->value = v;
      p->zero_grad();
    }
    auto& am = adam_.moments_m();
    auto& av = adam_.moments_v();
    for (size_t i = 0; i < pipe_.params.size(); ++i) {
      am[i] = l.tensor<T>("adam.m." + pipe_.params[i]->name);
      av[i] = l.tensor<T>("adam.v." + pipe_.params[i]->name);
    }
    step_ = std::stoll(l.manifest.kv.at("step"));
    adam_.set_steps_taken(std::stoll(l.manifest.kv.at("adam_t")));
    // draw counters are a pure function of the step index
    for (int k = 0; k < kNumTasks; ++k)
      draws_[static_cast<size_t>(k)] = step_ * batch_size(kAllTasks[k]);
    cached_epoch_.fill(-1);
  }

 private:
  Pipeline<T>& pipe_;
  TrainConfig cfg_;
  Adam<T> adam_;
  synth::SynthConfig synth_cfg_;
  int64_t epoch_len_ = 1;
  std::array<std::vector<int64_t>, kNumTasks> epoch_order_;
  std::array<int64_t, kNumTasks> cached_epoch_{};
  std::array<int64_t, kNumTasks> draws_{};
  int64_t step_ = 0;
};

}  // namespace sf
