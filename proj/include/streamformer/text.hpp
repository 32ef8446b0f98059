#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "streamformer/ops.hpp"

namespace sf {

enum class Task { AR, VTR, TAL, TVG, VOS, RVOS };

inline const char* task_name(Task t) {
  switch (t) {
    case Task::AR: return "ar";
    case Task::VTR: return "vtr";
    case Task::TAL: return "tal";
    case Task::TVG: return "tvg";
    case Task::VOS: return "vos";
    case Task::RVOS: return "rvos";
  }
  return "?";
}

constexpr int kNumTasks = 6;
constexpr Task kAllTasks[kNumTasks] = {Task::AR, Task::VTR, Task::TAL,
                                       Task::TVG, Task::VOS, Task::RVOS};

// Closed-set labels become natural-language prompts; free-form captions pass
// through unchanged.
std::string apply_template(const std::string& label, Task task);

// token -> id map over a fixed word list, with a hash-bucket fallback for
// unseen tokens. Same string, same id sequence, on every run and platform.
class Vocabulary {
 public:
  static constexpr int64_t kHashBuckets = int64_t{1} << 14;

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  static std::vector<std::string> tokenize(const std::string& text);

  std::vector<int64_t> encode(const std::string& text) const;

  int64_t known_words() const { return static_cast<int64_t>(words_.size()); }
  int64_t table_rows() const { return known_words() + kHashBuckets; }
  const std::vector<std::string>& words() const { return words_; }

  // words of the synthetic caption grammar plus the prompt templates
  static Vocabulary default_vocab();

 private:
  std::vector<std::string> words_;  // sorted, deduped; index is the id
  std::unordered_map<std::string, int64_t> ids_;
};

// Toy text tower standing in for a pretrained text encoder: embedding table,
// mean pooling, linear projection, L2 normalization. Trained jointly — the
// alignment losses are meaningless against frozen random text vectors.
template <typename T>
class TextEncoder {
 public:
  TextEncoder(Vocabulary vocab, int64_t d_model, int64_t proj_dim, uint64_t seed)
      : vocab_(std::move(vocab)), d_model_(d_model), proj_dim_(proj_dim) {
    Rng rng(splitmix64(seed ^ 0x7e47123456789abcull));
    embed_ = Parameter<T>("text.embed",
                          Tensor<T>::gaussian({vocab_.table_rows(), d_model}, rng, T(0.02)));
    proj_w_ = Parameter<T>("text.proj.w",
                           Tensor<T>::xavier_uniform({d_model, proj_dim}, rng, d_model, proj_dim));
    params_ = {&embed_, &proj_w_};
  }

  TextEncoder(const TextEncoder&) = delete;
  TextEncoder& operator=(const TextEncoder&) = delete;

  // y -> unit vector in the shared space, [d']
  Tensor<T> encode(const std::string& text) const {
    return ops::reshape(encode_row(text), {proj_dim_});
  }

  // [B, d']
  Tensor<T> encode_batch(const std::vector<std::string>& texts) const {
    std::vector<Tensor<T>> rows;
    rows.reserve(texts.size());
    for (const auto& t : texts) rows.push_back(encode_row(t));
    return ops::concat(rows, 0);
  }

  std::vector<Parameter<T>*>& parameters() { return params_; }
  const Vocabulary& vocab() const { return vocab_; }
  int64_t d_model() const { return d_model_; }
  int64_t proj_dim() const { return proj_dim_; }

 private:
  Tensor<T> encode_row(const std::string& text) const {
    std::vector<int64_t> ids = vocab_.encode(text);
    if (ids.empty()) throw InputError("encode_text: no tokens in '" + text + "'");
    Tensor<T> rows = ops::gather(embed_.value, ids);  // [n, d]
    const int64_t n = static_cast<int64_t>(ids.size());
    Tensor<T> weights = Tensor<T>::full({1, n}, T(1) / T(n));
    Tensor<T> pooled = ops::matmul(weights, rows);    // [1, d]
    return ops::l2_normalize(ops::linear(pooled, proj_w_.value));  // [1, d']
  }

  Vocabulary vocab_;
  int64_t d_model_, proj_dim_;
  Parameter<T> embed_;
  Parameter<T> proj_w_;
  std::vector<Parameter<T>*> params_;
};

}  // namespace sf
