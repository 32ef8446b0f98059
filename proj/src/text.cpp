#include "streamformer/text.hpp"

#include <algorithm>
#include <cctype>

#include "streamformer/error.hpp"

namespace sf {

std::string apply_template(const std::string& label, Task task) {
  if (label.empty()) throw InputError("apply_template: empty label");
  switch (task) {
    case Task::AR:
    case Task::TAL:
      return "a video clip of " + label + ".";
    case Task::VOS:
      return "a photo of a " + label + ".";
    case Task::VTR:
    case Task::TVG:
    case Task::RVOS:
      return label;  // open-ended caption, pass through
  }
  return label;
}

namespace {

// FNV-1a, 64-bit; the fixed fallback hash
uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::vector<std::string> Vocabulary::tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    // trim non-alphanumeric edges so "football." and "football" agree
    size_t b = 0, e = cur.size();
    while (b < e && !std::isalnum(static_cast<unsigned char>(cur[b]))) ++b;
    while (e > b && !std::isalnum(static_cast<unsigned char>(cur[e - 1]))) --e;
    if (e > b) out.push_back(cur.substr(b, e - b));
    cur.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  for (auto& w : words) {
    auto toks = tokenize(w);
    for (auto& t : toks) words_.push_back(std::move(t));
  }
  std::sort(words_.begin(), words_.end());
  words_.erase(std::unique(words_.begin(), words_.end()), words_.end());
  for (size_t i = 0; i < words_.size(); ++i) ids_[words_[i]] = static_cast<int64_t>(i);
}

std::vector<int64_t> Vocabulary::encode(const std::string& text) const {
  std::vector<int64_t> ids;
  for (const auto& tok : tokenize(text)) {
    auto it = ids_.find(tok);
    if (it != ids_.end()) {
      ids.push_back(it->second);
    } else {
      ids.push_back(known_words() +
                    static_cast<int64_t>(fnv1a(tok) % static_cast<uint64_t>(kHashBuckets)));
    }
  }
  return ids;
}

Vocabulary Vocabulary::default_vocab() {
  return Vocabulary({
      // template words
      "a", "video", "clip", "of", "photo", "the",
      // caption grammar
      "red", "green", "blue", "square", "circle", "triangle",
      "moving", "left", "right", "up", "down",
  });
}

}  // namespace sf
