#pragma once

#include <bit>
#include <cstring>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "streamformer/model.hpp"
#include "streamformer/text.hpp"

// Checkpoint format: a text manifest (key/value lines) naming every tensor
// with dtype, shape and byte offset, followed by the raw little-endian
// payloads in manifest order. Round-trips are bit-exact; a corrupt manifest
// fails the load before anything is constructed.

namespace sf::ckpt {

inline constexpr const char* kMagic = "streamformer-checkpoint v1";

// ---- little-endian scalar io -------------------------------------------------

template <typename T>
void write_le(std::ostream& os, const T* data, int64_t n) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  } else {
    for (int64_t i = 0; i < n; ++i) {
      unsigned char b[sizeof(T)];
      std::memcpy(b, &data[i], sizeof(T));
      for (size_t j = sizeof(T); j-- > 0;) os.put(static_cast<char>(b[j]));
    }
  }
}

template <typename T>
void read_le(std::istream& is, T* data, int64_t n) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  if constexpr (std::endian::native == std::endian::little) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  } else {
    for (int64_t i = 0; i < n; ++i) {
      unsigned char b[sizeof(T)];
      for (size_t j = sizeof(T); j-- > 0;) b[j] = static_cast<unsigned char>(is.get());
      std::memcpy(&data[i], b, sizeof(T));
    }
  }
  if (!is) throw ParseError("checkpoint: truncated payload");
}

// ---- manifest ------------------------------------------------------------------

struct Entry {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  int64_t offset = 0;  // bytes into the payload
  bool frozen = false;

  int64_t numel() const { return shape_numel(shape); }
  int64_t bytes() const { return numel() * (dtype == DType::f32 ? 4 : 8); }
};

struct Manifest {
  ModelConfig config;
  std::vector<std::string> vocab_words;
  std::map<std::string, std::string> kv;
  std::vector<Entry> entries;
  int64_t payload_bytes = 0;

  const Entry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

void write_manifest(std::ostream& os, const Manifest& m);
Manifest read_manifest(std::istream& is);  // consumes through the payload marker

// ---- whole-file helpers ----------------------------------------------------------

// A checkpoint loaded into memory: manifest plus raw payload.
struct Loaded {
  Manifest manifest;
  std::vector<unsigned char> payload;

  template <typename T>
  Tensor<T> tensor(const std::string& name) const {
    const Entry* e = manifest.find(name);
    if (!e) throw ParseError("checkpoint: missing tensor '" + name + "'");
    if (e->dtype != dtype_of<T>())
      throw ParseError("checkpoint: tensor '" + name + "' has dtype " + dtype_name(e->dtype));
    Tensor<T> t(e->shape);
    if (e->offset < 0 || e->offset + e->bytes() > static_cast<int64_t>(payload.size()))
      throw ParseError("checkpoint: tensor '" + name + "' payload out of range");
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(t.data(), payload.data() + e->offset, static_cast<size_t>(e->bytes()));
    } else {
      const unsigned char* src = payload.data() + e->offset;
      for (int64_t i = 0; i < t.numel(); ++i) {
        unsigned char b[sizeof(T)];
        for (size_t j = 0; j < sizeof(T); ++j) b[sizeof(T) - 1 - j] = src[i * sizeof(T) + j];
        std::memcpy(&t.data()[i], b, sizeof(T));
      }
    }
    return t;
  }
};

Loaded load_file(const std::string& path);

// Serializes named tensors in order; offsets are assigned here.
template <typename T>
void save_file(const std::string& path, ModelConfig config,
               const std::vector<std::string>& vocab_words,
               const std::map<std::string, std::string>& kv,
               std::vector<std::pair<std::string, const Tensor<T>*>> tensors,
               const std::vector<std::string>& frozen_names = {}) {
  Manifest m;
  m.config = config;
  m.vocab_words = vocab_words;
  m.kv = kv;
  int64_t off = 0;
  for (auto& [name, t] : tensors) {
    Entry e;
    e.name = name;
    e.dtype = dtype_of<T>();
    e.shape = t->shape();
    e.offset = off;
    for (const auto& f : frozen_names)
      if (f == name) e.frozen = true;
    off += e.bytes();
    m.entries.push_back(std::move(e));
  }
  m.payload_bytes = off;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("checkpoint: cannot open '" + path + "' for writing");
  write_manifest(os, m);
  for (auto& [name, t] : tensors) write_le(os, t->data(), t->numel());
  if (!os) throw Error("checkpoint: write failed for '" + path + "'");
}

}  // namespace sf::ckpt
