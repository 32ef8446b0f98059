#include "streamformer/checkpoint.hpp"

#include <fstream>
#include <sstream>

namespace sf::ckpt {

void write_manifest(std::ostream& os, const Manifest& m) {
  os << kMagic << "\n";
  const ModelConfig& c = m.config;
  os << "config image_size " << c.image_size << "\n";
  os << "config patch_size " << c.patch_size << "\n";
  os << "config d_model " << c.d_model << "\n";
  os << "config n_layers " << c.n_layers << "\n";
  os << "config n_heads " << c.n_heads << "\n";
  os << "config lora_rank " << c.lora_rank << "\n";
  os << "config max_frames " << c.max_frames << "\n";
  os << "config proj_dim " << c.proj_dim << "\n";
  os << "config ffn_mult " << c.ffn_mult << "\n";
  os << "config temporal_mode " << temporal_mode_name(c.temporal_mode) << "\n";
  for (const auto& [k, v] : m.kv) os << "kv " << k << " " << v << "\n";
  for (const auto& w : m.vocab_words) os << "vocab " << w << "\n";
  for (const auto& e : m.entries) {
    os << "tensor " << e.name << " " << dtype_name(e.dtype) << " " << (e.frozen ? 1 : 0) << " "
       << e.shape.size();
    for (int64_t d : e.shape) os << " " << d;
    os << " " << e.offset << "\n";
  }
  os << "payload " << m.payload_bytes << "\n";
}

Manifest read_manifest(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMagic)
    throw ParseError("checkpoint: bad magic '" + line + "'");
  Manifest m;
  bool saw_payload = false;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "config") {
      std::string field;
      ls >> field;
      if (field == "temporal_mode") {
        std::string v;
        ls >> v;
        m.config.temporal_mode = temporal_mode_from(v);
      } else {
        int64_t v;
        if (!(ls >> v)) throw ParseError("checkpoint: bad config line '" + line + "'");
        if (field == "image_size") m.config.image_size = v;
        else if (field == "patch_size") m.config.patch_size = v;
        else if (field == "d_model") m.config.d_model = v;
        else if (field == "n_layers") m.config.n_layers = v;
        else if (field == "n_heads") m.config.n_heads = v;
        else if (field == "lora_rank") m.config.lora_rank = v;
        else if (field == "max_frames") m.config.max_frames = v;
        else if (field == "proj_dim") m.config.proj_dim = v;
        else if (field == "ffn_mult") m.config.ffn_mult = v;
        else throw ParseError("checkpoint: unknown config field '" + field + "'");
      }
    } else if (key == "kv") {
      std::string k, v;
      ls >> k;
      std::getline(ls, v);
      if (!v.empty() && v.front() == ' ') v.erase(0, 1);
      if (k.empty()) throw ParseError("checkpoint: bad kv line '" + line + "'");
      m.kv[k] = v;
    } else if (key == "vocab") {
      std::string w;
      ls >> w;
      m.vocab_words.push_back(w);
    } else if (key == "tensor") {
      Entry e;
      std::string dt;
      int frozen = 0;
      size_t rank = 0;
      ls >> e.name >> dt >> frozen >> rank;
      if (!ls || (dt != "f32" && dt != "f64") || rank > 8)
        throw ParseError("checkpoint: bad tensor line '" + line + "'");
      e.dtype = dt == "f32" ? DType::f32 : DType::f64;
      e.frozen = frozen != 0;
      e.shape.resize(rank);
      for (auto& d : e.shape) {
        if (!(ls >> d) || d <= 0) throw ParseError("checkpoint: bad tensor shape in '" + line + "'");
      }
      if (!(ls >> e.offset) || e.offset < 0)
        throw ParseError("checkpoint: bad tensor offset in '" + line + "'");
      m.entries.push_back(std::move(e));
    } else if (key == "payload") {
      if (!(ls >> m.payload_bytes) || m.payload_bytes < 0)
        throw ParseError("checkpoint: bad payload size in '" + line + "'");
      saw_payload = true;
      break;
    } else if (!key.empty()) {
      throw ParseError("checkpoint: unknown manifest key '" + key + "'");
    }
  }
  if (!saw_payload) throw ParseError("checkpoint: manifest has no payload marker");
  for (const auto& e : m.entries)
    if (e.offset + e.bytes() > m.payload_bytes)
      throw ParseError("checkpoint: tensor '" + e.name + "' exceeds payload");
  return m;
}

Loaded load_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("checkpoint: cannot open '" + path + "'");
  Loaded l;
  l.manifest = read_manifest(is);
  l.payload.resize(static_cast<size_t>(l.manifest.payload_bytes));
  is.read(reinterpret_cast<char*>(l.payload.data()),
          static_cast<std::streamsize>(l.payload.size()));
  if (is.gcount() != static_cast<std::streamsize>(l.payload.size()))
    throw ParseError("checkpoint: truncated payload in '" + path + "'");
  return l;
}

}  // namespace sf::ckpt
