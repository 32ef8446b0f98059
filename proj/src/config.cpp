#include <fstream>
#include <sstream>

#include "streamformer/trainer.hpp"

namespace sf {

TrainConfig TrainConfig::parse_text(std::istream& is, const std::string& origin) {
  TrainConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    std::string val;
    if (!(ls >> val))
      throw ParseError(origin + ":" + std::to_string(lineno) + ": key '" + key + "' has no value");
    try {
      if (key == "preset") {
        if (val != "desk" && val != "paper")
          throw ParseError(origin + ": unknown preset '" + val + "'");
        c.preset = val;
      } else if (key == "steps") {
        c.steps = std::stoll(val);
      } else if (key == "lr") {
        c.lr = std::stod(val);
      } else if (key == "seed") {
        c.seed = std::stoull(val);
      } else if (key == "batch_global") {
        c.batch_global = std::stoll(val);
      } else if (key == "batch_pixel") {
        c.batch_pixel = std::stoll(val);
      } else if (key == "frames") {
        c.frames = std::stoll(val);
      } else if (key == "checkpoint") {
        c.checkpoint_path = val;
      } else if (key == "metrics") {
        c.metrics_csv = val;
      } else {
        throw ParseError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": bad value '" + val + "' for '" +
                       key + "'");
    } catch (const std::out_of_range&) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": value out of range for '" + key + "'");
    }
  }
  if (c.steps < 1) throw ParseError(origin + ": steps must be >= 1");
  if (c.batch_global < 1 || c.batch_pixel < 1) throw ParseError(origin + ": batch sizes must be >= 1");
  if (c.frames < 1) throw ParseError(origin + ": frames must be >= 1");
  return c;
}

TrainConfig TrainConfig::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("config: cannot open '" + path + "'");
  return parse_text(is, path);
}

}  // namespace sf
