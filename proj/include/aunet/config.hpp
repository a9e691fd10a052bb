#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "aunet/model.hpp"
#include "aunet/train.hpp"

namespace aunet {

// Flat `key = value` run configuration covering every ModelConfig and
// TrainConfig field. Blank lines and '#' comments are allowed; unknown keys
// are errors.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  // Stable fingerprint over every field (FNV-1a, hex).
  std::string fingerprint() const {
    std::ostringstream os;
    os << model.image_size << '|' << model.n_aus << '|' << model.encoder_channels << '|'
       << model.downsample_factor << '|' << model.embed_dim << '|'
       << to_string(model.mask_activation) << '|' << to_string(model.variant) << '|'
       << train.epochs << '|' << train.batch_size << '|' << train.base_lr << '|'
       << train.warmup_steps << '|' << train.adam_beta1 << '|' << train.adam_beta2 << '|'
       << train.weight_decay << '|' << train.lambda_rec << '|' << train.margin << '|'
       << train.seed;
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : os.str()) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

namespace detail {
inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline int to_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer '" + v + "' for key '" + key + "'");
  }
}

inline double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number '" + v + "' for key '" + key + "'");
  }
}

inline std::uint64_t to_u64(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: bad seed '" + v + "' for key '" + key + "'");
  }
}
}  // namespace detail

inline RunConfig parse_run_config_text(std::istream& in, const std::string& origin) {
  RunConfig rc;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: " + origin + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    std::string key = detail::trim(t.substr(0, eq));
    std::string value = detail::trim(t.substr(eq + 1));
    if (key == "image_size")
      rc.model.image_size = detail::to_int(value, key);
    else if (key == "n_aus")
      rc.model.n_aus = detail::to_int(value, key);
    else if (key == "encoder_channels")
      rc.model.encoder_channels = detail::to_int(value, key);
    else if (key == "downsample_factor")
      rc.model.downsample_factor = detail::to_int(value, key);
    else if (key == "embed_dim")
      rc.model.embed_dim = detail::to_int(value, key);
    else if (key == "mask_activation")
      rc.model.mask_activation = mask_activation_from_string(value);
    else if (key == "variant")
      rc.model.variant = variant_from_string(value);
    else if (key == "epochs")
      rc.train.epochs = detail::to_int(value, key);
    else if (key == "batch_size")
      rc.train.batch_size = detail::to_int(value, key);
    else if (key == "base_lr")
      rc.train.base_lr = detail::to_double(value, key);
    else if (key == "warmup_steps")
      rc.train.warmup_steps = detail::to_int(value, key);
    else if (key == "adam_beta1")
      rc.train.adam_beta1 = detail::to_double(value, key);
    else if (key == "adam_beta2")
      rc.train.adam_beta2 = detail::to_double(value, key);
    else if (key == "weight_decay")
      rc.train.weight_decay = detail::to_double(value, key);
    else if (key == "lambda_rec")
      rc.train.lambda_rec = detail::to_double(value, key);
    else if (key == "margin")
      rc.train.margin = detail::to_double(value, key);
    else if (key == "seed")
      rc.train.seed = detail::to_u64(value, key);
    else
      throw ConfigError("config: " + origin + ":" + std::to_string(lineno) +
                        ": unknown key '" + key + "'");
  }
  rc.model.validate();
  rc.train.validate();
  return rc;
}

inline RunConfig parse_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  return parse_run_config_text(f, path);
}

}  // namespace aunet
