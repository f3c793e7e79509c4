#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pcil/errors.hpp"
#include "pcil/textio.hpp"
#include "pcil/trainer.hpp"

namespace pcil {

// Flat key=value settings file: one pair per line, '#' starts a comment,
// blank lines ignored. Duplicate keys are rejected rather than silently
// overridden so an echoed config can never disagree with itself.
inline std::map<std::string, std::string> parse_kv(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string body = line.substr(first, last - first + 1);
    const auto eq = body.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ParseError("line " + std::to_string(line_no) + ": expected key=value, got '" + body +
                       "'");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty key");
    if (kv.count(key)) {
      throw ParseError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    kv[key] = value;
  }
  return kv;
}

inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  try {
    return parse_kv(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + value + "'");
}

inline std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    return static_cast<std::size_t>(parse_long(value, 0));
  } catch (const Error&) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + value + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw ConfigError("");
    return static_cast<std::uint64_t>(v);
  } catch (...) {
    throw ConfigError("key '" + key + "': expected an unsigned integer, got '" + value + "'");
  }
}

inline double parse_real(const std::string& key, const std::string& value) {
  try {
    return parse_double(value, 0);
  } catch (const Error&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
  }
}

inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(key, item));
  if (out.empty()) throw ConfigError("key '" + key + "': expected a comma-separated list");
  return out;
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace detail

// Everything one run needs, bound to named keys. Defaults reproduce the
// bundled benchmark at seed 1.
struct CliConfig {
  // dataset
  std::string dataset = "dataset";
  std::size_t classes = 10;
  std::size_t train_per_class = 40;
  std::size_t test_per_class = 30;
  std::size_t points = 96;
  double clutter = 0.08;
  std::uint64_t data_seed = 900;

  // model
  std::vector<std::size_t> widths{3, 16, 32, 32};
  std::size_t tap = 3;
  std::size_t structures = 16;
  std::size_t neighbors = 8;
  std::size_t refine_iters = 1;
  double offset_gain = 4.0;
  std::size_t reduction = 2;
  std::vector<std::size_t> classifier{32, 32, 16};

  // training
  std::vector<std::size_t> schedule{2, 2, 2, 2, 2};
  std::size_t epochs = 25;
  std::size_t batch = 16;
  double lr = 0.0025;
  double weight_decay = 0.0005;
  double clip_norm = 10.0;
  std::size_t exemplars = 60;
  bool herding = true;
  bool augment = false;
  std::uint64_t seed = 1;

  // ablation switches
  bool agc = true;  // adaptive centroid refinement
  bool gaa = true;  // channel attention
  bool sfc = true;  // score compensation

  void apply(const std::map<std::string, std::string>& kv) {
    using namespace detail;
    for (const auto& [key, value] : kv) {
      if (key == "dataset") dataset = value;
      else if (key == "classes") classes = parse_size(key, value);
      else if (key == "train_per_class") train_per_class = parse_size(key, value);
      else if (key == "test_per_class") test_per_class = parse_size(key, value);
      else if (key == "points") points = parse_size(key, value);
      else if (key == "clutter") clutter = parse_real(key, value);
      else if (key == "data_seed") data_seed = parse_u64(key, value);
      else if (key == "widths") widths = parse_size_list(key, value);
      else if (key == "tap") tap = parse_size(key, value);
      else if (key == "structures") structures = parse_size(key, value);
      else if (key == "neighbors") neighbors = parse_size(key, value);
      else if (key == "refine_iters") refine_iters = parse_size(key, value);
      else if (key == "offset_gain") offset_gain = parse_real(key, value);
      else if (key == "reduction") reduction = parse_size(key, value);
      else if (key == "classifier") classifier = parse_size_list(key, value);
      else if (key == "schedule") schedule = parse_size_list(key, value);
      else if (key == "epochs") epochs = parse_size(key, value);
      else if (key == "batch") batch = parse_size(key, value);
      else if (key == "lr") lr = parse_real(key, value);
      else if (key == "weight_decay") weight_decay = parse_real(key, value);
      else if (key == "clip_norm") clip_norm = parse_real(key, value);
      else if (key == "exemplars") exemplars = parse_size(key, value);
      else if (key == "herding") herding = parse_bool(key, value);
      else if (key == "augment") augment = parse_bool(key, value);
      else if (key == "seed") seed = parse_u64(key, value);
      else if (key == "agc") agc = parse_bool(key, value);
      else if (key == "gaa") gaa = parse_bool(key, value);
      else if (key == "sfc") sfc = parse_bool(key, value);
      else throw ConfigError("unknown config key '" + key + "'");
    }
  }

  // Sorted echo; parsing it back yields the same configuration.
  std::map<std::string, std::string> to_kv() const {
    using namespace detail;
    std::map<std::string, std::string> kv;
    kv["dataset"] = dataset;
    kv["classes"] = std::to_string(classes);
    kv["train_per_class"] = std::to_string(train_per_class);
    kv["test_per_class"] = std::to_string(test_per_class);
    kv["points"] = std::to_string(points);
    kv["clutter"] = fmt_double(clutter);
    kv["data_seed"] = std::to_string(data_seed);
    kv["widths"] = join_sizes(widths);
    kv["tap"] = std::to_string(tap);
    kv["structures"] = std::to_string(structures);
    kv["neighbors"] = std::to_string(neighbors);
    kv["refine_iters"] = std::to_string(refine_iters);
    kv["offset_gain"] = fmt_double(offset_gain);
    kv["reduction"] = std::to_string(reduction);
    kv["classifier"] = join_sizes(classifier);
    kv["schedule"] = join_sizes(schedule);
    kv["epochs"] = std::to_string(epochs);
    kv["batch"] = std::to_string(batch);
    kv["lr"] = fmt_double(lr);
    kv["weight_decay"] = fmt_double(weight_decay);
    kv["clip_norm"] = fmt_double(clip_norm);
    kv["exemplars"] = std::to_string(exemplars);
    kv["herding"] = herding ? "true" : "false";
    kv["augment"] = augment ? "true" : "false";
    kv["seed"] = std::to_string(seed);
    kv["agc"] = agc ? "true" : "false";
    kv["gaa"] = gaa ? "true" : "false";
    kv["sfc"] = sfc ? "true" : "false";
    return kv;
  }

  void echo(std::ostream& out) const {
    for (const auto& [key, value] : to_kv()) out << key << '=' << value << '\n';
  }

  RunConfig run_config() const {
    if (classifier.size() != 3) {
      throw ConfigError("classifier expects exactly three hidden sizes, got " +
                        std::to_string(classifier.size()));
    }
    if (widths.empty()) throw ConfigError("widths must not be empty");
    RunConfig rc;
    rc.model.encoder.widths = widths;
    rc.model.encoder.tap = tap;
    rc.model.centroid.structures = structures;
    rc.model.centroid.neighbors = neighbors;
    rc.model.centroid.refine_iters = refine_iters;
    rc.model.centroid.offset_gain = offset_gain;
    rc.model.attention_reduction = reduction;
    rc.model.classifier.input_dim = rc.model.encoder.feature_dim();
    rc.model.classifier.h1 = classifier[0];
    rc.model.classifier.h2 = classifier[1];
    rc.model.classifier.h3 = classifier[2];
    rc.trainer.epochs = epochs;
    rc.trainer.batch_size = batch;
    rc.trainer.adam.lr = lr;
    rc.trainer.adam.weight_decay = weight_decay;
    rc.trainer.clip_norm = clip_norm;
    rc.trainer.augment = augment;
    rc.schedule = schedule;
    rc.exemplar_budget = exemplars;
    rc.herding = herding;
    rc.adaptive_centroids = agc;
    rc.attention = gaa;
    rc.compensation = sfc;
    rc.seed = seed;
    return rc;
  }
};

}  // namespace pcil
