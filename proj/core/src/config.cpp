#include "dfm/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dfm/data.hpp"

namespace dfm {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw std::invalid_argument("bad boolean for " + key + ": '" + value + "'");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dataset", [](TrainConfig& c, const std::string&, const std::string& v) { c.dataset = v; }},
      {"data_root", [](TrainConfig& c, const std::string&, const std::string& v) { c.data_root = v; }},
      {"fold", [](TrainConfig& c, const std::string& k, const std::string& v) { c.fold = parse_number<int>(k, v); }},
      {"synth_train", [](TrainConfig& c, const std::string& k, const std::string& v) { c.synth_train = parse_number<int>(k, v); }},
      {"synth_val", [](TrainConfig& c, const std::string& k, const std::string& v) { c.synth_val = parse_number<int>(k, v); }},
      {"synth_seed", [](TrainConfig& c, const std::string& k, const std::string& v) { c.synth_seed = parse_number<std::uint64_t>(k, v); }},
      {"input_size", [](TrainConfig& c, const std::string& k, const std::string& v) { c.input_size = parse_number<int>(k, v); }},
      {"epochs", [](TrainConfig& c, const std::string& k, const std::string& v) { c.epochs = parse_number<int>(k, v); }},
      {"batch_size", [](TrainConfig& c, const std::string& k, const std::string& v) { c.batch_size = parse_number<int>(k, v); }},
      {"learning_rate", [](TrainConfig& c, const std::string& k, const std::string& v) { c.learning_rate = parse_number<double>(k, v); }},
      {"frf_steps", [](TrainConfig& c, const std::string& k, const std::string& v) { c.frf_steps = parse_number<int>(k, v); }},
      {"alpha", [](TrainConfig& c, const std::string& k, const std::string& v) { c.alpha = parse_number<double>(k, v); }},
      {"lambda_df", [](TrainConfig& c, const std::string& k, const std::string& v) { c.lambda_df = parse_number<double>(k, v); }},
      {"epsilon_acos", [](TrainConfig& c, const std::string& k, const std::string& v) { c.epsilon_acos = parse_number<double>(k, v); }},
      {"squared_l2", [](TrainConfig& c, const std::string& k, const std::string& v) { c.squared_l2 = parse_bool(k, v); }},
      {"base_channels", [](TrainConfig& c, const std::string& k, const std::string& v) { c.base_channels = parse_number<int>(k, v); }},
      {"depth", [](TrainConfig& c, const std::string& k, const std::string& v) { c.depth = parse_number<int>(k, v); }},
      {"augment", [](TrainConfig& c, const std::string& k, const std::string& v) { c.augment = parse_bool(k, v); }},
      {"seed", [](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"max_distance", [](TrainConfig& c, const std::string& k, const std::string& v) { c.max_distance = parse_number<int>(k, v); }},
      {"class_names", [](TrainConfig& c, const std::string&, const std::string& v) { c.class_names = v; }},
      {"output_dir", [](TrainConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
  };
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  if (dataset != "synthetic" && dataset != "acdc") {
    throw std::invalid_argument("dataset must be 'synthetic' or 'acdc', got '" + dataset + "'");
  }
  if (fold < 0 || fold > 4) throw std::invalid_argument("fold must be in 0..4");
  if (synth_train < 1 || synth_val < 1) throw std::invalid_argument("synthetic set sizes must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(lambda_df >= 0.0)) throw std::invalid_argument("lambda_df must be >= 0");
  if (max_distance < 1) throw std::invalid_argument("max_distance must be >= 1");
  ModelConfig m = model_config();
  m.validate();
  loss_config().validate();
  if (input_size < 1 || input_size % m.size_multiple() != 0) {
    throw std::invalid_argument("input_size must be a positive multiple of 2^depth = " +
                                std::to_string(m.size_multiple()));
  }
  const ClassNames names = ClassNames::parse(class_names);
  if (names.num_foreground() + 1 != m.num_classes) {
    throw std::invalid_argument("class_names must list the foreground structures");
  }
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.num_classes = ClassNames::parse(class_names).num_foreground() + 1;
  m.base_channels = base_channels;
  m.depth = depth;
  m.frf_steps = frf_steps;
  return m;
}

LossConfig TrainConfig::loss_config() const {
  LossConfig l;
  l.alpha = alpha;
  l.lambda_df = lambda_df;
  l.epsilon_acos = epsilon_acos;
  l.squared_l2 = squared_l2;
  return l;
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << "dataset = " << dataset << '\n'
      << "data_root = " << data_root << '\n'
      << "fold = " << fold << '\n'
      << "synth_train = " << synth_train << '\n'
      << "synth_val = " << synth_val << '\n'
      << "synth_seed = " << synth_seed << '\n'
      << "input_size = " << input_size << '\n'
      << "epochs = " << epochs << '\n'
      << "batch_size = " << batch_size << '\n'
      << "learning_rate = " << format_double(learning_rate) << '\n'
      << "frf_steps = " << frf_steps << '\n'
      << "alpha = " << format_double(alpha) << '\n'
      << "lambda_df = " << format_double(lambda_df) << '\n'
      << "epsilon_acos = " << format_double(epsilon_acos) << '\n'
      << "squared_l2 = " << (squared_l2 ? "true" : "false") << '\n'
      << "base_channels = " << base_channels << '\n'
      << "depth = " << depth << '\n'
      << "augment = " << (augment ? "true" : "false") << '\n'
      << "seed = " << seed << '\n'
      << "max_distance = " << max_distance << '\n'
      << "class_names = " << class_names << '\n'
      << "output_dir = " << output_dir << '\n';
  return out.str();
}

std::string TrainConfig::hash() const {
  TrainConfig c = *this;
  c.output_dir.clear();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(c.to_text())));
  return buf;
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (!seen.insert(key).second) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    it->second(cfg, key, value);
  }
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace dfm
