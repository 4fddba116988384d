#include "ultra/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "ultra/errors.hpp"

namespace ultra {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t to_count(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  }
  return out;
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool to_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string real_text(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"dim", [](RunConfig& c, auto& k, auto& v) { c.model.dim = to_count(k, v); }},
      {"relation_layers", [](RunConfig& c, auto& k, auto& v) { c.model.relation_layers = to_count(k, v); }},
      {"entity_layers", [](RunConfig& c, auto& k, auto& v) { c.model.entity_layers = to_count(k, v); }},
      {"ablation", [](RunConfig& c, auto&, auto& v) { c.model.ablation = parse_ablation(v); }},
      {"learning_rate", [](RunConfig& c, auto& k, auto& v) { c.train.learning_rate = to_real(k, v); }},
      {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = to_count(k, v); }},
      {"num_negatives", [](RunConfig& c, auto& k, auto& v) { c.train.num_negatives = to_count(k, v); }},
      {"adversarial_temperature",
       [](RunConfig& c, auto& k, auto& v) { c.train.adversarial_temperature = to_real(k, v); }},
      {"weight_decay", [](RunConfig& c, auto& k, auto& v) { c.train.weight_decay = to_real(k, v); }},
      {"steps", [](RunConfig& c, auto& k, auto& v) { c.train.steps = to_count(k, v); }},
      {"epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = to_count(k, v); }},
      {"batches_per_epoch", [](RunConfig& c, auto& k, auto& v) { c.train.batches_per_epoch = to_count(k, v); }},
      {"validation_interval",
       [](RunConfig& c, auto& k, auto& v) { c.train.validation_interval = to_count(k, v); }},
      {"max_valid_queries", [](RunConfig& c, auto& k, auto& v) { c.train.max_valid_queries = to_count(k, v); }},
      {"remove_positive_edges",
       [](RunConfig& c, auto& k, auto& v) { c.train.remove_positive_edges = to_flag(k, v); }},
      {"seed", [](RunConfig& c, auto& k, auto& v) { c.train.seed = to_u64(k, v); }},
      {"deterministic", [](RunConfig& c, auto& k, auto& v) { c.train.deterministic = to_flag(k, v); }},
      {"threads", [](RunConfig& c, auto& k, auto& v) { c.train.threads = to_count(k, v); }},
      {"log_every", [](RunConfig& c, auto& k, auto& v) { c.train.log_every = to_count(k, v); }},
      {"datasets",
       [](RunConfig& c, auto&, auto& v) {
         c.datasets.clear();
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ',')) {
           item = trim(item);
           if (!item.empty()) c.datasets.emplace_back(item);
         }
       }},
      {"split_mode",
       [](RunConfig& c, auto&, auto& v) {
         try {
           c.split_mode = parse_split_mode(v);
         } catch (const Error& e) {
           throw ConfigError(e.what());
         }
       }},
      {"protocol",
       [](RunConfig& c, auto&, auto& v) {
         c.train.valid_protocol = protocol_from_name(v);
         c.protocol = v;
       }},
      {"output", [](RunConfig& c, auto&, auto& v) { c.output = v; }},
      {"manifest", [](RunConfig& c, auto&, auto& v) { c.manifest = v; }},
  };
  return table;
}

}  // namespace

ConfigEntries parse_config(std::istream& in, const std::string& source) {
  ConfigEntries out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    if (!setters().contains(key)) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    out[key] = value;
  }
  return out;
}

ConfigEntries load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, path.string());
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

RunConfig resolve_config(const ConfigEntries& entries) {
  RunConfig c;
  for (const auto& [key, value] : entries) {
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(c, key, value);
  }
  c.train.validate();
  if (c.model.dim == 0) throw ConfigError("dim must be positive");
  return c;
}

ConfigEntries config_snapshot(const RunConfig& c) {
  std::string datasets;
  for (const auto& d : c.datasets) {
    if (!datasets.empty()) datasets += ",";
    datasets += d.string();
  }
  return {
      {"dim", std::to_string(c.model.dim)},
      {"relation_layers", std::to_string(c.model.relation_layers)},
      {"entity_layers", std::to_string(c.model.entity_layers)},
      {"ablation", std::string(to_string(c.model.ablation))},
      {"learning_rate", real_text(c.train.learning_rate)},
      {"batch_size", std::to_string(c.train.batch_size)},
      {"num_negatives", std::to_string(c.train.num_negatives)},
      {"adversarial_temperature", real_text(c.train.adversarial_temperature)},
      {"weight_decay", real_text(c.train.weight_decay)},
      {"steps", std::to_string(c.train.steps)},
      {"epochs", std::to_string(c.train.epochs)},
      {"batches_per_epoch", std::to_string(c.train.batches_per_epoch)},
      {"validation_interval", std::to_string(c.train.validation_interval)},
      {"max_valid_queries", std::to_string(c.train.max_valid_queries)},
      {"remove_positive_edges", c.train.remove_positive_edges ? "true" : "false"},
      {"seed", std::to_string(c.train.seed)},
      {"deterministic", c.train.deterministic ? "true" : "false"},
      {"threads", std::to_string(c.train.threads)},
      {"log_every", std::to_string(c.train.log_every)},
      {"datasets", datasets},
      {"split_mode", std::string(to_string(c.split_mode))},
      {"protocol", c.protocol},
      {"output", c.output.string()},
      {"manifest", c.manifest.string()},
  };
}

}  // namespace ultra
