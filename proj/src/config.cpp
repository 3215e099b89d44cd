#include "poolbreaker/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "poolbreaker/errors.hpp"

namespace poolbreaker {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

double parse_number(const std::string& text, const std::string& where) {
  std::string t;
  for (char c : text)
    if (c != '_') t += c;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw ConfigError(where, "expected a number, got '" + text + "'");
  }
  if (used != t.size() || !std::isfinite(v)) throw ConfigError(where, "expected a number, got '" + text + "'");
  return v;
}

ConfigValue parse_value(const std::string& raw, const std::string& where) {
  const std::string v = trim(raw);
  if (v.empty()) throw ConfigError(where, "missing value");
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') throw ConfigError(where, "unterminated string");
    return v.substr(1, v.size() - 2);
  }
  if (v.front() == '[') {
    if (v.back() != ']') throw ConfigError(where, "unterminated array");
    std::vector<double> out;
    std::stringstream items(v.substr(1, v.size() - 2));
    std::string item;
    while (std::getline(items, item, ',')) {
      if (trim(item).empty()) continue;
      out.push_back(parse_number(trim(item), where));
    }
    return out;
  }
  return parse_number(v, where);
}

const char* type_name(const ConfigValue& v) {
  switch (v.index()) {
    case 0: return "boolean";
    case 1: return "number";
    case 2: return "string";
    default: return "array";
  }
}

template <typename T>
const T& expect(const ConfigValue& v, const std::string& key, const char* wanted) {
  if (const T* p = std::get_if<T>(&v)) return *p;
  throw ConfigError(key, std::string("expected a ") + wanted + ", got a " + type_name(v));
}

std::size_t as_count(const ConfigValue& v, const std::string& key) {
  const double d = expect<double>(v, key, "number");
  if (d < 0.0 || d != std::floor(d) || d > 1e15) throw ConfigError(key, "expected a non-negative integer");
  return static_cast<std::size_t>(d);
}

}  // namespace

ConfigTable parse_config(const std::string& text) {
  ConfigTable table;
  std::istringstream in(text);
  std::string line, section;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string where = "line " + std::to_string(number);
    const std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']' || body.size() < 3) throw ConfigError(where, "malformed section header");
      section = trim(body.substr(1, body.size() - 2));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where, "expected key = value");
    const std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw ConfigError(where, "empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (table.count(full)) throw ConfigError(full, "duplicate key (" + where + ")");
    table[full] = parse_value(body.substr(eq + 1), full);
  }
  return table;
}

ConfigTable load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void apply_config(const ConfigTable& table, ExperimentSpec& spec) {
  using Setter = std::function<void(const ConfigValue&, const std::string&)>;
  auto number = [](double& field) {
    return Setter([&field](const ConfigValue& v, const std::string& k) { field = expect<double>(v, k, "number"); });
  };
  auto count = [](std::size_t& field) {
    return Setter([&field](const ConfigValue& v, const std::string& k) { field = as_count(v, k); });
  };
  auto flag = [](bool& field) {
    return Setter([&field](const ConfigValue& v, const std::string& k) { field = expect<bool>(v, k, "boolean"); });
  };
  auto text = [](std::string& field) {
    return Setter([&field](const ConfigValue& v, const std::string& k) { field = expect<std::string>(v, k, "string"); });
  };
  auto train = [&](const std::string& prefix, TrainConfig& c, std::map<std::string, Setter>& m) {
    m[prefix + ".epochs"] = count(c.epochs);
    m[prefix + ".lr"] = number(c.learning_rate);
    m[prefix + ".hidden"] = count(c.hidden_f);
    m[prefix + ".hidden2"] = count(c.hidden2);
    m[prefix + ".pool_ratio"] = number(c.pool_ratio);
    m[prefix + ".patience"] = count(c.patience);
  };

  SyntheticOptions& so = spec.dataset.synthetic_options;
  std::map<std::string, Setter> setters = {
      {"seed",
       [&](const ConfigValue& v, const std::string& k) { spec.seed = static_cast<std::uint64_t>(as_count(v, k)); }},
      {"workers",
       [&](const ConfigValue& v, const std::string& k) {
         const std::size_t n = as_count(v, k);
         if (n == 0) throw ConfigError(k, "must be positive");
         spec.workers = static_cast<unsigned>(n);
       }},
      {"dataset.name", text(spec.dataset.name)},
      {"dataset.path", text(spec.dataset.path)},
      {"dataset.synthetic", flag(spec.dataset.synthetic)},
      {"synthetic.graphs", count(so.graphs)},
      {"synthetic.min_nodes", count(so.min_nodes)},
      {"synthetic.max_nodes", count(so.max_nodes)},
      {"synthetic.attributed", flag(so.attributed)},
      {"synthetic.feature_dim", count(so.feature_dim)},
      {"synthetic.feature_signal", number(so.feature_signal)},
      {"synthetic.feature_noise", number(so.feature_noise)},
      {"synthetic.extra_edge_prob", number(so.extra_edge_prob)},
      {"synthetic.degree_feature", flag(so.degree_feature)},
      {"synthetic.degree_scale", number(so.degree_scale)},
      {"surrogate.relu", flag(spec.surrogate.relu_between_linear)},
      {"targets.levels", count(spec.targets.levels)},
      {"budget.edit", number(spec.budget.edit_ratio_max)},
      {"budget.deltacon", number(spec.budget.deltacon_max)},
      {"budget.feat", number(spec.budget.feature_l1_max)},
      {"budget.epsilon", number(spec.budget.epsilon)},
      {"budget.strict_literal", flag(spec.budget.deltacon_strict_literal)},
      {"attack.mode",
       [&](const ConfigValue& v, const std::string& k) {
         spec.attack.mode = attack_mode_from_string(expect<std::string>(v, k, "string"));
       }},
      {"attack.target_frac", number(spec.attack.target_node_fraction)},
      {"attack.max_edge_flip_frac", number(spec.attack.max_edge_flip_fraction)},
      {"attack.feature_step_scale", number(spec.attack.feature_step_scale)},
      {"attack.passes",
       [&](const ConfigValue& v, const std::string& k) {
         const std::string& s = expect<std::string>(v, k, "string");
         if (s != "single" && s != "multi") throw ConfigError(k, "expected \"single\" or \"multi\"");
         spec.attack.multi_pass = s == "multi";
       }},
      {"sweep.points",
       [&](const ConfigValue& v, const std::string& k) {
         spec.sweep = expect<std::vector<double>>(v, k, "array");
       }},
      {"robust.enabled", flag(spec.robust_train)},
  };
  train("surrogate", spec.surrogate, setters);
  train("targets", spec.targets, setters);

  for (const auto& [key, value] : table) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(key, "unknown key");
    it->second(value, key);
  }
}

}  // namespace poolbreaker
