#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "rfconc/errors.hpp"
#include "rfconc/experiment.hpp"

namespace rfconc {
namespace toml {

// Minimal TOML subset: [section] headers, `key = value` pairs, # comments,
// values of type string / integer / float / boolean / one-line array.
// No TOML library ships with this toolchain; this covers exactly what the
// sweep configs need and keeps line numbers for error messages.

struct Value {
  enum class Kind { string, integer, floating, boolean, array };
  Kind kind = Kind::string;
  std::string str;
  long long integer = 0;
  double floating = 0.0;
  bool boolean = false;
  std::vector<Value> array;
  int line = 0;
};

struct Document {
  std::map<std::string, Value> values;  // keys flattened as "section.key"
  std::vector<std::string> errors;      // syntax errors, with line numbers
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline bool parse_scalar(const std::string& text, int line, Value& out) {
  out.line = line;
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    out.kind = Value::Kind::string;
    out.str = text.substr(1, text.size() - 2);
    return true;
  }
  if (text == "true" || text == "false") {
    out.kind = Value::Kind::boolean;
    out.boolean = text == "true";
    return true;
  }
  const bool looks_float = text.find_first_of(".eE") != std::string::npos &&
                           text.find_first_not_of("+-0123456789.eE") ==
                               std::string::npos;
  try {
    std::size_t pos = 0;
    if (!looks_float) {
      out.integer = std::stoll(text, &pos);
      if (pos == text.size()) {
        out.kind = Value::Kind::integer;
        out.floating = static_cast<double>(out.integer);
        return true;
      }
    }
    pos = 0;
    out.floating = std::stod(text, &pos);
    if (pos == text.size()) {
      out.kind = Value::Kind::floating;
      return true;
    }
  } catch (const std::exception&) {
  }
  return false;
}

inline bool parse_value(const std::string& text, int line, Value& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  if (t.front() == '[') {
    if (t.back() != ']') return false;
    out.kind = Value::Kind::array;
    out.line = line;
    const std::string inner = t.substr(1, t.size() - 2);
    std::size_t start = 0;
    bool in_string = false;
    std::string item;
    auto flush = [&]() -> bool {
      const std::string it = trim(item);
      if (it.empty()) return item.find_first_not_of(" \t") == std::string::npos;
      Value v;
      if (!parse_scalar(it, line, v)) return false;
      out.array.push_back(std::move(v));
      return true;
    };
    for (std::size_t i = 0; i < inner.size(); ++i) {
      const char c = inner[i];
      if (c == '"') in_string = !in_string;
      if (c == ',' && !in_string) {
        if (!flush()) return false;
        item.clear();
      } else {
        item += c;
      }
    }
    if (!flush()) return false;
    (void)start;
    return true;
  }
  return parse_scalar(t, line, out);
}

inline std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

}  // namespace detail

inline Document parse(std::istream& in) {
  Document doc;
  std::string raw, section;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        doc.errors.push_back("line " + std::to_string(lineno) +
                             ": malformed section header '" + line + "'");
        continue;
      }
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      doc.errors.push_back("line " + std::to_string(lineno) +
                           ": expected 'key = value'");
      continue;
    }
    const std::string key = detail::trim(line.substr(0, eq));
    if (key.empty() ||
        key.find_first_not_of("abcdefghijklmnopqrstuvwxyz"
                              "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-") !=
            std::string::npos) {
      doc.errors.push_back("line " + std::to_string(lineno) + ": bad key '" +
                           key + "'");
      continue;
    }
    Value v;
    if (!detail::parse_value(line.substr(eq + 1), lineno, v)) {
      doc.errors.push_back("line " + std::to_string(lineno) +
                           ": cannot parse value for '" + key + "'");
      continue;
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (doc.values.count(full))
      doc.errors.push_back("line " + std::to_string(lineno) +
                           ": duplicate key '" + full + "'");
    doc.values[full] = std::move(v);
  }
  return doc;
}

inline Document parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  return parse(in);
}

}  // namespace toml

// Full structural and semantic validation of a sweep config. Returns every
// error found, each with the TOML line number where one applies.
inline std::vector<std::string> validate_config(const toml::Document& doc,
                                                ExperimentConfig& cfg) {
  std::vector<std::string> errors = doc.errors;
  auto fail = [&errors](const toml::Value* v, const std::string& msg) {
    if (v)
      errors.push_back("line " + std::to_string(v->line) + ": " + msg);
    else
      errors.push_back(msg);
  };
  auto get = [&doc](const std::string& key) -> const toml::Value* {
    auto it = doc.values.find(key);
    return it == doc.values.end() ? nullptr : &it->second;
  };

  static const char* known[] = {
      "data.dist",    "data.path", "data.d",     "data.n",
      "data.feature_subsample",    "activation", "teacher.tau",
      "teacher.sigma_eps",         "ell",        "baseline",
      "lambda_grid",  "N_grid",    "trials",     "B",
      "M",            "root_seed", "metrics"};
  for (const auto& [key, value] : doc.values) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) fail(&value, "unknown key '" + key + "'");
  }

  const toml::Value* dist = get("data.dist");
  if (!dist || dist->kind != toml::Value::Kind::string) {
    fail(dist, "data.dist must be a string (sphere | cube | csv)");
  } else {
    cfg.dist = dist->str;
    if (cfg.dist != "sphere" && cfg.dist != "cube" && cfg.dist != "csv")
      fail(dist, "data.dist must be sphere, cube or csv");
  }
  if (cfg.dist == "csv") {
    const toml::Value* path = get("data.path");
    if (!path || path->kind != toml::Value::Kind::string)
      fail(path, "data.path is required for csv data");
    else
      cfg.csv_path = path->str;
    if (const toml::Value* fs = get("data.feature_subsample")) {
      if (fs->kind != toml::Value::Kind::integer || fs->integer < 1)
        fail(fs, "data.feature_subsample must be a positive integer");
      else
        cfg.feature_subsample = static_cast<int>(fs->integer);
    }
  } else {
    for (const char* key : {"data.d", "data.n"}) {
      const toml::Value* v = get(key);
      if (!v || v->kind != toml::Value::Kind::integer || v->integer < 1) {
        fail(v, std::string(key) + " must be a positive integer");
      } else if (key[5] == 'd') {
        cfg.d = static_cast<int>(v->integer);
      } else {
        cfg.n = static_cast<int>(v->integer);
      }
    }
  }

  auto parse_act = [&](const char* key, ActivationSpec& out) {
    const toml::Value* v = get(key);
    if (!v || v->kind != toml::Value::Kind::string) {
      fail(v, std::string(key) + " must be an activation name string");
      return;
    }
    try {
      out = parse_activation(v->str);
    } catch (const Error& e) {
      fail(v, e.what());
    }
  };
  parse_act("activation", cfg.activation);
  parse_act("teacher.tau", cfg.tau);

  if (const toml::Value* se = get("teacher.sigma_eps")) {
    if ((se->kind != toml::Value::Kind::floating &&
         se->kind != toml::Value::Kind::integer) ||
        se->floating < 0.0)
      fail(se, "teacher.sigma_eps must be a number >= 0");
    else
      cfg.sigma_eps = se->floating;
  } else {
    fail(nullptr, "teacher.sigma_eps is required");
  }

  if (const toml::Value* ell = get("ell")) {
    if (ell->kind == toml::Value::Kind::string && ell->str == "auto")
      cfg.ell.reset();
    else if (ell->kind == toml::Value::Kind::integer && ell->integer >= 0)
      cfg.ell = static_cast<int>(ell->integer);
    else
      fail(ell, "ell must be a nonnegative integer or \"auto\"");
  } else {
    fail(nullptr, "ell is required (integer or \"auto\")");
  }

  if (const toml::Value* bl = get("baseline")) {
    if (bl->kind != toml::Value::Kind::string ||
        (bl->str != "polynomial" && bl->str != "expected"))
      fail(bl, "baseline must be \"polynomial\" or \"expected\"");
    else
      cfg.baseline = bl->str;
  }

  const toml::Value* lg = get("lambda_grid");
  if (!lg || lg->kind != toml::Value::Kind::array || lg->array.empty()) {
    fail(lg, "lambda_grid must be a non-empty array of numbers");
  } else {
    cfg.lambda_grid.clear();
    for (const toml::Value& v : lg->array) {
      if ((v.kind != toml::Value::Kind::floating &&
           v.kind != toml::Value::Kind::integer) ||
          v.floating < 0.0) {
        fail(lg, "lambda_grid entries must be numbers >= 0");
        break;
      }
      cfg.lambda_grid.push_back(v.floating);
    }
  }

  const toml::Value* ng = get("N_grid");
  if (!ng || ng->kind != toml::Value::Kind::array || ng->array.empty()) {
    fail(ng, "N_grid must be a non-empty array of integers");
  } else {
    cfg.N_grid.clear();
    bool ok = true;
    for (const toml::Value& v : ng->array) {
      if (v.kind != toml::Value::Kind::integer || v.integer < 1) {
        fail(ng, "N_grid entries must be positive integers");
        ok = false;
        break;
      }
      cfg.N_grid.push_back(static_cast<int>(v.integer));
    }
    for (std::size_t i = 1; ok && i < cfg.N_grid.size(); ++i)
      if (cfg.N_grid[i] <= cfg.N_grid[i - 1]) {
        fail(ng, "N_grid must be strictly increasing");
        break;
      }
  }

  auto get_int = [&](const char* key, int min_value, int& out, bool required) {
    const toml::Value* v = get(key);
    if (!v) {
      if (required) fail(nullptr, std::string(key) + " is required");
      return;
    }
    if (v->kind != toml::Value::Kind::integer || v->integer < min_value)
      fail(v, std::string(key) + " must be an integer >= " +
                  std::to_string(min_value));
    else
      out = static_cast<int>(v->integer);
  };
  get_int("trials", 1, cfg.trials, true);
  get_int("B", 2, cfg.B, false);
  get_int("M", 1, cfg.M, false);

  if (const toml::Value* rs = get("root_seed")) {
    if (rs->kind != toml::Value::Kind::integer || rs->integer < 0)
      fail(rs, "root_seed must be a nonnegative integer");
    else
      cfg.root_seed = static_cast<std::uint64_t>(rs->integer);
  } else {
    fail(nullptr, "root_seed is required");
  }

  const toml::Value* ms = get("metrics");
  if (!ms || ms->kind != toml::Value::Kind::array || ms->array.empty()) {
    fail(ms, "metrics must be a non-empty array of metric names");
  } else {
    cfg.metrics.clear();
    for (const toml::Value& v : ms->array) {
      std::optional<Metric> m;
      if (v.kind == toml::Value::Kind::string) m = parse_metric(v.str);
      if (!m) {
        fail(ms, "metrics entries must be train, loocv, gcv, test or "
                 "concentration");
        break;
      }
      cfg.metrics.push_back(*m);
    }
  }

  // Semantic cross-checks.
  const bool wants_gcv = std::find(cfg.metrics.begin(), cfg.metrics.end(),
                                   Metric::gcv) != cfg.metrics.end();
  if (wants_gcv)
    for (double l : cfg.lambda_grid)
      if (l == 0.0) {
        fail(get("lambda_grid"),
             "metric gcv requires every lambda_grid entry > 0 (GCV is "
             "undefined at lambda = 0)");
        break;
      }
  return errors;
}

inline ExperimentConfig load_config(const std::string& path) {
  const toml::Document doc = toml::parse_file(path);
  ExperimentConfig cfg;
  const std::vector<std::string> errors = validate_config(doc, cfg);
  if (!errors.empty()) {
    std::string msg = "config '" + path + "' is invalid:";
    for (const std::string& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

}  // namespace rfconc
