#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

#include <toml.hpp>

#include "cli.hpp"
#include "ricci_lab/io.hpp"

namespace ricci_lab::cli {

namespace {

const std::map<std::string, std::vector<OptionSpec>>& table() {
  static const std::map<std::string, std::vector<OptionSpec>> t = {
      {"curvature",
       {{"n", "4", "manifold is S^{n-1}"},
        {"beta", "0.8", "warping slopes beta_1,...,beta_{n-1} (missing entries are 1)"},
        {"point", "", "single evaluation point x_1,...,x_{n-1}; default is a sample grid"},
        {"per_axis", "5", "grid points per angle"},
        {"margin", "0.05", "grid distance from the singular strata"},
        {"out", "curvature.csv", "per-point CSV"}}},
      {"suspend",
       {{"n", "4", "manifold is S^{n-1}"},
        {"beta", "0.8", "warping slopes"},
        {"out", "suspension.json", "suspension description"}}},
      {"glue",
       {{"n", "4", "manifold is S^{n-1}"},
        {"beta1", "0.8", "cone slope of the singular slice"},
        {"s", "1e-4", "expander time"},
        {"resolution", "512", "grid nodes"},
        {"stretch", "0.45", "tip clustering of the grid"},
        {"out", "glue.csv", "glued initial data"}}},
      {"flow",
       {{"init", "round", "initial data: round or glued"},
        {"n", "4", "manifold is S^{n-1}"},
        {"resolution", "0", "grid nodes (0: 256 round, 512 glued)"},
        {"stretch", "-1", "tip clustering of the grid (-1: 0 round, 0.45 glued)"},
        {"radius", "1", "round sphere radius"},
        {"beta1", "0.8", "cone slope for glued data"},
        {"s", "1e-4", "expander time for glued data"},
        {"T", "0.1", "final time"},
        {"t_min", "1e-6", "first recorded time"},
        {"t_ratio", "1.1", "ratio of recorded times"},
        {"scheme", "rosenbrock", "rosenbrock or explicit"},
        {"rtol", "1e-6", "relative tolerance"},
        {"atol", "1e-10", "absolute tolerance"},
        {"out", "flow.csv", "trajectory CSV"}}},
      {"soliton",
       {{"kind", "", "cigar, bryant, product or expander"},
        {"dim", "4", "profile dimension m"},
        {"k", "0", "flat factor dimension for product"},
        {"beta", "0.5", "cone slope for expander"},
        {"tol", "1e-10", "shooting and integration tolerance"},
        {"r_max", "0", "radial extent (0 picks a default per kind)"},
        {"samples", "5001", "grid points"},
        {"out", "soliton.csv", "profile CSV"}}},
      {"deturck",
       {{"n", "4", "manifold is S^{n-1}"},
        {"resolution", "128", "grid nodes"},
        {"radius", "1", "round sphere radius"},
        {"eps", "1e-3,1e-2", "conformal perturbation sizes"},
        {"T", "0.125", "final time"},
        {"rtol", "1e-6", "relative tolerance"},
        {"atol", "1e-10", "absolute tolerance"},
        {"records", "50", "recorded times"},
        {"max_steps", "1000000", "step limit per run"},
        {"pullback", "false", "also integrate the DeTurck ODE and report the Ricci residual", true},
        {"out", "deturck.csv", "history CSV (one file per eps when several)"}}},
      {"simplex",
       {{"op", "", "r, project, phi, vertex, degree or coverage"},
        {"n", "4", "eigenvalue vector length n-1"},
        {"point", "", "input point"},
        {"space", "DeltaStar", "vertex space: Delta or Omega"},
        {"k", "1", "vertex index"},
        {"epsilon", "0.1", "phi neighbourhood size"},
        {"C", "4", "phi contraction constant"},
        {"resolution", "256", "phi lattice resolution"},
        {"dim", "2", "simplex dimension for degree and coverage"},
        {"map", "random", "identity, perm or random"},
        {"perm", "", "vertex permutation for map = perm"},
        {"map_resolution", "6", "subdivision of the test map"},
        {"jitter", "0.45", "random map displacement in mesh steps"},
        {"face", "", "vertex labels of the face (default: all)"},
        {"grid", "64", "coverage grid resolution"},
        {"out", "", "JSON result file (always printed)"}}},
      {"sweep",
       {{"command", "", "subcommand to sweep"},
        {"param", "", "option varied across runs"},
        {"values", "", "values of param"},
        {"set", "", "fixed options key=value;key=value for every run"},
        {"out_dir", "sweep", "directory for per-run artifacts"}}},
  };
  return t;
}

const std::vector<OptionSpec> kCommon = {
    {"seed", "1", "random seed"},
    {"summary", "", "summary JSON path (default derived from --out)"},
};

bool is_path_key(const std::string& k) { return k == "out" || k == "summary" || k == "out_dir"; }

bool is_tolerance_key(const std::string& k) { return k == "tol" || k == "rtol" || k == "atol" || k == "epsilon"; }

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && *b == ' ') ++b;
  if (b < e && *b == '+') ++b;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) throw ConfigError("option '" + key + "' expects a number, got '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string toml_text(const toml::node& node, const std::string& key) {
  if (auto v = node.as_integer()) return std::to_string(v->get());
  if (auto v = node.as_floating_point()) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v->get());
    return std::string(buf, res.ptr);
  }
  if (auto v = node.as_boolean()) return v->get() ? "true" : "false";
  if (auto v = node.as_string()) return v->get();
  if (auto arr = node.as_array()) {
    std::string s;
    for (std::size_t i = 0; i < arr->size(); ++i) s += (i ? "," : "") + toml_text(*arr->get(i), key);
    return s;
  }
  throw ConfigError("config key '" + key + "' has an unsupported type");
}

void check_writable_parent(const std::string& path) {
  namespace fs = std::filesystem;
  fs::path p(path);
  fs::path dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
  if (!fs::is_directory(dir) || ::access(dir.c_str(), W_OK) != 0) {
    throw ConfigError("output path '" + path + "' is not writable");
  }
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s = {"curvature", "suspend", "glue", "flow", "soliton", "deturck", "simplex", "sweep"};
  return s;
}

const std::vector<OptionSpec>& options_for(const std::string& subcommand) {
  static const std::map<std::string, std::vector<OptionSpec>> merged = [] {
    std::map<std::string, std::vector<OptionSpec>> m;
    for (const auto& [k, v] : table()) {
      m[k] = v;
      m[k].insert(m[k].end(), kCommon.begin(), kCommon.end());
    }
    return m;
  }();
  const auto it = merged.find(subcommand);
  if (it == merged.end()) throw ConfigError("unknown subcommand '" + subcommand + "'");
  return it->second;
}

std::string default_output(const std::string& subcommand) {
  for (const auto& o : options_for(subcommand)) {
    if (o.key == "out") return o.fallback;
  }
  return {};
}

bool RunConfig::has(const std::string& key) const {
  const auto it = values.find(key);
  return it != values.end() && !it->second.empty();
}

const std::string& RunConfig::str(const std::string& key) const {
  const auto it = values.find(key);
  if (it == values.end()) throw ConfigError("option '" + key + "' is not defined for " + subcommand);
  return it->second;
}

double RunConfig::num(const std::string& key) const {
  if (!has(key)) throw ConfigError("option '" + key + "' is required");
  return parse_double(key, str(key));
}

int RunConfig::integer(const std::string& key) const {
  const double v = num(key);
  if (v != std::floor(v) || std::abs(v) > 2e9) throw ConfigError("option '" + key + "' expects an integer");
  return static_cast<int>(v);
}

std::uint64_t RunConfig::seed() const {
  const std::string& s = str("seed");
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ConfigError("seed must be a non-negative integer");
  return v;
}

bool RunConfig::flag(const std::string& key) const {
  const std::string& s = str(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0" || s.empty()) return false;
  throw ConfigError("option '" + key + "' expects true or false");
}

std::vector<double> RunConfig::list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split(str(key), ',')) out.push_back(parse_double(key, item));
  return out;
}

std::vector<int> RunConfig::int_list(const std::string& key) const {
  std::vector<int> out;
  for (double v : list(key)) {
    if (v != std::floor(v)) throw ConfigError("option '" + key + "' expects integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

void RunConfig::validate() const {
  for (const auto& [k, v] : values) {
    if (is_tolerance_key(k) && !v.empty() && !(parse_double(k, v) > 0.0)) {
      throw ConfigError("tolerance '" + k + "' must be positive");
    }
  }
  if (has("out_dir")) {
    std::error_code ec;
    std::filesystem::create_directories(str("out_dir"), ec);
    check_writable_parent(str("out_dir") + "/x");
  }
  if (has("out")) check_writable_parent(str("out"));
  check_writable_parent(summary_path());
  seed();
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = {{"subcommand", subcommand}};
  for (const auto& [k, v] : values) j["values"][k] = v;
  return j;
}

std::string RunConfig::hash() const {
  nlohmann::json j = {{"subcommand", subcommand}};
  for (const auto& [k, v] : values) {
    if (!is_path_key(k)) j["values"][k] = v;
  }
  return io::fnv1a_hex(j.dump());
}

std::string RunConfig::summary_path() const {
  if (has("summary")) return str("summary");
  if (!has("out") && has("out_dir")) return str("out_dir") + "/" + subcommand + ".summary.json";
  std::filesystem::path p(has("out") ? str("out") : subcommand + ".json");
  p.replace_extension(".summary.json");
  return p.string();
}

std::map<std::string, std::string> read_toml_table(const std::string& path, const std::string& name) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file '" + path + "' not found");
  toml::table doc;
  try {
    doc = toml::parse_file(path);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "config file '" << path << "': " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(os.str());
  }
  std::map<std::string, std::string> out;
  const toml::table* t = doc[name].as_table();
  if (!t) return out;
  for (const auto& [k, v] : *t) {
    std::string key(k.str());
    std::replace(key.begin(), key.end(), '-', '_');
    out[key] = toml_text(v, key);
  }
  return out;
}

RunConfig resolve(const std::string& subcommand, const std::string& toml_path,
                  const std::map<std::string, std::string>& flags) {
  RunConfig cfg;
  cfg.subcommand = subcommand;
  const auto& specs = options_for(subcommand);
  for (const auto& o : specs) cfg.values[o.key] = o.fallback;
  auto apply = [&](const std::map<std::string, std::string>& src, const std::string& origin) {
    for (const auto& [k, v] : src) {
      if (k == "subcommand") {
        if (v != subcommand) throw ConfigError(origin + " is for subcommand '" + v + "', not '" + subcommand + "'");
        continue;
      }
      if (!cfg.values.count(k)) throw ConfigError(origin + ": unknown option '" + k + "' for " + subcommand);
      cfg.values[k] = v;
    }
  };
  if (!toml_path.empty()) apply(read_toml_table(toml_path), "config file '" + toml_path + "'");
  apply(flags, "command line");
  return cfg;
}

unsigned thread_limit() {
  if (const char* env = std::getenv("RICCI_LAB_THREADS")) {
    unsigned v = 0;
    const std::string s(env);
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v == 0) {
      throw ConfigError("RICCI_LAB_THREADS must be a positive integer");
    }
    return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace ricci_lab::cli
