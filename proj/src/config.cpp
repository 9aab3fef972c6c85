#include "dslrec/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace dslrec {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::BPR: return "bpr";
    case LossKind::SL: return "sl";
    case LossKind::DSL: return "dsl";
    case LossKind::DSLKappaOnly: return "dsl-kappa-only";
    case LossKind::DSLCAOnly: return "dsl-ca-only";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  for (auto k : {LossKind::BPR, LossKind::SL, LossKind::DSL, LossKind::DSLKappaOnly,
                 LossKind::DSLCAOnly}) {
    if (name == to_string(k)) return k;
  }
  throw Error("unknown loss '" + name + "' (expected bpr, sl, dsl, dsl-kappa-only, dsl-ca-only)");
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

double to_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) {
    throw Error("config key '" + key + "': expected a number, got '" + value + "'");
  }
  return v;
}

std::uint64_t to_count(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) {
    throw Error("config key '" + key + "': expected a non-negative integer, got '" + value + "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw Error("config key '" + key + "': expected a boolean, got '" + value + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_double("list", item));
  }
  if (out.empty()) throw Error("empty value list '" + text + "'");
  return out;
}

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> k{
      "data",        "delimiter",     "header",       "split",      "split_seed",
      "backbone",    "layers",        "loss",         "tau",        "beta",
      "alpha",       "slate_size",    "kappa_floor",  "dim",        "learning_rate",
      "weight_decay", "batch_size",   "epochs",       "patience",   "negatives",
      "eval_k",      "seed",          "log_interval", "write_manifest"};
  return k;
}

const std::vector<std::string>& ExperimentConfig::tunable_keys() {
  static const std::vector<std::string> k{"alpha", "beta", "learning_rate", "tau", "weight_decay"};
  return k;
}

DSLConfig ExperimentConfig::effective_dsl() const {
  DSLConfig c = dsl;
  c.kappa_enabled = loss == LossKind::DSL || loss == LossKind::DSLKappaOnly;
  c.ca_enabled = loss == LossKind::DSL || loss == LossKind::DSLCAOnly;
  return c;
}

void ExperimentConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  if (key.rfind("grid.", 0) == 0) {
    const std::string field = key.substr(5);
    const auto& tk = tunable_keys();
    if (std::find(tk.begin(), tk.end(), field) == tk.end()) {
      throw Error("'" + field + "' is not a tunable field");
    }
    grid[field] = parse_double_list(value);
    return;
  }
  if (key == "data") data_path = value;
  else if (key == "delimiter") { parse_delimiter(value); delimiter = value; }
  else if (key == "header") { parse_header_mode(value); header = value; }
  else if (key == "split") split = parse_split_kind(value);
  else if (key == "split_seed") split_seed = to_count(key, value);
  else if (key == "backbone") backbone = Backbone::parse(value, backbone.layers);
  else if (key == "layers") {
    backbone.layers = to_count(key, value);
    if (backbone.kind == BackboneKind::GraphConv && backbone.layers == 0) {
      throw Error("graphconv backbone needs at least one layer");
    }
  }
  else if (key == "loss") loss = parse_loss_kind(value);
  else if (key == "tau") dsl.tau = to_double(key, value);
  else if (key == "beta") dsl.beta = to_double(key, value);
  else if (key == "alpha") dsl.alpha = to_double(key, value);
  else if (key == "slate_size") dsl.slate_size = to_count(key, value);
  else if (key == "kappa_floor") dsl.kappa_floor = to_double(key, value);
  else if (key == "dim") dim = to_count(key, value);
  else if (key == "learning_rate" || key == "lr") learning_rate = to_double(key, value);
  else if (key == "weight_decay" || key == "wd") weight_decay = to_double(key, value);
  else if (key == "batch_size") batch_size = to_count(key, value);
  else if (key == "epochs") epochs = to_count(key, value);
  else if (key == "patience") patience = to_count(key, value);
  else if (key == "negatives") negatives = to_count(key, value);
  else if (key == "eval_k") eval_k = to_count(key, value);
  else if (key == "seed") seed = to_count(key, value);
  else if (key == "log_interval") log_interval = to_count(key, value);
  else if (key == "write_manifest") write_manifest = to_bool(key, value);
  else throw Error("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> e{
      {"data", data_path},
      {"delimiter", delimiter},
      {"header", header},
      {"split", to_string(split)},
      {"split_seed", std::to_string(split_seed)},
      {"backbone", backbone.name()},
      {"layers", std::to_string(backbone.layers)},
      {"loss", to_string(loss)},
      {"tau", format_double(dsl.tau)},
      {"beta", format_double(dsl.beta)},
      {"alpha", format_double(dsl.alpha)},
      {"slate_size", std::to_string(dsl.slate_size)},
      {"kappa_floor", format_double(dsl.kappa_floor)},
      {"dim", std::to_string(dim)},
      {"learning_rate", format_double(learning_rate)},
      {"weight_decay", format_double(weight_decay)},
      {"batch_size", std::to_string(batch_size)},
      {"epochs", std::to_string(epochs)},
      {"patience", std::to_string(patience)},
      {"negatives", std::to_string(negatives)},
      {"eval_k", std::to_string(eval_k)},
      {"seed", std::to_string(seed)},
      {"log_interval", std::to_string(log_interval)},
      {"write_manifest", write_manifest ? "1" : "0"},
  };
  for (const auto& [k, values] : grid) {
    std::string joined;
    for (std::size_t i = 0; i < values.size(); ++i) joined += (i ? "," : "") + format_double(values[i]);
    e.emplace_back("grid." + k, joined);
  }
  return e;
}

std::string ExperimentConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + "=" + v + "\n";
  return out;
}

void ExperimentConfig::validate() const {
  effective_dsl().validate();
  if (dim < 1) throw Error("dim must be at least 1");
  if (!(learning_rate >= 0.0)) throw Error("learning rate must be non-negative");
  if (!(weight_decay >= 0.0)) throw Error("weight decay must be non-negative");
  if (batch_size < 1) throw Error("batch size must be at least 1");
  if (negatives < 1) throw Error("negatives per positive must be at least 1");
  if (eval_k < 1) throw Error("eval_k must be at least 1");
  if (log_interval < 1) throw Error("log interval must be at least 1");
}

ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", line_no);
    base.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

void save_config_file(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write config file " + path.string());
  out << config.serialize();
}

}  // namespace dslrec
