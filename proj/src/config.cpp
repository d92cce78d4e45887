// Copyright (c) 2026 The qvdit authors
// SPDX-License-Identifier: Apache-2.0
#include "qvdit/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "qvdit/errors.hpp"

namespace qvdit {

namespace pt = boost::property_tree;

namespace {

constexpr std::string_view kLayersPrefix = "layers.";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_integer(const std::string& text, const std::string& field) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError(fmt::format("{}: '{}' is not a valid integer", field, text));
  return value;
}

double parse_double(const std::string& text, const std::string& field) {
  std::istringstream in(text);
  in.imbue(std::locale::classic());
  double value = 0.0;
  in >> value;
  if (in.fail() || !in.eof()) throw ConfigError(fmt::format("{}: '{}' is not a valid number", field, text));
  return value;
}

bool parse_bool(const std::string& text, const std::string& field) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", field, text));
}

std::size_t parse_size(const std::string& text, const std::string& field) {
  return parse_integer<std::size_t>(text, field);
}

class SectionReader {
 public:
  SectionReader(const pt::ptree* tree, std::string name, std::set<std::string> allowed)
      : tree_(tree), name_(std::move(name)) {
    if (tree_ == nullptr) return;
    for (const auto& [key, child] : *tree_) {
      if (!child.empty()) throw ConfigError(fmt::format("[{}] {}: nested keys are not supported", name_, key));
      if (!allowed.contains(key)) throw ConfigError(fmt::format("{}.{}: unknown key", name_, key));
    }
  }

  // Keys are looked up with a separator that cannot occur in them, since
  // ptree would otherwise split on '.'.
  template <typename Fn>
  void read(const std::string& key, Fn&& apply) const {
    if (tree_ == nullptr) return;
    if (auto v = tree_->get_optional<std::string>(pt::ptree::path_type(key, '\x1f'))) {
      apply(trim(*v), name_ + "." + key);
    }
  }

 private:
  const pt::ptree* tree_;
  std::string name_;
};

const pt::ptree* section(const pt::ptree& root, const std::string& name) {
  auto it = root.find(name);
  return it == root.not_found() ? nullptr : &it->second;
}

void apply_override(pt::ptree& root, const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos) throw ConfigError(fmt::format("override '{}': expected section.key=value", item));
  const std::string lhs = trim(std::string_view(item).substr(0, eq));
  const std::string value = trim(std::string_view(item).substr(eq + 1));
  const auto dot = lhs.rfind('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == lhs.size()) {
    throw ConfigError(fmt::format("override '{}': expected section.key=value", item));
  }
  const std::string sec = lhs.substr(0, dot);
  const std::string key = lhs.substr(dot + 1);
  auto found = root.find(sec);
  pt::ptree& target = found == root.not_found() ? root.push_back({sec, pt::ptree{}})->second : found->second;
  target.put(pt::ptree::path_type(key, '\x1f'), value);
}

RunConfig from_tree(const pt::ptree& root) {
  static const std::set<std::string> known_sections = {"run", "model", "data", "eval", "calib"};
  for (const auto& [name, child] : root) {
    if (child.empty() && !child.data().empty()) {
      throw ConfigError(fmt::format("{}: key outside any section", name));
    }
    if (!known_sections.contains(name) && !name.starts_with(kLayersPrefix)) {
      throw ConfigError(fmt::format("[{}]: unknown section", name));
    }
  }

  RunConfig cfg;
  SectionReader run(section(root, "run"), "run", {"seed"});
  run.read("seed", [&](const std::string& v, const std::string& f) { cfg.seed = parse_integer<std::uint64_t>(v, f); });

  SectionReader model(section(root, "model"), "model", {"layers", "hidden", "spatial", "frames", "kind"});
  model.read("layers", [&](const std::string& v, const std::string& f) { cfg.model.layers = parse_size(v, f); });
  model.read("hidden", [&](const std::string& v, const std::string& f) { cfg.model.hidden = parse_size(v, f); });
  model.read("spatial",
             [&](const std::string& v, const std::string& f) { cfg.model.layout.spatial = parse_size(v, f); });
  model.read("frames", [&](const std::string& v, const std::string& f) { cfg.model.layout.frames = parse_size(v, f); });
  model.read("kind", [&](const std::string& v, const std::string& f) {
    try {
      cfg.model.kind = block_kind_from_string(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fmt::format("{}: {}", f, e.what()));
    }
  });

  auto read_data = [&](const char* name, DataConfig& d) {
    SectionReader r(section(root, name), name, {"prompts", "timesteps", "frame_step"});
    r.read("prompts", [&](const std::string& v, const std::string& f) { d.prompts = parse_size(v, f); });
    r.read("timesteps", [&](const std::string& v, const std::string& f) { d.timesteps = parse_size(v, f); });
    r.read("frame_step", [&](const std::string& v, const std::string& f) { d.frame_step = parse_double(v, f); });
    if (d.prompts == 0) throw ConfigError(fmt::format("{}.prompts: must be >= 1", name));
    if (d.timesteps == 0) throw ConfigError(fmt::format("{}.timesteps: must be >= 1", name));
    if (!(d.frame_step >= 0.0)) throw ConfigError(fmt::format("{}.frame_step: must be >= 0", name));
  };
  read_data("data", cfg.data);
  read_data("eval", cfg.eval);

  CalibConfig& c = cfg.calib;
  SectionReader calib(section(root, "calib"), "calib",
                      {"w_bits", "a_bits", "gamma", "iters", "batch", "lr_quant", "lr_tqe", "enable_tqe",
                       "enable_tmd", "use_m", "freeze_m", "loss_point"});
  calib.read("w_bits", [&](const std::string& v, const std::string& f) { c.w_bits = parse_integer<int>(v, f); });
  calib.read("a_bits", [&](const std::string& v, const std::string& f) { c.a_bits = parse_integer<int>(v, f); });
  calib.read("gamma", [&](const std::string& v, const std::string& f) { c.gamma = parse_double(v, f); });
  c.iters = default_iterations(c.w_bits);
  calib.read("iters", [&](const std::string& v, const std::string& f) { c.iters = parse_size(v, f); });
  calib.read("batch", [&](const std::string& v, const std::string& f) { c.batch = parse_size(v, f); });
  calib.read("lr_quant", [&](const std::string& v, const std::string& f) { c.lr_quant = parse_double(v, f); });
  calib.read("lr_tqe", [&](const std::string& v, const std::string& f) { c.lr_tqe = parse_double(v, f); });
  calib.read("enable_tqe", [&](const std::string& v, const std::string& f) { c.enable_tqe = parse_bool(v, f); });
  calib.read("enable_tmd", [&](const std::string& v, const std::string& f) { c.enable_tmd = parse_bool(v, f); });
  calib.read("use_m", [&](const std::string& v, const std::string& f) { c.use_m = parse_bool(v, f); });
  calib.read("freeze_m", [&](const std::string& v, const std::string& f) { c.freeze_m = parse_bool(v, f); });
  calib.read("loss_point", [&](const std::string& v, const std::string& f) {
    try {
      c.loss_point = loss_point_from_string(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fmt::format("{}: {}", f, e.what()));
    }
  });

  for (const auto& [name, child] : root) {
    if (!name.starts_with(kLayersPrefix)) continue;
    const std::string layer = name.substr(kLayersPrefix.size());
    if (layer.empty()) throw ConfigError(fmt::format("[{}]: missing layer name", name));
    SectionReader r(&child, name, {"w_bits", "a_bits", "tqe"});
    LayerOverride& o = c.layer_overrides[layer];
    r.read("w_bits", [&](const std::string& v, const std::string& f) { o.w_bits = parse_integer<int>(v, f); });
    r.read("a_bits", [&](const std::string& v, const std::string& f) { o.a_bits = parse_integer<int>(v, f); });
    r.read("tqe", [&](const std::string& v, const std::string& f) { o.tqe = parse_bool(v, f); });
  }

  cfg.apply_seed(cfg.seed);
  try {
    cfg.model.validate();
  } catch (const std::exception& e) {
    throw ConfigError(fmt::format("model: {}", e.what()));
  }
  c.validate();
  if (c.batch < 1) throw ConfigError("calib.batch: must be >= 1");
  return cfg;
}

}  // namespace

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  model.seed = s;
  calib.seed = s;
}

RunConfig default_run_config() { return parse_config(""); }

RunConfig parse_config(std::string_view text, const std::vector<std::string>& overrides, std::string_view origin) {
  pt::ptree root;
  std::istringstream in{std::string(text)};
  try {
    pt::ini_parser::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}:{}: {}", origin, e.line(), e.message()));
  }
  for (const std::string& item : overrides) apply_override(root, item);
  return from_tree(root);
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read config file '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str(), overrides, path.string());
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.starts_with(path.string())) throw;
    throw ConfigError(fmt::format("{}: {}", path.string(), what));
  }
}

std::string to_ini(const RunConfig& cfg) {
  std::string out;
  auto line = [&](std::string_view key, const auto& value) { out += fmt::format("{} = {}\n", key, value); };
  auto real = [&](std::string_view key, double value) { out += fmt::format("{} = {:.17g}\n", key, value); };
  auto flag = [&](std::string_view key, bool value) { line(key, value ? "true" : "false"); };

  out += "[run]\n";
  line("seed", cfg.seed);
  out += "\n[model]\n";
  line("layers", cfg.model.layers);
  line("hidden", cfg.model.hidden);
  line("spatial", cfg.model.layout.spatial);
  line("frames", cfg.model.layout.frames);
  line("kind", to_string(cfg.model.kind));
  for (const auto& [name, d] : {std::pair{"data", cfg.data}, std::pair{"eval", cfg.eval}}) {
    out += fmt::format("\n[{}]\n", name);
    line("prompts", d.prompts);
    line("timesteps", d.timesteps);
    real("frame_step", d.frame_step);
  }
  const CalibConfig& c = cfg.calib;
  out += "\n[calib]\n";
  line("w_bits", c.w_bits);
  line("a_bits", c.a_bits);
  real("gamma", c.gamma);
  line("iters", c.iters);
  line("batch", c.batch);
  real("lr_quant", c.lr_quant);
  real("lr_tqe", c.lr_tqe);
  flag("enable_tqe", c.enable_tqe);
  flag("enable_tmd", c.enable_tmd);
  flag("use_m", c.use_m);
  flag("freeze_m", c.freeze_m);
  line("loss_point", to_string(c.loss_point));
  for (const auto& [name, o] : c.layer_overrides) {
    out += fmt::format("\n[layers.{}]\n", name);
    if (o.w_bits) line("w_bits", *o.w_bits);
    if (o.a_bits) line("a_bits", *o.a_bits);
    if (o.tqe) flag("tqe", *o.tqe);
  }
  return out;
}

std::vector<Tensor> make_calib_set(const RunConfig& cfg) {
  Rng rng = Rng(cfg.seed).fork(1);
  return make_calibration_set(rng, cfg.model.layout, cfg.model.hidden, cfg.data.prompts, cfg.data.timesteps,
                              cfg.data.frame_step);
}

std::vector<Tensor> make_eval_set(const RunConfig& cfg) {
  Rng rng = Rng(cfg.seed).fork(2);
  return make_calibration_set(rng, cfg.model.layout, cfg.model.hidden, cfg.eval.prompts, cfg.eval.timesteps,
                              cfg.eval.frame_step);
}

}  // namespace qvdit
