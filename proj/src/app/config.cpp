#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pvt/app.hpp"
#include "pvt/errors.hpp"

namespace pvt::app {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view v) {
  Int out{};
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError("config key '" + std::string(key) + "': bad integer '" +
                      std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(std::string(v), &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + std::string(key) + "': bad number '" +
                    std::string(v) + "'");
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + std::string(key) + "': bad boolean '" +
                    std::string(v) + "'");
}

void set_key(PvtConfig& cfg, std::string_view key, std::string_view v) {
  if (key == "resolution" || key == "R") {
    cfg.resolution = parse_int<int>(key, v);
  } else if (key == "window" || key == "W") {
    cfg.window = parse_int<int>(key, v);
  } else if (key == "shift") {
    cfg.shift = parse_int<int>(key, v);
  } else if (key == "mask_wrapped") {
    cfg.mask_wrapped = parse_bool(key, v);
  } else if (key == "heads") {
    cfg.heads = parse_int<int>(key, v);
  } else if (key == "rpr_bins" || key == "L") {
    cfg.rpr_bins = parse_int<int>(key, v);
  } else if (key == "s_max") {
    cfg.s_max = parse_double(key, v);
  } else if (key == "ea_slots" || key == "S") {
    cfg.ea_slots = parse_int<std::size_t>(key, v);
  } else if (key == "mode") {
    if (v == "relative") {
      cfg.mode = PointAttentionMode::Relative;
    } else if (v == "external") {
      cfg.mode = PointAttentionMode::External;
    } else {
      throw ConfigError("config key 'mode': expected relative|external, got '" +
                        std::string(v) + "'");
    }
  } else if (key == "ra_cap") {
    cfg.ra_cap = parse_int<std::size_t>(key, v);
  } else if (key == "auto_external") {
    cfg.auto_external = parse_bool(key, v);
  } else if (key == "block_widths") {
    cfg.block_widths.clear();
    std::string_view rest = v;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      cfg.block_widths.push_back(
          parse_int<std::size_t>(key, trim(rest.substr(0, comma))));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
  } else if (key == "num_blocks") {
    const auto n = parse_int<std::size_t>(key, v);
    if (n == 0) throw ConfigError("num_blocks must be >= 1");
    cfg.block_widths.resize(n, cfg.block_widths.empty() ? 64 : cfg.block_widths.back());
  } else if (key == "lift_width") {
    cfg.lift_width = parse_int<std::size_t>(key, v);
  } else if (key == "mlp_ratio") {
    cfg.mlp_ratio = parse_int<std::size_t>(key, v);
  } else if (key == "devoxelize") {
    if (v == "trilinear") {
      cfg.devoxelize = DevoxelizeMode::Trilinear;
    } else if (v == "nearest") {
      cfg.devoxelize = DevoxelizeMode::Nearest;
    } else {
      throw ConfigError("config key 'devoxelize': expected trilinear|nearest");
    }
  } else if (key == "precision") {
    if (v == "f64") {
      cfg.precision = Precision::F64;
    } else if (v == "f32") {
      cfg.precision = Precision::F32;
    } else {
      throw ConfigError("config key 'precision': expected f32|f64");
    }
  } else if (key == "conv_kernel" || key == "k") {
    cfg.conv_kernel = parse_int<int>(key, v);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

}  // namespace

void apply_override(PvtConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  }
  set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

PvtConfig parse_config_text(std::string_view text, PvtConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    try {
      apply_override(base, body);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

PvtConfig load_config_file(const std::filesystem::path& path, PvtConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

std::string config_to_json(const PvtConfig& cfg) {
  nlohmann::ordered_json j;
  j["resolution"] = cfg.resolution;
  j["window"] = cfg.window;
  j["shift"] = cfg.effective_shift();
  j["mask_wrapped"] = cfg.mask_wrapped;
  j["heads"] = cfg.heads;
  j["rpr_bins"] = cfg.rpr_bins;
  j["s_max"] = cfg.s_max;
  j["ea_slots"] = cfg.ea_slots;
  j["mode"] = cfg.mode == PointAttentionMode::Relative ? "relative" : "external";
  j["ra_cap"] = cfg.ra_cap;
  j["auto_external"] = cfg.auto_external;
  j["block_widths"] = cfg.block_widths;
  j["lift_width"] = cfg.lift_width;
  j["mlp_ratio"] = cfg.mlp_ratio;
  j["devoxelize"] = cfg.devoxelize == DevoxelizeMode::Trilinear ? "trilinear" : "nearest";
  j["precision"] = cfg.precision == Precision::F64 ? "f64" : "f32";
  j["conv_kernel"] = cfg.conv_kernel;
  return j.dump();
}

}  // namespace pvt::app
