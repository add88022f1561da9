#include "mesr/config.hpp"

#include "mesr/errors.hpp"
#include "mesr/units.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mesr {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Equality
// ---------------------------------------------------------------------------

bool operator==(const PeakModel& a, const PeakModel& b) {
  return a.label == b.label && a.b_m_mT == b.b_m_mT && a.b_f_mT == b.b_f_mT && a.gamma_MHz == b.gamma_MHz &&
         a.g_c_MHz == b.g_c_MHz && a.gradient_MHz_per_mT == b.gradient_MHz_per_mT;
}

bool operator==(const ModeRegion& a, const ModeRegion& b) {
  return a.label == b.label && a.euler == b.euler && a.area_um2 == b.area_um2 && a.bmw_axes == b.bmw_axes;
}

bool operator==(const SpinSystem& a, const SpinSystem& b) {
  return a.spin == b.spin && a.g == b.g && a.cf == b.cf && a.site_rotations_deg == b.site_rotations_deg &&
         a.ensemble_n == b.ensemble_n;
}

bool operator==(const ResonatorSpec& a, const ResonatorSpec& b) {
  return a.f_r_GHz == b.f_r_GHz && a.kappa_MHz == b.kappa_MHz && a.q_i == b.q_i && a.q_c == b.q_c;
}

bool operator==(const FitConfig& a, const FitConfig& b) {
  return a.kappa_fixed == b.kappa_fixed && a.gamma_min_MHz == b.gamma_min_MHz && a.gamma_max_MHz == b.gamma_max_MHz &&
         a.g_c_min_MHz == b.g_c_min_MHz && a.g_c_max_MHz == b.g_c_max_MHz &&
         a.max_iterations == b.max_iterations && a.seeds == b.seeds;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return a.schema_version == b.schema_version && a.spin_system == b.spin_system && a.resonator == b.resonator &&
         a.regions == b.regions && a.rotation_sense == b.rotation_sense && a.sweep == b.sweep &&
         a.search == b.search && a.temperature_K == b.temperature_K && a.render == b.render && a.fit == b.fit &&
         a.threads == b.threads;
}

// ---------------------------------------------------------------------------
// Derived settings
// ---------------------------------------------------------------------------

OrientationSettings RunConfig::orientation_settings() const {
  OrientationSettings s;
  s.range = {sweep.field_start_mT, sweep.field_stop_mT};
  s.search.grid_step_mT = sweep.field_step_mT;
  s.search.tolerance_MHz = search.tolerance_MHz;
  s.search.gradient_step_mT = search.gradient_step_mT;
  s.search.merge_window_mT = search.merge_window_mT;
  s.temperature_K = temperature_K;
  s.sense = rotation_sense;
  return s;
}

SimulationSettings RunConfig::simulation_settings() const {
  SimulationSettings s;
  s.orientation = orientation_settings();
  s.render_linewidth_MHz = render.linewidth_MHz;
  s.threads = threads;
  return s;
}

FitOptions RunConfig::fit_options() const {
  FitOptions o;
  o.kappa_MHz = resonator.kappa_MHz;
  o.f_r_GHz = resonator.f_r_GHz;
  o.gamma_min_MHz = fit.gamma_min_MHz;
  o.gamma_max_MHz = fit.gamma_max_MHz;
  o.g_c_min_MHz = fit.g_c_min_MHz;
  o.g_c_max_MHz = fit.g_c_max_MHz;
  o.fit_kappa = !fit.kappa_fixed;
  o.solver.max_iterations = fit.max_iterations;
  return o;
}

std::vector<LabOrientation> RunConfig::orientations() const {
  return sweep_orientations(sweep.theta_start_deg, sweep.theta_stop_deg, sweep.theta_step_deg);
}

std::vector<double> RunConfig::field_axis() const {
  return make_axis(sweep.field_start_mT, sweep.field_stop_mT, sweep.field_step_mT);
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace {

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string child(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

std::string element(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

/// Reads one JSON object, remembering which keys were consumed.
class Section {
 public:
  Section(const json* node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_->is_object()) throw ConfigError(label() + ": expected an object");
  }

  const std::string& path() const { return path_; }
  bool present() const { return node_ != nullptr; }

  bool has(const std::string& key) const { return node_ && node_->contains(key); }

  const json* raw(const std::string& key) {
    allowed_.insert(key);
    if (!node_) return nullptr;
    auto it = node_->find(key);
    return it == node_->end() ? nullptr : &*it;
  }

  Section section(const std::string& key) { return Section(raw(key), child(path_, key)); }

  double number(const std::string& key, double fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    return as_number(*v, child(path_, key));
  }

  std::optional<double> optional_number(const std::string& key) {
    const json* v = raw(key);
    if (!v || v->is_null()) return std::nullopt;
    return as_number(*v, child(path_, key));
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(child(path_, key) + ": expected true or false");
    return v->get<bool>();
  }

  std::string text(const std::string& key, const std::string& fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(child(path_, key) + ": expected a string");
    return v->get<std::string>();
  }

  int integer(const std::string& key, int fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    const double d = as_number(*v, child(path_, key));
    if (d != std::floor(d) || std::abs(d) > 1e9) throw ConfigError(child(path_, key) + ": expected an integer");
    return static_cast<int>(d);
  }

  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) {
    const json* v = raw(key);
    if (!v) return fallback;
    const std::string p = child(path_, key);
    if (!v->is_array()) throw ConfigError(p + ": expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) out.push_back(as_number((*v)[i], element(p, i)));
    return out;
  }

  /// Throws on any key not requested through this reader.
  void reject_unknown() const {
    if (!node_) return;
    for (auto it = node_->begin(); it != node_->end(); ++it) {
      if (!allowed_.count(it.key())) throw ConfigError(child(path_, it.key()) + ": unknown key");
    }
  }

  static double as_number(const json& v, const std::string& p) {
    if (!v.is_number()) throw ConfigError(p + ": expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(p + ": must be finite");
    return d;
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json* node_;
  std::string path_;
  std::set<std::string> allowed_;
};

void require_positive(double v, const std::string& path) {
  if (!(v > 0.0)) throw ConfigError(path + ": must be positive");
}

void require_non_negative(double v, const std::string& path) {
  if (!(v >= 0.0)) throw ConfigError(path + ": must be non-negative");
}

Vec3 read_vec3(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) throw ConfigError(path + ": expected three numbers");
  return {Section::as_number(v[0], element(path, 0)), Section::as_number(v[1], element(path, 1)),
          Section::as_number(v[2], element(path, 2))};
}

void collect_missing(const json& root, std::vector<std::string>& missing) {
  static const char* const required[] = {"spin_system.S",       "spin_system.g",       "spin_system.b.b20",
                                         "spin_system.b.b40",   "spin_system.b.b60",   "spin_system.b.b43",
                                         "spin_system.b.b66",   "resonator.f_r"};
  for (const char* name : required) {
    const json* node = &root;
    std::string_view rest = name;
    bool found = true;
    while (found && !rest.empty()) {
      const std::size_t dot = rest.find('.');
      const std::string key(rest.substr(0, dot));
      rest = dot == std::string_view::npos ? std::string_view{} : rest.substr(dot + 1);
      found = node->is_object() && node->contains(key);
      if (found) node = &(*node)[key];
    }
    if (!found) missing.emplace_back(name);
  }
}

SpinSystem read_spin_system(Section s) {
  SpinSystem sys;
  const std::string p = s.path();
  const double spin = s.number("S", 3.5);
  try {
    sys.spin = SpinQuantumNumber::from_value(spin);
  } catch (const std::exception&) {
    throw ConfigError(p + ".S: must be a positive multiple of 1/2");
  }
  sys.g = s.number("g", 2.0);
  require_positive(sys.g, p + ".g");

  Section b = s.section("b");
  sys.cf.b20 = b.number("b20", 0.0);
  sys.cf.b40 = b.number("b40", 0.0);
  sys.cf.b60 = b.number("b60", 0.0);
  sys.cf.b43 = b.number("b43", 0.0);
  sys.cf.b63 = b.number("b63", 0.0);
  sys.cf.b66 = b.number("b66", 0.0);
  b.reject_unknown();

  sys.site_rotations_deg = s.numbers("sites", {0.0});
  if (sys.site_rotations_deg.empty()) throw ConfigError(p + ".sites: at least one site is required");
  sys.ensemble_n = s.optional_number("ensemble_n");
  if (sys.ensemble_n) require_positive(*sys.ensemble_n, p + ".ensemble_n");
  s.reject_unknown();
  sys.validate();
  return sys;
}

ResonatorSpec read_resonator(Section s) {
  ResonatorSpec r;
  const std::string p = s.path();
  r.f_r_GHz = s.number("f_r", r.f_r_GHz);
  require_positive(r.f_r_GHz, p + ".f_r");
  r.kappa_MHz = s.number("kappa", r.kappa_MHz);
  require_positive(r.kappa_MHz, p + ".kappa");
  r.q_i = s.optional_number("q_i");
  if (r.q_i) require_positive(*r.q_i, p + ".q_i");
  r.q_c = s.optional_number("q_c");
  if (r.q_c) require_positive(*r.q_c, p + ".q_c");
  s.reject_unknown();
  return r;
}

ModeRegion read_region(const json& node, const std::string& p) {
  Section s(&node, p);
  ModeRegion r;
  const json* label = s.raw("label");
  if (!label) throw ConfigError(p + ".label: required");
  if (!label->is_string()) throw ConfigError(p + ".label: expected a string");
  try {
    r.label = mode_from_string(label->get<std::string>());
  } catch (const ConfigError& e) {
    throw ConfigError(p + ".label: " + e.what());
  }
  const json* euler = s.raw("euler");
  if (!euler) throw ConfigError(p + ".euler: required");
  const Vec3 e = read_vec3(*euler, p + ".euler");
  r.euler = EulerAngles{e[0], e[1], e[2]}.normalized();
  const json* area = s.raw("area");
  if (!area) throw ConfigError(p + ".area: required");
  r.area_um2 = Section::as_number(*area, p + ".area");
  require_positive(r.area_um2, p + ".area");
  const json* axes = s.raw("bmw_axes");
  if (!axes) throw ConfigError(p + ".bmw_axes: required");
  if (!axes->is_array() || axes->empty()) throw ConfigError(p + ".bmw_axes: expected a non-empty array");
  for (std::size_t i = 0; i < axes->size(); ++i) {
    const std::string ap = element(p + ".bmw_axes", i);
    const Vec3 v = read_vec3((*axes)[i], ap);
    if (!(v.norm() > 0.0)) throw ConfigError(ap + ": zero vector");
    const Vec3 unit = v.normalized();
    // Re-normalizing a normalized vector can move the last bit; keep the already-unit input exactly.
    r.bmw_axes.push_back(std::abs(v.norm() - 1.0) <= 1e-15 ? v : unit);
  }
  s.reject_unknown();
  r.validate();
  return r;
}

PeakModel read_seed(const json& node, const std::string& p, double default_gradient) {
  Section s(&node, p);
  PeakModel m;
  m.label = s.text("label", "");
  const json* bm = s.raw("b_m");
  if (!bm) throw ConfigError(p + ".b_m: required");
  m.b_m_mT = Section::as_number(*bm, p + ".b_m");
  m.b_f_mT = *m.b_m_mT;
  m.gamma_MHz = s.number("gamma", m.gamma_MHz);
  require_positive(m.gamma_MHz, p + ".gamma");
  m.g_c_MHz = s.number("g_c", m.g_c_MHz);
  require_non_negative(m.g_c_MHz, p + ".g_c");
  m.gradient_MHz_per_mT = s.number("gradient", default_gradient);
  if (!(m.gradient_MHz_per_mT != 0.0)) throw ConfigError(p + ".gradient: must be nonzero");
  s.reject_unknown();
  return m;
}

EdgeKernel kernel_from_string(const std::string& s, const std::string& p) {
  if (s == "central_difference") return EdgeKernel::central_difference;
  if (s == "gradient_magnitude") return EdgeKernel::gradient_magnitude;
  throw ConfigError(p + ": expected central_difference or gradient_magnitude");
}

std::string_view kernel_name(EdgeKernel k) {
  return k == EdgeKernel::central_difference ? "central_difference" : "gradient_magnitude";
}

RunConfig from_json(const json& root) {
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  std::vector<std::string> missing;
  collect_missing(root, missing);
  if (!missing.empty()) throw ConfigError("missing required keys: " + join(missing, ", "));

  Section top(&root, "");
  RunConfig cfg;
  cfg.schema_version = top.integer("schema_version", kConfigSchemaVersion);
  if (cfg.schema_version != kConfigSchemaVersion)
    throw ConfigError("schema_version: unsupported version " + std::to_string(cfg.schema_version));

  cfg.spin_system = read_spin_system(top.section("spin_system"));
  cfg.resonator = read_resonator(top.section("resonator"));

  {
    Section g = top.section("geometry");
    const std::string sense = g.text("rotation_sense", "+y");
    if (sense == "+y") {
      cfg.rotation_sense = RotationSense::toward_plus_y;
    } else if (sense == "-y") {
      cfg.rotation_sense = RotationSense::toward_minus_y;
    } else {
      throw ConfigError("geometry.rotation_sense: expected \"+y\" or \"-y\"");
    }
    const json* regions = g.raw("regions");
    if (!regions) {
      cfg.regions = {ModeRegion::default_perpendicular(), ModeRegion::default_parallel()};
    } else {
      if (!regions->is_array()) throw ConfigError("geometry.regions: expected an array");
      for (std::size_t i = 0; i < regions->size(); ++i)
        cfg.regions.push_back(read_region((*regions)[i], element("geometry.regions", i)));
    }
    g.reject_unknown();
  }

  {
    Section sw = top.section("sweep");
    Section th = sw.section("theta");
    cfg.sweep.theta_start_deg = th.number("start", cfg.sweep.theta_start_deg);
    cfg.sweep.theta_stop_deg = th.number("stop", cfg.sweep.theta_stop_deg);
    cfg.sweep.theta_step_deg = th.number("step", cfg.sweep.theta_step_deg);
    th.reject_unknown();
    require_positive(cfg.sweep.theta_step_deg, "sweep.theta.step");
    if (!(cfg.sweep.theta_stop_deg > cfg.sweep.theta_start_deg))
      throw ConfigError("sweep.theta.stop: must exceed sweep.theta.start");
    Section f = sw.section("field");
    cfg.sweep.field_start_mT = f.number("start", cfg.sweep.field_start_mT);
    cfg.sweep.field_stop_mT = f.number("stop", cfg.sweep.field_stop_mT);
    cfg.sweep.field_step_mT = f.number("step", cfg.sweep.field_step_mT);
    f.reject_unknown();
    require_non_negative(cfg.sweep.field_start_mT, "sweep.field.start");
    require_positive(cfg.sweep.field_step_mT, "sweep.field.step");
    if (!(cfg.sweep.field_stop_mT > cfg.sweep.field_start_mT))
      throw ConfigError("sweep.field.stop: must exceed sweep.field.start");
    sw.reject_unknown();
  }

  {
    Section s = top.section("search");
    cfg.search.tolerance_MHz = s.number("tolerance", cfg.search.tolerance_MHz);
    require_positive(cfg.search.tolerance_MHz, "search.tolerance");
    cfg.search.gradient_step_mT = s.number("gradient_step", cfg.search.gradient_step_mT);
    require_positive(cfg.search.gradient_step_mT, "search.gradient_step");
    cfg.search.merge_window_mT = s.number("merge_window", cfg.search.merge_window_mT);
    require_non_negative(cfg.search.merge_window_mT, "search.merge_window");
    s.reject_unknown();
  }

  {
    Section s = top.section("population");
    cfg.temperature_K = s.number("temperature", cfg.temperature_K);
    require_positive(cfg.temperature_K, "population.temperature");
    s.reject_unknown();
  }

  {
    Section r = top.section("render");
    cfg.render.linewidth_MHz = r.number("linewidth", cfg.render.linewidth_MHz);
    require_positive(cfg.render.linewidth_MHz, "render.linewidth");
    cfg.render.filter = r.boolean("filter", cfg.render.filter);
    cfg.render.filter_kernel =
        kernel_from_string(r.text("filter_kernel", std::string(kernel_name(cfg.render.filter_kernel))),
                           "render.filter_kernel");
    cfg.render.filter_log_scale = r.boolean("filter_log_scale", cfg.render.filter_log_scale);
    Section svg = r.section("svg");
    cfg.render.svg.width = svg.integer("width", cfg.render.svg.width);
    cfg.render.svg.height = svg.integer("height", cfg.render.svg.height);
    cfg.render.svg.colormap = svg.text("colormap", cfg.render.svg.colormap);
    cfg.render.svg.max_rows = svg.integer("max_rows", cfg.render.svg.max_rows);
    svg.reject_unknown();
    if (cfg.render.svg.width < 100 || cfg.render.svg.height < 100)
      throw ConfigError("render.svg: width and height must be at least 100");
    if (cfg.render.svg.colormap != "viridis" && cfg.render.svg.colormap != "gray")
      throw ConfigError("render.svg.colormap: expected viridis or gray");
    if (cfg.render.svg.max_rows < 2) throw ConfigError("render.svg.max_rows: must be at least 2");
    r.reject_unknown();
  }

  {
    Section f = top.section("fit");
    cfg.fit.kappa_fixed = f.boolean("kappa_fixed", cfg.fit.kappa_fixed);
    const auto gb = f.numbers("gamma_bounds", {cfg.fit.gamma_min_MHz, cfg.fit.gamma_max_MHz});
    if (gb.size() != 2 || !(gb[0] > 0.0) || !(gb[1] > gb[0]))
      throw ConfigError("fit.gamma_bounds: expected [min, max] with 0 < min < max");
    cfg.fit.gamma_min_MHz = gb[0];
    cfg.fit.gamma_max_MHz = gb[1];
    const auto cb = f.numbers("g_c_bounds", {cfg.fit.g_c_min_MHz, cfg.fit.g_c_max_MHz});
    if (cb.size() != 2 || !(cb[0] >= 0.0) || !(cb[1] > cb[0]))
      throw ConfigError("fit.g_c_bounds: expected [min, max] with 0 <= min < max");
    cfg.fit.g_c_min_MHz = cb[0];
    cfg.fit.g_c_max_MHz = cb[1];
    cfg.fit.max_iterations = f.integer("max_iterations", cfg.fit.max_iterations);
    if (cfg.fit.max_iterations < 1) throw ConfigError("fit.max_iterations: must be at least 1");
    const double default_gradient = cfg.spin_system.g * units::kBohrMagnetonMHzPerMilliTesla;
    if (const json* seeds = f.raw("seeds")) {
      if (!seeds->is_array()) throw ConfigError("fit.seeds: expected an array");
      for (std::size_t i = 0; i < seeds->size(); ++i)
        cfg.fit.seeds.push_back(read_seed((*seeds)[i], element("fit.seeds", i), default_gradient));
    }
    f.reject_unknown();
  }

  {
    Section r = top.section("runtime");
    const int threads = r.integer("threads", static_cast<int>(cfg.threads));
    if (threads < 1) throw ConfigError("runtime.threads: must be at least 1");
    cfg.threads = static_cast<unsigned>(threads);
    r.reject_unknown();
  }

  top.reject_unknown();
  return cfg;
}

/// Splits "a.b[2].c" into object keys and array indices.
struct PathStep {
  std::string key;
  std::optional<std::size_t> index;
};

std::vector<PathStep> split_path(const std::string& path) {
  std::vector<PathStep> steps;
  std::size_t i = 0;
  while (i < path.size()) {
    std::size_t end = path.find_first_of(".[", i);
    if (end == std::string::npos) end = path.size();
    const std::string key = path.substr(i, end - i);
    if (key.empty()) throw ConfigError("--set: malformed key path '" + path + "'");
    steps.push_back({key, std::nullopt});
    i = end;
    while (i < path.size() && path[i] == '[') {
      const std::size_t close = path.find(']', i);
      if (close == std::string::npos) throw ConfigError("--set: unterminated index in '" + path + "'");
      const std::string digits = path.substr(i + 1, close - i - 1);
      if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
        throw ConfigError("--set: bad index in '" + path + "'");
      steps.push_back({"", static_cast<std::size_t>(std::stoul(digits))});
      i = close + 1;
    }
    if (i < path.size()) {
      if (path[i] != '.') throw ConfigError("--set: malformed key path '" + path + "'");
      ++i;
    }
  }
  if (steps.empty()) throw ConfigError("--set: empty key path");
  return steps;
}

void apply_override(json& root, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("--set: expected key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &root;
  for (const PathStep& step : split_path(path)) {
    if (step.index) {
      if (!node->is_array()) throw ConfigError("--set " + path + ": not an array");
      if (*step.index > node->size()) throw ConfigError("--set " + path + ": index out of range");
      if (*step.index == node->size()) node->push_back(json::object());
      node = &(*node)[*step.index];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) throw ConfigError("--set " + path + ": '" + step.key + "' is not inside an object");
      node = &(*node)[step.key];
    }
  }
  *node = std::move(value);
}

nlohmann::ordered_json axes_json(const std::vector<Vec3>& axes) {
  auto out = nlohmann::ordered_json::array();
  for (const Vec3& v : axes) out.push_back({v.x(), v.y(), v.z()});
  return out;
}

}  // namespace

RunConfig parse_config_text(std::string_view text, const std::vector<std::string>& overrides) {
  json root;
  if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) {
    root = json::object();
  } else {
    try {
      root = json::parse(text.begin(), text.end(), nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }
  for (const std::string& o : overrides) apply_override(root, o);
  return from_json(root);
}

RunConfig parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("error reading config '" + path.string() + "'");
  return parse_config_text(buf.str(), overrides);
}

std::string echo_config(const RunConfig& cfg) {
  ordered_json root;
  root["schema_version"] = cfg.schema_version;

  const SpinSystem& s = cfg.spin_system;
  ordered_json spin = {{"S", s.spin.value()},
               {"g", s.g},
               {"b",
                {{"b20", s.cf.b20},
                 {"b40", s.cf.b40},
                 {"b60", s.cf.b60},
                 {"b43", s.cf.b43},
                 {"b63", s.cf.b63},
                 {"b66", s.cf.b66}}},
               {"sites", s.site_rotations_deg}};
  if (s.ensemble_n) spin["ensemble_n"] = *s.ensemble_n;
  root["spin_system"] = spin;

  ordered_json res = {{"f_r", cfg.resonator.f_r_GHz}, {"kappa", cfg.resonator.kappa_MHz}};
  if (cfg.resonator.q_i) res["q_i"] = *cfg.resonator.q_i;
  if (cfg.resonator.q_c) res["q_c"] = *cfg.resonator.q_c;
  root["resonator"] = res;

  ordered_json regions = ordered_json::array();
  for (const ModeRegion& r : cfg.regions)
    regions.push_back({{"label", std::string(to_string(r.label))},
                       {"euler", {r.euler.alpha, r.euler.beta, r.euler.gamma}},
                       {"area", r.area_um2},
                       {"bmw_axes", axes_json(r.bmw_axes)}});
  root["geometry"] = {{"rotation_sense", cfg.rotation_sense == RotationSense::toward_plus_y ? "+y" : "-y"},
                      {"regions", regions}};

  root["sweep"] = {
      {"theta",
       {{"start", cfg.sweep.theta_start_deg}, {"stop", cfg.sweep.theta_stop_deg}, {"step", cfg.sweep.theta_step_deg}}},
      {"field",
       {{"start", cfg.sweep.field_start_mT}, {"stop", cfg.sweep.field_stop_mT}, {"step", cfg.sweep.field_step_mT}}}};
  root["search"] = {{"tolerance", cfg.search.tolerance_MHz},
                    {"gradient_step", cfg.search.gradient_step_mT},
                    {"merge_window", cfg.search.merge_window_mT}};
  root["population"] = {{"temperature", cfg.temperature_K}};
  root["render"] = {{"linewidth", cfg.render.linewidth_MHz},
                    {"filter", cfg.render.filter},
                    {"filter_kernel", std::string(kernel_name(cfg.render.filter_kernel))},
                    {"filter_log_scale", cfg.render.filter_log_scale},
                    {"svg",
                     {{"width", cfg.render.svg.width},
                      {"height", cfg.render.svg.height},
                      {"colormap", cfg.render.svg.colormap},
                      {"max_rows", cfg.render.svg.max_rows}}}};

  ordered_json seeds = ordered_json::array();
  for (const PeakModel& p : cfg.fit.seeds)
    seeds.push_back({{"label", p.label},
                     {"b_m", p.b_m_mT.value_or(p.b_f_mT)},
                     {"gamma", p.gamma_MHz},
                     {"g_c", p.g_c_MHz},
                     {"gradient", p.gradient_MHz_per_mT}});
  root["fit"] = {{"kappa_fixed", cfg.fit.kappa_fixed},
                 {"gamma_bounds", {cfg.fit.gamma_min_MHz, cfg.fit.gamma_max_MHz}},
                 {"g_c_bounds", {cfg.fit.g_c_min_MHz, cfg.fit.g_c_max_MHz}},
                 {"max_iterations", cfg.fit.max_iterations},
                 {"seeds", seeds}};
  root["runtime"] = {{"threads", cfg.threads}};
  return root.dump(2) + "\n";
}

}  // namespace mesr
