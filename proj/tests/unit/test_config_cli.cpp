#include "mesr/commands.hpp"
#include "mesr/config.hpp"
#include "mesr/errors.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mesr;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = MESR_SOURCE_DIR;
const std::string kGdConfig = (kSource / "configs" / "gd_al2o3.json").string();
const std::string kZeeman = (kSource / "configs" / "zeeman.json").string();

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mesr");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "mesr_cli_tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    if (!l.empty() && l[0] != '#') lines.push_back(l);
  return lines;
}

std::string config_error(std::string_view text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("shipped config parses") {
  const RunConfig cfg = parse_config(kGdConfig);
  CHECK(cfg.spin_system.cf.b20 == 3153.0);
  CHECK(cfg.spin_system.cf.b63 == 0.0);
  CHECK(cfg.regions.size() == 2);
  CHECK(cfg.fit.seeds.size() == 6);
  CHECK(cfg.resonator.kappa_MHz == 0.13);
  CHECK(cfg.orientations().size() == 90);
  CHECK(cfg.field_axis().size() == 1201);
}

TEST_CASE("echo fills defaults and is idempotent") {
  const RunConfig cfg = parse_config(kGdConfig);
  const std::string echo = echo_config(cfg);
  const auto j = nlohmann::json::parse(echo);
  CHECK(j["spin_system"]["b"]["b63"] == 0.0);
  CHECK(j["search"]["tolerance"] == 1e-3);
  const RunConfig again = parse_config_text(echo);
  CHECK(again == cfg);
  CHECK(echo_config(again) == echo);
}

TEST_CASE("empty config lists every required key") {
  const std::string msg = config_error("");
  CHECK(msg.find("missing required keys") != std::string::npos);
  for (const char* key : {"spin_system.S", "spin_system.g", "spin_system.b.b20", "resonator.f_r"}) CHECK(msg.find(key) != std::string::npos);
  CHECK(config_error("   \n") == msg);
}

TEST_CASE("errors name the offending key path") {
  const RunConfig cfg = parse_config(kGdConfig);
  auto j = nlohmann::json::parse(echo_config(cfg));
  j["fit"]["seeds"][0]["gamma"] = -1.0;
  CHECK(config_error(j.dump()).find("fit.seeds[0].gamma") != std::string::npos);

  j = nlohmann::json::parse(echo_config(cfg));
  j["foo"] = 1;
  CHECK(config_error(j.dump()).find("foo") != std::string::npos);

  j = nlohmann::json::parse(echo_config(cfg));
  j["schema_version"] = 2;
  CHECK(config_error(j.dump()).find("schema_version") != std::string::npos);

  j = nlohmann::json::parse(echo_config(cfg));
  j["geometry"]["rotation_sense"] = "+x";
  CHECK(config_error(j.dump()).find("geometry.rotation_sense") != std::string::npos);
  CHECK_FALSE(config_error("{not json").empty());
}

TEST_CASE("overrides") {
  const RunConfig cfg = parse_config(kGdConfig, {"sweep.theta.step=90", "fit.seeds[1].gamma=40", "resonator.kappa=0.2"});
  CHECK(cfg.orientations().size() == 4);
  CHECK(cfg.fit.seeds[1].gamma_MHz == 40.0);
  CHECK(cfg.resonator.kappa_MHz == 0.2);
  CHECK_THROWS_AS(parse_config(kGdConfig, {"sweep.theta.step"}), ConfigError);
  CHECK_THROWS_AS(parse_config(kGdConfig, {"fit.seeds[9].gamma=1"}), ConfigError);
}

TEST_CASE("fit options follow the resonator and fit sections") {
  const RunConfig cfg = parse_config(kGdConfig, {"fit.kappa_fixed=false"});
  const FitOptions opt = cfg.fit_options();
  CHECK(opt.kappa_MHz == 0.13);
  CHECK(opt.f_r_GHz == 3.352);
  CHECK(opt.fit_kappa);
}

// ---------------------------------------------------------------------------

TEST_CASE("cli: version, help and usage errors") {
  CHECK(cli({"--version"}).code == kExitOk);
  CHECK(cli({"--help"}).code == kExitOk);
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"resonances", kGdConfig}).code == kExitUsage);  // --theta missing
  CHECK(cli({"frobnicate"}).code == kExitUsage);
}

TEST_CASE("cli: config echo and config errors") {
  const Run ok = cli({"config", kGdConfig});
  CHECK(ok.code == kExitOk);
  CHECK(ok.out == echo_config(parse_config(kGdConfig)));

  const fs::path dir = scratch("config");
  std::ofstream(dir / "empty.json") << "";
  const Run empty = cli({"config", (dir / "empty.json").string()});
  CHECK(empty.code == kExitUsage);
  CHECK(empty.err.find("missing required keys") != std::string::npos);

  CHECK(cli({"config", (dir / "absent.json").string()}).code == kExitIo);
  CHECK(cli({"config", kGdConfig, "--set", "bogus=1"}).code == kExitUsage);
}

TEST_CASE("cli: Zeeman-only resonances give one row near 120.27 mT") {
  for (double theta : {0.0, 45.0, 180.0}) {
    const Run r = cli({"resonances", kZeeman, "--theta", std::to_string(theta)});
    REQUIRE(r.code == kExitOk);
    const auto lines = data_lines(r.out);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0].rfind("theta,field_mT,f_MHz,mode,site,intensity,gradient,levels", 0) == 0);
    std::istringstream row(lines[1]);
    std::string theta_s, field_s;
    std::getline(row, theta_s, ',');
    std::getline(row, field_s, ',');
    CHECK(std::stod(field_s) == doctest::Approx(120.27).epsilon(0.05 / 120.27));
  }
  const Run wrapped = cli({"resonances", kZeeman, "--theta", "400"});
  CHECK(wrapped.code == kExitOk);
  CHECK(wrapped.err.find("40") != std::string::npos);
}

TEST_CASE("cli: simulate writes the map and its filtered copy") {
  const fs::path dir = scratch("simulate");
  const Run r = cli({"simulate", kGdConfig, "--set", "sweep.theta.step=90", "--out-dir", dir.string(), "--quiet"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("grid 4 x 1201") != std::string::npos);
  for (const char* name : {"angular_map.csv", "angular_map.svg", "angular_map_filtered.csv", "angular_map_filtered.svg"})
    CHECK(fs::exists(dir / name));
  CHECK(data_lines(read_file(dir / "angular_map.csv")).size() == 5);

  const fs::path plain = scratch("simulate_plain");
  CHECK(cli({"simulate", kGdConfig, "--set", "sweep.theta.step=90", "--set", "render.filter=false", "--out-dir",
             plain.string(), "--quiet"})
            .code == kExitOk);
  CHECK(fs::exists(plain / "angular_map.csv"));
  CHECK_FALSE(fs::exists(plain / "angular_map_filtered.csv"));
}

TEST_CASE("cli: extract-q reports the derived and the configured kappa") {
  const fs::path dir = scratch("extract_q");
  const std::string s21 = (dir / "s21.csv").string();
  REQUIRE(cli({"synth-s21", "--out", s21, "--noise", "0.001", "--seed", "3"}).code == kExitOk);
  const Run r = cli({"extract-q", s21, "--config", kGdConfig});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["q_i"].get<double>() == doctest::Approx(3.3e5).epsilon(0.02));
  CHECK(j["q_c"].get<double>() == doctest::Approx(3.8e4).epsilon(0.02));
  CHECK(j["kappa_derived_MHz"].get<double>() == doctest::Approx(0.0984).epsilon(0.02));
  CHECK(j["kappa_from_configured_q_MHz"].get<double>() == doctest::Approx(0.0984).epsilon(1e-3));
  CHECK(j["kappa_configured_MHz"].get<double>() == 0.13);
  CHECK(cli({"extract-q", (dir / "missing.csv").string()}).code == kExitIo);
}

TEST_CASE("cli: synthetic trace roundtrip through fit") {
  const fs::path dir = scratch("fit");
  const std::string trace = (dir / "trace.csv").string();
  const std::string result = (dir / "fit.json").string();
  REQUIRE(cli({"synth-trace", kGdConfig, "--out", trace}).code == kExitOk);
  const Run r = cli({"fit", kGdConfig, "--trace", trace, "--out", result});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(read_file(result));
  CHECK(j["converged"] == true);
  CHECK(j["kind"] == "Q_m");
  REQUIRE(j["peaks"].size() == 6);
  CHECK(j["peaks"][0]["b_f_mT"].get<double>() == doctest::Approx(44.0).epsilon(1e-6));
  CHECK(j["covariance"].size() == 18);
  CHECK(j["model_fit_deviation_percent"].get<double>() < 1e-4);
}

TEST_CASE("cli: fit exit codes") {
  const fs::path dir = scratch("fit_errors");
  CHECK(cli({"fit", kGdConfig, "--trace", (dir / "missing.csv").string()}).code == kExitIo);

  // Flat trace with a single seed: the coupling collapses and the fit is degenerate.
  std::ofstream flat(dir / "flat.csv");
  flat.precision(17);
  flat << "field_mT,Q_m\n";
  for (int i = 0; i <= 240; ++i) flat << 0.5 * i << ',' << 3352.0 / 0.13 << '\n';
  flat.close();
  const std::string result = (dir / "flat.json").string();
  const Run r = cli({"fit", kGdConfig, "--trace", (dir / "flat.csv").string(), "--out", result, "--set",
                     "fit.seeds=[{\"label\":\"a\",\"b_m\":44,\"gamma\":53,\"g_c\":4.5}]"});
  CHECK(r.code == kExitNumerical);
  CHECK(r.err.find("near-singular") != std::string::npos);
  const auto j = nlohmann::json::parse(read_file(result));
  CHECK(j["peaks"][0]["g_c_MHz"].get<double>() < 1e-3);
  CHECK(j["converged"] == false);
}
