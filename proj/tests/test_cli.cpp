#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cqed/cli.hpp"

using namespace cqed;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "cqed");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("cqed_cli_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Value of `name` in a two-column "name,value" CSV body.
double row_value(const std::string& csv, const std::string& name) {
  std::stringstream ss(csv);
  for (std::string line; std::getline(ss, line);)
    if (line.rfind(name + ",", 0) == 0) return std::stod(line.substr(name.size() + 1));
  FAIL("row " << name << " missing");
  return 0.0;
}

std::vector<std::string> data_lines(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  for (std::string line; std::getline(ss, line);)
    if (!line.empty() && line[0] != '#') out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("g2-closed at the reference rates") {
  const auto r = run({"g2-closed", "--n-atoms", "1"});
  REQUIRE(r.code == 0);
  const auto lines = data_lines(r.out);
  REQUIRE(lines.size() == 302);
  CHECK(lines[0] == "tau_us,g2,stderr");
  CHECK(lines[1].rfind("0,0.540", 0) == 0);
  CHECK(r.out.rfind("# cqed " + std::string(kVersion) + "\n", 0) == 0);
  CHECK(r.out.find("# seed: 1\n") != std::string::npos);
  CHECK(r.out.find("# config_hash: ") != std::string::npos);
  CHECK(r.err.empty());
}

TEST_CASE("params") {
  const auto r = run({"params"});
  REQUIRE(r.code == 0);
  CHECK(row_value(r.out, "c1") == doctest::Approx(0.38).epsilon(0.01));
  CHECK(row_value(r.out, "n_sat") == doctest::Approx(1.17).epsilon(0.01));
  CHECK(row_value(r.out, "g2_0") == doctest::Approx(0.5404).epsilon(1e-3));
  CHECK(row_value(r.out, "oscillation_threshold") == doctest::Approx(0.0549).epsilon(1e-3));
}

TEST_CASE("usage errors exit 2") {
  for (const auto& args : std::vector<std::vector<std::string>>{
           {}, {"bogus"}, {"params", "--no-such-flag"}, {"g2-closed", "--seed"}, {"correlate"}}) {
    const auto r = run(args);
    CHECK(r.code == 2);
    CHECK(r.out.empty());
    CHECK(r.err.find("Usage") != std::string::npos);
  }
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"--version"}).out.find(kVersion) != std::string::npos);
}

TEST_CASE("input and numerical failures") {
  auto r = run({"g2-closed", "--delta-a-mhz", "2"});
  CHECK(r.code == 2);
  CHECK(r.out.empty());
  CHECK(r.err.find("resonance") != std::string::npos);
  CHECK(run({"params", "--g-mhz", "abc"}).code == 2);
  CHECK(run({"params", "--seed", "-4"}).code == 2);
  CHECK(run({"params", "--n-atoms", "-1"}).code == 2);
  CHECK(run({"params", "--config", temp_path("missing.ini")}).code == 2);
  CHECK(run({"synthesize", "--streams", temp_path("x"), "--n-atoms", "5"}).code == 2);
  CHECK(run({"fit", temp_path("missing.csv")}).code == 2);

  r = run({"oracle-check"});
  CHECK(r.code == 0);
  CHECK(data_lines(r.out).size() == 15);
  r = run({"oracle-check", "--oracle-tolerance", "1e-9"});
  CHECK(r.code == 3);
  CHECK(r.out.find(",false") != std::string::npos);
}

TEST_CASE("config file, environment and flags") {
  const std::string ini = temp_path("cfg.ini");
  {
    std::ofstream f(ini);
    f << "g_mhz = 2.0\nkappa_mhz = 5.0\n[beam]\nrealizations = 7\n";
  }
  auto c1 = [](const Result& r) { return row_value(r.out, "c1"); };
  const auto from_file = run({"params", "--config", ini});
  REQUIRE(from_file.code == 0);
  CHECK(c1(from_file) == doctest::Approx(4.0 / 30.0));

  ::setenv("CQED_G_MHZ", "3.0", 1);
  const auto from_env = run({"params", "--config", ini});
  CHECK(c1(from_env) == doctest::Approx(9.0 / 30.0));
  const auto from_flag = run({"params", "--config", ini, "--g-mhz", "1.0"});
  CHECK(c1(from_flag) == doctest::Approx(1.0 / 30.0));
  const auto from_set = run({"params", "--set", "g_mhz=4", "--config", ini});
  CHECK(c1(from_set) == doctest::Approx(16.0 / 30.0));
  ::unsetenv("CQED_G_MHZ");

  ::setenv("CQED_BEAM__REALIZATIONS", "3", 1);
  const auto env_section = run({"g2-refined", "--tau-max-us", "0.02"});
  ::unsetenv("CQED_BEAM__REALIZATIONS");
  REQUIRE(env_section.code == 0);
  CHECK(env_section.out.find("# config: beam.realizations = 3\n") != std::string::npos);
  std::filesystem::remove(ini);
}

TEST_CASE("sidecar config reruns to identical output") {
  const std::string out = temp_path("g2.csv");
  const auto first = run({"g2-refined", "--beam-realizations", "6", "--seed", "42", "--tau-max-us", "0.1",
                          "--beam-target-n-eff", "2", "--out", out});
  REQUIRE(first.code == 0);
  CHECK(first.out.empty());
  const std::string text = slurp(out);
  CHECK(text.find("# seed: 42\n") != std::string::npos);
  const std::string again = temp_path("g2_again.csv");
  REQUIRE(run({"g2-refined", "--config", out + ".config", "--out", again}).code == 0);
  CHECK(slurp(again) == text);
  const auto other_seed = run({"g2-refined", "--config", out + ".config", "--seed", "43"});
  CHECK(other_seed.out != text);
  for (const auto& p : {out, out + ".config", again, again + ".config"}) std::filesystem::remove(p);
}

TEST_CASE("outputs do not depend on the worker count") {
  const std::vector<std::vector<std::string>> commands{
      {"g2-refined", "--beam-realizations", "12", "--tau-max-us", "0.3"},
      {"sweep", "--beam-realizations", "12", "--sweep-batches", "3"},
      {"blp", "--beam-realizations", "6", "--blp-n-eff", "0,0.5,2"},
      {"oracle-check"}};
  for (const auto& cmd : commands) {
    std::string reference;
    for (const char* w : {"1", "2", "5"}) {
      auto args = cmd;
      args.insert(args.end(), {"--workers", w});
      const auto r = run(args);
      REQUIRE(r.code == 0);
      if (reference.empty())
        reference = r.out;
      else
        CHECK(r.out == reference);
    }
  }
}

TEST_CASE("synthesize, correlate and fit") {
  const std::string prefix = temp_path("clicks");
  const auto syn = run({"synthesize", "--streams", prefix, "--traj-duration-us", "2e5", "--eps-over-kappa", "0.1",
                        "--seed", "3"});
  REQUIRE(syn.code == 0);
  REQUIRE(std::filesystem::exists(prefix + ".det0.cqts"));
  REQUIRE(std::filesystem::exists(prefix + ".det1.cqts"));
  CHECK(data_lines(syn.out).size() == 3);
  const auto syn_again = run({"synthesize", "--streams", prefix + "_b", "--traj-duration-us", "2e5",
                              "--eps-over-kappa", "0.1", "--seed", "3", "--workers", "4"});
  CHECK(slurp(prefix + ".det0.cqts") == slurp(prefix + "_b.det0.cqts"));

  const std::string trace = temp_path("trace.csv");
  auto corr = run({"correlate", prefix + ".det0.cqts", prefix + ".det1.cqts", "--corr-bin-width-ns", "20", "--out",
                   trace});
  REQUIRE(corr.code == 0);
  const std::string text = slurp(trace);
  CHECK(text.find("# input: " + prefix + ".det0.cqts") != std::string::npos);
  CHECK(data_lines(text).size() == 76);
  const auto rebinned = run({"correlate", prefix + ".det0.cqts", prefix + ".det1.cqts", "--corr-bin-width-ns", "20",
                             "--corr-rebin", "5"});
  CHECK(data_lines(rebinned.out).size() == 16);
  CHECK(run({"correlate", prefix + ".det0.cqts", "--corr-mode", "auto"}).code == 0);
  CHECK(run({"correlate", prefix + ".det0.cqts"}).code == 2);
  CHECK(run({"correlate", prefix + ".det0.cqts", prefix + ".det1.cqts", "--corr-mode", "sideways"}).code == 2);

  // a short run is too noisy to fit; the noiseless closed form is not
  const std::string model = temp_path("model.csv");
  REQUIRE(run({"g2-closed", "--out", model}).code == 0);
  const auto fit = run({"fit", model});
  REQUIRE(fit.code == 0);
  CHECK(row_value(fit.out, "a0") > 0.4);
  CHECK(row_value(fit.out, "hwhm_us") > 0.0);
  CHECK(fit.out.find("# input: " + model) != std::string::npos);

  // CSV streams round-trip through the correlator
  const auto csv = run({"synthesize", "--streams", prefix + "_c", "--traj-duration-us", "2e5", "--eps-over-kappa",
                        "0.1", "--seed", "3", "--synth-format", "csv"});
  REQUIRE(csv.code == 0);
  const auto corr_csv = run({"correlate", prefix + "_c.det0.csv", prefix + "_c.det1.csv", "--corr-bin-width-ns", "20",
                             "--out", trace + "2"});
  REQUIRE(corr_csv.code == 0);
  CHECK(data_lines(slurp(trace + "2")) == data_lines(text));

  for (const auto& p : std::filesystem::directory_iterator(std::filesystem::temp_directory_path()))
    if (p.path().filename().string().rfind("cqed_cli_", 0) == 0) std::filesystem::remove(p.path());
}

TEST_CASE("spectrum reports the splitting") {
  const auto r = run({"spectrum", "--n-atoms", "4", "--spectrum-points", "801"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("# split: true") != std::string::npos);
  CHECK(r.out.find("# two_g_sqrt_n_mhz: 12.8") != std::string::npos);
  CHECK(data_lines(r.out).size() == 802);
  CHECK(run({"spectrum", "--spectrum-points", "2"}).code == 2);
}
