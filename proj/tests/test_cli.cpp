#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"
#include "thintube/cli.hpp"

using namespace thintube;
using tt_test::json;

namespace {

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "thintube");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  CliRun r;
  r.code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string write_config(const std::string& name, const json& j) {
  const auto dir = tt_test::scratch_dir("cli_cfg_" + name);
  const auto p = dir / (name + ".json");
  std::ofstream(p) << j.dump(2);
  return p.string();
}

json small_bent() {
  json j = tt_test::strip_config(1.0, 0.8, 0.0, {0.2, 0.1, 0.05});
  j["resolution"] = json{{"N", 64}, {"N_levels", 2}, {"Nq", 16}, {"Nn", 15}, {"levels", 3}, {"I_max", 12}};
  j["count"] = 2;
  j["orders"] = {0, 2};
  return j;
}

}  // namespace

TEST(Cli, ExitCodeMapping) {
  EXPECT_EQ(exit_code(ErrorKind::ConfigError), 2);
  EXPECT_EQ(exit_code(ErrorKind::SizeCapExceeded), 2);
  EXPECT_EQ(exit_code(ErrorKind::OpenCurve), 2);
  EXPECT_EQ(exit_code(ErrorKind::SolverFailure), 3);
  EXPECT_EQ(exit_code(ErrorKind::MeshNotConverged), 4);
  EXPECT_EQ(exit_code(ErrorKind::GapViolation), 4);
}

TEST(Cli, ValidateConfig) {
  const CliRun ok = run({"validate-config", "--config", tt_test::source_path("configs/bent_annulus.json")});
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_NE(ok.out.find("config ok"), std::string::npos);
  json bad = small_bent();
  bad["epsilons"] = {0.1, 0.2};
  const CliRun b = run({"validate-config", "--config", write_config("bad", bad)});
  EXPECT_EQ(b.code, 2);
  EXPECT_NE(b.err.find("/epsilons/1"), std::string::npos) << b.err;
  EXPECT_EQ(run({"validate-config", "--config", "/nonexistent/file.json"}).code, 2);
  EXPECT_EQ(run({"validate-config"}).code, 2);
  EXPECT_EQ(run({"no-such-command"}).code, 2);
}

TEST(Cli, OverrideReachesTheConfig) {
  const CliRun r = run({"validate-config", "--config", tt_test::source_path("configs/bent_annulus.json"), "--override",
                     "epsilons=[0.2,0.1,0.05]"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("3 eps values"), std::string::npos) << r.out;
}

TEST(Cli, SizeCapExitsWithTwo) {
  json j = read_json_file(tt_test::source_path("configs/twisted_rectangle.json"));
  j["size_cap"] = 100;
  const std::string path = write_config("cap", j);
  const auto out = tt_test::scratch_dir("cli_cap");
  const CliRun r = run({"compare", "--config", path, "--out", out.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("SizeCapExceeded"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("--force-large"), std::string::npos) << r.err;
}

TEST(Cli, BandsAndEffectiveWriteOutputs) {
  const std::string path = write_config("bent", small_bent());
  const auto d1 = tt_test::scratch_dir("cli_bands"), d2 = tt_test::scratch_dir("cli_eff");
  EXPECT_EQ(run({"bands", "--config", path, "--out", d1.string()}).code, 0);
  EXPECT_TRUE(std::filesystem::exists(d1 / "bands.csv"));
  const json rep = read_json_file((d1 / "report.json").string());
  EXPECT_GT(rep["admissibility"]["min_gap"].get<double>(), 0.0);
  EXPECT_EQ(run({"effective-spectrum", "--config", path, "--out", d2.string()}).code, 0);
  const std::string csv = tt_test::slurp(d2 / "eigenvalues.csv");
  EXPECT_EQ(csv.rfind("eps,index,eigenvalue", 0), 0u);
}

TEST(Cli, CompareWritesReportAndDumps) {
  const std::string path = write_config("bentc", small_bent());
  const auto d = tt_test::scratch_dir("cli_cmp"), t = tt_test::scratch_dir("cli_tube"), dump = tt_test::scratch_dir("cli_dump");
  // this mesh is too coarse for the guard: exit 4 unless the guard is lifted
  const CliRun g = run({"compare", "--config", path, "--out", d.string()});
  EXPECT_EQ(g.code, 4);
  EXPECT_NE(g.err.find("MeshNotConverged"), std::string::npos) << g.err;
  const CliRun r = run({"compare", "--config", path, "--out", d.string(), "--threads", "2", "--override", "resolution.mesh_guard=false"});
  EXPECT_EQ(r.code, 0) << r.err;
  const json rep = read_json_file((d / "report.json").string());
  EXPECT_TRUE(rep.contains("provenance"));
  EXPECT_TRUE(std::filesystem::exists(d / "eigenvalues.csv"));
  const CliRun tr = run({"tube-spectrum", "--config", path, "--out", t.string(), "--dump", dump.string()});
  EXPECT_EQ(tr.code, 0) << tr.err;
  EXPECT_TRUE(std::filesystem::exists(dump / "K_eps0.bin"));
  EXPECT_TRUE(std::filesystem::exists(dump / "M_eps2.bin"));
}
