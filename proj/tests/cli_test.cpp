#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pty/cli.hpp"
#include "test_util.hpp"

using namespace pty;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "ptyrecon");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, sep);) out.push_back(item);
  return out;
}

/// Small simulated dataset shared by the tests below.
const fs::path& small_data() {
  static const fs::path path = [] {
    const auto dir = pty::testing::scratch_dir("cli-data");
    const auto r = run({"simulate", "--object-size", "64", "64", "--probe-size", "16", "--step", "8", "--spokes", "8",
                        "--seed", "3", "--out", (dir / "ds").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return dir / "ds";
  }();
  return path;
}

}  // namespace

TEST(CliSimulate, DeskFixture) {
  const auto dir = pty::testing::scratch_dir("cli-sim");
  const auto r = run({"simulate", "--phantom", "siemens", "--object-size", "256", "256", "--probe-size", "64", "--step",
                      "16", "--jitter", "2", "--seed", "1", "--out", (dir / "ds").string() + "/"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("n=169"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("overlap=0.75"), std::string::npos) << r.out;
  const auto b = io::read_bundle(dir / "ds");
  EXPECT_EQ(b.at("scan").shape, (std::vector<std::size_t>{169, 2}));
  EXPECT_EQ(b.at("psi_ref").shape, (std::vector<std::size_t>{256, 256}));
  std::ifstream manifest(dir / "ds" / "run.json");
  const auto j = nlohmann::json::parse(manifest);
  EXPECT_EQ(j["config"]["seed"], 1);
  EXPECT_TRUE(j.contains("started"));
  EXPECT_TRUE(j.contains("finished"));
  EXPECT_TRUE(j.contains("code_version"));
}

TEST(CliSimulate, BadFlags) {
  const auto dir = pty::testing::scratch_dir("cli-bad");
  const auto r = run({"simulate", "--probe-size", "64", "--step", "64", "--out", (dir / "x").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("no overlap"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "x"));

  const auto missing = run({"simulate"});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("--out"), std::string::npos) << missing.err;
  EXPECT_NE(missing.err.find("Usage"), std::string::npos) << missing.err;

  EXPECT_EQ(run({"simulate", "--photons", "0", "--out", (dir / "y").string()}).code, 2);
  EXPECT_EQ(run({"simulate", "--phantom", "cat", "--out", (dir / "y").string()}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(CliReconstruct, WorkerCountsAgree) {
  const auto dir = pty::testing::scratch_dir("cli-rec");
  const auto data = small_data().string();
  const auto a = run({"reconstruct", "--data", data, "--workers", "1", "--iters", "2", "--out", (dir / "p1").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = run({"reconstruct", "--data", data, "--workers", "2", "--iters", "2", "--consistency-check", "--out",
                      (dir / "p2").string(), "--trace", (dir / "t2.csv").string()});
  ASSERT_EQ(b.code, 0) << b.err;
  const auto pa = io::read_bundle(dir / "p1").get_field("psi");
  const auto pb = io::read_bundle(dir / "p2").get_field("psi");
  EXPECT_LE(pty::testing::rel_l2(pb, pa), 1e-5);

  const auto trace = lines(dir / "p1.trace.csv");
  ASSERT_EQ(trace.size(), 3u);
  EXPECT_EQ(split(trace[0])[0], "iter");
  EXPECT_EQ(split(trace[0]).size(), 17u);
  EXPECT_EQ(split(trace[1]).size(), 17u);
  EXPECT_EQ(lines(dir / "t2.csv").size(), 3u);

  std::ifstream manifest(dir / "p2" / "run.json");
  const auto j = nlohmann::json::parse(manifest);
  EXPECT_EQ(j["config"]["workers"], 2);
  EXPECT_EQ(j["partition"]["strips"].size(), 2u);
  const auto meta = io::read_bundle(dir / "p2").meta;
  EXPECT_TRUE(meta.contains("crop"));
}

TEST(CliReconstruct, Errors) {
  const auto dir = pty::testing::scratch_dir("cli-rec-err");
  const auto data = small_data().string();
  const auto out = (dir / "r").string();
  EXPECT_EQ(run({"reconstruct", "--data", data, "--workers", "0", "--out", out}).code, 2);
  const auto gd = run({"reconstruct", "--data", data, "--solver", "gd", "--out", out});
  EXPECT_EQ(gd.code, 2);
  EXPECT_NE(gd.err.find("--gd-gamma"), std::string::npos);
  EXPECT_EQ(run({"reconstruct", "--data", (dir / "none").string(), "--out", out}).code, 3);
  EXPECT_EQ(run({"reconstruct", "--data", data, "--workers", "9", "--out", out}).code, 2);
  EXPECT_EQ(run({"reconstruct", "--data", data, "--tau", "1.5", "--out", out}).code, 2);
  EXPECT_EQ(run({"reconstruct", "--data", data, "--iters", "1", "--solver", "gd", "--gd-gamma", "0.01", "--out", out}).code, 0);
}

TEST(CliReconstruct, WorkersFromEnvironment) {
  const auto dir = pty::testing::scratch_dir("cli-env");
  ::setenv(cli::kWorkersEnv, "2", 1);
  const auto r = run({"reconstruct", "--data", small_data().string(), "--iters", "1", "--out", (dir / "r").string()});
  ::setenv(cli::kWorkersEnv, "two", 1);
  const auto bad = run({"reconstruct", "--data", small_data().string(), "--iters", "1", "--out", (dir / "s").string()});
  ::unsetenv(cli::kWorkersEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("workers=2"), std::string::npos);
  EXPECT_EQ(bad.code, 2);
}

TEST(CliEvaluate, IdentityAndPhaseOffset) {
  const auto dir = pty::testing::scratch_dir("cli-eval");
  const auto data = small_data();
  const auto same = run({"evaluate", "--rec", data.string(), "--ref", data.string(), "--out", (dir / "m.csv").string()});
  ASSERT_EQ(same.code, 0) << same.err;
  const auto rows = lines(dir / "m.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], "ssim,psnr_db,channel,crop,phase_shift");
  const auto cols = split(rows[1]);
  EXPECT_NEAR(std::stod(cols[0]), 1.0, 1e-9);
  EXPECT_EQ(cols[1], "inf");
  EXPECT_EQ(cols[2], "phase");

  auto psi = io::read_bundle(data).get_field("psi_ref");
  for (auto& v : psi) v *= std::polar(1.0f, 0.7f);
  io::Bundle rec;
  rec.put_field("psi", psi);
  io::write_bundle(rec, dir / "rot");
  const auto rot = run({"evaluate", "--rec", (dir / "rot").string(), "--ref", data.string()});
  ASSERT_EQ(rot.code, 0) << rot.err;
  const auto rc = split(split(rot.out, '\n')[1]);
  EXPECT_NEAR(std::stod(rc[0]), 1.0, 1e-6);
  EXPECT_NEAR(std::stod(rc[4]), 0.7, 1e-5);

  io::Bundle small;
  small.put_field("psi", ObjectField<float>(8, 8, Complex<float>(1.0f, 0.0f)));
  io::write_bundle(small, dir / "small");
  EXPECT_EQ(run({"evaluate", "--rec", (dir / "small").string(), "--ref", data.string()}).code, 3);
  EXPECT_EQ(run({"evaluate", "--rec", data.string(), "--ref", data.string(), "--channel", "x"}).code, 2);
}

TEST(CliBench, RowsManifestAndReconciliation) {
  const auto dir = pty::testing::scratch_dir("cli-bench");
  const auto out = (dir / "bench.csv").string();
  const auto r = run({"bench", "--data", small_data().string(), "--workers", "1,2,4", "--iters", "2", "--repeat", "3",
                      "--seed", "10", "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(out);
  ASSERT_EQ(rows.size(), 1u + 9u);
  const auto header = split(rows[0]);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto c = split(rows[i]);
    ASSERT_EQ(c.size(), header.size());
    const double total = std::stod(c[3]), setup = std::stod(c[4]), compute = std::stod(c[5]), wait = std::stod(c[6]);
    EXPECT_NEAR(setup + compute + wait, total, 0.05 * total) << rows[i];
    EXPECT_EQ(c.back(), "1");
    if (c[0] == "1") EXPECT_EQ(wait, 0.0);
  }
  std::ifstream manifest(out + ".run.json");
  const auto j = nlohmann::json::parse(manifest);
  ASSERT_EQ(j["seeds"].size(), 9u);
  EXPECT_EQ(j["seeds"][0]["seed"], 10);
  EXPECT_EQ(j["seeds"][2]["seed"], 12);
  EXPECT_EQ(run({"bench", "--data", small_data().string(), "--workers", "1,x"}).code, 2);
}

TEST(CliExecutable, ExitCodeFromProcess) {
  const std::string exe = PTYRECON_EXE;
  EXPECT_EQ(std::system((exe + " --version > /dev/null").c_str()), 0);
  const int status = std::system((exe + " reconstruct --data /nonexistent --out /tmp/x 2> /dev/null").c_str());
  EXPECT_EQ(WEXITSTATUS(status), 3);
}
