#include <gtest/gtest.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include "captain/fixture.hpp"
#include "captain/report.hpp"
#include "captain/service.hpp"
#include "client.hpp"
#include "oracles.hpp"

extern char** environ;

using namespace captain;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out, err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir = fs::temp_directory_path() / ("captain_cli_" + std::to_string(rd()));
    fs::create_directories(dir);
  }
  void TearDown() override {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }

  std::string path(const std::string& name) const { return (dir / name).string(); }

  Result run(const std::string& args) const {
    const std::string out = path("stdout.txt"), err = path("stderr.txt");
    const std::string cmd = std::string(CAPTAIN_CLI_PATH) + " " + args + " >" + out + " 2>" + err;
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = io::read_file(out);
    r.err = io::read_file(err);
    return r;
  }

  // Writes the slab fixture case under dir/cases and returns it.
  const FixtureCase& write_fixture() {
    static const FixtureCase c = make_slab_case();
    write_case_dir(c, dir / "cases" / "slab");
    return c;
  }

  fs::path dir;
};

LabelVolume small_volume() {
  GridSpec g;
  g.dims = {8, 8, 8};
  g.spacing = {0.48, 0.48, 0.6};
  LabelVolume v(g, {{1, "VF"}, {2, "A"}});
  for (int k = 2; k < 6; ++k)
    for (int j = 1; j < 5; ++j)
      for (int i = 3; i < 7; ++i) v.set({i, j, k}, 1);
  v.set({0, 7, 7}, 2);
  return v;
}

// Launches `captain serve` and reads the bound port from its first output line.
struct ServeProcess {
  pid_t pid = -1;
  int out_fd = -1;
  unsigned short port = 0;

  ServeProcess(const std::string& cases, const std::string& logs) {
    int fds[2];
    if (pipe(fds) != 0) throw std::runtime_error("pipe");
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&actions, fds[0]);
    std::vector<std::string> args{CAPTAIN_CLI_PATH, "serve", "--cases-dir", cases, "--port", "0", "--log-dir", logs};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    if (posix_spawn(&pid, argv[0], &actions, nullptr, argv.data(), environ) != 0) throw std::runtime_error("spawn");
    posix_spawn_file_actions_destroy(&actions);
    close(fds[1]);
    std::string line;
    char ch = 0;
    while (read(fds[0], &ch, 1) == 1 && ch != '\n') line += ch;
    out_fd = fds[0];
    const auto colon = line.rfind(':');
    if (colon == std::string::npos) throw std::runtime_error("unexpected serve output: " + line);
    port = static_cast<unsigned short>(std::stoi(line.substr(colon + 1)));
  }

  int stop() {
    kill(pid, SIGTERM);
    int status = 0;
    waitpid(pid, &status, 0);
    close(out_fd);
    pid = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  ~ServeProcess() {
    if (pid > 0) stop();
  }
};

}  // namespace

TEST_F(CliTest, HelpAndBadFlags) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("edt --help").code, 0);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("edt --volume").code, 2);
  EXPECT_EQ(run("edt --volume /does/not/exist --codes 1 --out x").code, 2);
}

TEST_F(CliTest, EdtMatchesOracleGolden) {
  const auto v = small_volume();
  save_volume(v, path("v.capv"));
  const auto r = run("edt --volume " + path("v.capv") + " --codes 1 --signed --out " + path("vf.capf"));
  ASSERT_EQ(r.code, 0) << r.err;

  // golden: the brute-force signed field, packed as CAPF1
  const auto ref = oracle::signed_field(v, {1});
  DistanceField golden{v.spec(), std::vector<float>(ref.size()), "VF", {"VF"}};
  for (std::size_t n = 0; n < ref.size(); ++n) golden.values[n] = static_cast<float>(ref[n]);
  const auto bytes = io::read_file(path("vf.capf"));
  const auto golden_bytes = encode_field(golden);
  EXPECT_EQ(bytes.substr(0, bytes.find('\n')), golden_bytes.substr(0, golden_bytes.find('\n')));
  const auto got = decode_field(bytes);
  for (std::size_t n = 0; n < ref.size(); ++n) ASSERT_NEAR(got.values[n], golden.values[n], 1e-6) << n;

  ASSERT_EQ(run("edt --volume " + path("v.capv") + " --codes 1 --out " + path("vf_u.capf")).code, 0);
  const auto unsigned_field = load_field(path("vf_u.capf"));
  const auto omega = mask_of(v, {1});
  for (std::size_t n = 0; n < ref.size(); ++n) {
    if (!omega.test(n)) ASSERT_GT(unsigned_field.values[n], 0.0f);
    if (omega.test(n)) ASSERT_EQ(unsigned_field.values[n], 0.0f);
  }
  // outside the structure the signed field measures to the surface, which is
  // where the nearest structure voxel lies, so magnitudes agree
  for (std::size_t n = 0; n < ref.size(); ++n)
    if (!omega.test(n)) ASSERT_FLOAT_EQ(std::abs(got.values[n]), unsigned_field.values[n]);
}

TEST_F(CliTest, EdtEmptySelection) {
  save_volume(small_volume(), path("v.capv"));
  const auto r = run("edt --volume " + path("v.capv") + " --codes 7 --out " + path("x.capf"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("EmptyStructure"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("x.capf")));
}

TEST_F(CliTest, PlanDefaultsAndGolden) {
  const auto& c = write_fixture();
  const std::string slab = (dir / "cases" / "slab").string();
  const auto r = run("plan --volume " + slab + "/volume.capv --target-codes 10 --protect " + slab +
                     "/vf_posterior.capf --protect " + slab + "/vf_lateral.capf --out " + path("p.capp"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto plan = load_plan(path("p.capp"));
  EXPECT_EQ(plan.params.red_thickness_per_structure.at("VF-posterior"), 1.0);
  EXPECT_EQ(plan.params.red_thickness_per_structure.at("VF-lateral"), 0.1);
  EXPECT_EQ(plan.params.yellow_thickness, 1.0);

  // golden: threshold oracle applied voxel by voxel
  ZonePlan golden{c.plan.spec, std::vector<Zone>(c.plan.zones.size()), {}, plan.params};
  for (std::size_t n = 0; n < golden.zones.size(); ++n) {
    const LabelCode code = c.volume[n];
    golden.zones[n] = oracle::zone_rule(code, code == kCodeSegmentA,
                                        {{c.posterior.values[n], 1.0}, {c.lateral.values[n], 0.1}}, 1.0);
  }
  golden.planned_counts = plan_counts(golden);
  EXPECT_EQ(io::read_file(path("p.capp")), encode_plan(golden));

  ASSERT_EQ(run("plan --volume " + slab + "/volume.capv --target-codes 10 --protect " + slab +
                "/vf_posterior.capf=0 --protect " + slab + "/vf_lateral.capf=0 --yellow-mm 0 --out " + path("z.capp"))
                .code,
            0);
  const auto zero = load_plan(path("z.capp"));
  EXPECT_EQ(zero.planned(Zone::Green), 3840u);
  EXPECT_EQ(zero.planned(Zone::Red) + zero.planned(Zone::Yellow), 0u);

  const auto bad = run("plan --volume " + slab + "/volume.capv --target-codes 10 --protect " + slab +
                       "/vf_posterior.capf=abc --out " + path("bad.capp"));
  EXPECT_EQ(bad.code, 2);
  EXPECT_FALSE(fs::exists(path("bad.capp")));
}

TEST_F(CliTest, PlanConfigOverridesDefaults) {
  write_fixture();
  const std::string slab = (dir / "cases" / "slab").string();
  io::write_file(path("cfg.json"), R"({"red_thickness_per_structure":{"VF-posterior":2.0,"VF-lateral":0.5},)"
                                   R"("yellow_thickness":0.5})");
  ASSERT_EQ(run("plan --volume " + slab + "/volume.capv --target-codes 10 --protect " + slab +
                "/vf_posterior.capf --protect " + slab + "/vf_lateral.capf --config " + path("cfg.json") +
                " --out " + path("p.capp"))
                .code,
            0);
  const auto plan = load_plan(path("p.capp"));
  EXPECT_EQ(plan.params.red_thickness_per_structure.at("VF-posterior"), 2.0);
  EXPECT_EQ(plan.params.yellow_thickness, 0.5);
}

TEST_F(CliTest, SimulateThenReportEqualsLibrary) {
  const auto& c = write_fixture();
  const std::string slab = (dir / "cases" / "slab").string();
  const auto full = sample_trajectory(c);
  const Trajectory half(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(full.size() / 2));
  const Trajectory quarter(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(full.size() / 4));
  const Trajectory third(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(full.size() / 3));
  const std::vector<Trajectory> trajs{full, half, quarter, third};
  std::string logs, plans;
  for (std::size_t s = 0; s < trajs.size(); ++s) {
    save_trajectory(trajs[s], path("t" + std::to_string(s) + ".jsonl"));
    const auto r = run("simulate --plan " + slab + "/plan.capp --bone-field " + slab + "/bone.capf --traj " +
                       path("t" + std::to_string(s) + ".jsonl") + " --out-log " + path("l" + std::to_string(s) + ".jsonl"));
    ASSERT_EQ(r.code, 0) << r.err;
    logs += " " + path("l" + std::to_string(s) + ".jsonl");
    plans += " " + slab + "/plan.capp";
  }
  const auto r = run("report --logs" + logs + " --plans" + plans +
                     " --labels s0:CAPTAiN s1:CAPTAiN s2:non-navigated s3:non-navigated --json " + path("r.json"));
  ASSERT_EQ(r.code, 0) << r.err;

  std::vector<RemovalLog> lib_logs;
  for (const auto& t : trajs) lib_logs.push_back(run_trajectory(c.plan, c.bone, {}, t));
  const std::vector<const ZonePlan*> lib_plans(4, &c.plan);
  const std::vector<SessionLabel> labels{SessionLabel{"s0", "CAPTAiN"}, SessionLabel{"s1", "CAPTAiN"},
                                         SessionLabel{"s2", "non-navigated"}, SessionLabel{"s3", "non-navigated"}};
  const auto lib = session_report(lib_logs, lib_plans, labels);
  EXPECT_EQ(io::read_file(path("r.json")), report_to_json(lib).dump(2) + "\n");
  EXPECT_EQ(r.out, format_report_table(lib));
  EXPECT_FALSE(lib.ttests.empty());
  for (std::size_t s = 0; s < trajs.size(); ++s)
    EXPECT_EQ(io::read_file(path("l" + std::to_string(s) + ".jsonl")), encode_log(lib_logs[s]));

  // rerunning produces identical bytes
  ASSERT_EQ(run("simulate --plan " + slab + "/plan.capp --bone-field " + slab + "/bone.capf --traj " + path("t0.jsonl") +
                " --out-log " + path("again.jsonl"))
                .code,
            0);
  EXPECT_EQ(io::read_file(path("again.jsonl")), io::read_file(path("l0.jsonl")));
}

TEST_F(CliTest, ReportMisaligned) {
  io::write_file(path("a.jsonl"), "");
  const auto& c = write_fixture();
  (void)c;
  const std::string plan = (dir / "cases" / "slab" / "plan.capp").string();
  const auto r = run("report --logs " + path("a.jsonl") + " " + path("a.jsonl") + " --plans " + plan);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("MisalignedInputs"), std::string::npos);
  const auto l = run("report --logs " + path("a.jsonl") + " --plans " + plan + " --labels a:x b:y");
  EXPECT_EQ(l.code, 2);
}

TEST_F(CliTest, SimulateRejectsNonMonotoneTrajectory) {
  write_fixture();
  const std::string slab = (dir / "cases" / "slab").string();
  io::write_file(path("t.jsonl"), "{\"t_ms\":10,\"pos_mm\":[0,0,0],\"on\":true}\n"
                                  "{\"t_ms\":5,\"pos_mm\":[0,0,0],\"on\":true}\n");
  const auto r = run("simulate --plan " + slab + "/plan.capp --bone-field " + slab + "/bone.capf --traj " +
                     path("t.jsonl") + " --out-log " + path("l.jsonl"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("NonMonotoneTimestamps"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("l.jsonl")));
}

TEST_F(CliTest, ConvertRawExport) {
  const auto v = small_volume();
  io::write_file(path("labels.raw"),
                 std::string(reinterpret_cast<const char*>(v.labels().data()), v.labels().size()));
  io::write_file(path("labels.json"), R"({"dims":[8,8,8],"spacing_mm":[0.48,0.48,0.6],"origin_mm":[0,0,0],)"
                                      R"("palette":{"1":"VF","2":"A"}})");
  const auto r = run("convert --raw " + path("labels.raw") + " --meta " + path("labels.json") + " --out " +
                     path("v.capv"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::read_file(path("v.capv")), encode_volume(v));
  io::write_file(path("short.raw"), "abc");
  EXPECT_EQ(run("convert --raw " + path("short.raw") + " --meta " + path("labels.json") + " --out " + path("s.capv")).code,
            2);
}

TEST_F(CliTest, FixtureCommandWritesLoadableCase) {
  ASSERT_EQ(run("fixture --out-dir " + path("fx")).code, 0);
  EXPECT_EQ(CaseCatalog::load_case(dir / "fx" / "slab")->plan, make_slab_case().plan);
  EXPECT_FALSE(load_trajectory(path("fx/trajectory.jsonl")).empty());
}

TEST_F(CliTest, ServeListsCasesAndStopsCleanly) {
  write_fixture();
  ServeProcess serve((dir / "cases").string(), path("logs"));
  const auto cases = client::get(serve.port, "/cases");
  EXPECT_EQ(cases.status, 200);
  EXPECT_EQ(cases.body, "[\"slab\"]");
  EXPECT_EQ(serve.stop(), 0);
}

TEST_F(CliTest, ServeErrors) {
  const auto missing = run("serve --cases-dir " + path("nowhere"));
  EXPECT_EQ(missing.code, 2);

  write_fixture();
  client::net::io_context ioc;
  client::tcp::acceptor busy(ioc, {client::net::ip::make_address("127.0.0.1"), 0});
  const auto port = busy.local_endpoint().port();
  const auto r = run("serve --cases-dir " + (dir / "cases").string() + " --port " + std::to_string(port));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("cannot listen"), std::string::npos) << r.err;
}
