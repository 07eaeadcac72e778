#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <thread>

#include "captain/fixture.hpp"
#include "captain/server.hpp"
#include "captain/service.hpp"
#include "client.hpp"

using namespace captain;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  std::random_device rd;
  const auto dir = fs::temp_directory_path() / ("captain_" + name + "_" + std::to_string(rd()));
  fs::create_directories(dir);
  return dir;
}

const FixtureCase& slab() {
  static const FixtureCase c = make_slab_case();
  return c;
}

struct Env {
  fs::path root = scratch_dir("service");
  std::shared_ptr<const CaseCatalog> catalog;
  std::unique_ptr<SessionManager> manager;

  explicit Env(std::size_t max_live = 16) {
    write_case_dir(slab(), root / "cases" / "slab");
    catalog = std::make_shared<CaseCatalog>(root / "cases");
    manager = std::make_unique<SessionManager>(catalog, root / "logs", max_live);
  }
  ~Env() {
    std::error_code ec;
    fs::remove_all(root, ec);
  }
};

// Outbound frames the server must produce for `traj`, from the offline engine.
std::vector<std::string> offline_frames(const CaseData& c, const Trajectory& traj, bool guidance) {
  std::vector<TickOutput> outs;
  run_trajectory(c.plan, c.bone, c.cfg, traj, &outs);
  const Session encoder({"offline", c.id, guidance, c.cfg}, std::make_shared<CaseData>(c));
  std::vector<std::string> frames;
  for (const auto& o : outs) frames.push_back(encoder.encode_output(o).dump());
  return frames;
}

Trajectory short_plunge(const FixtureCase& c, std::int64_t steps, std::int64_t offset = 0) {
  const auto& g = c.volume.spec();
  Trajectory traj;
  for (std::int64_t s = 0; s < steps; ++s) {
    const std::int64_t k = c.layout.slab_top - s / 40;
    traj.push_back({5 * s, g.center({8 + offset + s % 4, 8 + offset, k}), s % 17 != 0});
  }
  return traj;
}

}  // namespace

TEST(CaseCatalog, LoadsFixtureDirectory) {
  Env env;
  EXPECT_EQ(env.catalog->ids(), std::vector<std::string>{"slab"});
  const auto c = env.catalog->find("slab");
  EXPECT_EQ(c->plan, slab().plan);
  EXPECT_EQ(c->bone, slab().bone);
  EXPECT_EQ(c->home, slab().home);
  EXPECT_EQ(decode_volume(c->volume_bytes), slab().volume);
  try {
    env.catalog->find("nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownCase);
  }
  EXPECT_THROW(CaseCatalog(env.root / "missing"), Error);
}

TEST(SessionManager, CreateFindAndDistinctIds) {
  Env env;
  const auto a = env.manager->create("slab", true);
  const auto b = env.manager->create("slab", false);
  EXPECT_NE(a.session_id, b.session_id);
  EXPECT_EQ(a.case_id, "slab");
  EXPECT_EQ(env.manager->live_sessions(), 2u);
  EXPECT_EQ(env.manager->get(a.session_id)->descriptor().session_id, a.session_id);
  try {
    env.manager->create("nope", true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownCase);
  }
  try {
    env.manager->get("s9999-00000000");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownSession);
  }
}

TEST(SessionManager, LiveSessionCap) {
  Env env(2);
  const auto a = env.manager->create("slab", true);
  env.manager->create("slab", true);
  try {
    env.manager->create("slab", true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ResourceExhausted);
  }
  env.manager->finish(a.session_id);
  EXPECT_NO_THROW(env.manager->create("slab", true));
}

TEST(Session, FramesAndErrors) {
  Env env;
  const auto d = env.manager->create("slab", true);
  auto s = env.manager->get(d.session_id);
  const auto& g = slab().volume.spec();

  const auto off = json::parse(s->handle_frame(encode_pose_frame({0, g.center({12, 12, 12}), false})));
  EXPECT_EQ(off["t"], 0);
  EXPECT_TRUE(off["removed"].empty());
  EXPECT_EQ(off["force_n"], 0.0);
  EXPECT_EQ(off["warning"], "NONE");

  for (const char* bad : {"not json", "[]", "{\"t\":5}", "{\"t\":5,\"pos_mm\":[1,2],\"on\":true}",
                          "{\"t\":\"5\",\"pos_mm\":[1,2,3],\"on\":true}", "{\"t\":5,\"pos_mm\":[1,2,3],\"on\":1}"}) {
    const auto e = json::parse(s->handle_frame(bad));
    EXPECT_EQ(e["error"], "MalformedMessage") << bad;
  }
  const auto nan = json::parse(s->handle_frame("{\"t\":5,\"pos_mm\":[1e999,2,3],\"on\":true}"));
  EXPECT_TRUE(nan.contains("error"));

  // still usable after errors
  const auto on = json::parse(s->handle_frame(encode_pose_frame({10, g.center({12, 12, 17}), true})));
  ASSERT_EQ(on["removed"].size(), 1u);
  EXPECT_EQ(on["removed"][0], json::parse("[12,12,17,\"GREEN\"]"));
  EXPECT_DOUBLE_EQ(on["force_n"].get<double>(), 3.2);
  EXPECT_EQ(s->log().size(), 1u);
}

TEST(Session, GuidanceOffWithholdsZonesAndWarnings) {
  Env env;
  const auto d = env.manager->create("slab", false);
  auto s = env.manager->get(d.session_id);
  const auto& g = slab().volume.spec();
  // deep into RED territory
  for (std::int64_t t = 0; t < 200; t += 5) {
    const auto f = json::parse(s->handle_frame(encode_pose_frame({t, g.center({12, 12, 9}), true})));
    EXPECT_EQ(f["warning"], "NONE");
    for (const auto& r : f["removed"]) EXPECT_EQ(r.size(), 3u);
  }
  const auto fin = env.manager->finish(d.session_id);
  EXPECT_EQ(fin.metrics.condition, "non-navigated");
  EXPECT_GT(*fin.metrics.completion_pct[zone_index(Zone::Red)], 0.0);
}

TEST(SessionManager, FinishPersistsLogAndRejectsReuse) {
  Env env;
  const auto d = env.manager->create("slab", true);
  const auto immediate = env.manager->finish(d.session_id);
  EXPECT_EQ(immediate.metrics.removed_total, 0u);
  EXPECT_EQ(immediate.metrics.breach_count, 0u);
  EXPECT_EQ(immediate.metrics.drill_time_s, 0.0);
  EXPECT_EQ(*immediate.metrics.completion_pct[zone_index(Zone::Green)], 0.0);
  EXPECT_EQ(immediate.metrics.condition, "CAPTAiN");
  EXPECT_TRUE(fs::exists(immediate.log_path));
  EXPECT_EQ(io::read_file(immediate.log_path), "");
  try {
    env.manager->finish(d.session_id);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SessionClosed);
  }
  EXPECT_EQ(json::parse(env.manager->get(d.session_id)->handle_frame(encode_pose_frame({0, {0, 0, 0}, true})))["error"],
            "SessionClosed");
}

TEST(Session, ReplayMatchesOfflineEngine) {
  Env env;
  const auto d = env.manager->create("slab", true);
  auto s = env.manager->get(d.session_id);
  const auto traj = short_plunge(slab(), 600);
  const auto expected = offline_frames(*env.catalog->find("slab"), traj, true);
  for (std::size_t n = 0; n < traj.size(); ++n) ASSERT_EQ(s->handle_frame(encode_pose_frame(traj[n])), expected[n]);
  const auto fin = env.manager->finish(d.session_id);
  EXPECT_EQ(io::read_file(fin.log_path), encode_log(run_trajectory(slab().plan, slab().bone, {}, traj)));
}

TEST(Session, ClientTimeIsAlignedAndNeverRewinds) {
  Env env;
  auto s = env.manager->get(env.manager->create("slab", true).session_id);
  const Vec3 far{500, 500, 500};
  EXPECT_EQ(s->step(12, far, true).t_ms, 10);
  EXPECT_EQ(s->step(3, far, true).t_ms, 15);
  EXPECT_EQ(s->step(-1, far, true).t_ms, 20);
  EXPECT_EQ(s->step(1000, far, true).t_ms, 1000);
}

class ServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server = std::make_unique<Server>(*env.manager, "127.0.0.1", 0);
    server->start();
    port = server->port();
  }
  void TearDown() override { server->stop(); }

  Env env;
  std::unique_ptr<Server> server;
  unsigned short port = 0;
};

TEST_F(ServerTest, CaseEndpoints) {
  const auto cases = client::get(port, "/cases");
  EXPECT_EQ(cases.status, 200);
  EXPECT_EQ(cases.body, "[\"slab\"]");
  const auto vol = client::get(port, "/cases/slab/volume");
  EXPECT_EQ(vol.status, 200);
  EXPECT_EQ(decode_volume(vol.body), slab().volume);
  const auto plan = client::get(port, "/cases/slab/plan");
  EXPECT_EQ(decode_plan(plan.body), slab().plan);
  const auto missing = client::get(port, "/cases/nope/plan");
  EXPECT_EQ(missing.status, 404);
  EXPECT_EQ(json::parse(missing.body)["error"], "UnknownCase");
  EXPECT_EQ(client::get(port, "/elsewhere").status, 404);
}

TEST_F(ServerTest, SessionLifecycleOverHttp) {
  const auto created = client::post(port, "/sessions", "{\"case_id\":\"slab\",\"guidance_enabled\":false}");
  ASSERT_EQ(created.status, 201);
  const auto d = json::parse(created.body);
  EXPECT_EQ(d["guidance_enabled"], false);
  EXPECT_EQ(d["cfg"]["tick"], 5);
  const std::string id = d["session_id"];
  EXPECT_EQ(client::post(port, "/sessions", "{\"case_id\":\"nope\"}").status, 404);
  EXPECT_EQ(client::post(port, "/sessions", "garbage").status, 400);
  EXPECT_EQ(client::post(port, "/sessions", "{\"case_id\":\"slab\",\"guidance_enabled\":\"yes\"}").status, 400);

  const auto fin = client::post(port, "/sessions/" + id + "/finish");
  ASSERT_EQ(fin.status, 200);
  const auto m = json::parse(fin.body);
  EXPECT_EQ(m["id"], id);
  EXPECT_EQ(m["removed_total"], 0);
  EXPECT_TRUE(fs::exists(m["log_path"].get<std::string>()));
  EXPECT_EQ(client::post(port, "/sessions/" + id + "/finish").status, 409);
  EXPECT_EQ(client::post(port, "/sessions/zzz/finish").status, 404);
}

TEST_F(ServerTest, StreamReplayIsByteIdenticalToOfflineEngine) {
  const std::string id = json::parse(client::post(port, "/sessions", "{\"case_id\":\"slab\"}").body)["session_id"];
  const auto traj = short_plunge(slab(), 400);
  const auto expected = offline_frames(*env.catalog->find("slab"), traj, true);
  {
    client::Stream ws(port, "/sessions/" + id + "/stream");
    for (std::size_t n = 0; n < traj.size(); ++n) ASSERT_EQ(ws.exchange(encode_pose_frame(traj[n])), expected[n]);
    EXPECT_EQ(json::parse(ws.exchange("{oops"))["error"], "MalformedMessage");
  }
  // a second stream for the same session is refused
  EXPECT_THROW(client::Stream(port, "/sessions/" + id + "/stream"), boost::system::system_error);
  EXPECT_THROW(client::Stream(port, "/sessions/unknown/stream"), boost::system::system_error);
  const auto m = json::parse(client::post(port, "/sessions/" + id + "/finish").body);
  EXPECT_EQ(io::read_file(m["log_path"].get<std::string>()),
            encode_log(run_trajectory(slab().plan, slab().bone, {}, traj)));
}

TEST_F(ServerTest, ConcurrentSessionsDoNotInterfere) {
  constexpr int kSessions = 4;
  std::vector<std::string> ids;
  std::vector<Trajectory> trajs;
  for (int s = 0; s < kSessions; ++s) {
    ids.push_back(json::parse(client::post(port, "/sessions", "{\"case_id\":\"slab\"}").body)["session_id"]);
    trajs.push_back(short_plunge(slab(), 300, 2 * s));
  }
  std::atomic<int> mismatches{0};
  std::vector<std::thread> threads;
  for (int s = 0; s < kSessions; ++s)
    threads.emplace_back([&, s] {
      const auto expected = offline_frames(*env.catalog->find("slab"), trajs[s], true);
      client::Stream ws(port, "/sessions/" + ids[s] + "/stream");
      for (std::size_t n = 0; n < trajs[s].size(); ++n)
        if (ws.exchange(encode_pose_frame(trajs[s][n])) != expected[n]) ++mismatches;
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(mismatches.load(), 0);
  for (int s = 0; s < kSessions; ++s) {
    const auto m = json::parse(client::post(port, "/sessions/" + ids[s] + "/finish").body);
    EXPECT_EQ(io::read_file(m["log_path"].get<std::string>()),
              encode_log(run_trajectory(slab().plan, slab().bone, {}, trajs[s])));
  }
}

TEST(Server, BusyPortIsAnError) {
  Env env;
  Server first(*env.manager, "127.0.0.1", 0);
  try {
    Server second(*env.manager, "127.0.0.1", first.port());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::IoError);
  }
}
