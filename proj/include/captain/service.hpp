#ifndef CAPTAIN_SERVICE_HPP
#define CAPTAIN_SERVICE_HPP

// Transport-independent session layer. The HTTP/WebSocket front end in
// server.hpp only moves bytes in and out of these types.

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "captain/distance_field.hpp"
#include "captain/drill.hpp"
#include "captain/error.hpp"
#include "captain/events.hpp"
#include "captain/metrics.hpp"
#include "captain/plan.hpp"
#include "captain/volume.hpp"

namespace captain {

/// Everything a session needs from one case directory. Immutable once
/// loaded; shared by every session of the case.
struct CaseData {
  std::string id;
  ZonePlan plan;
  DistanceField bone;
  Vec3 home{0.0, 0.0, 0.0};
  DrillConfig cfg;
  std::string volume_bytes;  // CAPV1 as stored on disk
  std::string plan_bytes;    // CAPP1 as stored on disk
};

/// Loads every case under `root`. A case is a subdirectory holding
/// volume.capv, plan.capp, bone.capf and case.json.
class CaseCatalog {
 public:
  explicit CaseCatalog(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw Error(Errc::IoError, "cases directory not found: " + root.string());
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root))
      if (entry.is_directory() && fs::exists(entry.path() / "case.json")) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) add(load_case(dir));
  }

  CaseCatalog() = default;

  void add(std::shared_ptr<const CaseData> c) { cases_[c->id] = std::move(c); }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : cases_) out.push_back(id);
    return out;
  }

  std::shared_ptr<const CaseData> find(const std::string& id) const {
    const auto it = cases_.find(id);
    if (it == cases_.end()) throw Error(Errc::UnknownCase, id);
    return it->second;
  }

  static std::shared_ptr<const CaseData> load_case(const std::filesystem::path& dir) {
    auto c = std::make_shared<CaseData>();
    c->id = dir.filename().string();
    c->volume_bytes = io::read_file(dir / "volume.capv");
    c->plan_bytes = io::read_file(dir / "plan.capp");
    decode_volume(c->volume_bytes);  // validates the file
    c->plan = decode_plan(c->plan_bytes);
    c->bone = load_field(dir / "bone.capf");
    if (!(c->bone.spec == c->plan.spec)) throw Error(Errc::SpecMismatch, "bone field and plan differ in " + c->id);
    const json meta = json::parse(io::read_file(dir / "case.json"), nullptr, false);
    if (meta.is_discarded() || !meta.is_object()) throw Error(Errc::MalformedHeader, "bad case.json in " + c->id);
    if (auto it = meta.find("home_mm"); it != meta.end()) c->home = io::read_array<double, 3>(meta, "home_mm");
    if (auto it = meta.find("drill"); it != meta.end()) c->cfg = config_from_json(*it);
    c->cfg.validate();
    return c;
  }

 private:
  std::map<std::string, std::shared_ptr<const CaseData>> cases_;
};

struct SessionDescriptor {
  std::string session_id;
  std::string case_id;
  bool guidance_enabled = true;
  DrillConfig cfg;
};

inline ordered_json descriptor_to_json(const SessionDescriptor& d) {
  ordered_json j;
  j["session_id"] = d.session_id;
  j["case_id"] = d.case_id;
  j["guidance_enabled"] = d.guidance_enabled;
  j["cfg"] = config_to_json(d.cfg);
  return j;
}

inline ordered_json error_frame(const Error& e) {
  ordered_json j;
  j["error"] = e.name();
  const std::string what = e.what();
  const auto colon = what.find(": ");
  j["detail"] = colon == std::string::npos ? std::string() : what.substr(colon + 2);
  return j;
}

/// Inbound stream frame for one trajectory sample.
inline std::string encode_pose_frame(const TrajectorySample& s) {
  ordered_json j;
  j["t"] = s.t_ms;
  j["pos_mm"] = s.pos;
  j["on"] = s.on;
  return j.dump();
}

/// One drilling attempt: a drill engine over a case, fed by pose frames.
class Session {
 public:
  Session(SessionDescriptor d, std::shared_ptr<const CaseData> c)
      : desc_(std::move(d)), case_(std::move(c)), state_(make_state(case_->plan, case_->home)) {}

  const SessionDescriptor& descriptor() const { return desc_; }
  const CaseData& case_data() const { return *case_; }

  /// Runs one tick for an inbound pose. The client time is advisory: the
  /// tick starts at max(server time, client time rounded down to a tick).
  TickOutput step(std::int64_t client_t, const Vec3& pose, bool on) {
    std::lock_guard lock(mu_);
    if (closed_) throw Error(Errc::SessionClosed, desc_.session_id);
    if (client_t >= 0) {
      const std::int64_t aligned = client_t - client_t % desc_.cfg.tick;
      state_.sim_time = std::max(state_.sim_time, aligned);
    }
    auto out = tick(state_, pose, on, desc_.cfg, case_->plan, case_->bone);
    append_events(log_, out, case_->plan.spec);
    return out;
  }

  /// Parses one inbound JSON frame and returns the outbound frame text.
  /// Malformed input yields an error frame; the session stays usable.
  std::string handle_frame(std::string_view text) {
    try {
      const json j = json::parse(text, nullptr, false);
      if (j.is_discarded() || !j.is_object()) throw Error(Errc::MalformedMessage, "frame is not a JSON object");
      const auto t = j.find("t");
      if (t == j.end() || !t->is_number_integer()) throw Error(Errc::MalformedMessage, "frame needs integer t");
      const auto p = j.find("pos_mm");
      if (p == j.end() || !p->is_array() || p->size() != 3)
        throw Error(Errc::MalformedMessage, "frame needs pos_mm=[x,y,z]");
      Vec3 pose{};
      for (int a = 0; a < 3; ++a) {
        if (!(*p)[a].is_number()) throw Error(Errc::MalformedMessage, "pos_mm entries must be numbers");
        pose[a] = (*p)[a].get<double>();
      }
      const auto on = j.find("on");
      if (on == j.end() || !on->is_boolean()) throw Error(Errc::MalformedMessage, "frame needs boolean on");
      return encode_output(step(t->get<std::int64_t>(), pose, on->get<bool>())).dump();
    } catch (const Error& e) {
      return error_frame(e).dump();
    }
  }

  /// Outbound frame. Without guidance, zones and warnings are withheld.
  ordered_json encode_output(const TickOutput& out) const {
    ordered_json j;
    j["t"] = out.t_ms;
    ordered_json removed = ordered_json::array();
    for (const auto& r : out.removed) {
      const Index3 v = case_->plan.spec.unlinear(r.index);
      ordered_json e = ordered_json::array({v.i, v.j, v.k});
      if (desc_.guidance_enabled) e.push_back(zone_name(r.zone));
      removed.push_back(std::move(e));
    }
    j["removed"] = std::move(removed);
    j["force_n"] = out.force;
    j["audio_hz"] = out.audio_hz;
    j["warning"] = desc_.guidance_enabled ? warning_name(out.warning) : warning_name(Warning::None);
    return j;
  }

  /// Claims the single streaming connection; false if one was already used.
  bool attach_stream() {
    std::lock_guard lock(mu_);
    if (closed_ || stream_used_) return false;
    stream_used_ = true;
    return true;
  }

  RemovalLog log() const {
    std::lock_guard lock(mu_);
    return log_;
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

  /// Closes the session and returns its final log.
  RemovalLog close() {
    std::lock_guard lock(mu_);
    if (closed_) throw Error(Errc::SessionClosed, desc_.session_id);
    closed_ = true;
    return log_;
  }

 private:
  SessionDescriptor desc_;
  std::shared_ptr<const CaseData> case_;
  mutable std::mutex mu_;
  DrillState state_;
  RemovalLog log_;
  bool closed_ = false;
  bool stream_used_ = false;
};

struct FinishedSession {
  SessionMetrics metrics;
  std::filesystem::path log_path;
  RemovalLog log;
};

inline ordered_json finished_to_json(const FinishedSession& f) {
  ordered_json j = metrics_to_json(f.metrics);
  j["log_path"] = f.log_path.string();
  return j;
}

class SessionManager {
 public:
  SessionManager(std::shared_ptr<const CaseCatalog> catalog, std::filesystem::path log_dir,
                 std::size_t max_live_sessions = 16)
      : catalog_(std::move(catalog)), log_dir_(std::move(log_dir)), max_live_(max_live_sessions) {
    std::random_device rd;
    salt_ = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }

  const CaseCatalog& catalog() const { return *catalog_; }

  SessionDescriptor create(const std::string& case_id, bool guidance_enabled) {
    auto c = catalog_->find(case_id);
    std::lock_guard lock(mu_);
    if (live_ >= max_live_) throw Error(Errc::ResourceExhausted, "session limit reached");
    SessionDescriptor d{next_id(), case_id, guidance_enabled, c->cfg};
    sessions_[d.session_id] = std::make_shared<Session>(d, std::move(c));
    ++live_;
    return d;
  }

  std::shared_ptr<Session> get(const std::string& session_id) const {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw Error(Errc::UnknownSession, session_id);
    return it->second;
  }

  /// Closes the session, writes <log_dir>/<id>.jsonl and returns metrics.
  FinishedSession finish(const std::string& session_id) {
    auto s = get(session_id);
    FinishedSession f;
    f.log = s->close();
    {
      std::lock_guard lock(mu_);
      --live_;
    }
    const auto& d = s->descriptor();
    f.metrics = compute_metrics(f.log, s->case_data().plan, d.session_id,
                                d.guidance_enabled ? "CAPTAiN" : "non-navigated");
    std::filesystem::create_directories(log_dir_);
    f.log_path = log_dir_ / (d.session_id + ".jsonl");
    save_log(f.log, f.log_path);
    return f;
  }

  std::size_t live_sessions() const {
    std::lock_guard lock(mu_);
    return live_;
  }

 private:
  std::string next_id() {
    char buf[48];
    const auto n = ++counter_;
    std::snprintf(buf, sizeof buf, "s%04" PRIu64 "-%08" PRIx64, n,
                  static_cast<std::uint64_t>((salt_ ^ (n * 0x9E3779B97F4A7C15ull)) & 0xffffffffull));
    return buf;
  }

  std::shared_ptr<const CaseCatalog> catalog_;
  std::filesystem::path log_dir_;
  std::size_t max_live_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::size_t live_ = 0;
  std::uint64_t counter_ = 0;
  std::uint64_t salt_ = 0;
};

}  // namespace captain

#endif  // CAPTAIN_SERVICE_HPP
