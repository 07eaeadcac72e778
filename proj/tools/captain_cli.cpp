// captain: command-line front end for the preoperative pipeline, batch
// simulation, reporting and the session server.
//
// Exit codes: 0 success, 1 runtime failure, 2 bad flags or invalid input.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "captain/distance_field.hpp"
#include "captain/drill.hpp"
#include "captain/error.hpp"
#include "captain/fixture.hpp"
#include "captain/plan.hpp"
#include "captain/report.hpp"
#include "captain/server.hpp"
#include "captain/service.hpp"
#include "captain/volume.hpp"

namespace fs = std::filesystem;
using namespace captain;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Errors caused by the caller's flags or input contents rather than by the
// environment; these exit with the usage code.
bool is_usage_error(Errc e) {
  switch (e) {
    case Errc::EmptyStructure:
    case Errc::EmptyList:
    case Errc::EmptyTarget:
    case Errc::SpecMismatch:
    case Errc::NonMonotoneTimestamps:
    case Errc::MalformedTrajectory:
    case Errc::MisalignedInputs:
    case Errc::LengthMismatch:
    case Errc::TooFewPairs:
    case Errc::InvalidArgument: return true;
    default: return false;
  }
}

struct Overrides {
  DrillConfig drill;
  ShellParams shell;
};

// Optional JSON config: a flat object using DrillConfig and ShellParams field names.
Overrides load_config(const std::string& path) {
  Overrides o;
  if (path.empty()) return o;
  const json j = json::parse(io::read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(Errc::InvalidArgument, "config is not a JSON object: " + path);
  o.drill = config_from_json(j);
  o.shell = params_from_json(j);
  o.shell.validate();
  return o;
}

CodeSet to_codes(const std::vector<int>& values) {
  CodeSet codes;
  for (int v : values) {
    if (v < 0 || v > 255) throw Error(Errc::InvalidArgument, "label code out of range: " + std::to_string(v));
    codes.insert(static_cast<LabelCode>(v));
  }
  return codes;
}

std::string structure_name(const LabelVolume& volume, const CodeSet& codes) {
  std::string name;
  for (auto c : codes) {
    if (!name.empty()) name += '+';
    const auto it = volume.palette().find(c);
    name += it != volume.palette().end() ? it->second : std::to_string(c);
  }
  return name;
}

struct EdtArgs {
  std::string volume, out, name;
  std::vector<int> codes;
  bool is_signed = false;
};

int cmd_edt(const EdtArgs& a) {
  const auto volume = load_volume(a.volume);
  const auto codes = to_codes(a.codes);
  if (codes.empty()) throw Error(Errc::EmptyStructure, "no label codes selected");
  const std::string name = a.name.empty() ? structure_name(volume, codes) : a.name;
  DistanceField field;
  if (a.is_signed) {
    field = signed_edt(volume, codes, name);
  } else {
    const auto mask = mask_of(volume, codes);
    if (mask.empty()) throw Error(Errc::EmptyStructure, "selected codes have no voxels");
    field = exact_edt(mask, name);
  }
  save_field(field, a.out);
  std::cout << "wrote " << a.out << " (" << field.structure_name << ", " << field.values.size() << " voxels)\n";
  return 0;
}

struct PlanArgs {
  std::string volume, out, config;
  std::vector<int> target_codes;
  std::vector<std::string> protect;
  double yellow_mm = -1.0;
};

int cmd_plan(const PlanArgs& a) {
  const auto cfg = load_config(a.config);
  // parse everything before reading fields so bad flags fail fast
  std::vector<std::pair<std::string, std::optional<double>>> specs;
  for (const auto& p : a.protect) {
    const auto eq = p.rfind('=');
    if (eq == std::string::npos) {
      specs.emplace_back(p, std::nullopt);
      continue;
    }
    double mm = 0.0;
    try {
      std::size_t used = 0;
      mm = std::stod(p.substr(eq + 1), &used);
      if (used != p.size() - eq - 1) throw std::invalid_argument(p);
    } catch (const std::logic_error&) {
      throw Error(Errc::InvalidArgument, "bad --protect value '" + p + "', expected field=mm");
    }
    if (!(mm >= 0.0)) throw Error(Errc::InvalidArgument, "red thickness must be >= 0 in '" + p + "'");
    specs.emplace_back(p.substr(0, eq), mm);
  }
  const double yellow = a.yellow_mm >= 0.0 ? a.yellow_mm : cfg.shell.yellow_thickness;

  const auto volume = load_volume(a.volume);
  std::vector<DistanceField> fields;
  fields.reserve(specs.size());
  for (const auto& [path, mm] : specs) fields.push_back(load_field(path));
  std::vector<ProtectShell> shells;
  for (std::size_t n = 0; n < fields.size(); ++n) {
    double red = 0.0;
    if (specs[n].second) {
      red = *specs[n].second;
    } else {
      const auto it = cfg.shell.red_thickness_per_structure.find(fields[n].structure_name);
      if (it == cfg.shell.red_thickness_per_structure.end())
        throw Error(Errc::InvalidArgument, "no red thickness for '" + fields[n].structure_name + "'; use field=mm");
      red = it->second;
    }
    shells.push_back({&fields[n], red});
  }
  auto plan = build_plan(volume, to_codes(a.target_codes), shells, yellow);
  plan.params.cortical_shell = cfg.shell.cortical_shell;
  save_plan(plan, a.out);
  std::cout << "wrote " << a.out << ":";
  for (Zone z : kDrillableZones) std::cout << ' ' << zone_name(z) << '=' << plan.planned(z);
  std::cout << '\n';
  return 0;
}

struct SimulateArgs {
  std::string plan, bone, traj, out_log, config;
};

int cmd_simulate(const SimulateArgs& a) {
  const auto cfg = load_config(a.config);
  const auto traj = load_trajectory(a.traj);
  validate_trajectory(traj, cfg.drill);
  const auto plan = load_plan(a.plan);
  const auto bone = load_field(a.bone);
  const auto log = run_trajectory(plan, bone, cfg.drill, traj);
  save_log(log, a.out_log);
  std::cout << "wrote " << a.out_log << " (" << log.size() << " removals from " << traj.size() << " samples)\n";
  return 0;
}

struct ReportArgs {
  std::vector<std::string> logs, plans, labels;
  std::string json_out;
  std::size_t min_voxels = 5;
  std::int64_t merge_ms = 2000;
};

int cmd_report(const ReportArgs& a) {
  if (a.logs.size() != a.plans.size())
    throw Error(Errc::MisalignedInputs,
                std::to_string(a.logs.size()) + " logs but " + std::to_string(a.plans.size()) + " plans");
  if (!a.labels.empty() && a.labels.size() != a.logs.size())
    throw Error(Errc::MisalignedInputs,
                std::to_string(a.logs.size()) + " logs but " + std::to_string(a.labels.size()) + " labels");
  std::vector<SessionLabel> labels;
  for (std::size_t n = 0; n < a.logs.size(); ++n) {
    const std::string stem = fs::path(a.logs[n]).stem().string();
    labels.push_back(a.labels.empty() ? SessionLabel{stem, "unlabelled"} : parse_label(a.labels[n], stem));
  }
  std::vector<RemovalLog> logs;
  for (const auto& p : a.logs) logs.push_back(load_log(p));
  // identical plan paths share one decoded plan
  std::map<std::string, ZonePlan> plan_cache;
  std::vector<const ZonePlan*> plans;
  for (const auto& p : a.plans) {
    auto it = plan_cache.find(p);
    if (it == plan_cache.end()) it = plan_cache.emplace(p, load_plan(p)).first;
    plans.push_back(&it->second);
  }
  const auto report = session_report(logs, plans, labels, {a.min_voxels, a.merge_ms});
  if (!a.json_out.empty()) io::write_file(a.json_out, report_to_json(report).dump(2) + "\n");
  std::cout << format_report_table(report);
  return 0;
}

struct ServeArgs {
  std::string cases_dir, log_dir = "session_logs", host = "127.0.0.1";
  unsigned short port = 8080;
  std::size_t max_sessions = 16;
};

int cmd_serve(const ServeArgs& a) {
  // block termination signals before any thread starts so sigwait sees them
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  std::signal(SIGPIPE, SIG_IGN);

  auto catalog = std::make_shared<const CaseCatalog>(a.cases_dir);
  SessionManager sessions(catalog, a.log_dir, a.max_sessions);
  std::unique_ptr<Server> server;
  try {
    server = std::make_unique<Server>(sessions, a.host, a.port);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return kExitUsage;
  }
  server->start();
  std::cout << "listening on " << a.host << ':' << server->port() << " with " << catalog->ids().size() << " case(s)"
            << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server->stop();
  std::cout << "stopped" << std::endl;
  return 0;
}

struct FixtureArgs {
  std::string out_dir;
  std::int64_t n = 24;
};

int cmd_fixture(const FixtureArgs& a) {
  SlabLayout l;
  if (a.n != l.n) {
    if (a.n < 12) throw Error(Errc::InvalidArgument, "--size must be at least 12");
    // scale the layer boundaries with the cube edge
    l.n = a.n;
    l.plane_top = a.n * 7 / 24;
    l.slab_top = a.n * 17 / 24;
    l.wall_x = a.n * 4 / 24;
    l.anatomy_x = a.n * 20 / 24;
  }
  const auto c = make_slab_case(l);
  const fs::path dir(a.out_dir);
  write_case_dir(c, dir / "slab");
  save_trajectory(sample_trajectory(c), dir / "trajectory.jsonl");
  std::cout << "wrote case " << (dir / "slab").string() << " and " << (dir / "trajectory.jsonl").string() << '\n';
  return 0;
}

struct ConvertArgs {
  std::string raw, meta, out;
};

// Raw uint8 label export plus a JSON sidecar {dims, spacing_mm, origin_mm, palette}.
int cmd_convert(const ConvertArgs& a) {
  const json meta = json::parse(io::read_file(a.meta), nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) throw Error(Errc::InvalidArgument, "sidecar is not a JSON object");
  GridSpec g;
  try {
    g = io::read_grid(meta);
  } catch (const Error& e) {
    throw Error(Errc::InvalidArgument, e.what());
  }
  std::map<LabelCode, std::string> palette;
  if (auto it = meta.find("palette"); it != meta.end()) {
    if (!it->is_object()) throw Error(Errc::InvalidArgument, "palette must be an object");
    for (const auto& [key, name] : it->items()) {
      int code = -1;
      try {
        code = std::stoi(key);
      } catch (const std::logic_error&) {
      }
      if (code < 1 || code > 255 || !name.is_string())
        throw Error(Errc::InvalidArgument, "palette entries must map codes 1..255 to names");
      palette[static_cast<LabelCode>(code)] = name.get<std::string>();
    }
  }
  const std::string raw = io::read_file(a.raw);
  if (raw.size() != g.voxel_count())
    throw Error(Errc::InvalidArgument, "raw file has " + std::to_string(raw.size()) + " bytes, dims need " +
                                           std::to_string(g.voxel_count()));
  std::vector<LabelCode> labels(raw.begin(), raw.end());
  const LabelVolume volume(g, std::move(labels), std::move(palette));
  save_volume(volume, a.out);
  std::cout << "wrote " << a.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"captain: voxel drilling simulation with distance-field guidance"};
  app.require_subcommand(1);

  EdtArgs edt;
  auto* c_edt = app.add_subcommand("edt", "distance field of selected labels, written as CAPF1");
  c_edt->add_option("--volume", edt.volume, "CAPV1 label volume")->required()->check(CLI::ExistingFile);
  c_edt->add_option("--codes", edt.codes, "label codes forming the structure")->required()->delimiter(',');
  c_edt->add_flag("--signed", edt.is_signed, "signed distance to the surface, negative inside");
  c_edt->add_option("--name", edt.name, "structure name (default: palette names joined by '+')");
  c_edt->add_option("--out", edt.out, "output CAPF1 path")->required();

  PlanArgs plan;
  auto* c_plan = app.add_subcommand("plan", "GREEN/YELLOW/RED zone plan, written as CAPP1");
  c_plan->add_option("--volume", plan.volume, "CAPV1 label volume")->required()->check(CLI::ExistingFile);
  c_plan->add_option("--target-codes", plan.target_codes, "label codes to be drilled")->required()->delimiter(',');
  c_plan->add_option("--protect", plan.protect, "protected structure field, as path.capf=red_mm or path.capf");
  c_plan->add_option("--yellow-mm", plan.yellow_mm, "yellow band thickness beyond the red shell")
      ->check(CLI::NonNegativeNumber);
  c_plan->add_option("--config", plan.config, "JSON config with shell thickness defaults")
      ->check(CLI::ExistingFile);
  c_plan->add_option("--out", plan.out, "output CAPP1 path")->required();

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "replay a trajectory through the drill engine");
  c_sim->add_option("--plan", sim.plan, "CAPP1 zone plan")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--bone-field", sim.bone, "CAPF1 signed bone field")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--traj", sim.traj, "trajectory JSON lines")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--out-log", sim.out_log, "output removal log (JSON lines)")->required();
  c_sim->add_option("--config", sim.config, "JSON config with drill parameters")->check(CLI::ExistingFile);

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "session metrics and paired one-sided t-tests");
  c_rep->add_option("--logs", rep.logs, "removal logs")->required()->check(CLI::ExistingFile);
  c_rep->add_option("--plans", rep.plans, "zone plan for each log")->required()->check(CLI::ExistingFile);
  c_rep->add_option("--labels", rep.labels, "id:condition for each log");
  c_rep->add_option("--json", rep.json_out, "also write the report as JSON");
  c_rep->add_option("--min-voxels", rep.min_voxels, "consecutive forbidden removals that make a breach")
      ->check(CLI::PositiveNumber);
  c_rep->add_option("--merge-ms", rep.merge_ms, "gap below which breaches merge")->check(CLI::NonNegativeNumber);

  ServeArgs srv;
  auto* c_srv = app.add_subcommand("serve", "HTTP and WebSocket session server");
  c_srv->add_option("--cases-dir", srv.cases_dir, "directory of case subdirectories")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_srv->add_option("--port", srv.port, "TCP port (0 picks a free one)");
  c_srv->add_option("--host", srv.host, "bind address");
  c_srv->add_option("--log-dir", srv.log_dir, "where finished session logs are written");
  c_srv->add_option("--max-sessions", srv.max_sessions, "live session limit")->check(CLI::PositiveNumber);

  FixtureArgs fix;
  auto* c_fix = app.add_subcommand("fixture", "write the synthetic slab case and a sample trajectory");
  c_fix->add_option("--out-dir", fix.out_dir, "output directory")->required();
  c_fix->add_option("--size", fix.n, "cube edge in voxels");

  ConvertArgs conv;
  auto* c_conv = app.add_subcommand("convert", "raw uint8 labels plus JSON sidecar to CAPV1");
  c_conv->add_option("--raw", conv.raw, "raw label bytes, x fastest")->required()->check(CLI::ExistingFile);
  c_conv->add_option("--meta", conv.meta, "JSON sidecar with dims, spacing_mm, origin_mm, palette")
      ->required()
      ->check(CLI::ExistingFile);
  c_conv->add_option("--out", conv.out, "output CAPV1 path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (c_edt->parsed()) return cmd_edt(edt);
    if (c_plan->parsed()) return cmd_plan(plan);
    if (c_sim->parsed()) return cmd_simulate(sim);
    if (c_rep->parsed()) return cmd_report(rep);
    if (c_srv->parsed()) return cmd_serve(srv);
    if (c_fix->parsed()) return cmd_fixture(fix);
    if (c_conv->parsed()) return cmd_convert(conv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_usage_error(e.code()) ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
