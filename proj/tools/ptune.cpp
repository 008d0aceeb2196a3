// ptune: command-line front end for fitting, tuning, replay and the HTTP service.
#include <CLI11.hpp>
#include <csignal>
#include <fstream>
#include <iostream>
#include <spdlog/spdlog.h>

#include "ptune/error.hpp"
#include "ptune/ikc.hpp"
#include "ptune/serialize.hpp"
#include "ptune/session.hpp"
#include "ptune/simulator.hpp"
#include "ptune/synthetic.hpp"

using namespace ptune;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::string data;
  std::string home;
  int sitstand_motions = 6;
  bool verbose = false;
};

BundleConfig load_bundle_config(const Globals& g) { return g.config.empty() ? default_bundle_config() : io::load_config(g.config); }

Dataset load_data(const Globals& g) {
  if (!g.data.empty()) return load_dataset(g.data);
  synthetic::Options o;
  o.sitstand_motions = g.sitstand_motions;
  spdlog::info("no --data given, using the synthetic dataset");
  return synthetic::make_dataset(o);
}

fs::path home(const Globals& g) { return g.home.empty() ? session::storage_root() : fs::path(g.home); }

void print_vaf(const ModelBundle& b) {
  for (const auto& [id, v] : b.model_vaf) std::cout << "  " << id << "  VAF " << v << "\n";
}

TuningProfile profile_arg(const Globals& g, const std::string& id, const std::string& file) {
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + file);
    return io::profile_from_json(nlohmann::json::parse(in));
  }
  if (!id.empty()) return session::ProfileStore(home(g)).load(id);
  return TuningProfile();
}

session::HttpServer* g_server_for_signal = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prosthesis controller tuning: data-driven impedance and kinematic models with clinician offsets"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "bundle configuration (JSON)");
  app.add_option("--data", g.data, "gait dataset CSV (synthetic data when omitted)");
  app.add_option("--home", g.home, "storage root (default $PTUNE_HOME or ./ptune_home)");
  app.add_option("--sitstand-motions", g.sitstand_motions, "sit-stand motions per subject in synthetic data");
  app.add_flag("-v,--verbose", g.verbose, "debug logging");

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset CSV");
  std::string synth_out;
  synthetic::Options synth_opts;
  synth->add_option("-o,--out", synth_out, "output CSV")->required();
  synth->add_option("--subjects", synth_opts.subjects);
  synth->add_option("--strides", synth_opts.strides_per_task);
  synth->add_option("--seed", synth_opts.seed);

  // fit
  auto* fit = app.add_subcommand("fit", "fit the baseline bundle and report VAF");
  std::string fit_export;
  fit->add_option("--export", fit_export, "write the bundle archive here");

  // validate
  auto* val = app.add_subcommand("validate", "individualized vs leave-one-out RMSE per joint");
  std::string val_csv, val_task = "1.0,0";
  std::uint64_t val_seed = 1;
  val->add_option("--csv", val_csv, "write per-cell results");
  val->add_option("--baseline-task", val_task);
  val->add_option("--seed", val_seed);

  // tune
  auto* tune = app.add_subcommand("tune", "set one parameter on a profile and save it");
  std::string tune_param, tune_from, tune_name = "session";
  double tune_value = 0.0;
  tune->add_option("--param", tune_param, "stance | flexion | pushoff | sit_to_stand | stand_to_sit")->required();
  tune->add_option("--value", tune_value)->required();
  tune->add_option("--from", tune_from, "start from a saved profile id");
  tune->add_option("--name", tune_name, "profile name (its id is derived from it)");

  // regenerate
  auto* regen = app.add_subcommand("regenerate", "refit the models a profile changes");
  std::string regen_id, regen_file, regen_export;
  regen->add_option("--profile", regen_id, "saved profile id");
  regen->add_option("--profile-file", regen_file, "profile JSON file");
  regen->add_option("--export", regen_export, "write the regenerated bundle archive here");

  // simulate
  auto* sim = app.add_subcommand("simulate", "replay mean strides through the tuned and baseline bundles");
  std::string sim_id, sim_file, sim_csv, sim_json;
  sim->add_option("--profile", sim_id);
  sim->add_option("--profile-file", sim_file);
  sim->add_option("--csv", sim_csv, "comparison report CSV");
  sim->add_option("--replay-csv", sim_json, "tuned replay series CSV");

  // export
  auto* exp = app.add_subcommand("export", "write a digested bundle archive");
  std::string exp_id, exp_file, exp_out;
  exp->add_option("--profile", exp_id);
  exp->add_option("--profile-file", exp_file);
  exp->add_option("-o,--out", exp_out)->required();

  // import check
  auto* inspect = app.add_subcommand("inspect", "verify an archive and print its summary");
  std::string inspect_path;
  inspect->add_option("archive", inspect_path)->required();

  // config
  auto* cfg = app.add_subcommand("config", "print the effective configuration as JSON");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP API for the tuning interface");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*synth) {
      synth_opts.sitstand_motions = g.sitstand_motions;
      save_dataset(synthetic::make_dataset(synth_opts), synth_out);
      std::cout << "wrote " << synth_out << "\n";
      return 0;
    }
    if (*cfg) {
      std::cout << io::to_json(load_bundle_config(g)).dump(2) << "\n";
      return 0;
    }
    if (*inspect) {
      const ModelBundle b = session::import_bundle(inspect_path);
      std::cout << "profile " << b.profile.name << " v" << b.profile.version << "  hash " << b.hash() << "\n";
      print_vaf(b);
      return 0;
    }

    if (*tune) {
      session::ProfileStore store(home(g));
      TuningProfile base = tune_from.empty() ? TuningProfile() : store.load(tune_from);
      TuningProfile next = base.with(parameter_from_string(tune_param), tune_value);
      next.name = tune_name;
      next.version = base.version + 1;
      next.created_at = utc_timestamp();
      std::cout << store.save(next) << "\n";
      return 0;
    }

    const Dataset data = load_data(g);
    if (*val) {
      const ValidationReport r = validate_dataset(data, parse_task(val_task), val_seed);
      for (const auto& [joint, s] : r.joints) {
        std::cout << to_string(joint) << "  individualized " << s.mean_individualized << "  untuned "
                  << s.mean_untuned << "  improvement " << s.improvement_pct << "%  p " << s.t_test.p << "\n";
      }
      if (!val_csv.empty()) std::ofstream(val_csv) << r.to_csv();
      return 0;
    }

    const BundleConfig config = load_bundle_config(g);
    const ModelBundle baseline = build_baseline_bundle(data, config);

    if (*fit) {
      std::cout << "baseline bundle " << baseline.hash() << "\n";
      print_vaf(baseline);
      if (!fit_export.empty()) std::cout << "digest " << session::export_bundle(baseline, fit_export).digest << "\n";
      return 0;
    }
    if (*regen || *sim || *exp) {
      const std::string& id = *regen ? regen_id : *sim ? sim_id : exp_id;
      const std::string& file = *regen ? regen_file : *sim ? sim_file : exp_file;
      const Regeneration r = regenerate(baseline, profile_arg(g, id, file), data);
      if (*regen) {
        std::cout << "regenerated";
        for (const auto& m : r.regenerated) std::cout << " " << m;
        std::cout << " in " << r.wall_time_s << " s\nbundle " << r.bundle.hash() << "\n";
        print_vaf(r.bundle);
        if (!regen_export.empty()) session::export_bundle(r.bundle, regen_export);
        return 0;
      }
      if (*exp) {
        const auto e = session::export_bundle(r.bundle, exp_out);
        std::cout << e.path.string() << "  " << e.bytes << " bytes  sha256 " << e.digest << "\n";
        return 0;
      }
      std::vector<ReplayResult> tuned, base;
      for (const Task& task : data.walking_tasks()) {
        const WalkInput input = mean_input(data, task, config.joints);
        tuned.push_back(replay_walk(r.bundle, input, task));
        base.push_back(replay_walk(baseline, input, task));
      }
      std::vector<SitStandReplay> tuned_ss, base_ss;
      if (r.bundle.sitstand) {
        for (const auto& motion : data.pooled(kSitStandTask, Joint::knee).strides) {
          const auto traj = trajectory_from_motion(motion, config.calibration);
          const Direction dir = direction_of(motion);
          tuned_ss.push_back(replay_sitstand(r.bundle, traj, dir));
          base_ss.push_back(replay_sitstand(baseline, traj, dir));
        }
      }
      const ComparisonReport report = compare(tuned, base, tuned_ss, base_ss);
      std::cout << comparison_csv(report);
      if (!sim_csv.empty()) std::ofstream(sim_csv) << comparison_csv(report);
      if (!sim_json.empty()) std::ofstream(sim_json) << replay_csv(tuned);
      return 0;
    }
    if (*serve) {
      session::Service service(data, baseline, home(g));
      session::HttpServer server(service);
      g_server_for_signal = &server;
      std::signal(SIGINT, [](int) {
        if (g_server_for_signal) g_server_for_signal->stop();
      });
      spdlog::info("serving on http://{}:{} (storage {})", host, port, home(g).string());
      return server.listen(host, port) ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
