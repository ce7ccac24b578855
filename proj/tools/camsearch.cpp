// camsearch: command-line front end for scene inspection, evaluation,
// training, baselines, coverage export and the HTTP service.

#include <csignal>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "camsearch/catalog.hpp"
#include "camsearch/error.hpp"
#include "camsearch/io.hpp"
#include "camsearch/manifest.hpp"
#include "camsearch/search.hpp"
#include "camsearch/service.hpp"
#include "camsearch/visibility.hpp"

namespace cs = camsearch;

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

void print(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Camera configuration search for multi-view pedestrian detection"};
  app.require_subcommand(1);
  app.fallthrough();
  std::vector<std::string> scene_dirs;
  app.add_option("--scene-dir", scene_dirs, "Extra directory of *.json scenes (repeatable)");

  // scenes
  auto* scenes = app.add_subcommand("scenes", "List or show scenes");
  scenes->require_subcommand(1);
  auto* scenes_list = scenes->add_subcommand("list", "Enumerate bundled and user scenes");
  auto* scenes_show = scenes->add_subcommand("show", "Print one scene as JSON");
  std::string show_name;
  scenes_show->add_option("name", show_name, "Scene name or path")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a camera configuration");
  std::string scene_arg, cameras_file, split = "test";
  std::uint64_t seed = 0;
  eval->add_option("--scene", scene_arg, "Scene name or path")->required();
  eval->add_option("--cameras", cameras_file, "JSON list of {x,y,z,yaw,pitch,fov}, radians")->required();
  eval->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--seed", seed, "Master seed for frame sampling");

  // train
  auto* train = app.add_subcommand("train", "Run the RL camera search");
  long long steps = -1;
  std::string out_dir;
  std::vector<std::string> ppo_sets;
  bool resume = false;
  train->add_option("--scene", scene_arg, "Scene name or path")->required();
  train->add_option("--seed", seed, "Master seed");
  train->add_option("--steps", steps, "Training steps (default 50000)");
  train->add_option("--out", out_dir, "Output directory for logs and checkpoints");
  train->add_option("--ppo", ppo_sets, "PPO override key=value (repeatable)");
  train->add_flag("--resume", resume, "Continue from DIR/checkpoint.slck");

  // baseline
  auto* baseline = app.add_subcommand("baseline", "Run a baseline search");
  baseline->require_subcommand(1);
  auto* base_random = baseline->add_subcommand("random", "Best of B uniform samples on one training frame");
  long long budget = 2000;
  base_random->add_option("--scene", scene_arg, "Scene name or path")->required();
  base_random->add_option("--budget", budget, "Number of sampled configurations")->check(CLI::PositiveNumber);
  base_random->add_option("--seed", seed, "Master seed");
  auto* base_cov = baseline->add_subcommand("coverage", "Greedy ground-coverage placement");
  base_cov->add_option("--scene", scene_arg, "Scene name or path")->required();
  base_cov->add_option("--seed", seed, "Master seed for the evaluation frames");

  // coverage
  auto* coverage = app.add_subcommand("coverage", "Export a coverage map");
  std::string pgm_out, csv_out;
  coverage->add_option("--scene", scene_arg, "Scene name or path")->required();
  coverage->add_option("--cameras", cameras_file, "Camera JSON file")->required();
  coverage->add_option("--out", pgm_out, "PGM (P2) output path")->required();
  coverage->add_option("--csv", csv_out, "Optional CSV output path");

  // serve
  auto* serve = app.add_subcommand("serve", "Start the HTTP service");
  std::string host = "127.0.0.1", job_dir;
  int port = 8080;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->check(CLI::Range(0, 65535));
  serve->add_option("--job-dir", job_dir, "Directory for search-job artifacts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << cs::error_json("usage_error", e.what()).dump() << '\n';
    return 1;
  }

  try {
    std::vector<std::filesystem::path> dirs(scene_dirs.begin(), scene_dirs.end());
    const cs::SceneCatalog catalog(dirs);

    if (*scenes_list) {
      nlohmann::ordered_json out = nlohmann::ordered_json::array();
      for (const auto& e : catalog.list()) {
        const cs::Scene s = cs::load_scene(e.path);
        out.push_back({{"name", e.name},
                       {"path", e.path.string()},
                       {"bundled", e.bundled},
                       {"num_cameras", s.num_cameras},
                       {"obstacles", s.obstacles.size()}});
      }
      print(out);
    } else if (*scenes_show) {
      std::cout << cs::scene_to_json(catalog.load(show_name)).dump(2) << '\n';
    } else if (*eval) {
      const cs::Scene scene = catalog.load(scene_arg);
      const auto cams = cs::load_cameras(cameras_file);
      std::cout << cs::eval_report_text(cs::evaluate_split(scene, cams, cs::parse_split(split), seed));
    } else if (*train) {
      const cs::Scene scene = catalog.load(scene_arg);
      nlohmann::json overrides = nlohmann::json::object();
      for (const auto& kv : ppo_sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw cs::Error(cs::errc::kValidation, "--ppo expects key=value, got '" + kv + "'");
        overrides[kv.substr(0, eq)] = cs::parse_json(kv.substr(eq + 1), "--ppo " + kv.substr(0, eq));
      }
      if (steps >= 0) overrides["max_steps"] = steps;
      cs::TrainOptions opts;
      opts.ppo = cs::apply_ppo_overrides({}, overrides);
      opts.seed = seed;
      opts.out_dir = out_dir;
      opts.resume = resume;
      const cs::RunManifest manifest{catalog.path_of(scene_arg), seed, overrides, out_dir};
      opts.manifest = manifest.hash(scene, opts.ppo);
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        cs::write_text(std::filesystem::path(out_dir) / "manifest.json",
                       manifest.to_json(scene, opts.ppo).dump(2) + "\n");
      }
      const cs::TrainResult r = cs::train(scene, opts);
      nlohmann::ordered_json summary = {{"manifest", opts.manifest},
                                        {"scene", scene.name},
                                        {"seed", seed},
                                        {"steps", r.steps},
                                        {"episodes", r.episodes},
                                        {"best_moda", r.best_moda},
                                        {"best_cameras", cs::cameras_to_json(r.best_cameras)}};
      if (!out_dir.empty()) cs::write_text(std::filesystem::path(out_dir) / "summary.json", summary.dump(2) + "\n");
      print(summary);
    } else if (*base_random) {
      const cs::Scene scene = catalog.load(scene_arg);
      const auto r = cs::baseline_random_search(scene, budget, seed);
      print({{"baseline", "random"},
             {"scene", scene.name},
             {"budget", budget},
             {"seed", seed},
             {"train_score", r.train_score},
             {"cameras", cs::cameras_to_json(r.cameras)},
             {"test", cs::report_to_json(r.test)}});
    } else if (*base_cov) {
      const cs::Scene scene = catalog.load(scene_arg);
      const auto r = cs::baseline_max_coverage(scene, {}, seed);
      print({{"baseline", "coverage"},
             {"scene", scene.name},
             {"seed", seed},
             {"covered_fraction", r.train_score},
             {"gains", r.gains},
             {"cameras", cs::cameras_to_json(r.cameras)},
             {"test", cs::report_to_json(r.test)}});
    } else if (*coverage) {
      const cs::Scene scene = catalog.load(scene_arg);
      const auto cams = cs::load_cameras(cameras_file);
      cs::validate_cameras(scene, cams);
      const cs::CoverageGrid grid = cs::coverage_grid(scene, cams);
      {
        std::ofstream out(pgm_out);
        if (!out) throw cs::Error(cs::errc::kIo, "cannot write " + pgm_out);
        cs::write_pgm(out, grid);
      }
      if (!csv_out.empty()) {
        std::ofstream out(csv_out);
        if (!out) throw cs::Error(cs::errc::kIo, "cannot write " + csv_out);
        cs::write_csv(out, grid);
      }
      print({{"covered_fraction", grid.covered_fraction()}, {"nx", grid.nx}, {"ny", grid.ny}, {"pgm", pgm_out}});
    } else if (*serve) {
      cs::ServiceOptions sopts;
      sopts.scene_dirs = dirs;
      sopts.job_dir = job_dir;
      cs::Service service(sopts);
      httplib::Server srv;
      service.mount(srv);
      g_server = &srv;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      if (!srv.bind_to_port(host, port)) throw cs::Error(cs::errc::kIo, "cannot bind " + host + ":" + std::to_string(port));
      std::cerr << "listening on http://" << host << ':' << port << '\n';
      srv.listen_after_bind();
      g_server = nullptr;
    }
  } catch (const cs::Error& e) {
    std::cerr << cs::error_json(e.code(), e.what()).dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << cs::error_json("internal_error", e.what()).dump() << '\n';
    return 1;
  }
  return 0;
}
