#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

#include "camsearch/catalog.hpp"
#include "camsearch/io.hpp"
#include "camsearch/manifest.hpp"
#include "camsearch/service.hpp"

using namespace camsearch;
namespace fs = std::filesystem;

namespace {

const fs::path kData = fs::path(CAMSEARCH_DATA_DIR);

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("camsearch_if_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct CliRun {
  int exit_code = -1;
  std::string out, err;
};

// Runs the CLI with stdout captured through a pipe and stderr through a file.
CliRun run_cli(const std::string& args) {
  const fs::path err_file = fs::temp_directory_path() / ("camsearch_if_err_" + std::to_string(::getpid()));
  const std::string cmd = std::string("\"") + CAMSEARCH_CLI + "\" " + args + " 2>\"" + err_file.string() + "\"";
  CliRun r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = read_text(err_file);
  fs::remove(err_file);
  return r;
}

Scene cafe() { return load_scene(kData / "scenes" / "cafe.json"); }

nlohmann::json example_request() {
  return {{"scene", "cafe"}, {"cameras", parse_json(read_text(kData / "cameras" / "cafe_example.json"), "cameras")},
          {"split", "test"}, {"seed", 0}};
}

// Serves one Service on an ephemeral loopback port for the life of the object.
struct LiveServer {
  Service service;
  httplib::Server srv;
  std::thread th;
  int port = 0;

  explicit LiveServer(ServiceOptions o) : service(std::move(o)) {
    service.mount(srv);
    port = srv.bind_to_any_port("127.0.0.1");
    th = std::thread([this] { srv.listen_after_bind(); });
    srv.wait_until_ready();
  }
  ~LiveServer() {
    srv.stop();
    th.join();
    service.shutdown();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(120, 0);
    return c;
  }
};

ServiceOptions small_service() {
  ServiceOptions o;
  o.ppo.buffer_size = 64;
  o.ppo.minibatch = 32;
  o.ppo.epochs = 1;
  o.ppo.eval_every_episodes = 10;
  o.max_job_steps = 1000;
  return o;
}

}  // namespace

// io

TEST(CameraJson, ParsesAndRoundTrips) {
  const auto j = nlohmann::json::parse(R"([{"x": 1, "y": 2, "z": 3, "yaw": 0.5, "pitch": -0.1, "fov": 1.2}])");
  const auto cams = cameras_from_json(j);
  ASSERT_EQ(cams.size(), 1u);
  EXPECT_DOUBLE_EQ(cams[0].yaw, 0.5);
  EXPECT_DOUBLE_EQ(cams[0].fov, 1.2);
  const auto back = cameras_from_json(nlohmann::json::parse(cameras_to_json(cams).dump()));
  EXPECT_DOUBLE_EQ(back[0].pitch, -0.1);
  EXPECT_DOUBLE_EQ(back[0].z, 3.0);
}

TEST(CameraJson, RejectsDegreesUnknownAndMissingKeys) {
  auto parse = [](const char* s) { return code_of([&] { cameras_from_json(nlohmann::json::parse(s)); }); };
  EXPECT_EQ(parse(R"([{"x":1,"y":2,"z":3,"yaw_deg":10,"pitch":0,"fov":1}])"), errc::kValidation);
  EXPECT_EQ(parse(R"([{"x":1,"y":2,"z":3,"yaw":0,"pitch":0,"fov":1,"roll":0}])"), errc::kValidation);
  EXPECT_EQ(parse(R"([{"x":1,"y":2,"z":3,"yaw":0,"pitch":0}])"), errc::kValidation);
  EXPECT_EQ(parse(R"([{"x":"1","y":2,"z":3,"yaw":0,"pitch":0,"fov":1}])"), errc::kValidation);
  EXPECT_EQ(parse(R"({"x":1})"), errc::kValidation);
  try {
    cameras_from_json(nlohmann::json::parse(R"([{"x":1,"y":2,"z":3,"yaw":0,"pitch":0,"fov_deg":60}])"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("degrees"), std::string::npos);
  }
}

TEST(ValidateCameras, Limits) {
  const Scene s = cafe();
  const auto example = load_cameras(kData / "cameras" / "cafe_example.json");
  EXPECT_NO_THROW(validate_cameras(s, example));
  EXPECT_EQ(code_of([&] { validate_cameras(s, std::vector<CameraConfig>{}); }), errc::kEmptyCameras);
  auto too_many = example;
  too_many.resize(static_cast<std::size_t>(s.num_cameras) + 1, example[0]);
  EXPECT_EQ(code_of([&] { validate_cameras(s, too_many); }), errc::kValidation);
  auto outside = example;
  outside[0].x = s.config_space.x.hi + 1.0;
  EXPECT_EQ(code_of([&] { validate_cameras(s, outside); }), errc::kValidation);
  outside = example;
  outside[1].fov = s.config_space.fov.lo * 0.5;
  EXPECT_EQ(code_of([&] { validate_cameras(s, outside); }), errc::kValidation);
}

TEST(Io, ReadAndParseErrors) {
  EXPECT_EQ(code_of([] { read_text("/nonexistent/camsearch.json"); }), errc::kIo);
  EXPECT_EQ(code_of([] { parse_json("{not json", "test"); }), errc::kParse);
  const auto dir = temp_dir("io");
  EXPECT_EQ(code_of([&] { write_text(dir / "no" / "such" / "f.txt", "x"); }), errc::kIo);
  write_text(dir / "f.txt", "hello");
  EXPECT_EQ(read_text(dir / "f.txt"), "hello");
  fs::remove_all(dir);
}

// catalog

TEST(Catalog, ListsBundledScenes) {
  const SceneCatalog cat;
  const auto list = cat.list();
  ASSERT_EQ(list.size(), 3u);
  EXPECT_EQ(list[0].name, "atrium");
  EXPECT_EQ(list[1].name, "cafe");
  EXPECT_EQ(list[2].name, "market");
  for (const auto& e : list) EXPECT_TRUE(e.bundled);
  EXPECT_EQ(code_of([&] { cat.load("nowhere"); }), errc::kSceneNotFound);
}

TEST(Catalog, UserDirectoryShadowsBundled) {
  const auto dir = temp_dir("catalog");
  auto j = scene_to_json(cafe());
  j["num_cameras"] = 2;
  write_text(dir / "cafe.json", j.dump());
  j["name"] = "extra";
  write_text(dir / "extra.scene.json", j.dump());
  write_text(dir / "ignored.txt", "x");

  const SceneCatalog cat({dir});
  const auto list = cat.list();
  ASSERT_EQ(list.size(), 4u);
  EXPECT_EQ(cat.load("cafe").num_cameras, 2);
  EXPECT_EQ(cat.load("extra").name, "extra");
  for (const auto& e : list)
    if (e.name == "cafe" || e.name == "extra") {
      EXPECT_FALSE(e.bundled);
    }
  EXPECT_EQ(cat.path_of("cafe"), dir / "cafe.json");
  // A path works too.
  EXPECT_EQ(cat.load((kData / "scenes" / "market.json").string()).name, "market");
  EXPECT_EQ(SceneCatalog({dir}, false).list().size(), 2u);
  fs::remove_all(dir);
}

TEST(Catalog, SummaryAndFrameJson) {
  const Scene s = cafe();
  const auto sum = scene_summary(s);
  for (const char* k : {"name", "ground", "spawn", "obstacles", "config_space", "num_cameras", "max_walkers",
                        "frame_count", "train_frames"})
    EXPECT_TRUE(sum.contains(k)) << k;
  EXPECT_EQ(sum["obstacles"].size(), s.obstacles.size());
  EXPECT_EQ(sum["train_frames"].get<int>(), s.train_end());

  const Frame f = sample_frame(s, 3, 5);
  const auto fj = frame_json(f, 3);
  EXPECT_EQ(fj["index"].get<int>(), 5);
  EXPECT_EQ(fj["pedestrians"].size(), f.pedestrians.size());
  EXPECT_DOUBLE_EQ(fj["radius"].get<double>(), Pedestrian::kRadius);
}

// manifest

TEST(Manifest, OverridesApplyAndReject) {
  const PPOConfig c = apply_ppo_overrides({}, nlohmann::json::parse(R"({"learning_rate": 0.001, "epochs": 3,
                                                                       "normalize_advantages": false})"));
  EXPECT_DOUBLE_EQ(c.learning_rate, 1e-3);
  EXPECT_EQ(c.epochs, 3);
  EXPECT_FALSE(c.normalize_advantages);
  EXPECT_EQ(c.buffer_size, PPOConfig{}.buffer_size);
  EXPECT_EQ(code_of([] { apply_ppo_overrides({}, nlohmann::json::parse(R"({"lr": 1})")); }), errc::kValidation);
  EXPECT_EQ(code_of([] { apply_ppo_overrides({}, nlohmann::json::parse(R"({"epochs": 1.5})")); }),
            errc::kValidation);
  EXPECT_EQ(code_of([] { apply_ppo_overrides({}, nlohmann::json::parse(R"({"clip": "x"})")); }), errc::kValidation);
  EXPECT_EQ(code_of([] { apply_ppo_overrides({}, nlohmann::json::parse(R"({"minibatch": 0})")); }),
            errc::kValidation);
  EXPECT_EQ(code_of([] { apply_ppo_overrides({}, nlohmann::json::array()); }), errc::kValidation);
}

TEST(Manifest, HashIgnoresPathAndTracksInputs) {
  const Scene s = cafe();
  const PPOConfig base;
  RunManifest a{"a/cafe.json", 1, nlohmann::json::object(), "out1"};
  RunManifest b{"b/cafe.json", 1, nlohmann::json::object(), "out2"};
  EXPECT_EQ(a.hash(s, base), b.hash(s, base));
  EXPECT_EQ(a.hash(s, base).size(), 16u);
  b.seed = 2;
  EXPECT_NE(a.hash(s, base), b.hash(s, base));
  PPOConfig tweaked;
  tweaked.learning_rate = 2e-4;
  EXPECT_NE(a.hash(s, base), a.hash(s, tweaked));
  Scene moved = s;
  moved.max_walkers += 1;
  EXPECT_NE(a.hash(s, base), a.hash(moved, base));
  EXPECT_EQ(a.to_json(s, base)["hash"], a.hash(s, base));
}

// service handlers

TEST(Service, StatusMapping) {
  EXPECT_EQ(http_status(errc::kSceneNotFound), 404);
  EXPECT_EQ(http_status(errc::kJobNotFound), 404);
  EXPECT_EQ(http_status(errc::kSearchRunning), 409);
  EXPECT_EQ(http_status(errc::kEmptyCameras), 400);
  EXPECT_EQ(http_status(errc::kValidation), 400);
  EXPECT_EQ(http_status(errc::kIo), 500);
}

TEST(Service, HandlersMatchLibrary) {
  Service svc(small_service());
  EXPECT_EQ(nlohmann::json::parse(svc.list_scenes()).size(), 3u);
  const auto req = example_request();
  const Scene s = cafe();
  const auto cams = cameras_from_json(req["cameras"]);
  EXPECT_EQ(svc.evaluate(req), eval_report_text(evaluate_split(s, cams, Split::kTest, 0)));
  auto frame = nlohmann::json::parse(svc.frame("cafe", 2, 9));
  EXPECT_EQ(frame["pedestrians"].size(), sample_frame(s, 9, 2).pedestrians.size());
  EXPECT_EQ(code_of([&] { svc.frame("cafe", static_cast<std::uint64_t>(s.frame_count), 0); }), errc::kValidation);
  EXPECT_EQ(code_of([&] { svc.search_status("job-404"); }), errc::kJobNotFound);
  nlohmann::json bad = req;
  bad["seed"] = -1;
  EXPECT_EQ(code_of([&] { svc.evaluate(bad); }), errc::kValidation);
  bad = req;
  bad["split"] = "val";
  EXPECT_EQ(code_of([&] { svc.evaluate(bad); }), errc::kValidation);
}

TEST(Service, SearchJobRunsToCompletion) {
  Service svc(small_service());
  const auto started = nlohmann::json::parse(svc.start_search({{"scene", "cafe"}, {"seed", 1}, {"steps", 64}}));
  const std::string id = started["id"];
  svc.wait(id);
  const auto status = nlohmann::json::parse(svc.search_status(id));
  EXPECT_EQ(status["status"], "done");
  EXPECT_EQ(status["step"].get<long long>(), 64);
  EXPECT_TRUE(status["best_moda"].is_number());
  EXPECT_FALSE(status["best_cameras"].empty());
  const auto log = nlohmann::json::parse(svc.search_log(id, 0));
  EXPECT_EQ(log["records"].size(), 64u);
  EXPECT_EQ(log["next"].get<int>(), 64);
  const auto tail = nlohmann::json::parse(svc.search_log(id, 60));
  EXPECT_EQ(tail["records"].size(), 4u);
  EXPECT_EQ(code_of([&] { svc.start_search({{"scene", "cafe"}, {"steps", 5000}}); }), errc::kValidation);
}

TEST(Service, SecondSearchWhileRunningConflicts) {
  ServiceOptions o = small_service();
  o.max_job_steps = 200000;
  Service svc(o);
  svc.start_search({{"scene", "cafe"}, {"steps", 200000}});
  EXPECT_EQ(code_of([&] { svc.start_search({{"scene", "cafe"}, {"steps", 10}}); }), errc::kSearchRunning);
  svc.shutdown();
  EXPECT_EQ(nlohmann::json::parse(svc.search_status("job-1"))["status"], "stopped");
}

// HTTP

TEST(Http, EndToEnd) {
  LiveServer live(small_service());
  auto cli = live.client();

  auto scenes = cli.Get("/api/scenes");
  ASSERT_TRUE(scenes);
  EXPECT_EQ(scenes->status, 200);
  EXPECT_EQ(nlohmann::json::parse(scenes->body).size(), 3u);
  EXPECT_EQ(scenes->get_header_value("Access-Control-Allow-Origin"), "*");

  auto missing = cli.Get("/api/scenes/nowhere");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_EQ(nlohmann::json::parse(missing->body)["error"], "scene_not_found");

  auto frame = cli.Get("/api/scenes/cafe/frames/3?seed=4");
  ASSERT_TRUE(frame);
  EXPECT_EQ(frame->status, 200);
  EXPECT_EQ(nlohmann::json::parse(frame->body)["seed"].get<int>(), 4);

  nlohmann::json empty = {{"scene", "cafe"}, {"cameras", nlohmann::json::array()}};
  auto cov = cli.Post("/api/coverage", empty.dump(), "application/json");
  ASSERT_TRUE(cov);
  EXPECT_EQ(cov->status, 400);
  EXPECT_EQ(nlohmann::json::parse(cov->body)["error"], "empty_cameras");

  auto req = example_request();
  req["scene"] = "cafe";
  auto good_cov = cli.Post("/api/coverage", req.dump(), "application/json");
  ASSERT_TRUE(good_cov);
  EXPECT_EQ(good_cov->status, 200);
  EXPECT_GT(nlohmann::json::parse(good_cov->body)["covered_fraction"].get<double>(), 0.0);

  auto garbage = cli.Post("/api/evaluate", "{oops", "application/json");
  ASSERT_TRUE(garbage);
  EXPECT_EQ(garbage->status, 400);
  EXPECT_EQ(nlohmann::json::parse(garbage->body)["error"], "parse_error");

  auto eval = cli.Post("/api/evaluate", example_request().dump(), "application/json");
  ASSERT_TRUE(eval);
  EXPECT_EQ(eval->status, 200);
  const CliRun cli_run = run_cli("eval --scene cafe --cameras \"" + (kData / "cameras" / "cafe_example.json").string() + "\"");
  EXPECT_EQ(cli_run.exit_code, 0);
  EXPECT_EQ(eval->body, cli_run.out);

  auto no_job = cli.Get("/api/search/job-77");
  ASSERT_TRUE(no_job);
  EXPECT_EQ(no_job->status, 404);
  EXPECT_EQ(nlohmann::json::parse(no_job->body)["error"], "job_not_found");

  auto start = cli.Post("/api/search/start", R"({"scene": "cafe", "seed": 2, "steps": 64})", "application/json");
  ASSERT_TRUE(start);
  ASSERT_EQ(start->status, 200);
  const std::string id = nlohmann::json::parse(start->body)["id"];
  live.service.wait(id);
  auto status = cli.Get("/api/search/" + id);
  ASSERT_TRUE(status);
  EXPECT_EQ(nlohmann::json::parse(status->body)["status"], "done");
  auto log = cli.Get("/api/search/" + id + "/log?from=10");
  ASSERT_TRUE(log);
  const auto lj = nlohmann::json::parse(log->body);
  EXPECT_EQ(lj["from"].get<int>(), 10);
  EXPECT_EQ(lj["records"].size(), 54u);

  auto opts = cli.Options("/api/evaluate");
  ASSERT_TRUE(opts);
  EXPECT_EQ(opts->status, 204);
}

// CLI

TEST(Cli, UnknownSceneReportsJsonError) {
  const CliRun r = run_cli("eval --scene nowhere --cameras \"" + (kData / "cameras" / "cafe_example.json").string() + "\"");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("\"scene_not_found\""), std::string::npos) << r.err;
  EXPECT_TRUE(r.out.empty());
}

TEST(Cli, DegreeCamerasRejected) {
  const auto dir = temp_dir("cli_deg");
  write_text(dir / "c.json", R"([{"x":10,"y":4,"z":3,"yaw_deg":90,"pitch":0,"fov":1}])");
  const CliRun r = run_cli("eval --scene cafe --cameras \"" + (dir / "c.json").string() + "\"");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("validation_error"), std::string::npos) << r.err;
  fs::remove_all(dir);
}

TEST(Cli, ScenesList) {
  const CliRun r = run_cli("scenes list");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j.size(), 3u);
  EXPECT_EQ(j[0]["name"], "atrium");
  EXPECT_EQ(j[0]["obstacles"].get<int>(), 4);
}

TEST(Cli, EvalMatchesGolden) {
  const CliRun r = run_cli("eval --scene cafe --cameras \"" + (kData / "cameras" / "cafe_example.json").string() +
                        "\" --split test --seed 0");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(r.out, read_text(kData / "golden" / "cafe_example_eval.json"));
}

TEST(Cli, CoverageExport) {
  const auto dir = temp_dir("cli_cov");
  const CliRun r = run_cli("coverage --scene cafe --cameras \"" + (kData / "cameras" / "cafe_example.json").string() +
                        "\" --out \"" + (dir / "m.pgm").string() + "\" --csv \"" + (dir / "m.csv").string() + "\"");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const std::string pgm = read_text(dir / "m.pgm");
  EXPECT_EQ(pgm.substr(0, 2), "P2");
  const auto j = nlohmann::json::parse(r.out);
  const CoverageGrid g = coverage_grid(cafe(), load_cameras(kData / "cameras" / "cafe_example.json"));
  EXPECT_DOUBLE_EQ(j["covered_fraction"].get<double>(), g.covered_fraction());
  EXPECT_TRUE(fs::exists(dir / "m.csv"));
  fs::remove_all(dir);
}

TEST(Cli, UsageErrorIsJson) {
  const CliRun r = run_cli("eval --scene cafe");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("usage_error"), std::string::npos) << r.err;
}
