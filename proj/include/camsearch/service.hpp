#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "camsearch/catalog.hpp"
#include "camsearch/error.hpp"
#include "camsearch/evaluation.hpp"
#include "camsearch/io.hpp"
#include "camsearch/search.hpp"
#include "camsearch/visibility.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro clashes with
// Eigen parameter names.
#include <httplib.h>

namespace camsearch {

/// The exact text `eval` prints and POST /api/evaluate returns.
inline std::string eval_report_text(const EvalReport& r) { return report_to_json(r).dump(2) + "\n"; }

inline nlohmann::ordered_json error_json(const std::string& code, const std::string& message) {
  return {{"error", code}, {"message", message}};
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw Error(errc::kValidation, "split must be 'train' or 'test', got '" + s + "'");
}

/// Evaluation shared by the CLI and the service.
inline EvalReport evaluate_split(const Scene& scene, std::span<const CameraConfig> cams, Split split,
                                 std::uint64_t seed) {
  validate_cameras(scene, cams);
  return evaluate_config(scene, cams, frame_indices(scene, split), seed);
}

inline nlohmann::ordered_json coverage_json(const CoverageGrid& g) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (int iy = 0; iy < g.ny; ++iy) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int ix = 0; ix < g.nx; ++ix) row.push_back(g.at(ix, iy));
    rows.push_back(std::move(row));
  }
  return {{"cell", g.cell},
          {"origin", {g.origin.x, g.origin.y}},
          {"nx", g.nx},
          {"ny", g.ny},
          {"num_cameras", g.num_cameras},
          {"covered_fraction", g.covered_fraction()},
          {"counts", rows}};
}

inline int http_status(const std::string& code) {
  if (code == errc::kSceneNotFound || code == errc::kJobNotFound) return 404;
  if (code == errc::kSearchRunning) return 409;
  if (code == errc::kIo || code == errc::kNonFinite || code == errc::kBadCheckpoint) return 500;
  return 400;
}

struct ServiceOptions {
  std::vector<std::filesystem::path> scene_dirs;
  bool include_bundled = true;
  std::filesystem::path job_dir;  // empty: search jobs keep everything in memory
  PPOConfig ppo;                  // template for search jobs
  long long max_job_steps = 200000;
};

/// Request handlers plus the single-slot search-job registry. Handlers for
/// scenes, frames, evaluation and coverage touch no shared state.
class Service {
 public:
  explicit Service(ServiceOptions opts) : opts_(std::move(opts)), catalog_(opts_.scene_dirs, opts_.include_bundled) {}

  ~Service() { shutdown(); }
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Stops a running job and waits for it.
  void shutdown() {
    std::vector<std::shared_ptr<Job>> jobs;
    {
      std::lock_guard lock(mu_);
      for (auto& [_, j] : jobs_) jobs.push_back(j);
    }
    for (auto& j : jobs) {
      j->stop = true;
      if (j->worker.joinable()) j->worker.join();
    }
  }

  void mount(httplib::Server& srv) {
    srv.Get("/api/scenes", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { return list_scenes(); });
    });
    srv.Get(R"(/api/scenes/([^/]+)/frames/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::uint64_t seed = req.has_param("seed") ? parse_u64(req.get_param_value("seed"), "seed") : 0;
        return frame(req.matches[1], parse_u64(req.matches[2], "frame index"), seed);
      });
    });
    srv.Get(R"(/api/scenes/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { return scene_summary(catalog_.load(req.matches[1])).dump(); });
    });
    srv.Post("/api/evaluate", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { return evaluate(body(req)); });
    });
    srv.Post("/api/coverage", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { return coverage(body(req)); });
    });
    srv.Post("/api/search/start", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { return start_search(body(req)); });
    });
    srv.Get(R"(/api/search/([^/]+)/log)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::uint64_t from = req.has_param("from") ? parse_u64(req.get_param_value("from"), "from") : 0;
        return search_log(req.matches[1], from);
      });
    });
    srv.Get(R"(/api/search/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { return search_status(req.matches[1]); });
    });
    srv.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
    });
    srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
  }

  // Handlers return the response body; failures throw Error.

  std::string list_scenes() const {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& e : catalog_.list()) {
      nlohmann::ordered_json s = scene_summary(load_scene(e.path));
      s["bundled"] = e.bundled;
      out.push_back(std::move(s));
    }
    return out.dump();
  }

  std::string frame(const std::string& scene_name, std::uint64_t index, std::uint64_t seed) const {
    const Scene scene = catalog_.load(scene_name);
    if (index >= static_cast<std::uint64_t>(scene.frame_count))
      throw Error(errc::kValidation, "frame index " + std::to_string(index) + " outside [0, " +
                                         std::to_string(scene.frame_count) + ")");
    return frame_json(sample_frame(scene, seed, static_cast<int>(index)), seed).dump();
  }

  std::string evaluate(const nlohmann::json& req) const {
    const Scene scene = catalog_.load(string_field(req, "scene"));
    const auto cams = cameras_from_json(field(req, "cameras"));
    const Split split = parse_split(req.contains("split") ? string_field(req, "split") : "test");
    const std::uint64_t seed = req.contains("seed") ? u64_field(req, "seed") : 0;
    return eval_report_text(evaluate_split(scene, cams, split, seed));
  }

  std::string coverage(const nlohmann::json& req) const {
    const Scene scene = catalog_.load(string_field(req, "scene"));
    const auto cams = cameras_from_json(field(req, "cameras"));
    validate_cameras(scene, cams);
    return coverage_json(coverage_grid(scene, cams)).dump();
  }

  std::string start_search(const nlohmann::json& req) {
    const Scene scene = catalog_.load(string_field(req, "scene"));
    const std::uint64_t seed = req.contains("seed") ? u64_field(req, "seed") : 0;
    const long long steps = req.contains("steps") ? static_cast<long long>(u64_field(req, "steps")) : opts_.ppo.max_steps;
    if (steps < 1 || steps > opts_.max_job_steps)
      throw Error(errc::kValidation, "steps must be in [1, " + std::to_string(opts_.max_job_steps) + "]");

    std::lock_guard lock(mu_);
    for (const auto& [id, j] : jobs_)
      if (!j->finished) throw Error(errc::kSearchRunning, "search job " + id + " is still running");
    auto job = std::make_shared<Job>();
    job->id = "job-" + std::to_string(++next_id_);
    job->scene = scene.name;
    job->seed = seed;
    job->steps = steps;
    TrainOptions topts;
    topts.ppo = opts_.ppo;
    topts.ppo.max_steps = steps;
    topts.seed = seed;
    if (!opts_.job_dir.empty()) topts.out_dir = opts_.job_dir / job->id;
    jobs_[job->id] = job;
    job->worker = std::thread([job, scene, topts] { run_job(*job, scene, topts); });
    nlohmann::ordered_json out = {{"id", job->id}, {"scene", job->scene}, {"seed", seed}, {"steps", steps}};
    return out.dump();
  }

  std::string search_status(const std::string& id) const {
    const auto job = find_job(id);
    std::lock_guard lock(job->mu);
    nlohmann::ordered_json out = {{"id", job->id},         {"scene", job->scene}, {"seed", job->seed},
                                  {"status", job->status}, {"step", job->step},   {"steps", job->steps},
                                  {"episode", job->episode}};
    out["best_moda"] = job->has_best ? nlohmann::ordered_json(job->best_moda) : nlohmann::ordered_json(nullptr);
    out["best_cameras"] = cameras_to_json(job->best_cameras);
    if (!job->error_code.empty()) out["error"] = error_json(job->error_code, job->error_message);
    return out.dump();
  }

  std::string search_log(const std::string& id, std::uint64_t from) const {
    const auto job = find_job(id);
    std::lock_guard lock(job->mu);
    const std::size_t begin = std::min<std::size_t>(static_cast<std::size_t>(from), job->log.size());
    std::string records = "[";
    for (std::size_t i = begin; i < job->log.size(); ++i) {
      if (i > begin) records += ',';
      records += job->log[i];
    }
    records += ']';
    return R"({"from":)" + std::to_string(begin) + R"(,"next":)" + std::to_string(job->log.size()) +
           R"(,"status":")" + job->status + R"(","records":)" + records + "}";
  }

  /// Blocks until the job finishes (tests and shutdown paths).
  void wait(const std::string& id) const {
    const auto job = find_job(id);
    while (!job->finished) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }

 private:
  struct Job {
    std::string id, scene;
    std::uint64_t seed = 0;
    long long steps = 0;
    std::thread worker;
    std::atomic<bool> stop{false};
    std::atomic<bool> finished{false};

    mutable std::mutex mu;  // guards the fields below
    std::string status = "running";
    long long step = 0, episode = 0;
    bool has_best = false;
    double best_moda = 0.0;
    std::vector<CameraConfig> best_cameras;
    std::vector<std::string> log;  // serialized records
    std::string error_code, error_message;
  };

  static void run_job(Job& job, const Scene& scene, const TrainOptions& topts) {
    TrainHooks hooks;
    hooks.on_record = [&](const TrainRecord& r) {
      std::string line = r.to_json().dump();
      std::lock_guard lock(job.mu);
      job.log.push_back(std::move(line));
    };
    hooks.on_progress = [&](const TrainProgress& p) {
      std::lock_guard lock(job.mu);
      job.step = p.step;
      job.episode = p.episode;
      job.has_best = p.has_best;
      job.best_moda = p.best_moda;
      job.best_cameras = p.best_cameras;
    };
    hooks.should_stop = [&] { return job.stop.load(); };
    try {
      const TrainResult r = train(scene, topts, hooks);
      std::lock_guard lock(job.mu);
      job.step = r.steps;
      job.episode = r.episodes;
      job.has_best = !r.best_cameras.empty();
      job.best_moda = r.best_moda;
      job.best_cameras = r.best_cameras;
      job.status = r.stopped ? "stopped" : "done";
    } catch (const Error& e) {
      std::lock_guard lock(job.mu);
      job.status = "failed";
      job.error_code = e.code();
      job.error_message = e.what();
    } catch (const std::exception& e) {
      std::lock_guard lock(job.mu);
      job.status = "failed";
      job.error_code = "internal_error";
      job.error_message = e.what();
    }
    job.finished = true;
  }

  std::shared_ptr<Job> find_job(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    if (it == jobs_.end()) throw Error(errc::kJobNotFound, "unknown search job '" + id + "'");
    return it->second;
  }

  template <typename F>
  static void guarded(httplib::Response& res, F&& f) {
    try {
      res.set_content(f(), "application/json");
    } catch (const Error& e) {
      res.status = http_status(e.code());
      res.set_content(error_json(e.code(), e.what()).dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(error_json("internal_error", e.what()).dump(), "application/json");
    }
  }

  static nlohmann::json body(const httplib::Request& req) {
    nlohmann::json j = parse_json(req.body, "request body");
    if (!j.is_object()) throw Error(errc::kValidation, "request body must be a JSON object");
    return j;
  }
  static const nlohmann::json& field(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw Error(errc::kValidation, std::string("missing field '") + key + "'");
    return j.at(key);
  }
  static std::string string_field(const nlohmann::json& j, const char* key) {
    const auto& v = field(j, key);
    if (!v.is_string()) throw Error(errc::kValidation, std::string(key) + " must be a string");
    return v.get<std::string>();
  }
  static std::uint64_t u64_field(const nlohmann::json& j, const char* key) {
    const auto& v = field(j, key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      throw Error(errc::kValidation, std::string(key) + " must be a non-negative integer");
    return v.get<std::uint64_t>();
  }
  static std::uint64_t parse_u64(const std::string& s, const char* what) {
    if (s.empty() || s.size() > 19 || s.find_first_not_of("0123456789") != std::string::npos)
      throw Error(errc::kValidation, std::string(what) + " must be a non-negative integer");
    return std::stoull(s);
  }

  ServiceOptions opts_;
  SceneCatalog catalog_;
  mutable std::mutex mu_;  // guards jobs_ and next_id_
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  int next_id_ = 0;
};

}  // namespace camsearch
