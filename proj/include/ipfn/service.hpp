#ifndef IPFN_SERVICE_HPP
#define IPFN_SERVICE_HPP

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

// Eigen must be parsed before httplib: the resolver headers it pulls in
// define macros that collide with Eigen's internal names.
#include "ipfn/checkpoint.hpp"
#include "ipfn/config.hpp"
#include "ipfn/error.hpp"
#include "ipfn/io.hpp"
#include "ipfn/synth.hpp"

#include <httplib.h>
#include <json.hpp>

namespace ipfn {

struct ServiceOptions {
    int port = 8080;
    std::string host = "127.0.0.1";
    std::filesystem::path ckpt_dir = ".";
    int max_dims = 1024;     // per-axis limit for 2D; 3D uses max_dims / 4
    int workers = 2;         // concurrent synthesis jobs
    int max_queue = 16;      // queued 3D jobs beyond the running ones
    int threads_per_job = 1;
};

struct HttpReply {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;

    static HttpReply json(int status, const nlohmann::json& j) { return {status, "application/json", j.dump()}; }
    static HttpReply error(int status, const std::string& msg) { return json(status, {{"error", msg}}); }
};

// ---------------------------------------------------------------------------
// Checkpoint registry
// ---------------------------------------------------------------------------

struct CheckpointEntry {
    std::string id;
    std::filesystem::path path;
    std::filesystem::file_time_type mtime;
    std::shared_ptr<const LoadedModel<float>> loaded;
};

// Read-only view of the checkpoint directory. Rescans pick up new and
// changed files; corrupt files are skipped with a warning.
class CheckpointRegistry {
public:
    explicit CheckpointRegistry(std::filesystem::path dir, std::function<void(const std::string&)> warn = {})
        : dir_(std::move(dir)), warn_(std::move(warn)) {
        if (!warn_) warn_ = [](const std::string& m) { std::cerr << "warning: " << m << "\n"; };
    }

    void rescan() {
        std::map<std::string, CheckpointEntry> next;
        std::error_code ec;
        if (!std::filesystem::is_directory(dir_, ec)) {
            warn_("checkpoint directory '" + dir_.string() + "' does not exist");
        } else {
            for (const auto& f : std::filesystem::directory_iterator(dir_, ec)) {
                if (!f.is_regular_file() || f.path().extension() != ".ipfn") continue;
                const std::string id = f.path().stem().string();
                const auto mtime = f.last_write_time(ec);
                {
                    std::shared_lock lock(mu_);
                    auto it = entries_.find(id);
                    if (it != entries_.end() && it->second.mtime == mtime && it->second.path == f.path()) {
                        next.emplace(id, it->second);
                        continue;
                    }
                }
                try {
                    auto loaded = std::make_shared<const LoadedModel<float>>(load_model<float>(f.path()));
                    next.emplace(id, CheckpointEntry{id, f.path(), mtime, std::move(loaded)});
                } catch (const std::exception& e) {
                    warn_("skipping checkpoint '" + f.path().string() + "': " + e.what());
                }
            }
        }
        std::unique_lock lock(mu_);
        entries_ = std::move(next);
    }

    std::vector<CheckpointEntry> list() const {
        std::shared_lock lock(mu_);
        std::vector<CheckpointEntry> out;
        for (const auto& [id, e] : entries_) out.push_back(e);
        return out;
    }

    std::shared_ptr<const LoadedModel<float>> find(const std::string& id) const {
        std::shared_lock lock(mu_);
        auto it = entries_.find(id);
        return it == entries_.end() ? nullptr : it->second.loaded;
    }

private:
    std::filesystem::path dir_;
    std::function<void(const std::string&)> warn_;
    mutable std::shared_mutex mu_;
    std::map<std::string, CheckpointEntry> entries_;
};

// ---------------------------------------------------------------------------
// Request parsing
// ---------------------------------------------------------------------------

struct ParsedSynthRequest {
    std::string checkpoint_id;
    SynthesisRequest request;
};

// Schema: {checkpoint_id, dims, seed?, latent_extent?, constant_latent?,
// guidance?: number | {"ramp": {axis, from, to}} | {"map": {dims, values}}}.
inline ParsedSynthRequest parse_synth_request(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("request body is not JSON: ") + e.what());
    }
    detail::reject_unknown(j, {"checkpoint_id", "dims", "seed", "latent_extent", "constant_latent", "guidance"},
                           "synthesize request");
    ParsedSynthRequest out;
    try {
        out.checkpoint_id = j.at("checkpoint_id").get<std::string>();
        out.request.out_dims = j.at("dims").get<std::vector<int>>();
        if (j.contains("seed")) out.request.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("latent_extent")) out.request.latent_extent = j.at("latent_extent").get<double>();
        if (j.contains("constant_latent") && !j.at("constant_latent").is_null())
            out.request.constant_latent = j.at("constant_latent").get<std::vector<double>>();
        if (j.contains("guidance") && !j.at("guidance").is_null()) {
            const auto& g = j.at("guidance");
            if (g.is_number()) {
                out.request.guidance = GuidanceRequest::scalar(g.get<double>());
            } else if (g.is_object() && g.contains("ramp")) {
                const auto& r = g.at("ramp");
                out.request.guidance =
                    GuidanceRequest::ramp(r.at("axis").get<int>(), r.at("from").get<double>(), r.at("to").get<double>());
            } else if (g.is_object() && g.contains("map")) {
                const auto& mj = g.at("map");
                Raster map(mj.at("dims").get<std::vector<int>>(), 1);
                const auto values = mj.at("values").get<std::vector<float>>();
                if (values.size() != map.values.size()) throw ConfigError("guidance map: values do not match dims");
                map.values = values;
                out.request.guidance = GuidanceRequest::grid(std::move(map));
            } else {
                throw ConfigError("guidance must be a number, {\"ramp\": ...} or {\"map\": ...}");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad synthesize request: ") + e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Jobs
// ---------------------------------------------------------------------------

enum class JobStatus { queued, running, done, failed };

inline const char* to_string(JobStatus s) {
    switch (s) {
        case JobStatus::queued: return "queued";
        case JobStatus::running: return "running";
        case JobStatus::done: return "done";
        case JobStatus::failed: return "failed";
    }
    return "unknown";
}

struct SynthJob {
    std::string id;
    std::string checkpoint_id;
    SynthesisRequest request;
    JobStatus status = JobStatus::queued;
    std::string result;  // IPFVOL bytes
    std::string error;
    double queued_at = 0.0, started_at = 0.0, finished_at = 0.0;
};

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

class Service {
public:
    explicit Service(ServiceOptions opt, std::function<void(const std::string&)> warn = {})
        : opt_(std::move(opt)), registry_(opt_.ckpt_dir, std::move(warn)), start_(std::chrono::steady_clock::now()) {
        if (opt_.workers < 1) throw ConfigError("service: --workers must be at least 1");
        if (opt_.max_dims < 1) throw ConfigError("service: --max-dims must be positive");
        registry_.rescan();
        for (int i = 0; i < opt_.workers; ++i) pool_.emplace_back([this] { worker_loop(); });
    }

    ~Service() {
        stop();
        {
            std::lock_guard lock(mu_);
            shutting_down_ = true;
        }
        cv_.notify_all();
        for (auto& t : pool_) t.join();
    }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    const ServiceOptions& options() const { return opt_; }
    CheckpointRegistry& registry() { return registry_; }

    HttpReply list_checkpoints() {
        registry_.rescan();
        nlohmann::json out = nlohmann::json::array();
        for (const auto& e : registry_.list()) {
            const auto& m = e.loaded->model;
            out.push_back({{"id", e.id},
                           {"k", m.arch.k},
                           {"kind", m.arch.k == 2 ? "2d" : "3d"},
                           {"exemplar_kind", to_string(m.kind)},
                           {"channels", m.arch.channels},
                           {"conditional", to_string(m.arch.guidance)},
                           {"latent_dim", m.arch.latent_dim},
                           {"iterations", e.loaded->iteration}});
        }
        return HttpReply::json(200, out);
    }

    HttpReply synthesize(const std::string& body) {
        ParsedSynthRequest p;
        try {
            p = parse_synth_request(body);
        } catch (const Error& e) {
            return HttpReply::error(422, e.what());
        }
        auto loaded = registry_.find(p.checkpoint_id);
        if (!loaded) {
            registry_.rescan();
            loaded = registry_.find(p.checkpoint_id);
        }
        if (!loaded) return HttpReply::error(404, "unknown checkpoint '" + p.checkpoint_id + "'");
        const auto& m = loaded->model;
        const int limit = axis_limit(m.arch.k);
        for (int d : p.request.out_dims)
            if (d > limit)
                return HttpReply::error(422, "dims exceed the server limit of " + std::to_string(limit) + " per axis for " +
                                                 std::to_string(m.arch.k) + "D");
        p.request.threads = opt_.threads_per_job;
        try {
            validate_request(m, p.request);
        } catch (const Error& e) {
            return HttpReply::error(422, e.what());
        }
        if (m.arch.k == 2) {
            if (m.arch.channels > 4) return HttpReply::error(422, "PNG output supports 1-4 channels");
            if (!acquire_slot()) return HttpReply::error(503, "server at capacity");
            struct Release {
                Service* s;
                ~Release() { s->release_slot(); }
            } release{this};
            try {
                const Raster img = ipfn::synthesize(m, p.request);
                return {200, "image/png", encode_png(img)};
            } catch (const Error& e) {
                return HttpReply::error(500, e.what());
            }
        }
        return enqueue(std::move(p), std::move(loaded));
    }

    HttpReply job_status(const std::string& id) {
        std::lock_guard lock(mu_);
        auto it = jobs_.find(id);
        if (it == jobs_.end()) return HttpReply::error(404, "unknown job '" + id + "'");
        const SynthJob& j = *it->second;
        nlohmann::json out{{"id", j.id},
                           {"checkpoint_id", j.checkpoint_id},
                           {"status", to_string(j.status)},
                           {"dims", j.request.out_dims},
                           {"timings", {{"queued_at", j.queued_at}, {"started_at", j.started_at}, {"finished_at", j.finished_at}}}};
        if (j.status == JobStatus::done) out["result"] = "/v1/jobs/" + j.id + "/result";
        if (j.status == JobStatus::failed) out["error"] = j.error;
        return HttpReply::json(200, out);
    }

    HttpReply job_result(const std::string& id) {
        std::lock_guard lock(mu_);
        auto it = jobs_.find(id);
        if (it == jobs_.end()) return HttpReply::error(404, "unknown job '" + id + "'");
        if (it->second->status != JobStatus::done)
            return HttpReply::error(409, std::string("job is ") + to_string(it->second->status));
        return {200, "application/octet-stream", it->second->result};
    }

    // Blocks until the job reaches a terminal state (tests and CLI helpers).
    JobStatus wait(const std::string& id) {
        std::unique_lock lock(mu_);
        auto it = jobs_.find(id);
        if (it == jobs_.end()) throw UsageError("unknown job '" + id + "'");
        done_cv_.wait(lock, [&] { return it->second->status == JobStatus::done || it->second->status == JobStatus::failed; });
        return it->second->status;
    }

    // Binds the HTTP routes and serves until stop(). Returns false if the
    // port could not be bound.
    bool listen() {
        server_ = std::make_unique<httplib::Server>();
        auto send = [](httplib::Response& res, const HttpReply& r) {
            res.status = r.status;
            res.set_content(r.body, r.content_type);
        };
        server_->Get("/v1/checkpoints", [this, send](const httplib::Request&, httplib::Response& res) {
            send(res, list_checkpoints());
        });
        server_->Post("/v1/synthesize", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, synthesize(req.body));
        });
        server_->Get(R"(/v1/jobs/([A-Za-z0-9-]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, job_status(req.matches[1]));
        });
        server_->Get(R"(/v1/jobs/([A-Za-z0-9-]+)/result)", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, job_result(req.matches[1]));
        });
        server_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        server_->Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });
        if (opt_.port == 0) {
            const int port = server_->bind_to_any_port(opt_.host);
            if (port < 0) return false;
            bound_port_ = port;
        } else {
            if (!server_->bind_to_port(opt_.host, opt_.port)) return false;
            bound_port_ = opt_.port;
        }
        return server_->listen_after_bind();
    }

    void wait_until_ready() const {
        while (!server_ || !server_->is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    int port() const { return bound_port_; }
    void stop() {
        if (server_) server_->stop();
    }

private:
    int axis_limit(int k) const { return k == 2 ? opt_.max_dims : std::max(1, opt_.max_dims / 4); }

    double now() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

    bool acquire_slot() {
        std::lock_guard lock(mu_);
        if (active_ >= opt_.workers) return false;
        ++active_;
        return true;
    }
    void release_slot() {
        {
            std::lock_guard lock(mu_);
            --active_;
        }
        cv_.notify_all();
    }

    HttpReply enqueue(ParsedSynthRequest p, std::shared_ptr<const LoadedModel<float>> loaded) {
        std::lock_guard lock(mu_);
        if (static_cast<int>(queue_.size()) >= opt_.max_queue) return HttpReply::error(503, "job queue is full");
        auto job = std::make_shared<SynthJob>();
        job->id = "job-" + std::to_string(++next_job_);
        job->checkpoint_id = p.checkpoint_id;
        job->request = std::move(p.request);
        job->queued_at = now();
        jobs_[job->id] = job;
        queue_.push_back({job, std::move(loaded)});
        cv_.notify_one();
        return HttpReply::json(202, {{"job_id", job->id}, {"status", "queued"}, {"poll", "/v1/jobs/" + job->id}});
    }

    void worker_loop() {
        for (;;) {
            std::shared_ptr<SynthJob> job;
            std::shared_ptr<const LoadedModel<float>> loaded;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [&] { return shutting_down_ || (!queue_.empty() && active_ < opt_.workers); });
                if (shutting_down_) return;
                job = queue_.front().first;
                loaded = queue_.front().second;
                queue_.pop_front();
                ++active_;
                job->status = JobStatus::running;
                job->started_at = now();
            }
            std::string result, error;
            try {
                result = encode_volume(ipfn::synthesize(loaded->model, job->request));
            } catch (const std::exception& e) {
                error = e.what();
            }
            {
                std::lock_guard lock(mu_);
                --active_;
                job->finished_at = now();
                if (error.empty()) {
                    job->result = std::move(result);
                    job->status = JobStatus::done;
                } else {
                    job->error = std::move(error);
                    job->status = JobStatus::failed;
                }
            }
            done_cv_.notify_all();
            cv_.notify_all();
        }
    }

    ServiceOptions opt_;
    CheckpointRegistry registry_;
    std::chrono::steady_clock::time_point start_;
    std::unique_ptr<httplib::Server> server_;
    int bound_port_ = 0;

    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    int active_ = 0;
    bool shutting_down_ = false;
    std::uint64_t next_job_ = 0;
    std::map<std::string, std::shared_ptr<SynthJob>> jobs_;
    std::deque<std::pair<std::shared_ptr<SynthJob>, std::shared_ptr<const LoadedModel<float>>>> queue_;
    std::vector<std::thread> pool_;
};

}  // namespace ipfn

#endif
