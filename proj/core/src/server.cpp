#include "actrace/server.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "actrace/trace.hpp"
#include "json_internal.hpp"

namespace actrace {

using nlohmann::json;

static const char* verdict_name(DetectionVerdict v) {
    switch (v) {
        case DetectionVerdict::Mal: return "mal";
        case DetectionVerdict::Cln: return "cln";
        case DetectionVerdict::NovelScored: return "novel-scored";
    }
    return "?";
}

std::string detection_to_json(const Detection& d) {
    json j{{"id", d.detection_id},
           {"ep", d.endpoint_id},
           {"activity", d.activity_id},
           {"verdict", verdict_name(d.verdict)},
           {"source", d.source == DetectionSource::Cover ? "cover" : "net"},
           {"probability", d.probability},
           {"first_seen_us", d.first_seen_us},
           {"window", d.window_index}};
    if (d.source == DetectionSource::Net) {
        j["odds"] = d.odds_ratio;
    } else {
        j["matched_cover_id"] = d.matched_cover_id;
        j["matched_sim"] = d.matched_sim;
    }
    return j.dump();
}

Engine::Engine(const Config& cfg, Cover cover, Model model, ActivityDB db)
    : cfg_(cfg), cover_(std::move(cover)), model_(std::move(model)),
      db_(std::move(db)) {
    if (cover_.mal.empty() && cover_.cln.empty())
        throw std::invalid_argument("refusing to start without covers");
    if (model_.net3.config().classes != 3)
        throw std::invalid_argument("refusing to start without a three-class model");
    vocab_version_ = model_.vocab_version;
    window_us_ = static_cast<std::int64_t>(cfg.window_minutes * 60e6);
    if (window_us_ <= 0) throw std::invalid_argument("window must be positive");
    if (db_.activities.empty()) db_.vocab_version = vocab_version_;
    if (db_.vocab_version != vocab_version_)
        throw std::invalid_argument("activity database vocabulary mismatch");
}

Engine::Ack Engine::ingest_json(const std::string& body) {
    if (body.size() > cfg_.max_payload_bytes)
        throw RequestError{413, "payload exceeds " +
                                    std::to_string(cfg_.max_payload_bytes) +
                                    " bytes"};
    json j;
    try {
        j = json::parse(body);
    } catch (const std::exception& e) {
        throw RequestError{400, std::string("malformed payload: ") + e.what()};
    }
    try {
        const auto ep = j.at("ep").get<std::string>();
        const auto version = j.at("vocab_version").get<std::uint32_t>();
        if (version != vocab_version_)
            throw RequestError{409, "vocabulary version mismatch, expected " +
                                        std::to_string(vocab_version_)};
        std::vector<FeatureVector> vectors;
        for (const auto& jv : j.at("vectors"))
            vectors.push_back(feature_vector_from_json_obj(jv, version));
        return ingest(ep, version, std::move(vectors));
    } catch (const RequestError&) {
        throw;
    } catch (const std::exception& e) {
        throw RequestError{400, std::string("malformed payload: ") + e.what()};
    }
}

Engine::Ack Engine::ingest(const std::string& endpoint_id,
                           std::uint32_t vocab_version,
                           std::vector<FeatureVector> vectors) {
    if (vocab_version != vocab_version_)
        throw RequestError{409, "vocabulary version mismatch, expected " +
                                    std::to_string(vocab_version_)};
    std::lock_guard lock(mutex_);
    auto& state = endpoints_[endpoint_id];

    std::int64_t max_window = -1;
    for (auto& fv : vectors) {
        const std::int64_t w = fv.ts_us / window_us_;
        max_window = std::max(max_window, w);
        state.open_windows[w].push_back(std::move(fv));
    }
    // windows strictly before the newest one are complete; evaluate in order
    while (!state.open_windows.empty() &&
           state.open_windows.begin()->first < max_window) {
        auto node = state.open_windows.extract(state.open_windows.begin());
        evaluate_window_locked(endpoint_id, node.key(), std::move(node.mapped()));
    }
    return Ack{state.next_seq++};
}

void Engine::flush() {
    std::lock_guard lock(mutex_);
    for (auto& [ep, state] : endpoints_) {
        while (!state.open_windows.empty()) {
            auto node = state.open_windows.extract(state.open_windows.begin());
            evaluate_window_locked(ep, node.key(), std::move(node.mapped()));
        }
    }
}

void Engine::evaluate_window_locked(const std::string& ep,
                                    std::int64_t window_index,
                                    std::vector<FeatureVector> vectors) {
    const auto clusters = extract_tight_clusters(vectors, cfg_.sim, cfg_.clustering);
    for (const auto& cluster : clusters) {
        const auto decision = decide_origin(cluster, cover_.mal, cover_.cln, cfg_.sim);
        Detection d;
        d.endpoint_id = ep;
        d.window_index = window_index;
        d.first_seen_us = cluster.first_seen_us;

        if (decision.verdict == Verdict::Mal || decision.verdict == Verdict::Cln) {
            d.source = DetectionSource::Cover;
            if (decision.verdict == Verdict::Mal) {
                d.verdict = DetectionVerdict::Mal;
                d.probability = 1.0;
                d.matched_sim = decision.s_mal;
                d.matched_cover_id = decision.best_mal_id;
            } else {
                d.verdict = DetectionVerdict::Cln;
                d.probability = 0.0;
                d.matched_sim = decision.s_cln;
                d.matched_cover_id = decision.best_cln_id;
            }
            d.activity_id = d.matched_cover_id;
            const auto key = std::tuple{ep, d.activity_id, window_index};
            if (emitted_.insert(key).second) {
                d.detection_id = static_cast<std::int64_t>(log_.size()) + 1;
                log_.push_back(std::move(d));
            }
            continue;
        }

        // novel activity: record it, score it if well characterized
        const auto upsert = upsert_activity(db_, cluster, cfg_.sim);
        d.activity_id = upsert.novel ? cluster.id : upsert.matched_id;
        if (static_cast<int>(cluster.members.size()) < cfg_.min_score_members)
            continue;
        const auto features = derive_features(cluster, model_.derive);
        const auto s = score(model_.net3, features.values, model_.odds);
        d.source = DetectionSource::Net;
        d.verdict = DetectionVerdict::NovelScored;
        d.odds_ratio = s.odds;
        d.probability = s.odds / (1.0 + s.odds);
        const auto key = std::tuple{ep, d.activity_id, window_index};
        if (emitted_.insert(key).second) {
            d.detection_id = static_cast<std::int64_t>(log_.size()) + 1;
            log_.push_back(std::move(d));
        }
    }
}

std::vector<Detection> Engine::detections_since(std::int64_t id) const {
    std::lock_guard lock(mutex_);
    std::vector<Detection> out;
    for (const auto& d : log_)
        if (d.detection_id > id) out.push_back(d);
    return out;
}

std::size_t Engine::detection_count() const {
    std::lock_guard lock(mutex_);
    return log_.size();
}

ActivityDB Engine::db_snapshot() const {
    std::lock_guard lock(mutex_);
    return db_;
}

std::vector<std::string> Engine::sync_peers(
    const std::vector<ActivityDB>& snapshots) {
    std::lock_guard lock(mutex_);
    std::vector<std::string> warnings;
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
        if (snapshots[i].vocab_version != vocab_version_) {
            warnings.push_back("peer snapshot " + std::to_string(i) +
                               " skipped: vocabulary version " +
                               std::to_string(snapshots[i].vocab_version) +
                               ", expected " + std::to_string(vocab_version_));
            continue;
        }
        db_ = merge_dbs(db_, snapshots[i], cfg_.sim);
    }
    return warnings;
}

std::size_t replay_trace(Engine& engine, const std::vector<SyscallEvent>& events,
                         const Vocabulary& vocab, const Config& cfg) {
    const auto batches = assemble_batches(events, zero_idle(), cfg.reorder_slack_us);
    std::size_t acks = 0;
    for (const auto& batch : batches) {
        auto vectors = featurize(batch, vocab);
        if (vectors.empty()) continue;
        engine.ingest(batch.endpoint_id, vocab.version, std::move(vectors));
        ++acks;
    }
    engine.flush();
    return acks;
}

// -- HTTP transport -----------------------------------------------------------

struct HttpService::Impl {
    Engine& engine;
    Config cfg;
    httplib::Server server;
    std::thread worker;
    int port = 0;

    Impl(Engine& e, const Config& c) : engine(e), cfg(c) {}

    bool authorized(const httplib::Request& req) const {
        if (cfg.auth_token.empty()) return true;
        return req.get_header_value("X-Auth-Token") == cfg.auth_token;
    }
};

HttpService::HttpService(Engine& engine, const Config& cfg)
    : impl_(std::make_unique<Impl>(engine, cfg)) {
    auto& s = impl_->server;

    s.Post("/v1/batches", [this](const httplib::Request& req,
                                 httplib::Response& res) {
        if (!impl_->authorized(req)) {
            res.status = 401;
            res.set_content(R"({"error":"bad token"})", "application/json");
            return;
        }
        try {
            const auto ack = impl_->engine.ingest_json(req.body);
            res.set_content(json{{"seq", ack.seq}}.dump(), "application/json");
        } catch (const RequestError& e) {
            res.status = e.status;
            res.set_content(json{{"error", e.message}}.dump(), "application/json");
        }
    });

    s.Get("/v1/detections", [this](const httplib::Request& req,
                                   httplib::Response& res) {
        if (!impl_->authorized(req)) {
            res.status = 401;
            return;
        }
        std::int64_t since = 0;
        if (req.has_param("since")) since = std::stoll(req.get_param_value("since"));
        json arr = json::array();
        for (const auto& d : impl_->engine.detections_since(since))
            arr.push_back(json::parse(detection_to_json(d)));
        res.set_content(arr.dump(), "application/json");
    });

    s.Get("/v1/activities", [this](const httplib::Request& req,
                                   httplib::Response& res) {
        if (!impl_->authorized(req)) {
            res.status = 401;
            return;
        }
        const auto db = impl_->engine.db_snapshot();
        json acts = json::array();
        for (const auto& [id, c] : db.activities)
            acts.push_back(json{{"id", id},
                                {"first_seen_us", c.first_seen_us},
                                {"observation_count", c.observation_count},
                                {"endpoints", c.endpoints}});
        res.set_content(json{{"distinct", db.distinct_count()},
                             {"total_observations", db.total_observations},
                             {"activities", std::move(acts)}}
                            .dump(),
                        "application/json");
    });

    s.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"status", "ok"},
                             {"vocab_version", impl_->engine.vocab_version()}}
                            .dump(),
                        "application/json");
    });

    s.Post("/v1/flush", [this](const httplib::Request& req, httplib::Response& res) {
        if (!impl_->authorized(req)) {
            res.status = 401;
            return;
        }
        impl_->engine.flush();
        res.set_content(R"({"status":"ok"})", "application/json");
    });
}

HttpService::~HttpService() { stop(); }

int HttpService::start() {
    auto& s = impl_->server;
    impl_->port = impl_->cfg.port;
    if (impl_->port == 0) {
        impl_->port = s.bind_to_any_port("127.0.0.1");
    } else if (!s.bind_to_port("0.0.0.0", impl_->port)) {
        throw std::runtime_error("cannot bind port " + std::to_string(impl_->port));
    }
    impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return impl_->port;
}

void HttpService::stop() {
    if (impl_ && impl_->worker.joinable()) {
        impl_->server.stop();
        impl_->worker.join();
    }
}

}  // namespace actrace
