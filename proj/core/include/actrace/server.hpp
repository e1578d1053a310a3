#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "actrace/activity.hpp"
#include "actrace/classifier.hpp"
#include "actrace/config.hpp"
#include "actrace/similarity.hpp"

namespace actrace {

enum class DetectionVerdict { Mal, Cln, NovelScored };
enum class DetectionSource { Cover, Net };

struct Detection {
    std::int64_t detection_id = 0;
    std::string endpoint_id;
    std::string activity_id;
    DetectionVerdict verdict = DetectionVerdict::NovelScored;
    DetectionSource source = DetectionSource::Net;
    double odds_ratio = 0;    // net-sourced only
    double probability = 0;   // odds/(1+odds); 1 or 0 for cover verdicts
    double matched_sim = 0;   // cover-sourced only
    std::string matched_cover_id;
    std::int64_t first_seen_us = 0;
    std::int64_t window_index = 0;
};

std::string detection_to_json(const Detection& d);

// Error carrying the HTTP status the transport should answer with.
struct RequestError {
    int status = 400;
    std::string message;
};

// The compute-server pipeline: rolling per-endpoint windows of ingested
// feature vectors, tight-cluster extraction, cover matching, neural
// scoring of novel activity, and the shared activity database.
class Engine {
public:
    Engine(const Config& cfg, Cover cover, Model model, ActivityDB db = {});

    struct Ack {
        std::int64_t seq = 0;
    };

    // payload: {"ep": str, "ts": int, "vocab_version": int, "vectors": [...]}
    // Throws RequestError{400} on malformed bodies, {409} on vocabulary
    // mismatch, {413} on oversized payloads.
    Ack ingest_json(const std::string& body);
    Ack ingest(const std::string& endpoint_id, std::uint32_t vocab_version,
               std::vector<FeatureVector> vectors);

    // evaluate all still-open windows (end of stream, shutdown)
    void flush();

    std::vector<Detection> detections_since(std::int64_t id) const;
    std::size_t detection_count() const;
    ActivityDB db_snapshot() const;
    std::uint32_t vocab_version() const { return vocab_version_; }

    // Folds peer database snapshots in; mismatched versions are skipped
    // with a warning string.
    std::vector<std::string> sync_peers(const std::vector<ActivityDB>& snapshots);

private:
    struct EndpointState {
        std::int64_t next_seq = 1;
        std::map<std::int64_t, std::vector<FeatureVector>> open_windows;
    };

    void evaluate_window_locked(const std::string& ep, std::int64_t window_index,
                                std::vector<FeatureVector> vectors);

    Config cfg_;
    Cover cover_;
    Model model_;
    ActivityDB db_;
    std::uint32_t vocab_version_ = 1;
    std::int64_t window_us_ = 0;

    std::map<std::string, EndpointState> endpoints_;
    std::vector<Detection> log_;
    std::set<std::tuple<std::string, std::string, std::int64_t>> emitted_;
    mutable std::mutex mutex_;
};

// Featurizes a raw trace and drives it through the engine the way the
// sensor + REST path would, one batch payload at a time; flushes at the
// end. Returns the number of acknowledged payloads.
std::size_t replay_trace(Engine& engine, const std::vector<SyscallEvent>& events,
                         const Vocabulary& vocab, const Config& cfg);

// httplib-backed transport over an Engine.
class HttpService {
public:
    HttpService(Engine& engine, const Config& cfg);
    ~HttpService();

    // binds and serves on a background thread; returns the bound port
    int start();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace actrace
