#pragma once

#include <cstdint>
#include <string>

#include "actrace/activity.hpp"
#include "actrace/classifier.hpp"
#include "actrace/net.hpp"
#include "actrace/similarity.hpp"
#include "actrace/synthgen.hpp"

namespace actrace {

// Every tunable in one place; the CLI loads this from a JSON file and the
// --seed flag overrides the seed.
struct Config {
    // trace assembly
    int alphabet_size = 64;
    std::int64_t reorder_slack_us = 0;
    double idle_min_s = 0;
    double idle_max_s = 10;

    // similarity, clustering, windows
    SimilarityParams sim;
    ClusteringParams clustering;
    double window_minutes = 6.0;
    double calibration_target = 250.0;
    int calibration_pairs = 20000;

    // classifier
    DeriveParams derive;
    NetConfig net;
    OddsParams odds;
    int min_score_members = 10;  // novel clusters below this skip the net

    // server
    int port = 8377;
    std::string auth_token;
    std::size_t max_payload_bytes = 64 * 1024;
    std::string vocab_path;
    std::string model_path;
    std::string cover_path;
    std::string db_path;
    std::string detections_log;

    // synthetic fleet
    FleetParams fleet;

    std::uint64_t seed = 1;
};

std::string config_to_json(const Config& c);
// Starts from defaults and overlays whatever keys the file provides.
Config config_from_json(const std::string& text);
Config load_config(const std::string& path);
void save_config(const std::string& path, const Config& c);

}  // namespace actrace
