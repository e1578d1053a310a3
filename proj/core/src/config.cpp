#include "actrace/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json_internal.hpp"

namespace actrace {

using nlohmann::json;

std::string config_to_json(const Config& c) {
    json j;
    j["alphabet_size"] = c.alphabet_size;
    j["reorder_slack_us"] = c.reorder_slack_us;
    j["idle_min_s"] = c.idle_min_s;
    j["idle_max_s"] = c.idle_max_s;
    j["similarity"] = sim_params_to_json_obj(c.sim);
    j["clustering"] = {{"density_min", c.clustering.density_min},
                       {"min_cluster_size", c.clustering.min_cluster_size}};
    j["window_minutes"] = c.window_minutes;
    j["calibration_target"] = c.calibration_target;
    j["calibration_pairs"] = c.calibration_pairs;
    j["derive"] = {{"alphabet_size", c.derive.alphabet_size},
                   {"d_proj", c.derive.d_proj},
                   {"box_size", c.derive.box_size},
                   {"exponents", c.derive.exponents},
                   {"projection_seed", c.derive.projection_seed}};
    j["net"] = {{"hidden", c.net.hidden},
                {"learning_rate", c.net.learning_rate},
                {"epochs", c.net.epochs},
                {"batch_size", c.net.batch_size},
                {"seed", c.net.seed}};
    j["odds"] = {{"theta_cln_from_lib", c.odds.theta_cln_from_lib},
                 {"threshold", c.odds.threshold},
                 {"epsilon", c.odds.epsilon}};
    j["min_score_members"] = c.min_score_members;
    j["server"] = {{"port", c.port},
                   {"auth_token", c.auth_token},
                   {"max_payload_bytes", c.max_payload_bytes},
                   {"vocab_path", c.vocab_path},
                   {"model_path", c.model_path},
                   {"cover_path", c.cover_path},
                   {"db_path", c.db_path},
                   {"detections_log", c.detections_log}};
    j["fleet"] = json::parse(fleet_params_to_json(c.fleet));
    j["seed"] = c.seed;
    return j.dump(2);
}

Config config_from_json(const std::string& text) {
    json j = json::parse(text);
    Config c;
    c.alphabet_size = j.value("alphabet_size", c.alphabet_size);
    c.reorder_slack_us = j.value("reorder_slack_us", c.reorder_slack_us);
    c.idle_min_s = j.value("idle_min_s", c.idle_min_s);
    c.idle_max_s = j.value("idle_max_s", c.idle_max_s);
    if (j.contains("similarity")) c.sim = sim_params_from_json_obj(j["similarity"]);
    if (j.contains("clustering")) {
        const auto& jc = j["clustering"];
        c.clustering.density_min = jc.value("density_min", c.clustering.density_min);
        c.clustering.min_cluster_size =
            jc.value("min_cluster_size", c.clustering.min_cluster_size);
    }
    c.window_minutes = j.value("window_minutes", c.window_minutes);
    c.calibration_target = j.value("calibration_target", c.calibration_target);
    c.calibration_pairs = j.value("calibration_pairs", c.calibration_pairs);
    if (j.contains("derive")) {
        const auto& jd = j["derive"];
        c.derive.alphabet_size = jd.value("alphabet_size", c.derive.alphabet_size);
        c.derive.d_proj = jd.value("d_proj", c.derive.d_proj);
        c.derive.box_size = jd.value("box_size", c.derive.box_size);
        if (jd.contains("exponents"))
            c.derive.exponents = jd["exponents"].get<std::vector<double>>();
        c.derive.projection_seed =
            jd.value("projection_seed", c.derive.projection_seed);
    }
    if (j.contains("net")) {
        const auto& jn = j["net"];
        if (jn.contains("hidden")) c.net.hidden = jn["hidden"].get<std::vector<int>>();
        c.net.learning_rate = jn.value("learning_rate", c.net.learning_rate);
        c.net.epochs = jn.value("epochs", c.net.epochs);
        c.net.batch_size = jn.value("batch_size", c.net.batch_size);
        c.net.seed = jn.value("seed", c.net.seed);
    }
    if (j.contains("odds")) {
        const auto& jo = j["odds"];
        c.odds.theta_cln_from_lib =
            jo.value("theta_cln_from_lib", c.odds.theta_cln_from_lib);
        c.odds.threshold = jo.value("threshold", c.odds.threshold);
        c.odds.epsilon = jo.value("epsilon", c.odds.epsilon);
    }
    c.min_score_members = j.value("min_score_members", c.min_score_members);
    if (j.contains("server")) {
        const auto& js = j["server"];
        c.port = js.value("port", c.port);
        c.auth_token = js.value("auth_token", c.auth_token);
        c.max_payload_bytes = js.value("max_payload_bytes", c.max_payload_bytes);
        c.vocab_path = js.value("vocab_path", c.vocab_path);
        c.model_path = js.value("model_path", c.model_path);
        c.cover_path = js.value("cover_path", c.cover_path);
        c.db_path = js.value("db_path", c.db_path);
        c.detections_log = js.value("detections_log", c.detections_log);
    }
    if (j.contains("fleet")) c.fleet = fleet_params_from_json(j["fleet"].dump());
    c.seed = j.value("seed", c.seed);
    return c;
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

void save_config(const std::string& path, const Config& c) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << config_to_json(c) << '\n';
}

}  // namespace actrace
