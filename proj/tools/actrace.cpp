// actrace: system-call activity engine, command-line front end.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include "actrace/activity.hpp"
#include "actrace/classifier.hpp"
#include "actrace/config.hpp"
#include "actrace/harness.hpp"
#include "actrace/phylo.hpp"
#include "actrace/server.hpp"
#include "actrace/similarity.hpp"
#include "actrace/synthgen.hpp"
#include "actrace/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace actrace;

namespace {

struct Global {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;

    Config load() const {
        Config cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        if (seed_set) cfg.seed = seed;
        return cfg;
    }
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
    if (text.empty() || text.back() != '\n') out << '\n';
}

std::vector<FeatureVector> featurize_trace(const std::vector<SyscallEvent>& events,
                                           const Vocabulary& vocab,
                                           const Config& cfg) {
    std::vector<FeatureVector> fvs;
    for (const auto& batch :
         assemble_batches(events, zero_idle(), cfg.reorder_slack_us))
        for (auto& fv : featurize(batch, vocab)) fvs.push_back(std::move(fv));
    return fvs;
}

BehaviorProfile profile_from_trace(const std::string& sample_id,
                                   const std::vector<SyscallEvent>& events,
                                   const Vocabulary& vocab, const Config& cfg) {
    BehaviorProfile p;
    p.sample_id = sample_id;
    p.experiment_count = 1;
    for (auto& c : cluster_trace(events, vocab, cfg)) {
        bool dup = false;
        for (const auto& kept : p.clusters)
            if (sim_tc(c, kept, cfg.sim, SimTcMode::Exact) >= cfg.sim.theta_S)
                dup = true;
        if (!dup) p.clusters.push_back(std::move(c));
    }
    return p;
}

int run_calibrate(const Global& g, const std::string& trace_path,
                  const std::string& vocab_out, const std::string& params_out) {
    Config cfg = g.load();
    const auto events = read_trace_file(trace_path);

    std::map<WordKey, std::int64_t> counts;
    for (const auto& batch :
         assemble_batches(events, zero_idle(), cfg.reorder_slack_us))
        for (const auto& [tid, words] : extract_words(batch))
            for (WordKey w : words) ++counts[w];
    const auto vocab = build_vocabulary_from_counts(counts, cfg.alphabet_size);
    save_vocabulary(vocab_out, vocab);
    std::cerr << "vocabulary: " << vocab.ranked_words.size()
              << " ranked words, alpha " << vocab.alpha << "\n";

    const auto fvs = featurize_trace(events, vocab, cfg);
    const auto [tz, tm] = calibrate_thetas(fvs, cfg.calibration_target, cfg.seed,
                                           cfg.calibration_pairs);
    cfg.sim.theta_zeta = tz;
    cfg.sim.theta_mu = tm;
    if (!params_out.empty()) save_config(params_out, cfg);
    std::cout << json{{"theta_zeta", tz},
                      {"theta_mu", tm},
                      {"alpha", vocab.alpha},
                      {"ranked_words", vocab.ranked_words.size()},
                      {"feature_vectors", fvs.size()}}
                     .dump()
              << "\n";
    return 0;
}

int run_featurize(const Global& g, const std::string& trace_path,
                  const std::string& vocab_path, const std::string& out_path) {
    const Config cfg = g.load();
    const auto vocab = load_vocabulary(vocab_path);
    const auto events = read_trace_file(trace_path);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open for writing: " + out_path);
    std::size_t n = 0;
    for (const auto& fv : featurize_trace(events, vocab, cfg)) {
        out << feature_vector_to_json(fv) << '\n';
        ++n;
    }
    std::cerr << n << " feature vectors -> " << out_path << "\n";
    return 0;
}

int run_cluster(const Global& g, const std::string& trace_path,
                const std::string& vocab_path, const std::string& db_path,
                const std::string& report_dir) {
    const Config cfg = g.load();
    const auto vocab = load_vocabulary(vocab_path);
    const auto events = read_trace_file(trace_path);

    ActivityDB db;
    if (fs::exists(db_path)) db = load_activity_db(db_path);
    if (db.activities.empty()) db.vocab_version = vocab.version;

    std::vector<std::pair<double, double>> growth;
    std::vector<std::pair<std::int64_t, std::size_t>> novelty;
    for (auto& c : cluster_trace(events, vocab, cfg)) {
        const auto first_seen = c.first_seen_us;
        upsert_activity(db, std::move(c), cfg.sim);
        growth.emplace_back(static_cast<double>(db.total_observations),
                            static_cast<double>(db.distinct_count()));
        novelty.emplace_back(first_seen, db.distinct_count());
    }
    save_activity_db(db_path, db);
    std::cout << json{{"total_observations", db.total_observations},
                      {"distinct", db.distinct_count()}}
                     .dump()
              << "\n";

    if (!report_dir.empty()) {
        fs::create_directories(report_dir);
        std::string csv = "observations,distinct\n";
        for (const auto& [n, m] : growth)
            csv += std::to_string(static_cast<std::int64_t>(n)) + "," +
                   std::to_string(static_cast<std::int64_t>(m)) + "\n";
        write_file(report_dir + "/growth.csv", csv);

        csv = "t_us,distinct\n";
        for (const auto& [t, m] : novelty)
            csv += std::to_string(t) + "," + std::to_string(m) + "\n";
        write_file(report_dir + "/novelty.csv", csv);
    }
    return 0;
}

int run_report(const Global& g, const std::string& db_path,
               const std::string& out_dir) {
    const Config cfg = g.load();
    (void)cfg;
    const auto db = load_activity_db(db_path);
    fs::create_directories(out_dir);

    std::vector<std::int64_t> counts;
    for (const auto& [id, c] : db.activities) counts.push_back(c.observation_count);
    std::sort(counts.rbegin(), counts.rend());
    std::string csv = "rank,count\n";
    for (std::size_t r = 0; r < counts.size(); ++r)
        csv += std::to_string(r + 1) + "," + std::to_string(counts[r]) + "\n";
    write_file(out_dir + "/rank_count.csv", csv);

    json fits = json::object();
    if (counts.size() >= 8 && counts.back() > 0) {
        std::vector<double> xs, ys;
        for (std::size_t r = 0; r < counts.size(); ++r) {
            xs.push_back(static_cast<double>(r + 1));
            ys.push_back(static_cast<double>(counts[r]));
        }
        const auto fit = fit_truncated_power(xs, ys, TruncPowerVariant::Rank);
        fits["rank_law"] = {{"C", fit.C},       {"x0", fit.x0},
                            {"s", fit.s},       {"gamma", fit.gamma},
                            {"residual", fit.residual},
                            {"power_residual", fit.power_residual}};
    }
    write_file(out_dir + "/fits.json", fits.dump(2));
    std::cout << fits.dump() << "\n";
    return 0;
}

int run_phylo(const Global& g, const std::string& traces_dir,
              const std::string& vocab_path, const std::string& clean_path,
              const std::string& out_dir) {
    const Config cfg = g.load();
    const auto vocab = load_vocabulary(vocab_path);

    std::vector<TightCluster> clean;
    if (!clean_path.empty()) {
        const auto cover = load_cover(clean_path);
        clean = cover.cln;
        for (const auto& c : cover.mal) clean.push_back(c);
    }

    std::vector<BehaviorProfile> profiles;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(traces_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        auto profile = profile_from_trace(path.stem().string(),
                                          read_trace_file(path.string()), vocab,
                                          cfg);
        profiles.push_back(mask_baseline(std::move(profile), clean, cfg.sim));
    }
    std::cerr << profiles.size() << " behavior profiles\n";

    const auto families = build_families(profiles, cfg.sim);
    fs::create_directories(out_dir);
    write_file(out_dir + "/families.csv", families_to_csv(families));

    const auto graph = condense_and_reduce(
        impute_edges(profiles, cfg.sim, cfg.sim.theta_edge));
    write_file(out_dir + "/graph.json", phylo_graph_to_json(graph));

    std::vector<std::int64_t> sizes;
    for (const auto& f : families)
        sizes.push_back(static_cast<std::int64_t>(f.members.size()));
    json jh = json::object();
    if (!sizes.empty()) {
        const auto hist = abundance_from_counts(sizes);
        json f = json::array();
        for (const auto& [k, fk] : hist.f) f.push_back(json::array({k, fk}));
        jh["f_k"] = std::move(f);
    }
    write_file(out_dir + "/abundance.json", jh.dump());
    std::cout << json{{"families", families.size()}}.dump() << "\n";
    return 0;
}

int run_estimate(const Global& g, const std::string& abundance_path,
                 const std::string& out_path) {
    const Config cfg = g.load();
    std::ifstream in(abundance_path);
    if (!in) throw std::runtime_error("cannot open: " + abundance_path);
    json j;
    in >> j;
    AbundanceHistogram hist;
    for (const auto& e : j.at("f_k"))
        hist.f[e.at(0).get<int>()] = e.at(1).get<std::int64_t>();
    const auto est = estimate_population(hist, cfg.seed);
    const auto text = estimate_to_json(est);
    if (!out_path.empty()) write_file(out_path, text);
    std::cout << text << "\n";
    return 0;
}

// directory layout: <dir>/mal/*.jsonl and <dir>/cln/*.jsonl, one trace per
// sample
int run_train(const Global& g, const std::string& corpus_dir,
              const std::string& vocab_path, const std::string& model_out,
              const std::string& cover_out) {
    Config cfg = g.load();
    const auto vocab = load_vocabulary(vocab_path);
    cfg.derive.alphabet_size = cfg.alphabet_size;

    LabeledSet train;
    Cover cover;
    cover.version = vocab.version;
    cover.params = cfg.sim;
    for (const auto& [sub, label] : {std::pair{"cln", 0}, std::pair{"mal", 1}}) {
        const fs::path dir = fs::path(corpus_dir) / sub;
        if (!fs::exists(dir))
            throw std::runtime_error("missing corpus directory: " + dir.string());
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file()) files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        for (const auto& path : files) {
            const auto events = read_trace_file(path.string());
            for (auto& c : cluster_trace(events, vocab, cfg)) {
                auto df = derive_features(c, cfg.derive);
                train.x.push_back(std::move(df.values));
                train.y.push_back(label);
                auto& side = label ? cover.mal : cover.cln;
                bool dup = false;
                for (const auto& kept : side)
                    if (sim_tc(c, kept, cfg.sim, SimTcMode::Exact) >=
                        cfg.sim.theta_S)
                        dup = true;
                if (!dup) side.push_back(std::move(c));
            }
        }
    }
    std::cerr << "training clusters: " << train.size() << " (cover "
              << cover.mal.size() << " mal / " << cover.cln.size() << " cln)\n";

    NetConfig ncfg = cfg.net;
    ncfg.seed = cfg.seed;
    const auto net2 = train_two_class(train, ncfg);
    const auto boot = bootstrap_labels(net2, train);
    ncfg.seed = cfg.seed + 1;
    const auto net3 = train_three_class(boot, ncfg);

    Model model;
    model.vocab_version = vocab.version;
    model.derive = cfg.derive;
    model.odds = cfg.odds;
    model.net3 = net3;
    save_model(model_out, model);
    if (!cover_out.empty()) save_cover(cover_out, cover);

    int lib = 0;
    for (int y : boot.y)
        if (y == kClassLib) ++lib;
    std::cout << json{{"training_clusters", train.size()},
                      {"bootstrapped_lib", lib},
                      {"model", model_out}}
                     .dump()
              << "\n";
    return 0;
}

int run_score(const Global& g, const std::string& trace_path,
              const std::string& vocab_path, const std::string& model_path) {
    const Config cfg = g.load();
    const auto vocab = load_vocabulary(vocab_path);
    const auto model = load_model(model_path);
    const auto events = read_trace_file(trace_path);
    for (const auto& c : cluster_trace(events, vocab, cfg)) {
        const auto df = derive_features(c, model.derive);
        const auto s = score(model.net3, df.values, model.odds);
        std::cout << json{{"activity", c.id},
                          {"members", c.members.size()},
                          {"odds", s.odds},
                          {"label", s.mal ? "mal" : "cln"}}
                         .dump()
                  << "\n";
    }
    return 0;
}

int run_simulate(const Global& g, const std::string& out_path,
                 const std::string& per_sample_dir) {
    const Config cfg = g.load();
    FleetParams fp = cfg.fleet;
    if (g.seed_set) fp.seed = cfg.seed;
    const auto fleet = gen_fleet(fp);
    write_trace_file(out_path, fleet.events);
    std::cerr << fleet.events.size() << " events -> " << out_path << "\n";

    if (!per_sample_dir.empty()) {
        fs::create_directories(per_sample_dir);
        json manifest = json::array();
        for (const auto& v : fleet.variants) {
            const auto& family = fleet.families[v.family_id];
            const std::string id = "f" + std::to_string(v.family_id) + "v" +
                                   std::to_string(v.variant_id);
            const auto events =
                run_sample(v, family, fp.walk, id, 100,
                           mix64(fp.seed ^ (0x5A00 + v.family_id * 97 +
                                            v.variant_id)));
            write_trace_file(per_sample_dir + "/" + id + ".jsonl", events);
            manifest.push_back(json{{"sample", id},
                                    {"family", v.family_id},
                                    {"malicious", family.malicious}});
        }
        write_file(per_sample_dir + "/manifest.json", manifest.dump(2));
    }
    return 0;
}

int run_project(const Global& g, ScalingInputs in, double bandwidth_payload) {
    (void)g;
    const auto out = project_scaling(in);
    json j = json::parse(scaling_to_json(in, out));
    j["sensor_bytes_per_s"] = sensor_bandwidth(bandwidth_payload);
    std::cout << j.dump(2) << "\n";
    return 0;
}

int run_serve(const Global& g) {
    const Config cfg = g.load();
    if (cfg.vocab_path.empty() || cfg.model_path.empty() ||
        cfg.cover_path.empty())
        throw std::runtime_error(
            "serve needs server.vocab_path, server.model_path and "
            "server.cover_path in the config");
    const auto vocab = load_vocabulary(cfg.vocab_path);
    const auto model = load_model(cfg.model_path);
    const auto cover = load_cover(cfg.cover_path);
    ActivityDB db;
    if (!cfg.db_path.empty() && fs::exists(cfg.db_path))
        db = load_activity_db(cfg.db_path);

    Engine engine(cfg, cover, model, std::move(db));
    HttpService service(engine, cfg);
    const int port = service.start();
    std::cerr << "listening on port " << port << " (vocabulary version "
              << vocab.version << ")\n";

    // run until interrupted; persist the database on the way out
    static std::atomic<bool> stop_requested{false};
    std::signal(SIGINT, [](int) { stop_requested = true; });
    std::signal(SIGTERM, [](int) { stop_requested = true; });
    while (!stop_requested)
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
    service.stop();
    engine.flush();
    if (!cfg.db_path.empty()) save_activity_db(cfg.db_path, engine.db_snapshot());
    if (!cfg.detections_log.empty()) {
        std::ofstream log(cfg.detections_log, std::ios::app);
        for (const auto& d : engine.detections_since(0))
            log << detection_to_json(d) << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"system-call activity engine"};
    app.require_subcommand(1);

    Global g;
    app.add_option("--config", g.config_path, "JSON config file")
        ->envname("ACTRACE_CONFIG");
    app.add_option("--seed", g.seed, "override the config seed")
        ->each([&](const std::string&) { g.seed_set = true; });

    // calibrate
    std::string trace_path, vocab_path{"vocab.json"}, params_out;
    auto* calibrate = app.add_subcommand(
        "calibrate", "build the vocabulary and similarity scales from a trace");
    calibrate->add_option("--trace", trace_path)->required();
    calibrate->add_option("--vocab-out", vocab_path);
    calibrate->add_option("--params-out", params_out);

    // featurize
    std::string fz_trace, fz_vocab, fz_out{"features.jsonl"};
    auto* featurize_cmd =
        app.add_subcommand("featurize", "trace to feature-vector wire form");
    featurize_cmd->add_option("--trace", fz_trace)->required();
    featurize_cmd->add_option("--vocab", fz_vocab)->required();
    featurize_cmd->add_option("--out", fz_out);

    // cluster
    std::string cl_trace, cl_vocab, cl_db{"activities.json"}, cl_report;
    auto* cluster_cmd = app.add_subcommand(
        "cluster", "extract tight clusters and update the activity database");
    cluster_cmd->add_option("--trace", cl_trace)->required();
    cluster_cmd->add_option("--vocab", cl_vocab)->required();
    cluster_cmd->add_option("--db", cl_db);
    cluster_cmd->add_option("--report-dir", cl_report);

    // phylo
    std::string ph_dir, ph_vocab, ph_clean, ph_out{"phylo"};
    auto* phylo_cmd = app.add_subcommand(
        "phylo", "families and containment graph from per-sample traces");
    phylo_cmd->add_option("--traces", ph_dir)->required();
    phylo_cmd->add_option("--vocab", ph_vocab)->required();
    phylo_cmd->add_option("--clean-cover", ph_clean);
    phylo_cmd->add_option("--out-dir", ph_out);

    // estimate
    std::string es_abundance, es_out;
    auto* estimate_cmd = app.add_subcommand(
        "estimate", "population estimators over an abundance histogram");
    estimate_cmd->add_option("--abundance", es_abundance)->required();
    estimate_cmd->add_option("--out", es_out);

    // train
    std::string tr_corpus, tr_vocab, tr_model{"model.json"}, tr_cover;
    auto* train_cmd = app.add_subcommand(
        "train", "two-class then bootstrapped three-class model from traces");
    train_cmd->add_option("--corpus", tr_corpus)->required();
    train_cmd->add_option("--vocab", tr_vocab)->required();
    train_cmd->add_option("--model-out", tr_model);
    train_cmd->add_option("--cover-out", tr_cover);

    // score
    std::string sc_trace, sc_vocab, sc_model;
    auto* score_cmd =
        app.add_subcommand("score", "odds-ratio scores for a trace's clusters");
    score_cmd->add_option("--trace", sc_trace)->required();
    score_cmd->add_option("--vocab", sc_vocab)->required();
    score_cmd->add_option("--model", sc_model)->required();

    // serve
    auto* serve_cmd =
        app.add_subcommand("serve", "REST ingestion daemon (paths from --config)");

    // simulate
    std::string sim_out{"fleet.jsonl"}, sim_samples;
    auto* simulate_cmd =
        app.add_subcommand("simulate", "generate a synthetic fleet trace");
    simulate_cmd->add_option("--out", sim_out);
    simulate_cmd->add_option("--per-sample-dir", sim_samples,
                             "also write one trace per variant");

    // project
    ScalingInputs scaling;
    double bw_payload = 9750;
    auto* project_cmd = app.add_subcommand(
        "project", "deployment-scale projections from the growth law");
    project_cmd->add_option("--endpoints", scaling.endpoints);
    project_cmd->add_option("--clusters-per-endpoint-week",
                            scaling.clusters_per_endpoint_week);
    project_cmd->add_option("--heaps-a", scaling.heaps_A);
    project_cmd->add_option("--heaps-alpha", scaling.heaps_alpha);
    project_cmd->add_option("--fpr-per-activity", scaling.fpr_per_activity);
    project_cmd->add_option("--infected-fraction", scaling.infected_fraction);
    project_cmd->add_option("--pair-spurious-rate", scaling.pair_spurious_rate);
    project_cmd->add_option("--payload-bytes", bw_payload);

    // report
    std::string rp_db, rp_out{"report"};
    auto* report_cmd = app.add_subcommand(
        "report", "rank/count data and law fits from an activity database");
    report_cmd->add_option("--db", rp_db)->required();
    report_cmd->add_option("--out-dir", rp_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*calibrate) return run_calibrate(g, trace_path, vocab_path, params_out);
        if (*featurize_cmd) return run_featurize(g, fz_trace, fz_vocab, fz_out);
        if (*cluster_cmd) return run_cluster(g, cl_trace, cl_vocab, cl_db, cl_report);
        if (*phylo_cmd) return run_phylo(g, ph_dir, ph_vocab, ph_clean, ph_out);
        if (*estimate_cmd) return run_estimate(g, es_abundance, es_out);
        if (*train_cmd) return run_train(g, tr_corpus, tr_vocab, tr_model, tr_cover);
        if (*score_cmd) return run_score(g, sc_trace, sc_vocab, sc_model);
        if (*serve_cmd) return run_serve(g);
        if (*simulate_cmd) return run_simulate(g, sim_out, sim_samples);
        if (*project_cmd) return run_project(g, scaling, bw_payload);
        if (*report_cmd) return run_report(g, rp_db, rp_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
