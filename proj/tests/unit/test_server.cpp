#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <thread>

#include "actrace/server.hpp"
#include "helpers.hpp"

using namespace actrace;
using nlohmann::json;
using testutil::axis_cluster;
using testutil::make_fv;
using testutil::stub_model;

namespace {

Cover small_cover() {
    Cover c;
    c.mal.push_back(axis_cluster(0, 3));
    c.cln.push_back(axis_cluster(1, 3));
    return c;
}

Config engine_config() {
    Config cfg;
    cfg.window_minutes = 1.0 / 60.0;  // 1 s windows keep the tests small
    cfg.min_score_members = 3;
    return cfg;
}

std::string payload(const std::string& ep, int axis, int n, std::int64_t t0,
                    std::uint32_t version = 1) {
    json vectors = json::array();
    for (int i = 0; i < n; ++i) {
        const auto fv = make_fv({{axis, 1.0}}, {}, t0 + i, 1, ep);
        vectors.push_back(json::parse(feature_vector_to_json(fv)));
    }
    return json{{"ep", ep}, {"ts", t0}, {"vocab_version", version},
                {"vectors", vectors}}
        .dump();
}

}  // namespace

TEST_CASE("engine refuses to start without covers or a usable model") {
    const auto cfg = engine_config();
    CHECK_THROWS_AS(Engine(cfg, Cover{}, stub_model({0, 0, 5})),
                    std::invalid_argument);

    Model two_class;  // default-constructed net is not three-class
    CHECK_THROWS_AS(Engine(cfg, small_cover(), two_class), std::invalid_argument);
}

TEST_CASE("ingest: per-endpoint sequence numbers are monotone") {
    Engine engine(engine_config(), small_cover(), stub_model({0, 0, 5}));
    CHECK(engine.ingest_json(payload("epA", 0, 2, 0)).seq == 1);
    CHECK(engine.ingest_json(payload("epA", 0, 2, 10)).seq == 2);
    CHECK(engine.ingest_json(payload("epB", 0, 2, 0)).seq == 1);
}

TEST_CASE("ingest: malformed body rejected without state change") {
    Engine engine(engine_config(), small_cover(), stub_model({0, 0, 5}));
    CHECK_THROWS_AS(engine.ingest_json("{\"ep\": \"x\","), RequestError);
    try {
        engine.ingest_json("not json at all");
    } catch (const RequestError& e) {
        CHECK(e.status == 400);
    }
    CHECK(engine.ingest_json(payload("epA", 0, 2, 0)).seq == 1);  // still first
}

TEST_CASE("ingest: vocabulary mismatch is a conflict") {
    Engine engine(engine_config(), small_cover(), stub_model({0, 0, 5}));
    try {
        engine.ingest_json(payload("epA", 0, 2, 0, 9));
        FAIL("expected a conflict");
    } catch (const RequestError& e) {
        CHECK(e.status == 409);
        CHECK(e.message.find("expected 1") != std::string::npos);
    }
}

TEST_CASE("ingest: oversized payloads are refused") {
    auto cfg = engine_config();
    cfg.max_payload_bytes = 64;
    Engine engine(cfg, small_cover(), stub_model({0, 0, 5}));
    try {
        engine.ingest_json(payload("epA", 0, 5, 0));
        FAIL("expected a size rejection");
    } catch (const RequestError& e) {
        CHECK(e.status == 413);
    }
}

TEST_CASE("evaluate: cover hits emit mal detections with probability 1") {
    Engine engine(engine_config(), small_cover(), stub_model({0, 0, 5}));
    engine.ingest_json(payload("epA", 0, 4, 0));  // matches the mal cover
    engine.flush();
    const auto log = engine.detections_since(0);
    REQUIRE(log.size() == 1);
    CHECK(log[0].verdict == DetectionVerdict::Mal);
    CHECK(log[0].source == DetectionSource::Cover);
    CHECK(log[0].probability == 1.0);
    CHECK(log[0].matched_sim >= 90);
}

TEST_CASE("evaluate: clean windows match the benign cover, probability 0") {
    Engine engine(engine_config(), small_cover(), stub_model({0, 0, 5}));
    engine.ingest_json(payload("epA", 1, 4, 0));
    engine.flush();
    const auto log = engine.detections_since(0);
    REQUIRE(log.size() == 1);
    CHECK(log[0].verdict == DetectionVerdict::Cln);
    CHECK(log[0].probability == 0.0);
}

TEST_CASE("evaluate: novel activity is net-scored and lands in the db") {
    // stub model forces softmax towards mal: odds > 1
    Engine engine(engine_config(), small_cover(), stub_model({0, 0, 5}));
    engine.ingest_json(payload("epA", 7, 4, 0));
    engine.flush();
    const auto log = engine.detections_since(0);
    REQUIRE(log.size() == 1);
    CHECK(log[0].verdict == DetectionVerdict::NovelScored);
    CHECK(log[0].source == DetectionSource::Net);
    CHECK(log[0].odds_ratio > 1.0);
    CHECK(log[0].probability == doctest::Approx(log[0].odds_ratio /
                                                (1 + log[0].odds_ratio)));
    CHECK(engine.db_snapshot().distinct_count() == 1);

    // a later window with the same behavior is not re-scored as new
    Engine engine2(engine_config(), small_cover(), stub_model({0, 0, 5}));
    engine2.ingest_json(payload("epA", 7, 4, 0));
    engine2.ingest_json(payload("epA", 7, 4, 2'000'000));
    engine2.flush();
    CHECK(engine2.db_snapshot().distinct_count() == 1);
    CHECK(engine2.db_snapshot().total_observations == 2);
}

TEST_CASE("evaluate: one detection per (endpoint, activity, window)") {
    // two mutually dissimilar clusters that both match the same cover entry
    Cover cover;
    cover.mal.push_back(make_tight_cluster({
        make_fv({{0, 1.0}, {1, 1.0}}, {}, 0),
        make_fv({{0, 1.0}, {1, 1.0}}, {}, 1),
        make_fv({{0, 1.0}, {1, 1.0}}, {}, 2),
    }));
    Engine engine(engine_config(), cover, stub_model({0, 0, 5}));

    json vectors = json::array();
    for (int i = 0; i < 4; ++i)
        vectors.push_back(json::parse(
            feature_vector_to_json(make_fv({{0, 1.0}}, {}, i, 1, "epA"))));
    for (int i = 0; i < 4; ++i)
        vectors.push_back(json::parse(
            feature_vector_to_json(make_fv({{1, 1.0}}, {}, 10 + i, 2, "epA"))));
    engine.ingest_json(json{{"ep", "epA"}, {"ts", 0}, {"vocab_version", 1},
                            {"vectors", vectors}}
                           .dump());
    engine.flush();
    // both clusters sim 176.8 to the cover entry, 0 to each other
    const auto log = engine.detections_since(0);
    REQUIRE(log.size() == 1);
    CHECK(log[0].verdict == DetectionVerdict::Mal);
}

TEST_CASE("evaluate: small novel clusters are recorded but not scored") {
    auto cfg = engine_config();
    cfg.min_score_members = 10;
    Engine engine(cfg, small_cover(), stub_model({0, 0, 5}));
    engine.ingest_json(payload("epA", 7, 4, 0));  // only 4 members
    engine.flush();
    CHECK(engine.detections_since(0).empty());
    CHECK(engine.db_snapshot().distinct_count() == 1);
}

TEST_CASE("replay is deterministic: identical seeds, identical logs") {
    FleetParams fp;
    fp.endpoints = 2;
    fp.families = 2;
    fp.modes_per_family = 1;
    fp.walk.duration_s = 30;
    fp.seed = 606;
    const auto fleet = gen_fleet(fp);

    std::vector<std::vector<WordKey>> corpus;
    for (const auto& b : assemble_batches(fleet.events, zero_idle()))
        for (const auto& [tid, words] : extract_words(b)) corpus.push_back(words);
    const auto vocab = build_vocabulary(corpus, fp.alphabet_size);

    auto replay_cfg = engine_config();
    replay_cfg.window_minutes = 0.5;  // six 5 s batches per window
    auto run_once = [&] {
        Engine engine(replay_cfg, small_cover(), stub_model({0, 0, 5}));
        replay_trace(engine, fleet.events, vocab, replay_cfg);
        std::string out;
        for (const auto& d : engine.detections_since(0))
            out += detection_to_json(d) + "\n";
        return out;
    };
    const auto a = run_once();
    const auto b = run_once();
    CHECK(a == b);
    CHECK_FALSE(a.empty());
}

TEST_CASE("sync_peers: merge applies, version mismatches are skipped") {
    SimilarityParams sp;
    Engine engine(engine_config(), small_cover(), stub_model({0, 0, 5}));
    engine.ingest_json(payload("epA", 7, 4, 0));
    engine.flush();

    ActivityDB peer;
    upsert_activity(peer, axis_cluster(9, 3, 500), sp);
    ActivityDB stale;
    stale.vocab_version = 8;
    upsert_activity(stale, axis_cluster(10, 3, 600), sp);

    const auto warnings = engine.sync_peers({peer, stale});
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("skipped") != std::string::npos);
    CHECK(engine.db_snapshot().distinct_count() == 2);
}

TEST_CASE("crash recovery: resuming from a snapshot matches the straight run") {
    const auto cfg = engine_config();
    const auto first = payload("epA", 7, 4, 0);
    const auto second = payload("epA", 8, 4, 2'000'000);
    const auto third = payload("epA", 7, 4, 4'000'000);

    Engine straight(cfg, small_cover(), stub_model({0, 0, 5}));
    straight.ingest_json(first);
    straight.ingest_json(second);
    straight.ingest_json(third);
    straight.flush();

    Engine before_crash(cfg, small_cover(), stub_model({0, 0, 5}));
    before_crash.ingest_json(first);
    before_crash.ingest_json(second);  // closes the first window
    const auto snapshot = before_crash.db_snapshot();

    Engine resumed(cfg, small_cover(), stub_model({0, 0, 5}), snapshot);
    resumed.ingest_json(second);
    resumed.ingest_json(third);
    resumed.flush();

    CHECK(activity_db_to_json(resumed.db_snapshot()) ==
          activity_db_to_json(straight.db_snapshot()));
}

TEST_CASE("http: ingestion, detections, activities, health, auth") {
    auto cfg = engine_config();
    cfg.port = 0;  // pick any free port
    cfg.auth_token = "sekrit";
    Engine engine(cfg, small_cover(), stub_model({0, 0, 5}));
    HttpService service(engine, cfg);
    const int port = service.start();

    httplib::Client client("127.0.0.1", port);

    auto health = client.Get("/v1/health");
    REQUIRE(health);
    CHECK(health->status == 200);

    // token required
    auto denied = client.Post("/v1/batches", payload("epA", 0, 3, 0),
                              "application/json");
    REQUIRE(denied);
    CHECK(denied->status == 401);

    httplib::Headers auth{{"X-Auth-Token", "sekrit"}};
    auto ok = client.Post("/v1/batches", auth, payload("epA", 0, 3, 0),
                          "application/json");
    REQUIRE(ok);
    CHECK(ok->status == 200);
    CHECK(json::parse(ok->body)["seq"] == 1);

    auto bad = client.Post("/v1/batches", auth, "{", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);

    auto conflict = client.Post("/v1/batches", auth, payload("epA", 0, 3, 10, 9),
                                "application/json");
    REQUIRE(conflict);
    CHECK(conflict->status == 409);

    client.Post("/v1/flush", auth, "", "application/json");
    auto dets = client.Get("/v1/detections?since=0", auth);
    REQUIRE(dets);
    const auto arr = json::parse(dets->body);
    REQUIRE(arr.size() == 1);
    CHECK(arr[0]["verdict"] == "mal");

    auto acts = client.Get("/v1/activities", auth);
    REQUIRE(acts);
    CHECK(json::parse(acts->body).contains("distinct"));

    service.stop();
}

TEST_CASE("http: concurrent payloads keep per-endpoint sequences gapless") {
    auto cfg = engine_config();
    cfg.port = 0;
    Engine engine(cfg, small_cover(), stub_model({0, 0, 5}));
    HttpService service(engine, cfg);
    const int port = service.start();

    const int endpoints = 100;
    const int per_endpoint = 10;
    std::atomic<int> failures{0};
    std::vector<std::thread> workers;
    std::vector<std::vector<std::int64_t>> seqs(endpoints);
    for (int w = 0; w < 8; ++w) {
        workers.emplace_back([&, w] {
            httplib::Client client("127.0.0.1", port);
            for (int e = w; e < endpoints; e += 8) {
                const std::string ep = "ep" + std::to_string(e);
                for (int i = 0; i < per_endpoint; ++i) {
                    auto res = client.Post("/v1/batches",
                                           payload(ep, 0, 2, i * 100),
                                           "application/json");
                    if (!res || res->status != 200) {
                        ++failures;
                        continue;
                    }
                    seqs[e].push_back(json::parse(res->body)["seq"].get<std::int64_t>());
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    service.stop();

    CHECK(failures.load() == 0);
    for (int e = 0; e < endpoints; ++e) {
        REQUIRE(seqs[e].size() == per_endpoint);
        for (int i = 0; i < per_endpoint; ++i)
            CHECK(seqs[e][i] == i + 1);  // gapless and ordered per endpoint
    }
}
