#include <doctest.h>

#include <cmath>
#include <set>

#include "actrace/activity.hpp"
#include "actrace/rng.hpp"
#include "helpers.hpp"

using namespace actrace;
using testutil::make_fv;

namespace {

// two 4-cliques joined through a middle vertex of degree 2; peeling must
// drop the bridge and emit both cliques whole
std::vector<FeatureVector> bridged_cliques() {
    std::vector<FeatureVector> window;
    // clique A: members share axis 0 with weight 0.8 plus a private axis
    // (pairwise cosine 0.64 -> sim 160 >= 90)
    for (int i = 0; i < 4; ++i)
        window.push_back(make_fv({{0, 0.8}, {10 + i, 0.6}}, {}, i, 1));
    // clique B on axis 1
    for (int i = 0; i < 4; ++i)
        window.push_back(make_fv({{1, 0.8}, {20 + i, 0.6}}, {}, 10 + i, 1));
    // bridge: overlaps only the private axes of a3 and b3
    // cos(bridge, a3) = 0.7071 * 0.6 = 0.424 -> sim 106 >= 90
    window.push_back(make_fv({{13, 0.7071}, {23, 0.7071}}, {}, 20, 1));
    return window;
}

}  // namespace

TEST_CASE("extract_tight_clusters: dissimilar vectors yield nothing") {
    const SimilarityParams sp;
    std::vector<FeatureVector> window;
    for (int i = 0; i < 6; ++i) window.push_back(make_fv({{i, 1.0}}, {}, i));
    CHECK(extract_tight_clusters(window, sp).empty());
}

TEST_CASE("extract_tight_clusters: a 5-clique survives whole") {
    const SimilarityParams sp;
    std::vector<FeatureVector> window;
    for (int i = 0; i < 5; ++i) window.push_back(make_fv({{3, 1.0}}, {}, i));
    const auto clusters = extract_tight_clusters(window, sp);
    REQUIRE(clusters.size() == 1);
    CHECK(clusters[0].members.size() == 5);
    CHECK(cluster_density(clusters[0], sp) == doctest::Approx(1.0));
}

TEST_CASE("extract_tight_clusters: bridge is peeled, both cliques emitted") {
    const SimilarityParams sp;
    // before peeling: 9 vertices, 6+6+2 = 14 edges, density 14/36 = 0.389
    // after peeling the degree-2 bridge: two 4-cliques of density 1
    const auto clusters = extract_tight_clusters(bridged_cliques(), sp);
    REQUIRE(clusters.size() == 2);
    CHECK(clusters[0].members.size() == 4);
    CHECK(clusters[1].members.size() == 4);
    for (const auto& c : clusters)
        CHECK(cluster_density(c, sp) >= 0.8);
}

TEST_CASE("extract_tight_clusters: components below min size are dropped") {
    const SimilarityParams sp;
    std::vector<FeatureVector> window{make_fv({{0, 1.0}}, {}, 0),
                                      make_fv({{0, 1.0}}, {}, 1)};
    CHECK(extract_tight_clusters(window, sp).empty());
}

TEST_CASE("emitted clusters verify their own density invariant") {
    const SimilarityParams sp;
    ClusteringParams cp;
    Rng rng(41);
    for (int round = 0; round < 10; ++round) {
        std::vector<FeatureVector> window;
        const int n = 8 + static_cast<int>(rng.below(20));
        for (int i = 0; i < n; ++i) {
            const int axis = static_cast<int>(rng.below(4));
            window.push_back(make_fv(
                {{axis, 1.0}, {static_cast<int>(20 + rng.below(30)), 0.15}}, {},
                i));
        }
        for (const auto& c : extract_tight_clusters(window, sp, cp)) {
            CHECK(cluster_density(c, sp) >= cp.density_min);
            CHECK(static_cast<int>(c.members.size()) >= cp.min_cluster_size);
        }
    }
}

TEST_CASE("cluster ids are stable under member permutation") {
    auto members = bridged_cliques();
    auto shuffled = members;
    std::reverse(shuffled.begin(), shuffled.end());
    CHECK(cluster_content_id(members) == cluster_content_id(shuffled));
}

TEST_CASE("upsert_activity: basics and the threshold boundary") {
    SimilarityParams sp;
    ActivityDB db;

    const auto c1 = testutil::axis_cluster(0, 3, 100);
    const auto r1 = upsert_activity(db, c1, sp);
    CHECK(r1.novel);
    CHECK(db.distinct_count() == 1);
    CHECK(db.total_observations == 1);

    const auto r2 = upsert_activity(db, testutil::axis_cluster(0, 3, 200), sp);
    CHECK_FALSE(r2.novel);
    CHECK(db.distinct_count() == 1);
    CHECK(db.total_observations == 2);
    CHECK(db.activities.at(r2.matched_id).observation_count == 2);
    CHECK(db.activities.at(r2.matched_id).first_seen_us == 100);

    // sim_tc = 250 * 0.3596 = 89.9, a hair under theta_S = 90 -> novel
    const auto near = testutil::singleton_cluster(
        make_fv({{0, 0.3596}, {1, std::sqrt(1 - 0.3596 * 0.3596)}}, {}, 300));
    std::vector<FeatureVector> base{make_fv({{0, 1.0}}, {}, 1)};
    ActivityDB db2;
    upsert_activity(db2, make_tight_cluster(base), sp);
    const auto r3 = upsert_activity(db2, near, sp);
    CHECK(r3.novel);
    CHECK(db2.distinct_count() == 2);
}

TEST_CASE("merge_dbs: identity, earliest first_seen, commutativity") {
    SimilarityParams sp;
    ActivityDB empty;
    ActivityDB a;
    upsert_activity(a, testutil::axis_cluster(0, 3, 5'000'000), sp);
    upsert_activity(a, testutil::axis_cluster(1, 3, 1000), sp);

    const auto same = merge_dbs(a, empty, sp);
    CHECK(activity_db_to_json(same) == activity_db_to_json(a));

    ActivityDB b;
    upsert_activity(b, testutil::axis_cluster(0, 3, 3'000'000), sp);
    const auto m1 = merge_dbs(a, b, sp);
    CHECK(m1.distinct_count() == 2);
    CHECK(m1.total_observations == 3);
    bool found = false;
    for (const auto& [id, c] : m1.activities) {
        if (c.endpoints == std::vector<std::string>{"ep0"} &&
            c.first_seen_us == 3'000'000) {
            found = true;
            CHECK(c.observation_count == 2);
        }
    }
    CHECK(found);

    const auto m2 = merge_dbs(b, a, sp);
    CHECK(activity_db_to_json(m1) == activity_db_to_json(m2));
}

TEST_CASE("merge_dbs: commutative and idempotent on random databases") {
    SimilarityParams sp;
    Rng rng(53);
    for (int round = 0; round < 10; ++round) {
        auto random_db = [&](int entries) {
            ActivityDB db;
            for (int i = 0; i < entries; ++i) {
                const int axis = static_cast<int>(rng.below(12));
                upsert_activity(db,
                                testutil::axis_cluster(
                                    axis, 3, static_cast<std::int64_t>(rng.below(1000))),
                                sp);
            }
            return db;
        };
        const auto a = random_db(1 + static_cast<int>(rng.below(6)));
        const auto b = random_db(1 + static_cast<int>(rng.below(6)));
        CHECK(activity_db_to_json(merge_dbs(a, b, sp)) ==
              activity_db_to_json(merge_dbs(b, a, sp)));

        // idempotence on the distinct-activity structure
        const auto aa = merge_dbs(a, a, sp);
        CHECK(aa.distinct_count() == a.distinct_count());
        for (const auto& [id, c] : aa.activities) {
            CHECK(a.activities.count(id) == 1);
            CHECK(a.activities.at(id).first_seen_us == c.first_seen_us);
        }
    }
}

TEST_CASE("merge_dbs: vocabulary mismatch is an error") {
    SimilarityParams sp;
    ActivityDB a, b;
    b.vocab_version = 9;
    upsert_activity(a, testutil::axis_cluster(0, 3), sp);
    upsert_activity(b, testutil::axis_cluster(1, 3), sp);
    CHECK_THROWS_AS(merge_dbs(a, b, sp), std::invalid_argument);
}

TEST_CASE("fit_heaps: exact power-law data recovers the coefficients") {
    std::vector<std::pair<double, double>> traj;
    for (int i = 1; i <= 12; ++i) {
        const double n = 50.0 * i;
        traj.emplace_back(n, 8.36 * std::pow(n, 0.358));
    }
    const auto fit = fit_heaps(traj);
    CHECK(fit.A == doctest::Approx(8.36).epsilon(1e-10));
    CHECK(fit.alpha == doctest::Approx(0.358).epsilon(1e-10));
    CHECK_FALSE(fit.boundary);
}

TEST_CASE("fit_heaps: m = N sits on the boundary and is flagged") {
    std::vector<std::pair<double, double>> traj;
    for (int i = 1; i <= 10; ++i) traj.emplace_back(i * 10, i * 10);
    const auto fit = fit_heaps(traj);
    CHECK(fit.alpha == doctest::Approx(1.0));
    CHECK(fit.boundary);
}

TEST_CASE("fit_heaps: input validation") {
    std::vector<std::pair<double, double>> short_traj{{1, 1}, {2, 2}};
    CHECK_THROWS(fit_heaps(short_traj));
    std::vector<std::pair<double, double>> bad;
    for (int i = 1; i <= 10; ++i) bad.emplace_back(i, i == 5 ? 0.0 : 2.0);
    CHECK_THROWS(fit_heaps(bad));
}

TEST_CASE("fit_truncated_power: pure exponential input keeps gamma near zero") {
    std::vector<double> xs, ys;
    for (int i = 1; i <= 40; ++i) {
        xs.push_back(i * 5.0);
        ys.push_back(1000.0 * std::exp(-i * 5.0 / 60.0));
    }
    const auto fit = fit_truncated_power(xs, ys, TruncPowerVariant::Rank);
    CHECK(fit.gamma <= 0.05);
    CHECK(fit.x0 == doctest::Approx(60.0).epsilon(0.1));
}

TEST_CASE("fit_truncated_power: recovers the activity rank law") {
    // exact samples of 93557 e^{-x/154} (x+5.75)^{-0.916}
    std::vector<double> xs, ys;
    for (int x = 1; x <= 700; x += 7) {
        xs.push_back(x);
        ys.push_back(93557.0 * std::exp(-x / 154.0) * std::pow(x + 5.75, -0.916));
    }
    const auto fit = fit_truncated_power(xs, ys, TruncPowerVariant::Rank);
    CHECK(fit.x0 == doctest::Approx(154.0).epsilon(0.30));
    CHECK(fit.gamma >= 0.8);
    CHECK(fit.gamma <= 1.1);
    CHECK(fit.residual < fit.power_residual);  // the cutoff is necessary
}

TEST_CASE("fit_truncated_power: rejects degenerate data") {
    std::vector<double> xs(10, 3.0), ys(10, 1.0);
    CHECK_THROWS(fit_truncated_power(xs, ys, TruncPowerVariant::Rank));
    std::vector<double> xs2{1, 2, 3}, ys2{1, 2, 3};
    CHECK_THROWS(fit_truncated_power(xs2, ys2, TruncPowerVariant::Rank));
}

TEST_CASE("activity db json round-trips") {
    SimilarityParams sp;
    ActivityDB db;
    upsert_activity(db, testutil::axis_cluster(0, 3, 10), sp);
    upsert_activity(db, testutil::axis_cluster(5, 4, 20), sp);
    upsert_activity(db, testutil::axis_cluster(0, 3, 30), sp);
    const auto back = activity_db_from_json(activity_db_to_json(db));
    CHECK(activity_db_to_json(back) == activity_db_to_json(db));
    CHECK(back.total_observations == 3);
    CHECK(back.distinct_count() == 2);
}
