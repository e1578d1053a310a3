#include <doctest.h>

#include <cmath>

#include "actrace/featurizer.hpp"
#include "actrace/harness.hpp"
#include "actrace/rng.hpp"
#include "actrace/similarity.hpp"
#include "actrace/synthgen.hpp"
#include "actrace/trace.hpp"

using namespace actrace;

TEST_CASE("make_family: rows are stochastic, modes are distributions") {
    const auto f = make_family(0, 64, 3, false, 123);
    for (const auto& row : f.trans) {
        double s = 0;
        for (double v : row) {
            CHECK(v >= 0);
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
    REQUIRE(f.modes.size() == 3);
    for (const auto& mode : f.modes) {
        double s = 0;
        for (double v : mode) s += v;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("make_variant: epsilon 0 duplicates the family") {
    const auto f = make_family(1, 64, 2, false, 9);
    const auto v = make_variant(f, 0, 0.0, 77);
    CHECK(v.trans == f.trans);
    CHECK_THROWS(make_variant(f, 0, 1.5, 1));
}

TEST_CASE("gen_fleet: identical seeds are bit-identical, distinct differ") {
    FleetParams fp;
    fp.endpoints = 2;
    fp.walk.duration_s = 10;
    fp.seed = 314;
    const auto a = gen_fleet(fp);
    const auto b = gen_fleet(fp);
    REQUIRE(a.events.size() == b.events.size());
    CHECK(a.events == b.events);

    fp.seed = 315;
    const auto c = gen_fleet(fp);
    CHECK(a.events != c.events);
}

TEST_CASE("gen_fleet: single chain featurizes into mutually similar vectors") {
    FleetParams fp;
    fp.families = 1;
    fp.variants_per_family = 1;
    fp.endpoints = 1;
    fp.procs_per_endpoint = 1;
    fp.modes_per_family = 1;
    fp.malicious_family_fraction = 0;
    fp.walk.duration_s = 60;
    fp.walk.calls_per_s = 150;
    fp.seed = 2718;
    const auto fleet = gen_fleet(fp);

    std::vector<std::vector<WordKey>> corpus;
    const auto batches = assemble_batches(fleet.events, zero_idle());
    for (const auto& b : batches)
        for (const auto& [tid, words] : extract_words(b)) corpus.push_back(words);
    const auto vocab = build_vocabulary(corpus, fp.alphabet_size);

    std::vector<FeatureVector> fvs;
    for (const auto& b : batches)
        for (auto& fv : featurize(b, vocab)) fvs.push_back(std::move(fv));
    REQUIRE(fvs.size() >= 8);

    const SimilarityParams sp;
    int similar = 0, pairs = 0;
    for (std::size_t i = 0; i < fvs.size(); ++i) {
        for (std::size_t j = i + 1; j < fvs.size(); ++j) {
            ++pairs;
            if (sim(fvs[i], fvs[j], sp) >= sp.theta_S) ++similar;
        }
    }
    CHECK(static_cast<double>(similar) / pairs >= 0.9);
}

TEST_CASE("gen_fleet: epsilon=1 variants drift apart, clones do not") {
    const int A = 64;
    const auto family = make_family(5, A, 1, false, 111);
    const WalkParams wp{.duration_s = 40, .calls_per_s = 150, .mode_dwell_s = 40};

    auto word_bag = [&](const ProgramVariant& v, std::uint64_t seed) {
        const auto events = run_sample(v, family, wp, "ep", 1, seed);
        MuMap bag;
        Batch b;
        b.endpoint_id = "ep";
        b.events = events;
        for (const auto& [tid, words] : extract_words(b))
            for (WordKey w : words) ++bag[w];
        return bag;
    };

    const SimilarityParams sp;
    const auto base = make_variant(family, 0, 0.0, 1);
    const auto clone = make_variant(family, 1, 0.0, 2);
    const auto wild = make_variant(family, 2, 1.0, 3);

    // intra: two runs of the same code base; inter: against the full rewrite
    const double intra =
        cos_mu(word_bag(base, 10), word_bag(clone, 11), sp);
    const double inter = cos_mu(word_bag(base, 12), word_bag(wild, 13), sp);
    CHECK(intra > inter);
}

TEST_CASE("attach_library: linked programs share library activity verbatim") {
    const int A = 64;
    const auto lib = make_family(900, A, 2, false, 555, 0.5);
    auto fam_a = make_family(1, A, 2, false, 556, 0.8);
    auto fam_b = make_family(2, A, 2, false, 557, 0.8);
    attach_library(fam_a, lib, 1.0);  // every dwell inside the library
    attach_library(fam_b, lib, 1.0);
    CHECK(fam_a.has_library());
    CHECK(fam_a.lib_trans == fam_b.lib_trans);

    const WalkParams wp{.duration_s = 30, .calls_per_s = 150, .mode_dwell_s = 30};
    const auto va = make_variant(fam_a, 0, 0.0, 1);
    const auto vb = make_variant(fam_b, 0, 0.0, 2);
    auto bag = [&](const ProgramVariant& v, const SyntheticFamily& f,
                   std::uint64_t seed) {
        MuMap mu;
        Batch b;
        b.endpoint_id = "ep";
        b.events = run_sample(v, f, wp, "ep", 1, seed);
        for (const auto& [tid, words] : extract_words(b))
            for (WordKey w : words) ++mu[w];
        return mu;
    };
    // different programs, same library behavior: strongly overlapping words
    const SimilarityParams sp;
    const double c = cos_mu(bag(va, fam_a, 9), bag(vb, fam_b, 10), sp);
    CHECK(c > 0.5);

    CHECK_THROWS(attach_library(fam_a, lib, 1.5));
}

TEST_CASE("project_scaling: the published operating point") {
    ScalingInputs in;  // defaults are the million-endpoint operating point
    const auto out = project_scaling(in);
    CHECK(out.new_activities_week == doctest::Approx(21000).epsilon(0.25));
    CHECK(out.fp_week == doctest::Approx(26.2).epsilon(0.15));
    CHECK(out.fn_week == doctest::Approx(62).epsilon(0.25));
}

TEST_CASE("project_scaling: zero exponent collapses to the amplitude") {
    ScalingInputs in;
    in.heaps_alpha = 0;
    const auto out = project_scaling(in);
    CHECK(out.new_activities_week == doctest::Approx(in.heaps_A));
}

TEST_CASE("project_scaling: monotone in endpoints and clusters") {
    ScalingInputs in;
    const auto base = project_scaling(in);
    in.endpoints *= 2;
    const auto more = project_scaling(in);
    CHECK(more.new_activities_week > base.new_activities_week);
    in.clusters_per_endpoint_week *= 2;
    const auto morer = project_scaling(in);
    CHECK(morer.new_activities_week > more.new_activities_week);
}

TEST_CASE("sensor_bandwidth: arithmetic") {
    CHECK(sensor_bandwidth(9750, 5, 10) == 650.0);
    CHECK(sensor_bandwidth(0, 5, 10) == 0.0);
    CHECK(sensor_bandwidth(9750, 5, 20) == doctest::Approx(390.0));
}

TEST_CASE("contamination_probability: the published probabilities") {
    CHECK(contamination_probability(46) == doctest::Approx(0.990).epsilon(0.001));
    CHECK(contamination_probability(2) == doctest::Approx(0.181).epsilon(0.011));
    CHECK(contamination_probability(0) == 0.0);
    CHECK_THROWS(contamination_probability(-1));
}

TEST_CASE("contamination_probability: monotone and bounded") {
    double prev = -1;
    for (double r = 0; r <= 200; r += 5) {
        const double p = contamination_probability(r);
        CHECK(p > prev);
        CHECK(p <= 1.0);
        prev = p;
    }
}

TEST_CASE("fleet params round-trip") {
    FleetParams fp;
    fp.families = 9;
    fp.walk.calls_per_s = 99;
    const auto back = fleet_params_from_json(fleet_params_to_json(fp));
    CHECK(back.families == 9);
    CHECK(back.walk.calls_per_s == doctest::Approx(99));
}
