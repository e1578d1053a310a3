#include "actrace/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "actrace/activity.hpp"
#include "actrace/rng.hpp"
#include "actrace/trace.hpp"

namespace actrace {

using nlohmann::json;

std::vector<TightCluster> cluster_trace(const std::vector<SyscallEvent>& events,
                                        const Vocabulary& vocab,
                                        const Config& cfg) {
    const auto batches = assemble_batches(events, zero_idle(), cfg.reorder_slack_us);
    const auto window_us = static_cast<std::int64_t>(cfg.window_minutes * 60e6);

    std::map<std::pair<std::string, std::int64_t>, std::vector<FeatureVector>>
        windows;
    for (const auto& batch : batches) {
        auto fvs = featurize(batch, vocab);
        auto& slot = windows[{batch.endpoint_id, batch.t_start_us / window_us}];
        for (auto& fv : fvs) slot.push_back(std::move(fv));
    }
    std::vector<TightCluster> clusters;
    for (const auto& [key, fvs] : windows) {
        auto cs = extract_tight_clusters(fvs, cfg.sim, cfg.clustering);
        for (auto& c : cs) clusters.push_back(std::move(c));
    }
    return clusters;
}

namespace {

struct SamplePlan {
    std::string sample_id;
    bool malicious = false;
    bool novel_family = false;
    ProgramVariant variant;
    const SyntheticFamily* family = nullptr;
    std::uint64_t walk_seed = 0;
};

std::vector<SyscallEvent> run_plan(const SamplePlan& plan, const WalkParams& wp) {
    return run_sample(plan.variant, *plan.family, wp, plan.sample_id, 100,
                      plan.walk_seed);
}

// keep only clusters that do not match an already kept one
void dedup_into(std::vector<TightCluster>& kept, std::vector<TightCluster> fresh,
                const SimilarityParams& sp) {
    for (auto& c : fresh) {
        bool dup = false;
        for (const auto& k : kept) {
            if (sim_tc(c, k, sp, SimTcMode::Exact) >= sp.theta_S) {
                dup = true;
                break;
            }
        }
        if (!dup) kept.push_back(std::move(c));
    }
}

std::string pad2(int v) {
    return (v < 10 ? "0" : "") + std::to_string(v);
}

}  // namespace

HarnessCorpus build_corpus(const CorpusSpec& spec) {
    Config cfg;
    cfg.alphabet_size = spec.alphabet_size;
    cfg.derive.alphabet_size = spec.alphabet_size;
    cfg.derive.d_proj = spec.d_proj;
    // nominal theta scales; short windows give several detections per run
    cfg.window_minutes = 2.0;

    // family construction: benign and malware code bases, some on shared
    // libraries, some malware repackaging a benign base. Benign programs
    // lean on the lower call region, malware on the upper one, libraries
    // sit in between; the class signal a classifier can generalize from.
    const double benign_bias = spec.benign_region_bias;
    const double malware_bias = spec.malware_region_bias;
    const double lib_bias = 0.5;
    // benign software branches more; malicious tooling loops tighter
    Rng decay_rng(mix64(spec.seed ^ 0xDECA7));
    auto benign_decay = [&] { return 0.48 + 0.10 * decay_rng.uniform(); };
    auto malware_decay = [&] { return 0.28 + 0.08 * decay_rng.uniform(); };
    const auto background = make_family(999, spec.alphabet_size, 1, false,
                                        mix64(spec.seed ^ 0xB6000), 0.5);
    auto with_background = [&](SyntheticFamily fam) {
        fam.trans =
            blend_matrices(fam.trans, background.trans, spec.background_weight);
        return fam;
    };

    std::vector<SyntheticFamily> libraries;
    for (int k = 0; k < spec.libraries; ++k)
        libraries.push_back(make_family(900 + k, spec.alphabet_size, 3, false,
                                        mix64(spec.seed ^ (0x11B000 + k)),
                                        lib_bias, 0.42));

    std::vector<SyntheticFamily> benign, malware, novel;
    for (int f = 0; f < spec.benign_families; ++f) {
        auto fam = make_family(f, spec.alphabet_size, 3, false,
                               mix64(spec.seed ^ (0xBE000 + f)), benign_bias,
                               benign_decay());
        fam = with_background(std::move(fam));
        if (f < spec.lib_benign_users && !libraries.empty())
            attach_library(fam, libraries[f % libraries.size()],
                           spec.library_weight);
        benign.push_back(std::move(fam));
    }
    for (int f = 0; f < spec.malware_families; ++f) {
        auto fam = make_family(100 + f, spec.alphabet_size, 3, true,
                               mix64(spec.seed ^ (0x3A1000 + f)), malware_bias,
                               malware_decay());
        if (f < spec.lib_malware_users && !libraries.empty()) {
            fam = with_background(std::move(fam));
            attach_library(fam, libraries[f % libraries.size()],
                           spec.library_weight);
        } else if (f < spec.lib_malware_users + spec.repackaged_malware &&
                   !benign.empty()) {
            const auto& base = benign[f % benign.size()];  // already blended
            fam.trans = blend_matrices(base.trans, fam.trans,
                                       1.0 - spec.repackage_weight);
            fam.modes = base.modes;  // repackaged code keeps the host's activities
            if (base.has_library())
                attach_library(fam, libraries[f % libraries.size()],
                               base.lib_fraction);
        } else {
            fam = with_background(std::move(fam));
        }
        malware.push_back(std::move(fam));
    }
    for (int f = 0; f < spec.novel_malware_families; ++f)
        novel.push_back(with_background(
            make_family(200 + f, spec.alphabet_size, 3, true,
                        mix64(spec.seed ^ (0x40E000 + f)), malware_bias,
                        malware_decay())));
    for (int f = 0; f < spec.novel_benign_families; ++f)
        novel.push_back(with_background(
            make_family(300 + f, spec.alphabet_size, 3, false,
                        mix64(spec.seed ^ (0x40B000 + f)), benign_bias,
                        benign_decay())));

    // sample plans: the training period uses early variants, the test
    // period later (more drifted) variants plus the novel families
    std::vector<SamplePlan> train_plans, test_plans;
    auto plan_for = [&](const SyntheticFamily& fam, int vid, double eps,
                        bool is_novel, const char* era) {
        SamplePlan p;
        p.family = &fam;
        p.malicious = fam.malicious;
        p.novel_family = is_novel;
        p.sample_id = std::string(era) + "-f" + std::to_string(fam.family_id) +
                      "-v" + pad2(vid);
        p.variant = make_variant(fam, vid, eps,
                                 mix64(spec.seed ^ (fam.family_id * 10007 + vid)));
        p.walk_seed = mix64(spec.seed ^ (0x3A17 + fam.family_id * 211 + vid));
        return p;
    };
    auto is_repackaged = [&](const SyntheticFamily& fam) {
        const int idx = fam.family_id - 100;
        return fam.malicious && idx >= spec.lib_malware_users &&
               idx < spec.lib_malware_users + spec.repackaged_malware;
    };
    for (const auto& fam : benign)
        for (int v = 0; v < spec.train_variants; ++v)
            train_plans.push_back(
                plan_for(fam, v, v == 0 ? 0.0 : spec.train_epsilon, false, "tr"));
    for (const auto& fam : malware)
        for (int v = 0; v < spec.train_variants; ++v)
            train_plans.push_back(
                plan_for(fam, v, v == 0 ? 0.0 : spec.train_epsilon, false, "tr"));
    for (const auto& fam : benign)
        for (int v = 0; v < spec.test_variants; ++v)
            test_plans.push_back(plan_for(fam, spec.train_variants + v,
                                          spec.test_epsilon, false, "te"));
    for (const auto& fam : malware) {
        if (is_repackaged(fam)) continue;  // training-period hard cases only
        for (int v = 0; v < spec.test_variants; ++v)
            test_plans.push_back(plan_for(fam, spec.train_variants + v,
                                          spec.test_epsilon, false, "te"));
    }
    for (const auto& fam : novel)
        for (int v = 0; v < spec.test_variants; ++v)
            test_plans.push_back(
                plan_for(fam, v, v == 0 ? 0.0 : spec.train_epsilon, true, "te"));

    // pass 1: corpus word counts from the training period only
    std::map<WordKey, std::int64_t> counts;
    for (const auto& plan : train_plans) {
        const auto events = run_plan(plan, spec.walk);
        for (const auto& batch : assemble_batches(events, zero_idle()))
            for (const auto& [tid, words] : extract_words(batch))
                for (WordKey w : words) ++counts[w];
    }
    HarnessCorpus corpus;
    corpus.vocab = build_vocabulary_from_counts(counts, spec.alphabet_size);

    // pass 2: clusters, covers, training set
    std::vector<std::vector<TightCluster>> train_clusters(train_plans.size());
    for (std::size_t i = 0; i < train_plans.size(); ++i) {
        const auto events = run_plan(train_plans[i], spec.walk);
        train_clusters[i] = cluster_trace(events, corpus.vocab, cfg);
    }

    corpus.cover.version = corpus.vocab.version;
    corpus.cover.params = cfg.sim;
    for (std::size_t i = 0; i < train_plans.size(); ++i) {
        auto& side = train_plans[i].malicious ? corpus.cover.mal : corpus.cover.cln;
        dedup_into(side, train_clusters[i], cfg.sim);
    }
    // the malicious cover keeps only activity never seen from benign
    // programs; ambiguous activity is the net's job
    {
        std::vector<TightCluster> pure;
        for (auto& b : corpus.cover.mal) {
            bool shared = false;
            for (const auto& g : corpus.cover.cln) {
                if (sim_tc(b, g, cfg.sim, SimTcMode::Exact) >= cfg.sim.theta_S) {
                    shared = true;
                    break;
                }
            }
            if (!shared) pure.push_back(std::move(b));
        }
        corpus.cover.mal = std::move(pure);
    }

    for (std::size_t i = 0; i < train_plans.size(); ++i) {
        for (const auto& c : train_clusters[i]) {
            auto df = derive_features(c, cfg.derive);
            corpus.train.x.push_back(std::move(df.values));
            corpus.train.y.push_back(train_plans[i].malicious ? 1 : 0);
        }
    }

    for (const auto& plan : test_plans) {
        SampleRun run;
        run.sample_id = plan.sample_id;
        run.malicious = plan.malicious;
        run.novel_family = plan.novel_family;
        const auto events = run_plan(plan, spec.walk);
        run.clusters = cluster_trace(events, corpus.vocab, cfg);
        corpus.test_samples.push_back(std::move(run));
    }

    corpus.cfg = cfg;
    return corpus;
}

namespace {

// Shared (library/background) activity is not evidence of the sample that
// happened to run it; like the baseline masking in the experiment pipeline,
// malware-side clusters that match known-benign activity are not scored.
bool baseline_activity(const TightCluster& cluster, const Cover& cover,
                       const SimilarityParams& sp) {
    for (const auto& g : cover.cln)
        if (sim_tc(cluster, g, sp, SimTcMode::Exact) >= sp.theta_S) return true;
    return false;
}

}  // namespace

RegimeReport run_regime(const HarnessCorpus& corpus, const Net& net3,
                        const OddsParams& odds, Regime regime, int min_members) {
    RegimeReport report;
    const auto& sp = corpus.cfg.sim;
    for (const auto& sample : corpus.test_samples) {
        for (const auto& cluster : sample.clusters) {
            if (static_cast<int>(cluster.members.size()) < min_members) continue;
            if (sample.malicious && baseline_activity(cluster, corpus.cover, sp))
                continue;

            if (regime == Regime::NoHomologs && sample.malicious) {
                bool homolog = false;
                for (const auto& b : corpus.cover.mal) {
                    if (sim_tc(cluster, b, sp, SimTcMode::Exact) >= sp.theta_S) {
                        homolog = true;
                        break;
                    }
                }
                if (!homolog) {
                    for (const auto& g : corpus.cover.cln) {
                        if (sim_tc(cluster, g, sp, SimTcMode::Exact) >= sp.theta_S) {
                            homolog = true;
                            break;
                        }
                    }
                }
                if (homolog) {
                    ++report.homologs_removed;
                    continue;
                }
            }

            bool predicted_mal = false;
            bool via_net = regime == Regime::NetOnly;
            if (!via_net) {
                const auto decision =
                    decide_origin(cluster, corpus.cover.mal, corpus.cover.cln, sp);
                if (decision.verdict == Verdict::Mal) {
                    predicted_mal = true;
                    ++report.cover_decisions;
                } else if (decision.verdict == Verdict::Cln) {
                    predicted_mal = false;
                    ++report.cover_decisions;
                } else {
                    via_net = true;
                }
            }
            if (via_net) {
                const auto df = derive_features(cluster, corpus.cfg.derive);
                predicted_mal = score(net3, df.values, odds).mal;
                ++report.net_decisions;
            }

            ++report.clusters_evaluated;
            if (sample.malicious) {
                predicted_mal ? ++report.cm.tp : ++report.cm.fn;
            } else {
                predicted_mal ? ++report.cm.fp : ++report.cm.tn;
            }
        }
    }
    report.metrics = compute_metrics(report.cm);
    return report;
}

RegimeReport run_two_class_regime(const HarnessCorpus& corpus, const Net& net2,
                                  int min_members) {
    RegimeReport report;
    for (const auto& sample : corpus.test_samples) {
        for (const auto& cluster : sample.clusters) {
            if (static_cast<int>(cluster.members.size()) < min_members) continue;
            if (sample.malicious &&
                baseline_activity(cluster, corpus.cover, corpus.cfg.sim))
                continue;
            const auto df = derive_features(cluster, corpus.cfg.derive);
            const bool predicted_mal = net2.predict(df.values) == 1;
            ++report.net_decisions;
            ++report.clusters_evaluated;
            if (sample.malicious) {
                predicted_mal ? ++report.cm.tp : ++report.cm.fn;
            } else {
                predicted_mal ? ++report.cm.fp : ++report.cm.tn;
            }
        }
    }
    report.metrics = compute_metrics(report.cm);
    return report;
}

std::string regime_report_to_json(const RegimeReport& r) {
    json j = json::parse(metrics_to_json(r.cm, r.metrics));
    j["clusters_evaluated"] = r.clusters_evaluated;
    j["homologs_removed"] = r.homologs_removed;
    j["cover_decisions"] = r.cover_decisions;
    j["net_decisions"] = r.net_decisions;
    return j.dump();
}

std::vector<BehaviorProfile> build_profile_corpus(const PhyloCorpusSpec& spec,
                                                  Config& cfg,
                                                  Vocabulary* vocab_out) {
    cfg.alphabet_size = spec.alphabet_size;

    std::vector<SyntheticFamily> families;
    for (int f = 0; f < spec.families; ++f)
        families.push_back(make_family(f, spec.alphabet_size, 3, false,
                                       mix64(spec.seed ^ (0xFA100 + f))));

    struct Plan {
        std::string id;
        ProgramVariant variant;
        int family = 0;
        std::uint64_t walk_seed = 0;
    };
    std::vector<Plan> plans;
    for (int f = 0; f < spec.families; ++f) {
        for (int v = 0; v < spec.variants_per_family; ++v) {
            Plan p;
            p.id = "f" + pad2(f) + "v" + pad2(v);
            p.family = f;
            p.variant = make_variant(families[f], v,
                                     v == 0 ? 0.0 : spec.variant_epsilon,
                                     mix64(spec.seed ^ (f * 1009 + v)));
            p.walk_seed = mix64(spec.seed ^ (0x9A1F + f * 131 + v));
            plans.push_back(std::move(p));
        }
    }

    std::map<WordKey, std::int64_t> counts;
    for (const auto& plan : plans) {
        const auto events = run_sample(plan.variant, families[plan.family],
                                       spec.walk, plan.id, 100, plan.walk_seed);
        for (const auto& batch : assemble_batches(events, zero_idle()))
            for (const auto& [tid, words] : extract_words(batch))
                for (WordKey w : words) ++counts[w];
    }
    Vocabulary vocab = build_vocabulary_from_counts(counts, spec.alphabet_size);

    // pin the similarity scales to this corpus before clustering
    {
        std::vector<FeatureVector> calib;
        for (std::size_t i = 0; i < plans.size() && calib.size() < 2500; i += 5) {
            const auto events =
                run_sample(plans[i].variant, families[plans[i].family], spec.walk,
                           plans[i].id, 100, plans[i].walk_seed);
            for (const auto& batch : assemble_batches(events, zero_idle()))
                for (auto& fv : featurize(batch, vocab))
                    calib.push_back(std::move(fv));
        }
        const auto [tz, tm] = calibrate_thetas(calib, cfg.calibration_target,
                                               spec.seed, cfg.calibration_pairs);
        cfg.sim.theta_zeta = tz;
        cfg.sim.theta_mu = tm;
    }

    std::vector<BehaviorProfile> profiles;
    profiles.reserve(plans.size());
    for (const auto& plan : plans) {
        const auto events = run_sample(plan.variant, families[plan.family],
                                       spec.walk, plan.id, 100, plan.walk_seed);
        BehaviorProfile profile;
        profile.sample_id = plan.id;
        profile.experiment_count = 1;
        dedup_into(profile.clusters, cluster_trace(events, vocab, cfg), cfg.sim);
        profiles.push_back(std::move(profile));
    }
    if (vocab_out) *vocab_out = std::move(vocab);
    return profiles;
}

}  // namespace actrace
