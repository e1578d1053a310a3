#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "actrace/classifier.hpp"
#include "actrace/config.hpp"
#include "actrace/phylo.hpp"
#include "actrace/similarity.hpp"
#include "actrace/synthgen.hpp"

namespace actrace {

// Featurize a raw trace and extract tight clusters per endpoint and
// evaluation window.
std::vector<TightCluster> cluster_trace(const std::vector<SyscallEvent>& events,
                                        const Vocabulary& vocab,
                                        const Config& cfg);

// -- synthetic labeled corpus for the classifier and regime tests -----------

struct CorpusSpec {
    int alphabet_size = 64;
    int benign_families = 16;
    int malware_families = 16;
    int libraries = 3;            // shared library behaviors
    double library_weight = 0.4;  // fraction of dwells spent inside a library
    // Every program shares a slice of stock OS behavior; this keeps the
    // frequent-word vocabulary meaningful even for families that never
    // appeared in the training period.
    double background_weight = 0.15;
    int lib_benign_users = 8;   // benign families linking a library
    int lib_malware_users = 5;  // malware families linking the same libraries
    // Repackaged malware: a benign code base carrying a malicious payload,
    // present in the training period only. Together with the shared library
    // activity these are the label contradictions the lib class absorbs.
    int repackaged_malware = 3;
    double repackage_weight = 0.85;     // share of the benign base kept
    double benign_region_bias = 0.85;   // benign home states in the low call region
    double malware_region_bias = 0.15;  // malware home states in the low region
    int train_variants = 3;
    int test_variants = 2;
    int novel_malware_families = 5;  // appear only in the test period
    int novel_benign_families = 5;
    double train_epsilon = 0.08;
    double test_epsilon = 0.2;
    int d_proj = 160;  // projection width for the classifier features
    WalkParams walk{.duration_s = 360, .calls_per_s = 120, .mode_dwell_s = 20};
    std::uint64_t seed = 42;
};

struct SampleRun {
    std::string sample_id;
    bool malicious = false;
    bool novel_family = false;  // family absent from the training period
    std::vector<TightCluster> clusters;
};

struct HarnessCorpus {
    Config cfg;
    Vocabulary vocab;
    Cover cover;              // deduplicated training clusters, labeled
    LabeledSet train;         // derived cluster features, 0 = cln / 1 = mal
    std::vector<SampleRun> test_samples;
};

HarnessCorpus build_corpus(const CorpusSpec& spec);

// -- test regimes ---------------------------------------------------------------

enum class Regime { ByDate, NoHomologs, NetOnly };

struct RegimeReport {
    ConfusionMatrix cm;
    Metrics metrics;
    int clusters_evaluated = 0;
    int homologs_removed = 0;
    int cover_decisions = 0;
    int net_decisions = 0;
};

// ByDate: cover match first, unmatched clusters scored by the net.
// NoHomologs: same, after dropping malware-side clusters that match the
// cover. NetOnly: every cluster goes to the net.
RegimeReport run_regime(const HarnessCorpus& corpus, const Net& net3,
                        const OddsParams& odds, Regime regime,
                        int min_members = 10);

// two-class baseline over the same clusters (Net only path)
RegimeReport run_two_class_regime(const HarnessCorpus& corpus, const Net& net2,
                                  int min_members = 10);

std::string regime_report_to_json(const RegimeReport& r);

// -- synthetic phylogeny corpus ---------------------------------------------------

struct PhyloCorpusSpec {
    int alphabet_size = 64;
    int families = 30;
    int variants_per_family = 10;
    double variant_epsilon = 0.1;
    WalkParams walk{.duration_s = 120, .calls_per_s = 100, .mode_dwell_s = 20};
    std::uint64_t seed = 7;
};

// Per-variant behavior profiles with known family ground truth. Calibrates
// cfg.sim's theta scales on the corpus before clustering.
std::vector<BehaviorProfile> build_profile_corpus(const PhyloCorpusSpec& spec,
                                                  Config& cfg,
                                                  Vocabulary* vocab_out = nullptr);

}  // namespace actrace
