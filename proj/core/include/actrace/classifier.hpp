#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "actrace/cluster.hpp"
#include "actrace/featurizer.hpp"
#include "actrace/net.hpp"

namespace actrace {

// class indices used throughout
inline constexpr int kClassCln = 0;
inline constexpr int kClassLib = 1;
inline constexpr int kClassMal = 2;

struct DeriveParams {
    int alphabet_size = 64;
    int d_proj = 64;                // signed random projection width
    int box_size = 8;               // words per probability box
    std::vector<double> exponents{-2, -1, 0, 0.5, 2, 3};  // partition exponents
    std::uint64_t projection_seed = 0x5eedf00d;

    int dim() const {
        return kZetaDim + d_proj + static_cast<int>(exponents.size()) + 1;
    }
};

// Classifier input: the zeta part, a signed random projection of the
// 2-grams inside the mu words, and partition-function statistics
// ln Z(q) = ln sum_j P_j^q over constant-size boxes of the rank-sorted mu
// distribution (the q = 1 slot carries the Shannon entropy instead).
struct DerivedFeatures {
    std::vector<double> values;
    bool degenerate = false;  // empty mu: projection and stats zeroed
};

DerivedFeatures derive_features(const FeatureVector& fv, const DeriveParams& p);
// cluster variant: mu counts pooled across members, zeta averaged
DerivedFeatures derive_features(const TightCluster& c, const DeriveParams& p);

struct LabeledSet {
    std::vector<std::vector<double>> x;
    std::vector<int> y;

    std::size_t size() const { return x.size(); }
};

// Two-class (cln=0, mal=1) training; throws if only one label is present.
Net train_two_class(const LabeledSet& train, NetConfig cfg);

// Relabels the two-class training set for the three-class problem:
// non-malware stays cln, malware the two-class net got right becomes mal,
// malware it got wrong becomes lib.
LabeledSet bootstrap_labels(const Net& net2, const LabeledSet& train);

Net train_three_class(const LabeledSet& bootstrapped, NetConfig cfg);

struct OddsParams {
    double theta_cln_from_lib = 0.9;  // share of the lib mass credited to cln
    double threshold = 1.0;           // odds above this score as mal
    double epsilon = 1e-12;           // zero-denominator guard
};

struct OddsScore {
    double odds = 0;
    bool mal = false;
};

// Softmax-to-odds mapping of the three-class output.
OddsScore score(const Net& net3, std::span<const double> x, const OddsParams& p);
OddsScore score_probs(std::span<const double> softmax, const OddsParams& p);

// -- evaluation ---------------------------------------------------------------

struct ConfusionMatrix {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct Metrics {
    std::optional<double> precision, recall, f1, fpr, fnr, youden, error;
};

Metrics compute_metrics(const ConfusionMatrix& cm);
std::string metrics_to_json(const ConfusionMatrix& cm, const Metrics& m);

// -- model bundle ---------------------------------------------------------------

struct Model {
    std::uint32_t version = 1;
    std::uint32_t vocab_version = 1;
    DeriveParams derive;
    OddsParams odds;
    Net net3;
};

std::string model_to_json(const Model& m);
Model model_from_json(const std::string& text);
void save_model(const std::string& path, const Model& m);
Model load_model(const std::string& path);

}  // namespace actrace
