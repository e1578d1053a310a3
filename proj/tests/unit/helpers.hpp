#pragma once

// Builders shared across the unit suites.

#include <json.hpp>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "actrace/classifier.hpp"
#include "actrace/cluster.hpp"
#include "actrace/featurizer.hpp"
#include "actrace/net.hpp"
#include "actrace/rng.hpp"
#include "actrace/similarity.hpp"

namespace testutil {

using namespace actrace;

// feature vector with explicit zeta coordinates and mu entries
inline FeatureVector make_fv(
    const std::vector<std::pair<int, double>>& zeta_coords,
    const std::vector<std::pair<WordKey, std::int64_t>>& mu_entries,
    std::int64_t ts = 0, std::int32_t pid = 1, const std::string& ep = "ep0") {
    FeatureVector fv;
    fv.endpoint_id = ep;
    fv.pid = pid;
    fv.ts_us = ts;
    fv.vocab_version = 1;
    fv.zeta.assign(kZetaDim, 0.0);
    double norm2 = 0;
    for (const auto& [i, v] : zeta_coords) {
        fv.zeta[i] = v;
        norm2 += v * v;
    }
    if (norm2 > 0) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (auto& z : fv.zeta) z *= inv;
    }
    for (const auto& [w, c] : mu_entries) fv.mu[w] = c;
    return fv;
}

inline TightCluster singleton_cluster(FeatureVector fv) {
    return make_tight_cluster({std::move(fv)});
}

// cluster of n near-identical vectors along one zeta axis
inline TightCluster axis_cluster(int axis, int n, std::int64_t ts0 = 0,
                                 const std::string& ep = "ep0") {
    std::vector<FeatureVector> members;
    for (int i = 0; i < n; ++i)
        members.push_back(make_fv({{axis, 1.0}}, {}, ts0 + i, 1, ep));
    return make_tight_cluster(std::move(members));
}

// random sparse mu bag
inline MuMap random_mu(Rng& rng, int words, std::int64_t max_count = 20) {
    MuMap mu;
    for (int i = 0; i < words; ++i) {
        const auto w = rng.below(4096);
        mu[w] = 1 + static_cast<std::int64_t>(rng.below(max_count));
    }
    return mu;
}

inline FeatureVector random_fv(Rng& rng, std::int64_t ts = 0) {
    std::vector<std::pair<int, double>> zc;
    const int nz = 1 + static_cast<int>(rng.below(4));
    for (int i = 0; i < nz; ++i)
        zc.emplace_back(static_cast<int>(rng.below(kZetaDim)),
                        rng.uniform(0.1, 1.0));
    FeatureVector fv = make_fv(zc, {}, ts);
    fv.mu = random_mu(rng, 2 + static_cast<int>(rng.below(8)));
    return fv;
}

// A three-class model whose net ignores its input and emits softmax(bias):
// hidden layers are all zero, the output bias is caller-chosen. Handy for
// exercising the server pipeline with a known verdict.
inline Model stub_model(const std::vector<double>& output_bias,
                        const DeriveParams& derive = {},
                        std::uint32_t vocab_version = 1) {
    NetConfig cfg;
    cfg.inputs = derive.dim();
    cfg.classes = 3;
    nlohmann::json layers = nlohmann::json::array();
    int prev = cfg.inputs;
    std::vector<int> dims = cfg.hidden;
    dims.push_back(cfg.classes);
    for (std::size_t li = 0; li < dims.size(); ++li) {
        const int out = dims[li];
        std::vector<double> w(static_cast<std::size_t>(out) * prev, 0.0);
        std::vector<double> b(out, 0.0);
        if (li + 1 == dims.size()) b = output_bias;
        layers.push_back({{"in", prev}, {"out", out}, {"w", w}, {"b", b}});
        prev = out;
    }
    nlohmann::json j{{"inputs", cfg.inputs}, {"classes", 3},
                     {"hidden", cfg.hidden}, {"layers", layers}};
    Model m;
    m.vocab_version = vocab_version;
    m.derive = derive;
    m.net3 = Net::from_json(j.dump());
    return m;
}

}  // namespace testutil
