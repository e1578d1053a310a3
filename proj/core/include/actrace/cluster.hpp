#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "actrace/featurizer.hpp"

namespace actrace {

// A dense group of mutually similar feature vectors: one "activity".
struct TightCluster {
    std::string id;  // content hash over member digests, permutation stable
    std::vector<FeatureVector> members;
    std::int64_t first_seen_us = 0;
    std::int64_t observation_count = 1;
    std::vector<std::string> endpoints;  // sorted, unique

    std::size_t size() const { return members.size(); }
};

// Builds a cluster from its members: content id, earliest member timestamp,
// contributing endpoint list. The id depends only on the quantized
// (zeta, mu) content, so equal behavior hashes equally on any server.
TightCluster make_tight_cluster(std::vector<FeatureVector> members);

std::string cluster_content_id(const std::vector<FeatureVector>& members);

// Member mu bags summed into one cluster-level bag.
std::map<WordKey, std::int64_t> pooled_mu(const TightCluster& c);

// Mean of member zetas, re-normalized to unit length (all-zero stays zero).
std::vector<double> mean_zeta(const TightCluster& c);

}  // namespace actrace
