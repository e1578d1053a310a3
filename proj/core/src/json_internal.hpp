#pragma once

// Shared JSON object converters, internal to the library build.

#include <json.hpp>

#include "actrace/cluster.hpp"
#include "actrace/featurizer.hpp"
#include "actrace/similarity.hpp"

namespace actrace {

nlohmann::json feature_vector_to_json_obj(const FeatureVector& fv);
FeatureVector feature_vector_from_json_obj(const nlohmann::json& j,
                                           std::uint32_t vocab_version);

nlohmann::json cluster_to_json_obj(const TightCluster& c);
TightCluster cluster_from_json_obj(const nlohmann::json& j,
                                   std::uint32_t vocab_version);

nlohmann::json sim_params_to_json_obj(const SimilarityParams& p);
SimilarityParams sim_params_from_json_obj(const nlohmann::json& j);

}  // namespace actrace
