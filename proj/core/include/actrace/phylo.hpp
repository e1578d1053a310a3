#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "actrace/cluster.hpp"
#include "actrace/similarity.hpp"

namespace actrace {

// Pooled per-sample behavior: the distinct tight clusters a sample produced
// across its experiments, with baseline activity masked out.
struct BehaviorProfile {
    std::string sample_id;
    std::vector<TightCluster> clusters;
    int experiment_count = 0;
};

// Removes every cluster matching the malware-free baseline list at theta_S.
BehaviorProfile mask_baseline(BehaviorProfile profile,
                              std::span<const TightCluster> clean_list,
                              const SimilarityParams& sp);

// Directed behavior-containment graph over samples. After condensation a
// vertex may stand for several samples (a strongly connected group).
struct PhyloGraph {
    std::vector<std::string> sample_ids;            // global sample table
    std::vector<std::vector<int>> vertex_samples;   // per vertex, sample indices
    std::set<std::pair<int, int>> edges;            // u -> v
    bool condensed = false;
    bool reduced = false;

    std::size_t vertex_count() const { return vertex_samples.size(); }
};

// Edge a -> b iff every cluster of b has a mu-similar cluster in a
// (theta_mu * cos strictly above the threshold). Candidate retrieval goes
// through the exact mu index, so the result equals the brute-force scan.
// Samples with empty profiles get no in-edges.
PhyloGraph impute_edges(std::span<const BehaviorProfile> profiles,
                        const SimilarityParams& sp, double threshold);

// Contracts strongly connected components, then takes the (unique)
// transitive reduction of the resulting DAG. Reachability between the
// contracted vertices is preserved exactly.
PhyloGraph condense_and_reduce(const PhyloGraph& g);

// reachability matrix of the directed graph, for oracle checks
std::vector<std::vector<char>> reachability(const PhyloGraph& g);

struct Family {
    std::string family_id;
    std::vector<std::string> members;  // sample ids, sorted
    bool weak = false;
};

// Family extraction over the condensed+reduced graph: one family per
// non-largest undirected component with at least two samples; the largest
// component is peeled of dominating vertices (in-degree 0 with outgoing
// edges) and then split by greedy modularity communities.
std::vector<Family> extract_families(const PhyloGraph& g);

// Strong pass at theta_edge, then a weak pass at theta_weak over the
// samples left out of every strong family.
std::vector<Family> build_families(std::span<const BehaviorProfile> profiles,
                                   const SimilarityParams& sp);

// -- population estimation ----------------------------------------------------

struct AbundanceHistogram {
    std::map<int, std::int64_t> f;  // f[k] = families observed exactly k times

    std::int64_t s_obs() const;
    std::int64_t total_observations() const;
    std::int64_t fk(int k) const;
};

AbundanceHistogram abundance_from_counts(std::span<const std::int64_t> counts);

struct PopulationEstimate {
    double chao1 = 0;
    double jackknife1 = 0;
    double extrapolation = 0;
    double bootstrap_mc = 0;
    double median = 0;
    double min = 0;
    double max = 0;
};

// Portfolio of richness estimators over the abundance histogram; the
// bootstrap term resamples the observations 200 times under the given seed.
PopulationEstimate estimate_population(const AbundanceHistogram& hist,
                                       std::uint64_t seed);

// -- reports -------------------------------------------------------------------

std::string families_to_csv(std::span<const Family> families);
std::string estimate_to_json(const PopulationEstimate& e);
std::string phylo_graph_to_json(const PhyloGraph& g);
PhyloGraph phylo_graph_from_json(const std::string& text);

}  // namespace actrace
