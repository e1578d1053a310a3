#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "actrace/cluster.hpp"
#include "actrace/similarity.hpp"

namespace actrace {

struct ClusteringParams {
    double density_min = 0.8;  // required edge density of an emitted cluster
    int min_cluster_size = 3;
};

// Builds the similarity graph over the window (edge iff sim >= theta_S),
// then peels minimum-degree vertices off each connected component until
// every surviving component is dense enough. Peeled vertices are
// discarded. Deterministic: vertices are ordered by (ts_us, pid, input
// position) and ties in degree resolve to the earliest vertex.
std::vector<TightCluster> extract_tight_clusters(
    const std::vector<FeatureVector>& window, const SimilarityParams& sp,
    const ClusteringParams& cp = {});

// recomputed edge density of a cluster at theta_S, for invariant checks
double cluster_density(const TightCluster& c, const SimilarityParams& sp);

// Timestamped, mergeable collection of distinct activities.
struct ActivityDB {
    std::uint32_t vocab_version = 1;
    std::map<std::string, TightCluster> activities;  // id -> cluster
    std::int64_t total_observations = 0;

    std::size_t distinct_count() const { return activities.size(); }
};

struct UpsertResult {
    bool novel = false;
    std::string matched_id;  // the incremented activity when not novel
};

// Matches the cluster against the stored activities (exact sim_tc); a match
// at or above theta_S increments that activity's observation count,
// otherwise the cluster is inserted as a new activity.
UpsertResult upsert_activity(ActivityDB& db, TightCluster c,
                             const SimilarityParams& sp);

// Union of two databases with near-duplicate coalescing: similar pairs keep
// the activity with the earlier first_seen_us (ties: smaller id) and sum
// observation counts. Commutative by construction.
ActivityDB merge_dbs(const ActivityDB& a, const ActivityDB& b,
                     const SimilarityParams& sp);

// -- growth and rank-law fits ----------------------------------------------

struct HeapsFit {
    double A = 0;
    double alpha = 0;  // in (0,1) on valid data
    double residual = 0;
    bool boundary = false;  // alpha pinned at 0 or 1
};

// Least squares of ln m = ln A + alpha ln N over a distinct-vs-total
// trajectory.
HeapsFit fit_heaps(std::span<const std::pair<double, double>> trajectory);

enum class TruncPowerVariant { Rank, GroupSize };

struct TruncPowerFit {
    double C = 0;
    double x0 = 0;     // exponential cutoff
    double s = 0;      // shift (Rank variant only)
    double gamma = 0;  // power-law exponent
    double residual = 0;        // squared log-residuals of the truncated fit
    double power_residual = 0;  // same for the best pure power law
    TruncPowerVariant variant = TruncPowerVariant::Rank;
};

// Fits y = C exp(-x/x0) (x+s)^-gamma by coarse grid search over
// (x0, s, gamma) followed by coordinate refinement; the GroupSize variant
// pins s = 0. Also fits the best pure power law for comparison.
TruncPowerFit fit_truncated_power(std::span<const double> xs,
                                  std::span<const double> ys,
                                  TruncPowerVariant variant);

double trunc_power_eval(const TruncPowerFit& f, double x);

// -- persistence -------------------------------------------------------------

std::string activity_db_to_json(const ActivityDB& db);
ActivityDB activity_db_from_json(const std::string& text);
void save_activity_db(const std::string& path, const ActivityDB& db);
ActivityDB load_activity_db(const std::string& path);

}  // namespace actrace
