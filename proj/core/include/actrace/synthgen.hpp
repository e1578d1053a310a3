#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "actrace/trace.hpp"

namespace actrace {

using TransitionMatrix = std::vector<std::vector<double>>;

// A synthetic code base: a sparse row-stochastic call-transition matrix
// plus a handful of activity modes (start-state distributions) it can run.
// A family may link a shared library; walks then spend lib_fraction of
// their activity dwells inside the library's own chain, so library
// activities recur verbatim across every program that links it.
struct SyntheticFamily {
    int family_id = 0;
    bool malicious = false;
    TransitionMatrix trans;
    std::vector<std::vector<double>> modes;
    TransitionMatrix lib_trans;  // empty when no library is linked
    std::vector<std::vector<double>> lib_modes;
    double lib_fraction = 0;

    bool has_library() const { return !lib_trans.empty(); }
};

// links `library`'s behavior into `family`
void attach_library(SyntheticFamily& family, const SyntheticFamily& library,
                    double fraction);

// One build of the family's code base: its matrix mixed with a seeded
// random stochastic matrix by weight epsilon (0 = identical, 1 = unrelated).
struct ProgramVariant {
    int family_id = 0;
    int variant_id = 0;
    double epsilon = 0;
    TransitionMatrix trans;
};

// low_region_weight biases the family's home states toward the lower half
// of the alphabet (benign-leaning call mix) or the upper half; 0.5 is
// uniform. successor_decay sets how fast per-row successor weights fall
// off: small values give tight, repetitive loops (automated tooling),
// larger ones more varied control flow. Both shape statistics a classifier
// can generalize from past known families.
SyntheticFamily make_family(int family_id, int alphabet_size, int n_modes,
                            bool malicious, std::uint64_t seed,
                            double low_region_weight = 0.5,
                            double successor_decay = 0.42);

// (1-w) * a + w * b, rows renormalized; models shared library behavior
TransitionMatrix blend_matrices(const TransitionMatrix& a,
                                const TransitionMatrix& b, double w);

ProgramVariant make_variant(const SyntheticFamily& family, int variant_id,
                            double epsilon, std::uint64_t seed);

struct WalkParams {
    double duration_s = 120;
    double calls_per_s = 150;
    double mode_dwell_s = 20;  // time between activity-mode switches
};

// Markov-chain walk of one variant on one endpoint: a single process
// cycling through the family's activity modes. Fully determined by seed.
std::vector<SyscallEvent> run_sample(const ProgramVariant& variant,
                                     const SyntheticFamily& family,
                                     const WalkParams& wp,
                                     const std::string& endpoint_id,
                                     std::int32_t pid, std::uint64_t seed,
                                     std::int64_t t0_us = 0);

struct FleetParams {
    int alphabet_size = 64;
    int families = 4;
    int variants_per_family = 3;
    int endpoints = 4;
    int procs_per_endpoint = 3;
    double malicious_family_fraction = 0.25;
    double variant_epsilon = 0.1;
    int modes_per_family = 3;
    WalkParams walk;
    std::uint64_t seed = 1;
};

struct Fleet {
    std::vector<SyntheticFamily> families;
    std::vector<ProgramVariant> variants;
    std::vector<SyscallEvent> events;  // ordered by ts within each endpoint
};

// Seeded synthetic fleet: every endpoint runs a mixture of variants drawn
// from its own substream of the master seed.
Fleet gen_fleet(const FleetParams& fp);

FleetParams fleet_params_from_json(const std::string& text);
std::string fleet_params_to_json(const FleetParams& fp);

// -- deployment arithmetic -----------------------------------------------------

struct ScalingInputs {
    double endpoints = 1e6;
    double clusters_per_endpoint_week = 3150;
    double heaps_A = 8.36;
    double heaps_alpha = 0.358;
    double fpr_per_activity = 1.3e-3;
    double infected_fraction = 0.01;
    double pair_spurious_rate = 3e-7;
};

struct ScalingProjection {
    double new_activities_week = 0;
    double fp_week = 0;
    double fn_week = 0;
};

// new activities/week from the growth law, expected false positives from
// the per-activity rate, expected false negatives from working-set
// collisions.
ScalingProjection project_scaling(const ScalingInputs& in);

// average upload rate of a sensor alternating collection and idling
double sensor_bandwidth(double payload_bytes_per_batch, double active_s = 5,
                        double idle_s = 10);

// probability that a program present r times in a corpus lands in both the
// training set and a random holdout (leading term; the O(1/n) remainder is
// dropped)
double contamination_probability(double r, double holdout_fraction = 0.1);

std::string scaling_to_json(const ScalingInputs& in, const ScalingProjection& out);

}  // namespace actrace
