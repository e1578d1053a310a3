#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "actrace/cluster.hpp"
#include "actrace/featurizer.hpp"

namespace actrace {

struct SimilarityParams {
    double theta_zeta = 250;  // scale of the zeta cosine term
    double theta_mu = 250;    // scale of the mu cosine term
    double theta_S = 90;      // feature-vector / tight-cluster match threshold
    double theta_white = 30;  // whitelisting threshold
    double theta_edge = 100;  // phylogeny mu-similarity threshold
    double theta_weak = 60;   // weak-family mu-similarity threshold
    int sample_pairs = 32;    // budget of the sampled cluster-similarity estimator

    double mu_count_cap = 1e6;     // extreme-value clamp on mu counts
    bool mu_sqrt_damping = false;  // alternative to raw counts

    void validate() const;
};

// -- feature-vector similarity (zeta cosine + mu cosine, scaled) ---------

using MuMap = std::map<WordKey, std::int64_t>;

// squared L2 norm of the (clamped, possibly damped) count bag
double mu_norm2(const MuMap& mu, const SimilarityParams& p);
double mu_dot(const MuMap& a, const MuMap& b, const SimilarityParams& p);
// cosine over the sparse count bags; 0 when either bag is empty. Computed
// as dot / sqrt(n2a * n2b) so a bag against itself is exactly 1.
double cos_mu(const MuMap& a, const MuMap& b, const SimilarityParams& p);
// dot of the stored unit zetas; 0 when either is the zero vector
double cos_zeta(const FeatureVector& a, const FeatureVector& b);

// theta_zeta * cos(zeta) + theta_mu * cos(mu). Throws when the vectors were
// built against different vocabulary versions.
double sim(const FeatureVector& a, const FeatureVector& b,
           const SimilarityParams& p);

// Chooses (theta_zeta, theta_mu) so that on the calibration corpus the two
// cosine terms contribute target_scale each on average (over the sampled
// pairs with a positive cosine).
std::pair<double, double> calibrate_thetas(std::span<const FeatureVector> corpus,
                                           double target_scale = 250,
                                           std::uint64_t seed = 1,
                                           int max_pairs = 20000);

// -- tight-cluster similarity ---------------------------------------------

enum class SimTcMode { Exact, Sampled };

// Average similarity over cross pairs of member vectors. Sampled mode
// averages sample_pairs uniform draws with replacement (unbiased), driven
// by the caller's seed.
double sim_tc(const TightCluster& a, const TightCluster& b,
              const SimilarityParams& p, SimTcMode mode = SimTcMode::Exact,
              std::uint64_t seed = 0);

enum class Verdict { Mal, Cln, Novel };

struct OriginDecision {
    Verdict verdict = Verdict::Novel;
    double s_mal = 0;  // best similarity against the malicious cover
    double s_cln = 0;  // best similarity against the benign cover
    std::string best_mal_id;
    std::string best_cln_id;
};

// Decision rule over the two covers: below theta_novel on both sides the
// cluster is novel; otherwise the larger side wins, ties conservatively
// resolved to cln.
OriginDecision decide_origin(const TightCluster& c,
                             std::span<const TightCluster> cover_mal,
                             std::span<const TightCluster> cover_cln,
                             const SimilarityParams& p, double theta_novel = -1);

// -- exact inverted index over mu words ----------------------------------

class MuIndex {
public:
    MuIndex() = default;

    static MuIndex build(const std::vector<const MuMap*>& owners,
                         const SimilarityParams& p);
    static MuIndex build(const std::vector<MuMap>& owners,
                         const SimilarityParams& p);

    struct Hit {
        int owner = 0;
        double score = 0;  // theta_mu * cos(query, owner)
    };

    // Exactly the owners a brute-force scan returns with
    // theta_mu * cos >= min_score; ascending owner id. For min_score <= 0
    // the scan degenerates to all owners.
    std::vector<Hit> query(const MuMap& q, double min_score) const;

    std::size_t owner_count() const { return norms2_.size(); }

private:
    struct Posting {
        int owner;
        double value;  // damped/clamped count
    };
    std::map<WordKey, std::vector<Posting>> postings_;
    std::vector<double> norms2_;
    SimilarityParams params_;
};

// -- cover files -----------------------------------------------------------

struct Cover {
    std::uint32_t version = 1;
    SimilarityParams params;
    std::vector<TightCluster> mal;
    std::vector<TightCluster> cln;
};

std::string cover_to_json(const Cover& c);
Cover cover_from_json(const std::string& text);
void save_cover(const std::string& path, const Cover& c);
Cover load_cover(const std::string& path);

}  // namespace actrace
