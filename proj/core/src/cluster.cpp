#include "actrace/cluster.hpp"

#include <algorithm>
#include <cmath>

#include "actrace/util.hpp"

namespace actrace {

static std::uint64_t member_digest(const FeatureVector& fv) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double z : fv.zeta) {
        const auto q = static_cast<std::int64_t>(std::llround(z * 1e6));
        h = fnv1a64_u64(static_cast<std::uint64_t>(q), h);
    }
    for (const auto& [w, c] : fv.mu) {
        h = fnv1a64_u64(w, h);
        h = fnv1a64_u64(static_cast<std::uint64_t>(c), h);
    }
    return h;
}

std::string cluster_content_id(const std::vector<FeatureVector>& members) {
    std::vector<std::uint64_t> digests;
    digests.reserve(members.size());
    for (const auto& m : members) digests.push_back(member_digest(m));
    std::sort(digests.begin(), digests.end());
    std::uint64_t h = fnv1a64_u64(digests.size(), 0xcbf29ce484222325ULL);
    for (std::uint64_t d : digests) h = fnv1a64_u64(d, h);
    return hex16(h);
}

TightCluster make_tight_cluster(std::vector<FeatureVector> members) {
    TightCluster c;
    c.id = cluster_content_id(members);
    c.first_seen_us = members.empty() ? 0 : members.front().ts_us;
    for (const auto& m : members) {
        c.first_seen_us = std::min(c.first_seen_us, m.ts_us);
        c.endpoints.push_back(m.endpoint_id);
    }
    std::sort(c.endpoints.begin(), c.endpoints.end());
    c.endpoints.erase(std::unique(c.endpoints.begin(), c.endpoints.end()),
                      c.endpoints.end());
    c.members = std::move(members);
    c.observation_count = 1;
    return c;
}

std::map<WordKey, std::int64_t> pooled_mu(const TightCluster& c) {
    std::map<WordKey, std::int64_t> mu;
    for (const auto& m : c.members)
        for (const auto& [w, cnt] : m.mu) mu[w] += cnt;
    return mu;
}

std::vector<double> mean_zeta(const TightCluster& c) {
    std::vector<double> z(kZetaDim, 0.0);
    for (const auto& m : c.members)
        for (int i = 0; i < kZetaDim; ++i) z[i] += m.zeta[i];
    double norm2 = 0;
    for (double v : z) norm2 += v * v;
    if (norm2 > 0) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& v : z) v *= inv;
    }
    return z;
}

}  // namespace actrace
