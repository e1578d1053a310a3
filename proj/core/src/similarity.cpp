#include "actrace/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "actrace/rng.hpp"
#include "json_internal.hpp"

namespace actrace {

using nlohmann::json;

void SimilarityParams::validate() const {
    if (theta_zeta <= 0 || theta_mu <= 0)
        throw std::invalid_argument("theta_zeta and theta_mu must be positive");
    if (theta_weak >= theta_edge)
        throw std::invalid_argument("theta_weak must be below theta_edge");
    if (sample_pairs <= 0)
        throw std::invalid_argument("sample_pairs must be positive");
    if (mu_count_cap <= 0)
        throw std::invalid_argument("mu_count_cap must be positive");
}

static double mu_value(std::int64_t count, const SimilarityParams& p) {
    double v = std::min(static_cast<double>(count), p.mu_count_cap);
    if (p.mu_sqrt_damping) v = std::sqrt(v);
    return v;
}

double mu_norm2(const MuMap& mu, const SimilarityParams& p) {
    double s = 0;
    for (const auto& [w, c] : mu) {
        const double v = mu_value(c, p);
        s += v * v;
    }
    return s;
}

double mu_dot(const MuMap& a, const MuMap& b, const SimilarityParams& p) {
    double s = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (ia->first < ib->first) {
            ++ia;
        } else if (ib->first < ia->first) {
            ++ib;
        } else {
            s += mu_value(ia->second, p) * mu_value(ib->second, p);
            ++ia;
            ++ib;
        }
    }
    return s;
}

double cos_mu(const MuMap& a, const MuMap& b, const SimilarityParams& p) {
    if (a.empty() || b.empty()) return 0;
    const double n2a = mu_norm2(a, p);
    const double n2b = mu_norm2(b, p);
    if (n2a == 0 || n2b == 0) return 0;
    return mu_dot(a, b, p) / std::sqrt(n2a * n2b);
}

double cos_zeta(const FeatureVector& a, const FeatureVector& b) {
    double s = 0;
    for (int i = 0; i < kZetaDim; ++i) s += a.zeta[i] * b.zeta[i];
    return s;
}

double sim(const FeatureVector& a, const FeatureVector& b,
           const SimilarityParams& p) {
    if (a.vocab_version != b.vocab_version)
        throw std::invalid_argument(
            "feature vectors from different vocabularies: " +
            std::to_string(a.vocab_version) + " vs " +
            std::to_string(b.vocab_version));
    return p.theta_zeta * cos_zeta(a, b) + p.theta_mu * cos_mu(a.mu, b.mu, p);
}

std::pair<double, double> calibrate_thetas(std::span<const FeatureVector> corpus,
                                           double target_scale,
                                           std::uint64_t seed, int max_pairs) {
    const std::size_t n = corpus.size();
    if (n < 100)
        throw std::invalid_argument("calibration needs at least 100 vectors, got " +
                                    std::to_string(n));
    SimilarityParams unit;  // cosines only

    double zeta_sum = 0, mu_sum = 0;
    std::size_t zeta_cnt = 0, mu_cnt = 0;
    auto feed = [&](std::size_t i, std::size_t j) {
        const double cz = cos_zeta(corpus[i], corpus[j]);
        if (cz > 0) {
            zeta_sum += cz;
            ++zeta_cnt;
        }
        const double cm = cos_mu(corpus[i].mu, corpus[j].mu, unit);
        if (cm > 0) {
            mu_sum += cm;
            ++mu_cnt;
        }
    };

    const std::size_t all_pairs = n * (n - 1) / 2;
    if (all_pairs <= static_cast<std::size_t>(max_pairs)) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) feed(i, j);
    } else {
        Rng rng(seed);
        for (int k = 0; k < max_pairs; ++k) {
            const auto i = rng.below(n);
            auto j = rng.below(n - 1);
            if (j >= i) ++j;
            feed(i, j);
        }
    }

    if (zeta_cnt == 0 || mu_cnt == 0)
        throw std::runtime_error(
            "calibration corpus has no positive zeta or mu cosines; "
            "use a richer corpus");
    return {target_scale / (zeta_sum / zeta_cnt),
            target_scale / (mu_sum / mu_cnt)};
}

double sim_tc(const TightCluster& a, const TightCluster& b,
              const SimilarityParams& p, SimTcMode mode, std::uint64_t seed) {
    if (a.members.empty() || b.members.empty())
        throw std::invalid_argument("sim_tc over an empty cluster");
    if (mode == SimTcMode::Exact) {
        double s = 0;
        for (const auto& pa : a.members)
            for (const auto& pb : b.members) s += sim(pa, pb, p);
        return s / (static_cast<double>(a.members.size()) *
                    static_cast<double>(b.members.size()));
    }
    Rng rng(seed);
    double s = 0;
    for (int k = 0; k < p.sample_pairs; ++k) {
        const auto& pa = a.members[rng.below(a.members.size())];
        const auto& pb = b.members[rng.below(b.members.size())];
        s += sim(pa, pb, p);
    }
    return s / p.sample_pairs;
}

OriginDecision decide_origin(const TightCluster& c,
                             std::span<const TightCluster> cover_mal,
                             std::span<const TightCluster> cover_cln,
                             const SimilarityParams& p, double theta_novel) {
    if (theta_novel < 0) theta_novel = p.theta_S;
    OriginDecision d;
    for (const auto& b : cover_mal) {
        const double s = sim_tc(c, b, p, SimTcMode::Exact);
        if (s > d.s_mal || (s == d.s_mal && !d.best_mal_id.empty() &&
                            b.id < d.best_mal_id)) {
            d.s_mal = s;
            d.best_mal_id = b.id;
        }
    }
    for (const auto& g : cover_cln) {
        const double s = sim_tc(c, g, p, SimTcMode::Exact);
        if (s > d.s_cln || (s == d.s_cln && !d.best_cln_id.empty() &&
                            g.id < d.best_cln_id)) {
            d.s_cln = s;
            d.best_cln_id = g.id;
        }
    }
    if (cover_mal.empty() && cover_cln.empty()) {
        d.verdict = Verdict::Novel;
        return d;
    }
    if (std::max(d.s_mal, d.s_cln) < theta_novel) {
        d.verdict = Verdict::Novel;
    } else {
        d.verdict = d.s_mal > d.s_cln ? Verdict::Mal : Verdict::Cln;
    }
    return d;
}

MuIndex MuIndex::build(const std::vector<const MuMap*>& owners,
                       const SimilarityParams& p) {
    MuIndex ix;
    ix.params_ = p;
    ix.norms2_.resize(owners.size(), 0.0);
    for (std::size_t o = 0; o < owners.size(); ++o) {
        ix.norms2_[o] = mu_norm2(*owners[o], p);
        for (const auto& [w, c] : *owners[o])
            ix.postings_[w].push_back({static_cast<int>(o), mu_value(c, p)});
    }
    return ix;
}

MuIndex MuIndex::build(const std::vector<MuMap>& owners,
                       const SimilarityParams& p) {
    std::vector<const MuMap*> ptrs;
    ptrs.reserve(owners.size());
    for (const auto& m : owners) ptrs.push_back(&m);
    return build(ptrs, p);
}

std::vector<MuIndex::Hit> MuIndex::query(const MuMap& q, double min_score) const {
    std::vector<Hit> hits;
    const double nq2 = mu_norm2(q, params_);

    if (min_score <= 0) {
        // every owner qualifies; compute scores without pruning
        for (int o = 0; o < static_cast<int>(norms2_.size()); ++o)
            hits.push_back({o, 0});
        if (nq2 > 0) {
            std::vector<double> dot(norms2_.size(), 0.0);
            for (const auto& [w, c] : q) {
                auto it = postings_.find(w);
                if (it == postings_.end()) continue;
                const double qv = mu_value(c, params_);
                for (const auto& post : it->second) dot[post.owner] += qv * post.value;
            }
            for (auto& h : hits)
                if (norms2_[h.owner] > 0)
                    h.score = params_.theta_mu *
                              (dot[h.owner] / std::sqrt(nq2 * norms2_[h.owner]));
        }
        return hits;
    }

    if (q.empty() || nq2 == 0) return hits;

    // accumulate dot products over the postings of shared words only
    std::vector<double> dot(norms2_.size(), 0.0);
    std::vector<int> touched;
    std::vector<char> seen(norms2_.size(), 0);
    for (const auto& [w, c] : q) {
        auto it = postings_.find(w);
        if (it == postings_.end()) continue;
        const double qv = mu_value(c, params_);
        for (const auto& post : it->second) {
            dot[post.owner] += qv * post.value;
            if (!seen[post.owner]) {
                seen[post.owner] = 1;
                touched.push_back(post.owner);
            }
        }
    }
    std::sort(touched.begin(), touched.end());
    for (int o : touched) {
        if (norms2_[o] == 0) continue;
        const double score =
            params_.theta_mu * (dot[o] / std::sqrt(nq2 * norms2_[o]));
        if (score >= min_score) hits.push_back({o, score});
    }
    return hits;
}

// -- cover io ---------------------------------------------------------------

json sim_params_to_json_obj(const SimilarityParams& p) {
    return json{{"theta_zeta", p.theta_zeta},   {"theta_mu", p.theta_mu},
                {"theta_S", p.theta_S},         {"theta_white", p.theta_white},
                {"theta_edge", p.theta_edge},   {"theta_weak", p.theta_weak},
                {"sample_pairs", p.sample_pairs},
                {"mu_count_cap", p.mu_count_cap},
                {"mu_sqrt_damping", p.mu_sqrt_damping}};
}

SimilarityParams sim_params_from_json_obj(const json& j) {
    SimilarityParams p;
    p.theta_zeta = j.value("theta_zeta", p.theta_zeta);
    p.theta_mu = j.value("theta_mu", p.theta_mu);
    p.theta_S = j.value("theta_S", p.theta_S);
    p.theta_white = j.value("theta_white", p.theta_white);
    p.theta_edge = j.value("theta_edge", p.theta_edge);
    p.theta_weak = j.value("theta_weak", p.theta_weak);
    p.sample_pairs = j.value("sample_pairs", p.sample_pairs);
    p.mu_count_cap = j.value("mu_count_cap", p.mu_count_cap);
    p.mu_sqrt_damping = j.value("mu_sqrt_damping", p.mu_sqrt_damping);
    return p;
}

json cluster_to_json_obj(const TightCluster& c) {
    json vectors = json::array();
    for (const auto& m : c.members) vectors.push_back(feature_vector_to_json_obj(m));
    return json{{"id", c.id},
                {"first_seen_us", c.first_seen_us},
                {"observation_count", c.observation_count},
                {"endpoints", c.endpoints},
                {"vectors", std::move(vectors)}};
}

TightCluster cluster_from_json_obj(const json& j, std::uint32_t vocab_version) {
    TightCluster c;
    c.id = j.at("id").get<std::string>();
    c.first_seen_us = j.at("first_seen_us").get<std::int64_t>();
    c.observation_count = j.value("observation_count", std::int64_t{1});
    if (j.contains("endpoints"))
        c.endpoints = j["endpoints"].get<std::vector<std::string>>();
    for (const auto& jv : j.at("vectors"))
        c.members.push_back(feature_vector_from_json_obj(jv, vocab_version));
    return c;
}

std::string cover_to_json(const Cover& c) {
    json clusters = json::array();
    for (const auto& m : c.mal) {
        json jc = cluster_to_json_obj(m);
        jc["label"] = "mal";
        clusters.push_back(std::move(jc));
    }
    for (const auto& g : c.cln) {
        json jc = cluster_to_json_obj(g);
        jc["label"] = "cln";
        clusters.push_back(std::move(jc));
    }
    return json{{"version", c.version},
                {"params", sim_params_to_json_obj(c.params)},
                {"clusters", std::move(clusters)}}
        .dump();
}

Cover cover_from_json(const std::string& text) {
    json j = json::parse(text);
    Cover c;
    c.version = j.at("version").get<std::uint32_t>();
    c.params = sim_params_from_json_obj(j.at("params"));
    for (const auto& jc : j.at("clusters")) {
        const auto label = jc.at("label").get<std::string>();
        auto cluster = cluster_from_json_obj(jc, c.version);
        if (label == "mal")
            c.mal.push_back(std::move(cluster));
        else if (label == "cln")
            c.cln.push_back(std::move(cluster));
        else
            throw std::runtime_error("unknown cover label: " + label);
    }
    return c;
}

void save_cover(const std::string& path, const Cover& c) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << cover_to_json(c) << '\n';
}

Cover load_cover(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open cover file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return cover_from_json(ss.str());
}

}  // namespace actrace
