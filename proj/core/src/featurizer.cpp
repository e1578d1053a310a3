#include "actrace/featurizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace actrace {

using nlohmann::json;

ExpRankFit fit_exponential_rank(std::span<const double> counts) {
    if (counts.size() < 5)
        throw std::invalid_argument("rank fit needs at least 5 counts, got " +
                                    std::to_string(counts.size()));
    const auto n = static_cast<double>(counts.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t r = 0; r < counts.size(); ++r) {
        if (counts[r] <= 0)
            throw std::invalid_argument("non-positive count at rank " +
                                        std::to_string(r));
        const double x = static_cast<double>(r);
        const double y = std::log(counts[r]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = n * sxx - sx * sx;
    const double slope = (n * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / n;

    ExpRankFit fit;
    fit.alpha = -slope;
    for (std::size_t r = 0; r < counts.size(); ++r) {
        const double e = std::log(counts[r]) - (intercept + slope * r);
        fit.residual += e * e;
    }
    if (std::abs(fit.alpha) < 1e-12) {
        fit.alpha = 0;
        fit.flat = true;
    }
    return fit;
}

const std::unordered_map<WordKey, int>& Vocabulary::zeta_index() const {
    if (zeta_index_.empty() && !ranked_words.empty()) {
        const int n = std::min<int>(kZetaDim, static_cast<int>(ranked_words.size()));
        zeta_index_.reserve(n);
        for (int i = 0; i < n; ++i) zeta_index_.emplace(ranked_words[i], i);
    }
    return zeta_index_;
}

Vocabulary build_vocabulary(const std::vector<std::vector<WordKey>>& corpus,
                            int alphabet_size, std::uint32_t version) {
    if (corpus.empty()) throw std::invalid_argument("empty word corpus");

    std::map<WordKey, std::int64_t> counts;
    for (const auto& stream : corpus)
        for (WordKey w : stream) ++counts[w];
    return build_vocabulary_from_counts(counts, alphabet_size, version);
}

Vocabulary build_vocabulary_from_counts(
    const std::map<WordKey, std::int64_t>& counts, int alphabet_size,
    std::uint32_t version) {
    if (counts.size() < static_cast<std::size_t>(kZetaDim)) {
        throw std::runtime_error(
            "vocabulary needs " + std::to_string(kZetaDim) +
            " distinct words, corpus has " + std::to_string(counts.size()) +
            " (short by " + std::to_string(kZetaDim - counts.size()) + ")");
    }

    std::vector<std::pair<WordKey, std::int64_t>> ranked(counts.begin(),
                                                         counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    v.version = version;
    v.alphabet_size = alphabet_size;
    v.ranked_words.reserve(ranked.size());
    std::vector<double> freq;
    freq.reserve(ranked.size());
    for (const auto& [w, c] : ranked) {
        v.ranked_words.push_back(w);
        freq.push_back(static_cast<double>(c));
    }
    const ExpRankFit fit = fit_exponential_rank(freq);
    v.alpha = fit.alpha;
    v.alpha_flat = fit.flat;
    return v;
}

bool FeatureVector::zeta_zero() const {
    for (double z : zeta)
        if (z != 0) return false;
    return true;
}

std::vector<FeatureVector> featurize_words(
    const std::map<ThreadId, std::vector<WordKey>>& batch_words,
    const Vocabulary& vocab, const std::string& endpoint_id,
    std::int64_t ts_us, const std::map<std::int32_t, std::string>& process_names) {
    const auto& zidx = vocab.zeta_index();

    // union words per pid across its threads
    std::map<std::int32_t, std::map<WordKey, std::int64_t>> per_pid;
    for (const auto& [tidk, words] : batch_words)
        for (WordKey w : words) ++per_pid[tidk.pid][w];

    std::vector<FeatureVector> out;
    out.reserve(per_pid.size());
    for (const auto& [pid, wc] : per_pid) {
        if (wc.empty()) continue;
        FeatureVector fv;
        fv.endpoint_id = endpoint_id;
        fv.pid = pid;
        fv.ts_us = ts_us;
        fv.vocab_version = vocab.version;
        if (auto it = process_names.find(pid); it != process_names.end())
            fv.process_name = it->second;
        fv.zeta.assign(kZetaDim, 0.0);
        double norm2 = 0;
        for (const auto& [w, c] : wc) {
            if (auto it = zidx.find(w); it != zidx.end()) {
                fv.zeta[it->second] = static_cast<double>(c);
                norm2 += static_cast<double>(c) * static_cast<double>(c);
            } else {
                fv.mu.emplace(w, c);
            }
        }
        if (norm2 > 0) {
            const double inv = 1.0 / std::sqrt(norm2);
            for (double& z : fv.zeta) z *= inv;
        }
        out.push_back(std::move(fv));
    }
    return out;
}

std::vector<FeatureVector> featurize(const Batch& batch, const Vocabulary& vocab) {
    std::map<std::int32_t, std::string> names;
    for (const auto& ev : batch.events)
        if (!ev.process_name.empty()) names.emplace(ev.pid, ev.process_name);
    return featurize_words(extract_words(batch), vocab, batch.endpoint_id,
                           batch.t_start_us, names);
}

std::string vocabulary_to_json(const Vocabulary& v) {
    json j{{"version", v.version},
           {"alphabet_size", v.alphabet_size},
           {"ranked_words", v.ranked_words},
           {"alpha", v.alpha}};
    if (v.alpha_flat) j["alpha_flat"] = true;
    return j.dump();
}

Vocabulary vocabulary_from_json(const std::string& text) {
    json j = json::parse(text);
    Vocabulary v;
    v.version = j.at("version").get<std::uint32_t>();
    v.alphabet_size = j.at("alphabet_size").get<int>();
    v.ranked_words = j.at("ranked_words").get<std::vector<WordKey>>();
    v.alpha = j.at("alpha").get<double>();
    v.alpha_flat = j.value("alpha_flat", false);
    if (v.ranked_words.size() < static_cast<std::size_t>(kZetaDim))
        throw std::runtime_error("vocabulary file holds fewer than " +
                                 std::to_string(kZetaDim) + " words");
    return v;
}

void save_vocabulary(const std::string& path, const Vocabulary& v) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << vocabulary_to_json(v) << '\n';
}

Vocabulary load_vocabulary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return vocabulary_from_json(ss.str());
}

json feature_vector_to_json_obj(const FeatureVector& fv) {
    json mu = json::array();
    for (const auto& [w, c] : fv.mu) mu.push_back(json::array({w, c}));
    return json{{"ep", fv.endpoint_id}, {"pid", fv.pid}, {"pn", fv.process_name},
                {"ts", fv.ts_us},       {"zeta", fv.zeta}, {"mu", std::move(mu)}};
}

FeatureVector feature_vector_from_json_obj(const json& j,
                                           std::uint32_t vocab_version) {
    FeatureVector fv;
    fv.endpoint_id = j.at("ep").get<std::string>();
    fv.pid = j.at("pid").get<std::int32_t>();
    fv.process_name = j.value("pn", std::string{});
    fv.ts_us = j.at("ts").get<std::int64_t>();
    fv.zeta = j.at("zeta").get<std::vector<double>>();
    if (fv.zeta.size() != kZetaDim)
        throw std::runtime_error("zeta must have " + std::to_string(kZetaDim) +
                                 " entries");
    for (const auto& e : j.at("mu")) {
        const auto w = e.at(0).get<WordKey>();
        const auto c = e.at(1).get<std::int64_t>();
        if (c < 1) throw std::runtime_error("mu count below 1");
        fv.mu.emplace(w, c);
    }
    fv.vocab_version = vocab_version;
    return fv;
}

std::string feature_vector_to_json(const FeatureVector& fv) {
    return feature_vector_to_json_obj(fv).dump();
}

FeatureVector feature_vector_from_json(const std::string& text,
                                       std::uint32_t vocab_version) {
    return feature_vector_from_json_obj(json::parse(text), vocab_version);
}

}  // namespace actrace
