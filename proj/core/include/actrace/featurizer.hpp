#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "actrace/trace.hpp"
#include "actrace/util.hpp"

namespace actrace {

// Dimension of the dense frequent-word part of a feature vector.
inline constexpr int kZetaDim = 141;

struct ExpRankFit {
    double alpha = 0;     // decay rate of h(r) ~ e^{-alpha r}
    double residual = 0;  // sum of squared log-residuals
    bool flat = false;    // set when the fit degenerates to a constant
};

// Least-squares slope of ln(count) against rank, negated. Counts must be
// positive and are taken in the given (descending) order.
ExpRankFit fit_exponential_rank(std::span<const double> counts);

struct Vocabulary {
    std::uint32_t version = 1;
    int alphabet_size = 0;
    std::vector<WordKey> ranked_words;  // descending frequency, key breaks ties
    double alpha = 0;
    bool alpha_flat = false;

    // word -> position in the zeta basis, for the top kZetaDim words only
    const std::unordered_map<WordKey, int>& zeta_index() const;
    std::span<const WordKey> zeta_words() const {
        return {ranked_words.data(), static_cast<std::size_t>(kZetaDim)};
    }

private:
    mutable std::unordered_map<WordKey, int> zeta_index_;
};

// Ranks the corpus words by frequency (ties by packed key ascending) and
// fits the exponential rank law. Throws if fewer than kZetaDim distinct
// words are present, naming the deficit.
Vocabulary build_vocabulary(const std::vector<std::vector<WordKey>>& corpus,
                            int alphabet_size, std::uint32_t version = 1);
// streaming variant over pre-accumulated corpus counts
Vocabulary build_vocabulary_from_counts(
    const std::map<WordKey, std::int64_t>& counts, int alphabet_size,
    std::uint32_t version = 1);

// Per-process summary of one batch: dense zeta over the frequent-word
// vocabulary (unit L2 norm or all-zero) plus the sparse bag of counts of
// everything else.
struct FeatureVector {
    std::string endpoint_id;
    std::int32_t pid = 0;
    std::string process_name;
    std::int64_t ts_us = 0;
    std::vector<double> zeta;           // kZetaDim entries
    std::map<WordKey, std::int64_t> mu; // non-zeta words only, counts >= 1
    std::uint32_t vocab_version = 1;

    bool zeta_zero() const;
};

// Core transform: per pid, union the words of all its threads, count zeta
// words into a normalized histogram and everything else into mu. Pids
// without words produce no vector.
std::vector<FeatureVector> featurize_words(
    const std::map<ThreadId, std::vector<WordKey>>& batch_words,
    const Vocabulary& vocab, const std::string& endpoint_id,
    std::int64_t ts_us,
    const std::map<std::int32_t, std::string>& process_names = {});

std::vector<FeatureVector> featurize(const Batch& batch, const Vocabulary& vocab);

// -- wire forms ----------------------------------------------------------

std::string vocabulary_to_json(const Vocabulary& v);
Vocabulary vocabulary_from_json(const std::string& text);
void save_vocabulary(const std::string& path, const Vocabulary& v);
Vocabulary load_vocabulary(const std::string& path);

// {ep, pid, pn, ts, zeta: [141 floats], mu: [[packed_word, count], ...]}
std::string feature_vector_to_json(const FeatureVector& fv);
FeatureVector feature_vector_from_json(const std::string& text,
                                       std::uint32_t vocab_version = 1);

}  // namespace actrace
