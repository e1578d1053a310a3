#include "actrace/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "actrace/util.hpp"

namespace actrace {

using nlohmann::json;

namespace {

// +1/-1 from a seeded hash of (dimension, 2-gram)
double sign_of(std::uint64_t seed, int dim, std::uint32_t gram) {
    std::uint64_t h = mix64(seed ^ (static_cast<std::uint64_t>(dim) << 32) ^ gram);
    return (h & 1) ? 1.0 : -1.0;
}

}  // namespace

static DerivedFeatures derive_impl(const std::vector<double>& zeta,
                                   const std::map<WordKey, std::int64_t>& mu,
                                   const DeriveParams& p) {
    DerivedFeatures out;
    out.values.assign(p.dim(), 0.0);
    std::copy(zeta.begin(), zeta.end(), out.values.begin());

    if (mu.empty()) {
        out.degenerate = true;
        return out;
    }

    // signed random projection of the 2-grams inside the mu words
    std::map<std::uint32_t, std::int64_t> grams;
    for (const auto& [w, c] : mu) {
        const Word ids = unpack_word(w);
        for (int i = 0; i + 1 < kWordLen; ++i) {
            const std::uint32_t g =
                static_cast<std::uint32_t>(ids[i]) * p.alphabet_size + ids[i + 1];
            grams[g] += c;
        }
    }
    std::vector<double> proj(p.d_proj, 0.0);
    for (const auto& [g, c] : grams) {
        const auto cv = static_cast<double>(c);
        for (int d = 0; d < p.d_proj; ++d)
            proj[d] += sign_of(p.projection_seed, d, g) * cv;
    }
    double norm2 = 0;
    for (double v : proj) norm2 += v * v;
    if (norm2 > 0) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& v : proj) v *= inv;
    }
    std::copy(proj.begin(), proj.end(), out.values.begin() + kZetaDim);

    // partition function over constant-size boxes of the rank-sorted counts
    std::vector<std::pair<std::int64_t, WordKey>> ranked;
    ranked.reserve(mu.size());
    for (const auto& [w, c] : mu) ranked.emplace_back(c, w);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    double total = 0;
    for (const auto& [c, w] : ranked) total += static_cast<double>(c);
    std::vector<double> box_probs;
    for (std::size_t i = 0; i < ranked.size(); i += p.box_size) {
        double s = 0;
        for (std::size_t j = i; j < std::min(ranked.size(), i + p.box_size); ++j)
            s += static_cast<double>(ranked[j].first);
        box_probs.push_back(s / total);
    }
    const std::size_t stats_base = static_cast<std::size_t>(kZetaDim) + p.d_proj;
    std::size_t slot = stats_base;
    bool entropy_done = false;
    auto put_entropy = [&] {
        double h = 0;
        for (double pb : box_probs)
            if (pb > 0) h -= pb * std::log(pb);
        out.values[slot++] = h;
        entropy_done = true;
    };
    for (double q : p.exponents) {
        if (!entropy_done && q > 1.0) put_entropy();  // the q = 1 slot
        double z = 0;
        for (double pb : box_probs) z += std::pow(pb, q);
        out.values[slot++] = std::log(z);
    }
    if (!entropy_done) put_entropy();
    return out;
}

DerivedFeatures derive_features(const FeatureVector& fv, const DeriveParams& p) {
    return derive_impl(fv.zeta, fv.mu, p);
}

DerivedFeatures derive_features(const TightCluster& c, const DeriveParams& p) {
    return derive_impl(mean_zeta(c), pooled_mu(c), p);
}

namespace {

// standardize features for training, then fold the transform into the
// first layer so scoring takes raw inputs
Net fit_standardized(const LabeledSet& train, NetConfig cfg) {
    const std::size_t dim = train.x.front().size();
    std::vector<double> mean(dim, 0.0), sdev(dim, 0.0);
    for (const auto& x : train.x)
        for (std::size_t i = 0; i < dim; ++i) mean[i] += x[i];
    for (auto& m : mean) m /= static_cast<double>(train.size());
    for (const auto& x : train.x)
        for (std::size_t i = 0; i < dim; ++i) {
            const double d = x[i] - mean[i];
            sdev[i] += d * d;
        }
    for (auto& s : sdev)
        s = std::max(std::sqrt(s / static_cast<double>(train.size())), 1e-6);

    std::vector<std::vector<double>> xs = train.x;
    for (auto& x : xs)
        for (std::size_t i = 0; i < dim; ++i) x[i] = (x[i] - mean[i]) / sdev[i];

    Net net(cfg);
    net.fit(xs, train.y);
    net.fold_input_affine(mean, sdev);
    return net;
}

}  // namespace

Net train_two_class(const LabeledSet& train, NetConfig cfg) {
    if (train.size() == 0) throw std::invalid_argument("empty training set");
    bool has0 = false, has1 = false;
    for (int y : train.y) {
        if (y == 0) has0 = true;
        else if (y == 1) has1 = true;
        else throw std::invalid_argument("two-class labels must be 0 or 1");
    }
    if (!has0 || !has1)
        throw std::invalid_argument("two-class training needs both labels present");
    cfg.inputs = static_cast<int>(train.x.front().size());
    cfg.classes = 2;
    return fit_standardized(train, cfg);
}

LabeledSet bootstrap_labels(const Net& net2, const LabeledSet& train) {
    LabeledSet out;
    out.x = train.x;
    out.y.resize(train.y.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (train.y[i] == 0) {
            out.y[i] = kClassCln;
        } else {
            const int pred = net2.predict(train.x[i]);
            out.y[i] = pred == 1 ? kClassMal : kClassLib;
        }
    }
    return out;
}

Net train_three_class(const LabeledSet& bootstrapped, NetConfig cfg) {
    if (bootstrapped.size() == 0) throw std::invalid_argument("empty training set");
    cfg.inputs = static_cast<int>(bootstrapped.x.front().size());
    cfg.classes = 3;
    return fit_standardized(bootstrapped, cfg);
}

OddsScore score_probs(std::span<const double> softmax, const OddsParams& p) {
    if (softmax.size() != 3)
        throw std::invalid_argument("three-class softmax expected");
    const double theta = p.theta_cln_from_lib;
    const double num = softmax[kClassMal] + (1 - theta) * softmax[kClassLib];
    const double den = softmax[kClassCln] + theta * softmax[kClassLib];
    OddsScore s;
    s.odds = num / std::max(den, p.epsilon);
    s.mal = s.odds > p.threshold;
    return s;
}

OddsScore score(const Net& net3, std::span<const double> x, const OddsParams& p) {
    return score_probs(net3.forward(x), p);
}

Metrics compute_metrics(const ConfusionMatrix& cm) {
    const double tp = static_cast<double>(cm.tp), fp = static_cast<double>(cm.fp);
    const double fn = static_cast<double>(cm.fn), tn = static_cast<double>(cm.tn);
    if (tp + fp + fn + tn <= 0)
        throw std::invalid_argument("empty confusion matrix");
    Metrics m;
    if (tp + fp > 0) m.precision = tp / (tp + fp);
    if (tp + fn > 0) m.recall = tp / (tp + fn);
    if (m.precision && m.recall && *m.precision + *m.recall > 0)
        m.f1 = 2 * *m.precision * *m.recall / (*m.precision + *m.recall);
    else if (m.precision && m.recall)
        m.f1 = 0.0;
    if (fp + tn > 0) m.fpr = fp / (fp + tn);
    if (fn + tp > 0) m.fnr = fn / (fn + tp);
    if (m.recall && fp + tn > 0) m.youden = *m.recall + tn / (tn + fp) - 1;
    m.error = (fp + fn) / (tp + fp + fn + tn);
    return m;
}

static json opt_to_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

std::string metrics_to_json(const ConfusionMatrix& cm, const Metrics& m) {
    return json{{"tp", cm.tp},
                {"fp", cm.fp},
                {"fn", cm.fn},
                {"tn", cm.tn},
                {"precision", opt_to_json(m.precision)},
                {"recall", opt_to_json(m.recall)},
                {"F1", opt_to_json(m.f1)},
                {"FPR", opt_to_json(m.fpr)},
                {"FNR", opt_to_json(m.fnr)},
                {"youden", opt_to_json(m.youden)},
                {"error_rate", opt_to_json(m.error)}}
        .dump();
}

std::string model_to_json(const Model& m) {
    return json{{"version", m.version},
                {"vocab_version", m.vocab_version},
                {"derive",
                 {{"alphabet_size", m.derive.alphabet_size},
                  {"d_proj", m.derive.d_proj},
                  {"box_size", m.derive.box_size},
                  {"exponents", m.derive.exponents},
                  {"projection_seed", m.derive.projection_seed}}},
                {"odds",
                 {{"theta_cln_from_lib", m.odds.theta_cln_from_lib},
                  {"threshold", m.odds.threshold},
                  {"epsilon", m.odds.epsilon}}},
                {"net", json::parse(m.net3.to_json())}}
        .dump();
}

Model model_from_json(const std::string& text) {
    json j = json::parse(text);
    Model m;
    m.version = j.at("version").get<std::uint32_t>();
    m.vocab_version = j.at("vocab_version").get<std::uint32_t>();
    const auto& jd = j.at("derive");
    m.derive.alphabet_size = jd.at("alphabet_size").get<int>();
    m.derive.d_proj = jd.at("d_proj").get<int>();
    m.derive.box_size = jd.at("box_size").get<int>();
    m.derive.exponents = jd.at("exponents").get<std::vector<double>>();
    m.derive.projection_seed = jd.at("projection_seed").get<std::uint64_t>();
    const auto& jo = j.at("odds");
    m.odds.theta_cln_from_lib = jo.at("theta_cln_from_lib").get<double>();
    m.odds.threshold = jo.at("threshold").get<double>();
    m.odds.epsilon = jo.at("epsilon").get<double>();
    m.net3 = Net::from_json(j.at("net").dump());
    return m;
}

void save_model(const std::string& path, const Model& m) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << model_to_json(m) << '\n';
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_json(ss.str());
}

}  // namespace actrace
