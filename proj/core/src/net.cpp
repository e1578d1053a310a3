#include "actrace/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "actrace/rng.hpp"

namespace actrace {

using nlohmann::json;

Net::Net(const NetConfig& cfg) : cfg_(cfg) {
    if (cfg.inputs <= 0) throw std::invalid_argument("net needs a positive input width");
    if (cfg.classes < 2) throw std::invalid_argument("net needs at least 2 classes");
    Rng rng(cfg.seed);
    int prev = cfg.inputs;
    std::vector<int> dims = cfg.hidden;
    dims.push_back(cfg.classes);
    for (int d : dims) {
        Layer l;
        l.in = prev;
        l.out = d;
        l.w.resize(static_cast<std::size_t>(d) * prev);
        l.b.assign(d, 0.0);
        const double scale = std::sqrt(2.0 / prev);  // He init for ReLU
        for (auto& w : l.w) w = scale * rng.normal();
        layers_.push_back(std::move(l));
        prev = d;
    }
    shuffle_state_ = mix64(cfg.seed ^ 0x7ea1);
}

Net::Tape Net::forward_tape(std::span<const double> x) const {
    Tape t;
    t.activations.reserve(layers_.size());
    t.pre.reserve(layers_.size());
    std::vector<double> a(x.begin(), x.end());
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const Layer& l = layers_[li];
        t.activations.push_back(a);
        std::vector<double> z(l.out);
        for (int o = 0; o < l.out; ++o) {
            double s = l.b[o];
            const double* row = &l.w[static_cast<std::size_t>(o) * l.in];
            for (int i = 0; i < l.in; ++i) s += row[i] * a[i];
            z[o] = s;
        }
        t.pre.push_back(z);
        if (li + 1 < layers_.size()) {
            for (auto& v : z) v = std::max(0.0, v);
            a = std::move(z);
        } else {
            // softmax
            double mx = z[0];
            for (double v : z) mx = std::max(mx, v);
            double sum = 0;
            for (auto& v : z) {
                v = std::exp(v - mx);
                sum += v;
            }
            for (auto& v : z) v /= sum;
            t.probs = std::move(z);
        }
    }
    return t;
}

std::vector<double> Net::forward(std::span<const double> x) const {
    return forward_tape(x).probs;
}

int Net::predict(std::span<const double> x) const {
    const auto p = forward(x);
    return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

double Net::loss(std::span<const double> x, int label) const {
    const auto p = forward(x);
    return -std::log(std::max(p[label], 1e-300));
}

void Net::backward(const Tape& t, int label, std::vector<Layer>& grads) const {
    // delta at the output: softmax + cross-entropy
    std::vector<double> delta = t.probs;
    delta[label] -= 1.0;
    for (int li = static_cast<int>(layers_.size()) - 1; li >= 0; --li) {
        const Layer& l = layers_[li];
        Layer& g = grads[li];
        const auto& a = t.activations[li];
        for (int o = 0; o < l.out; ++o) {
            g.b[o] += delta[o];
            double* grow = &g.w[static_cast<std::size_t>(o) * l.in];
            const double d = delta[o];
            for (int i = 0; i < l.in; ++i) grow[i] += d * a[i];
        }
        if (li == 0) break;
        std::vector<double> prev_delta(l.in, 0.0);
        for (int o = 0; o < l.out; ++o) {
            const double d = delta[o];
            const double* row = &l.w[static_cast<std::size_t>(o) * l.in];
            for (int i = 0; i < l.in; ++i) prev_delta[i] += d * row[i];
        }
        const auto& pre_prev = t.pre[li - 1];
        for (int i = 0; i < l.in; ++i)
            if (pre_prev[i] <= 0) prev_delta[i] = 0;  // ReLU gate
        delta = std::move(prev_delta);
    }
}

double Net::train_epoch(const std::vector<std::vector<double>>& xs,
                        const std::vector<int>& ys) {
    if (xs.size() != ys.size() || xs.empty())
        throw std::invalid_argument("bad training set");
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(shuffle_state_);
    shuffle_state_ = mix64(shuffle_state_ + 1);
    rng.shuffle(order);

    std::vector<Layer> grads(layers_.size());
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        grads[li].in = layers_[li].in;
        grads[li].out = layers_[li].out;
        grads[li].w.assign(layers_[li].w.size(), 0.0);
        grads[li].b.assign(layers_[li].b.size(), 0.0);
    }

    double total_loss = 0;
    std::size_t done = 0;
    while (done < order.size()) {
        const std::size_t take =
            std::min<std::size_t>(cfg_.batch_size, order.size() - done);
        for (auto& g : grads) {
            std::fill(g.w.begin(), g.w.end(), 0.0);
            std::fill(g.b.begin(), g.b.end(), 0.0);
        }
        for (std::size_t k = 0; k < take; ++k) {
            const std::size_t idx = order[done + k];
            const Tape t = forward_tape(xs[idx]);
            total_loss += -std::log(std::max(t.probs[ys[idx]], 1e-300));
            backward(t, ys[idx], grads);
        }
        const double step = cfg_.learning_rate / static_cast<double>(take);
        const double shrink = 1.0 - cfg_.learning_rate * cfg_.weight_decay;
        for (std::size_t li = 0; li < layers_.size(); ++li) {
            for (std::size_t i = 0; i < layers_[li].w.size(); ++i) {
                layers_[li].w[i] *= shrink;
                layers_[li].w[i] -= step * grads[li].w[i];
            }
            for (std::size_t i = 0; i < layers_[li].b.size(); ++i)
                layers_[li].b[i] -= step * grads[li].b[i];
        }
        done += take;
    }
    return total_loss / static_cast<double>(xs.size());
}

std::vector<double> Net::fit(const std::vector<std::vector<double>>& xs,
                             const std::vector<int>& ys) {
    std::vector<double> losses;
    losses.reserve(cfg_.epochs);
    for (int e = 0; e < cfg_.epochs; ++e) losses.push_back(train_epoch(xs, ys));
    return losses;
}

double Net::accuracy(const std::vector<std::vector<double>>& xs,
                     const std::vector<int>& ys) const {
    if (xs.empty()) return 0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (predict(xs[i]) == ys[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(xs.size());
}

void Net::fold_input_affine(std::span<const double> shift,
                            std::span<const double> scale) {
    Layer& l = layers_.front();
    if (shift.size() != static_cast<std::size_t>(l.in) ||
        scale.size() != static_cast<std::size_t>(l.in))
        throw std::invalid_argument("affine size mismatch");
    for (int o = 0; o < l.out; ++o) {
        double* row = &l.w[static_cast<std::size_t>(o) * l.in];
        double carry = 0;
        for (int i = 0; i < l.in; ++i) {
            row[i] /= scale[i];
            carry += row[i] * shift[i];
        }
        l.b[o] -= carry;
    }
}

std::size_t Net::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.w.size() + l.b.size();
    return n;
}

double& Net::param(std::size_t flat) {
    for (auto& l : layers_) {
        if (flat < l.w.size()) return l.w[flat];
        flat -= l.w.size();
        if (flat < l.b.size()) return l.b[flat];
        flat -= l.b.size();
    }
    throw std::out_of_range("parameter index");
}

double Net::grad_at(const std::vector<Layer>& grads, std::size_t flat) const {
    for (const auto& g : grads) {
        if (flat < g.w.size()) return g.w[flat];
        flat -= g.w.size();
        if (flat < g.b.size()) return g.b[flat];
        flat -= g.b.size();
    }
    throw std::out_of_range("parameter index");
}

double gradient_check(Net& net, std::span<const double> x, int label,
                      double step, std::uint64_t seed, int samples) {
    std::vector<Net::Layer> grads(net.layers_.size());
    for (std::size_t li = 0; li < net.layers_.size(); ++li) {
        grads[li].in = net.layers_[li].in;
        grads[li].out = net.layers_[li].out;
        grads[li].w.assign(net.layers_[li].w.size(), 0.0);
        grads[li].b.assign(net.layers_[li].b.size(), 0.0);
    }
    const Net::Tape t = net.forward_tape(x);
    net.backward(t, label, grads);

    Rng rng(seed);
    const std::size_t total = net.parameter_count();
    double worst = 0;
    for (int k = 0; k < samples; ++k) {
        const std::size_t idx = rng.below(total);
        double& p = net.param(idx);
        const double saved = p;
        p = saved + step;
        const double up = net.loss(x, label);
        p = saved - step;
        const double down = net.loss(x, label);
        p = saved;
        const double numeric = (up - down) / (2 * step);
        const double analytic = net.grad_at(grads, idx);
        const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
        worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
    return worst;
}

std::string Net::to_json() const {
    json layers = json::array();
    for (const auto& l : layers_)
        layers.push_back(json{{"in", l.in}, {"out", l.out}, {"w", l.w}, {"b", l.b}});
    return json{{"inputs", cfg_.inputs},
                {"classes", cfg_.classes},
                {"hidden", cfg_.hidden},
                {"learning_rate", cfg_.learning_rate},
                {"weight_decay", cfg_.weight_decay},
                {"epochs", cfg_.epochs},
                {"batch_size", cfg_.batch_size},
                {"seed", cfg_.seed},
                {"layers", std::move(layers)}}
        .dump();
}

Net Net::from_json(const std::string& text) {
    json j = json::parse(text);
    Net net;
    net.cfg_.inputs = j.at("inputs").get<int>();
    net.cfg_.classes = j.at("classes").get<int>();
    net.cfg_.hidden = j.at("hidden").get<std::vector<int>>();
    net.cfg_.learning_rate = j.value("learning_rate", 0.02);
    net.cfg_.weight_decay = j.value("weight_decay", 0.0);
    net.cfg_.epochs = j.value("epochs", 20);
    net.cfg_.batch_size = j.value("batch_size", 32);
    net.cfg_.seed = j.value("seed", std::uint64_t{1});
    for (const auto& jl : j.at("layers")) {
        Layer l;
        l.in = jl.at("in").get<int>();
        l.out = jl.at("out").get<int>();
        l.w = jl.at("w").get<std::vector<double>>();
        l.b = jl.at("b").get<std::vector<double>>();
        if (l.w.size() != static_cast<std::size_t>(l.in) * l.out ||
            l.b.size() != static_cast<std::size_t>(l.out))
            throw std::runtime_error("model layer has inconsistent dimensions");
        net.layers_.push_back(std::move(l));
    }
    net.shuffle_state_ = mix64(net.cfg_.seed ^ 0x7ea1);
    return net;
}

}  // namespace actrace
