#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace actrace {

struct NetConfig {
    std::vector<int> hidden{512, 256, 128, 64, 32};
    int inputs = 0;
    int classes = 2;
    double learning_rate = 0.02;
    double weight_decay = 0;  // decoupled L2 shrink per update
    int epochs = 20;
    int batch_size = 32;
    std::uint64_t seed = 1;
};

// Plain feedforward rectified-linear network with softmax output, trained
// by minibatch SGD on cross-entropy. Single-threaded and seeded, so runs
// are reproducible.
class Net {
public:
    Net() = default;
    explicit Net(const NetConfig& cfg);

    const NetConfig& config() const { return cfg_; }

    std::vector<double> forward(std::span<const double> x) const;  // softmax
    int predict(std::span<const double> x) const;
    double loss(std::span<const double> x, int label) const;

    // One pass over the data in seeded shuffled minibatches; returns the
    // mean training loss of the pass.
    double train_epoch(const std::vector<std::vector<double>>& xs,
                       const std::vector<int>& ys);
    // Runs cfg.epochs passes; returns per-epoch mean losses.
    std::vector<double> fit(const std::vector<std::vector<double>>& xs,
                            const std::vector<int>& ys);

    double accuracy(const std::vector<std::vector<double>>& xs,
                    const std::vector<int>& ys) const;

    // Rewrites the first layer so the net computes f((x - shift) / scale)
    // while still being fed raw x; used to bake input standardization into
    // the trained weights.
    void fold_input_affine(std::span<const double> shift,
                           std::span<const double> scale);

    std::size_t parameter_count() const;

    std::string to_json() const;
    static Net from_json(const std::string& text);

    friend double gradient_check(Net& net, std::span<const double> x, int label,
                                 double step, std::uint64_t seed, int samples);

private:
    struct Layer {
        int in = 0, out = 0;
        std::vector<double> w;  // row-major, out x in
        std::vector<double> b;
    };

    struct Tape {
        std::vector<std::vector<double>> activations;  // per layer input
        std::vector<std::vector<double>> pre;          // pre-activation values
        std::vector<double> probs;
    };

    Tape forward_tape(std::span<const double> x) const;
    void backward(const Tape& t, int label, std::vector<Layer>& grads) const;
    double& param(std::size_t flat_index);
    double grad_at(const std::vector<Layer>& grads, std::size_t flat_index) const;

    NetConfig cfg_;
    std::vector<Layer> layers_;
    std::uint64_t shuffle_state_ = 0;
};

// Analytic gradients against central finite differences over a seeded
// sample of parameters; returns the maximum relative deviation.
double gradient_check(Net& net, std::span<const double> x, int label,
                      double step = 1e-4, std::uint64_t seed = 1,
                      int samples = 200);

}  // namespace actrace
