#pragma once

// The four-layer MNIST classifier:
//   conv3x3(1->32) -> ReLU -> maxpool2 -> conv3x3(32->32) -> ReLU -> maxpool2
//   -> flatten -> dense(800->512) -> ReLU -> dense(512->10)
// Convolutions are unpadded, so a 28x28 input flattens to 32*5*5 = 800.

#include "ipcnn/nn/layers.hpp"
#include "ipcnn/nn/mnist.hpp"
#include "ipcnn/random.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace ipcnn::nn {

struct NetworkShape {
    int input_width = 28;
    int input_channels = 1;
    int conv1_channels = 32;
    int conv2_channels = 32;
    int sigma = 3;
    int hidden = 512;
    int classes = 10;

    [[nodiscard]] int conv1_out() const { return input_width - sigma + 1; }
    [[nodiscard]] int pool1_out() const { return conv1_out() / 2; }
    [[nodiscard]] int conv2_out() const { return pool1_out() - sigma + 1; }
    [[nodiscard]] int pool2_out() const { return conv2_out() / 2; }
    [[nodiscard]] int flat_features() const { return conv2_channels * pool2_out() * pool2_out(); }

    void validate() const
    {
        if (input_channels < 1 || conv1_channels < 1 || conv2_channels < 1 || sigma < 1 ||
            hidden < 1 || classes < 2 || pool2_out() < 1 || conv2_out() < 1) {
            throw InvalidSpecError("network shape does not chain: input width " +
                                   std::to_string(input_width) + " is too small for two " +
                                   std::to_string(sigma) + "x" + std::to_string(sigma) +
                                   " conv + pool stages");
        }
    }

    friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

struct TrainingMetadata {
    int epochs = 0;
    double learning_rate = 0.0;
    double momentum = 0.0;
    int batch_size = 0;
    std::uint64_t seed = 0;
    double final_train_loss = 0.0;
    double test_accuracy = 0.0;
};

// Linear part of a convolution (no bias), swappable so conv layers can run on
// simulated hardware. `layer` is 0 or 1.
using ConvExecutor = std::function<Batch(int layer, const Conv2D& conv, const Batch& input)>;

class NetworkModel {
public:
    NetworkModel() : NetworkModel(NetworkShape{}) {}
    explicit NetworkModel(const NetworkShape& shape)
        : shape_(shape),
          conv1((shape.validate(), shape.input_channels), shape.conv1_channels, shape.sigma),
          conv2(shape.conv1_channels, shape.conv2_channels, shape.sigma),
          fc1(shape.flat_features(), shape.hidden),
          fc2(shape.hidden, shape.classes)
    {
    }

    [[nodiscard]] const NetworkShape& shape() const { return shape_; }

    Conv2D conv1;
    Conv2D conv2;
    Dense fc1;
    Dense fc2;
    TrainingMetadata metadata;

    // He-normal weights, zero biases.
    void initialize(std::uint64_t seed)
    {
        Rng rng(seed);
        const auto fill = [&rng](Eigen::MatrixXd& w, int fan_in) {
            std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                w(i) = normal(rng);
            }
        };
        fill(conv1.weights, static_cast<int>(conv1.weights.cols()));
        fill(conv2.weights, static_cast<int>(conv2.weights.cols()));
        fill(fc1.weights, static_cast<int>(fc1.weights.cols()));
        fill(fc2.weights, static_cast<int>(fc2.weights.cols()));
        conv1.bias.setZero();
        conv2.bias.setZero();
        fc1.bias.setZero();
        fc2.bias.setZero();
    }

    // Training pass; caches activations for backward().
    Eigen::MatrixXd forward(const Batch& input)
    {
        Batch h = conv1.forward(input);
        h = relu1_.forward(h);
        h = pool1_.forward(h);
        h = conv2.forward(h);
        h = relu2_.forward(h);
        h = pool2_.forward(h);
        h = flatten_.forward(h);
        h = fc1.forward(h);
        h = relu3_.forward(h);
        return fc2.forward(h).data;
    }

    void backward(const Eigen::MatrixXd& grad_logits)
    {
        Batch g(shape_.classes, 1, 1, static_cast<int>(grad_logits.cols()));
        g.data = grad_logits;
        g = fc2.backward(g);
        g = relu3_.backward(g);
        g = fc1.backward(g);
        g = flatten_.backward(g);
        g = pool2_.backward(g);
        g = relu2_.backward(g);
        g = conv2.backward(g);
        g = pool1_.backward(g);
        g = relu1_.backward(g);
        conv1.backward(g);
    }

    // Stateless inference; conv layers run through `executor` when given.
    [[nodiscard]] Eigen::MatrixXd logits(const Batch& input, const ConvExecutor& executor = {}) const
    {
        const auto run_conv = [&](int layer, const Conv2D& conv, const Batch& in) {
            if (!executor) {
                return conv.infer(in);
            }
            Batch y = executor(layer, conv, in);
            y.data.colwise() += conv.bias;
            return y;
        };
        Batch h = run_conv(0, conv1, input);
        h = MaxPool2::infer(ReLU::infer(h));
        h = run_conv(1, conv2, h);
        h = Flatten::infer(MaxPool2::infer(ReLU::infer(h)));
        h = ReLU::infer(fc1.infer(h));
        return fc2.infer(h).data;
    }

    // Parameter tensors in a fixed order, for optimizers and checkpoints.
    [[nodiscard]] std::array<Eigen::MatrixXd*, 4> weight_tensors()
    {
        return {&conv1.weights, &conv2.weights, &fc1.weights, &fc2.weights};
    }
    [[nodiscard]] std::array<Eigen::VectorXd*, 4> bias_tensors()
    {
        return {&conv1.bias, &conv2.bias, &fc1.bias, &fc2.bias};
    }
    [[nodiscard]] std::array<const Eigen::MatrixXd*, 4> weight_gradients() const
    {
        return {&conv1.grad_weights, &conv2.grad_weights, &fc1.grad_weights, &fc2.grad_weights};
    }
    [[nodiscard]] std::array<const Eigen::VectorXd*, 4> bias_gradients() const
    {
        return {&conv1.grad_bias, &conv2.grad_bias, &fc1.grad_bias, &fc2.grad_bias};
    }

    // FNV-1a over shapes and parameter bytes.
    [[nodiscard]] std::uint64_t hash() const
    {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        const auto mix = [&h](const void* p, std::size_t n) {
            const auto* bytes = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < n; ++i) {
                h ^= bytes[i];
                h *= 0x100000001b3ULL;
            }
        };
        const std::array<int, 7> dims{shape_.input_width, shape_.input_channels, shape_.conv1_channels,
                                      shape_.conv2_channels, shape_.sigma, shape_.hidden, shape_.classes};
        mix(dims.data(), sizeof(int) * dims.size());
        for (const Eigen::MatrixXd* w : {&conv1.weights, &conv2.weights, &fc1.weights, &fc2.weights}) {
            mix(w->data(), sizeof(double) * static_cast<std::size_t>(w->size()));
        }
        for (const Eigen::VectorXd* b : {&conv1.bias, &conv2.bias, &fc1.bias, &fc2.bias}) {
            mix(b->data(), sizeof(double) * static_cast<std::size_t>(b->size()));
        }
        return h;
    }

private:
    NetworkShape shape_;
    ReLU relu1_;
    MaxPool2 pool1_;
    ReLU relu2_;
    MaxPool2 pool2_;
    Flatten flatten_;
    ReLU relu3_;
};

// The listed samples as a 1-channel batch.
inline Batch make_batch(const Dataset& data, const std::vector<int>& indices)
{
    Batch b(1, data.rows, data.cols, static_cast<int>(indices.size()));
    const std::size_t plane = data.image_size();
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const double* img = data.image(indices[k]);
        for (std::size_t p = 0; p < plane; ++p) {
            b.data(0, static_cast<Eigen::Index>(k * plane + p)) = img[p];
        }
    }
    return b;
}

inline Batch make_batch(const Dataset& data, int first, int count)
{
    std::vector<int> idx(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        idx[static_cast<std::size_t>(i)] = first + i;
    }
    return make_batch(data, idx);
}

}  // namespace ipcnn::nn
