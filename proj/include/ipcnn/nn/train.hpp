#pragma once

#include "ipcnn/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace ipcnn::nn {

struct TrainingOptions {
    int epochs = 5;
    double learning_rate = 0.01;
    double momentum = 0.9;
    int batch_size = 64;
    std::uint64_t seed = 1;
    // Stop after this many minibatches in total (0 = no limit).
    long max_steps = 0;

    void validate() const
    {
        if (epochs < 1) {
            throw InvalidSpecError("training: epochs must be >= 1");
        }
        if (!(learning_rate > 0.0)) {
            throw InvalidSpecError("training: learning rate must be > 0");
        }
        if (!(momentum >= 0.0 && momentum < 1.0)) {
            throw InvalidSpecError("training: momentum must be in [0, 1)");
        }
        if (batch_size < 1) {
            throw InvalidSpecError("training: batch size must be >= 1");
        }
    }
};

struct EpochSummary {
    int epoch = 0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
};

using EpochCallback = std::function<void(const EpochSummary&)>;

// Minibatch SGD with classical momentum on softmax cross-entropy. The model is
// initialized from options.seed; shuffling uses a seed derived per epoch.
inline NetworkModel train(NetworkModel model, const Dataset& data, const TrainingOptions& options,
                          const EpochCallback& on_epoch = {})
{
    options.validate();
    if (data.size() == 0) {
        throw InvalidSpecError("training: empty dataset");
    }
    if (data.rows != model.shape().input_width || data.cols != model.shape().input_width) {
        throw DimensionError("training: images are " + std::to_string(data.rows) + "x" +
                             std::to_string(data.cols) + ", network expects " +
                             std::to_string(model.shape().input_width));
    }
    model.initialize(options.seed);

    auto weights = model.weight_tensors();
    auto biases = model.bias_tensors();
    std::array<Eigen::MatrixXd, 4> weight_velocity;
    std::array<Eigen::VectorXd, 4> bias_velocity;
    for (std::size_t k = 0; k < 4; ++k) {
        weight_velocity[k] = Eigen::MatrixXd::Zero(weights[k]->rows(), weights[k]->cols());
        bias_velocity[k] = Eigen::VectorXd::Zero(biases[k]->size());
    }

    std::vector<int> order(static_cast<std::size_t>(data.size()));
    long steps = 0;
    double last_loss = 0.0;
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(options.seed, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double loss_sum = 0.0;
        long correct = 0;
        int batches = 0;
        for (int first = 0; first < data.size(); first += options.batch_size) {
            const int count = std::min(options.batch_size, data.size() - first);
            const std::vector<int> idx(order.begin() + first, order.begin() + first + count);
            std::vector<int> labels(idx.size());
            for (std::size_t k = 0; k < idx.size(); ++k) {
                labels[k] = data.labels[static_cast<std::size_t>(idx[k])];
            }

            const Eigen::MatrixXd logits = model.forward(make_batch(data, idx));
            const LossResult loss = softmax_cross_entropy(logits, labels);
            if (!std::isfinite(loss.loss)) {
                throw TrainingError("training diverged: non-finite loss at epoch " +
                                    std::to_string(epoch) + ", batch " + std::to_string(batches));
            }
            model.backward(loss.grad);

            const auto weight_grads = model.weight_gradients();
            const auto bias_grads = model.bias_gradients();
            for (std::size_t k = 0; k < 4; ++k) {
                weight_velocity[k] = options.momentum * weight_velocity[k] - options.learning_rate * *weight_grads[k];
                *weights[k] += weight_velocity[k];
                bias_velocity[k] = options.momentum * bias_velocity[k] - options.learning_rate * *bias_grads[k];
                *biases[k] += bias_velocity[k];
            }

            loss_sum += loss.loss;
            correct += loss.correct;
            ++batches;
            last_loss = loss.loss;
            if (options.max_steps > 0 && ++steps >= options.max_steps) {
                break;
            }
        }
        if (on_epoch) {
            on_epoch({epoch, loss_sum / batches, static_cast<double>(correct) /
                                                     std::min<long>(data.size(), static_cast<long>(batches) * options.batch_size)});
        }
        if (options.max_steps > 0 && steps >= options.max_steps) {
            break;
        }
    }

    model.metadata.epochs = options.epochs;
    model.metadata.learning_rate = options.learning_rate;
    model.metadata.momentum = options.momentum;
    model.metadata.batch_size = options.batch_size;
    model.metadata.seed = options.seed;
    model.metadata.final_train_loss = last_loss;
    return model;
}

}  // namespace ipcnn::nn
