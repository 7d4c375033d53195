#pragma once

// Central finite-difference check of the network's analytic gradients.

#include "ipcnn/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace ipcnn::nn {

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    long checked = 0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
// gradient is essentially zero from dominating through rounding noise.
inline double gradient_relative_error(double analytic, double numeric, double floor = 1e-8)
{
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Checks every parameter of `model` on one labelled batch. Intended for tiny
// shapes: each parameter costs two full forward passes.
inline GradientCheckResult check_gradients(NetworkModel model, const Batch& input,
                                           const std::vector<int>& labels, double h = 1e-5)
{
    const LossResult loss = softmax_cross_entropy(model.forward(input), labels);
    model.backward(loss.grad);

    const auto objective = [&](const NetworkModel& m) {
        return softmax_cross_entropy(m.logits(input), labels).loss;
    };

    static constexpr std::array<const char*, 4> names{"conv1", "conv2", "fc1", "fc2"};
    GradientCheckResult result;
    auto weights = model.weight_tensors();
    auto biases = model.bias_tensors();
    const auto weight_grads = model.weight_gradients();
    const auto bias_grads = model.bias_gradients();

    const auto probe = [&](double* param, double analytic, const std::string& label) {
        const double saved = *param;
        *param = saved + h;
        const double up = objective(model);
        *param = saved - h;
        const double down = objective(model);
        *param = saved;
        const double err = gradient_relative_error(analytic, (up - down) / (2.0 * h));
        ++result.checked;
        if (err > result.max_relative_error) {
            result.max_relative_error = err;
            result.worst_parameter = label;
        }
    };

    for (std::size_t k = 0; k < 4; ++k) {
        const Eigen::MatrixXd gw = *weight_grads[k];
        const Eigen::VectorXd gb = *bias_grads[k];
        for (Eigen::Index i = 0; i < weights[k]->size(); ++i) {
            probe(weights[k]->data() + i, gw(i), std::string(names[k]) + ".weights[" + std::to_string(i) + "]");
        }
        for (Eigen::Index i = 0; i < biases[k]->size(); ++i) {
            probe(biases[k]->data() + i, gb(i), std::string(names[k]) + ".bias[" + std::to_string(i) + "]");
        }
    }
    return result;
}

}  // namespace ipcnn::nn
