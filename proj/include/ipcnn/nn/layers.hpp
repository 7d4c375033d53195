#pragma once

// Minimal CNN building blocks with hand-written backward passes.
//
// Activations travel as a Batch: a (channels x batch*height*width) matrix,
// column b*H*W + y*W + x. Flat feature vectors are the H = W = 1 case, so a
// dense layer sees (features x batch).

#include "ipcnn/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace ipcnn::nn {

struct Batch {
    int channels = 0;
    int height = 1;
    int width = 1;
    int size = 0;
    Eigen::MatrixXd data;

    Batch() = default;
    Batch(int channels_, int height_, int width_, int size_)
        : channels(channels_), height(height_), width(width_), size(size_),
          data(Eigen::MatrixXd::Zero(channels_, static_cast<Eigen::Index>(size_) * height_ * width_))
    {
    }

    [[nodiscard]] int plane() const { return height * width; }
    [[nodiscard]] Eigen::Index column(int b, int y, int x) const
    {
        return (static_cast<Eigen::Index>(b) * height + y) * width + x;
    }
    double& at(int c, int b, int y, int x) { return data(c, column(b, y, x)); }
    double at(int c, int b, int y, int x) const { return data(c, column(b, y, x)); }
};

// Valid (unpadded) stride-1 convolution with bias. Weights are
// C_O x (C_I * sigma^2), column u * sigma^2 + i * sigma + j.
class Conv2D {
public:
    Conv2D() = default;
    Conv2D(int c_in, int c_out, int sigma)
        : c_in_(c_in), c_out_(c_out), sigma_(sigma),
          weights(Eigen::MatrixXd::Zero(c_out, c_in * sigma * sigma)),
          bias(Eigen::VectorXd::Zero(c_out))
    {
    }

    [[nodiscard]] int c_in() const { return c_in_; }
    [[nodiscard]] int c_out() const { return c_out_; }
    [[nodiscard]] int sigma() const { return sigma_; }

    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
    Eigen::MatrixXd grad_weights;
    Eigen::VectorXd grad_bias;

    // Patch matrix (C_I * sigma^2) x (batch * out * out).
    [[nodiscard]] Eigen::MatrixXd patches(const Batch& in) const
    {
        check_input(in);
        const int out = in.width - sigma_ + 1;
        const int q_count = sigma_ * sigma_;
        const Eigen::Index plane_out = static_cast<Eigen::Index>(out) * out;
        Eigen::MatrixXd cols(static_cast<Eigen::Index>(c_in_) * q_count, in.size * plane_out);
        for (int b = 0; b < in.size; ++b) {
            for (int m = 0; m < out; ++m) {
                for (int n = 0; n < out; ++n) {
                    const Eigen::Index col = b * plane_out + static_cast<Eigen::Index>(m) * out + n;
                    for (int u = 0; u < c_in_; ++u) {
                        for (int i = 0; i < sigma_; ++i) {
                            for (int j = 0; j < sigma_; ++j) {
                                cols(static_cast<Eigen::Index>(u) * q_count + i * sigma_ + j, col) =
                                    in.at(u, b, m + i, n + j);
                            }
                        }
                    }
                }
            }
        }
        return cols;
    }

    // Output without bias, from a patch matrix.
    [[nodiscard]] Batch linear_from_patches(const Eigen::MatrixXd& cols, int in_width, int batch) const
    {
        const int out = in_width - sigma_ + 1;
        Batch y(c_out_, out, out, batch);
        y.data.noalias() = weights * cols;
        return y;
    }

    Batch forward(const Batch& in)
    {
        cached_cols_ = patches(in);
        cached_width_ = in.width;
        cached_batch_ = in.size;
        Batch y = linear_from_patches(cached_cols_, in.width, in.size);
        y.data.colwise() += bias;
        return y;
    }

    [[nodiscard]] Batch infer(const Batch& in) const
    {
        Batch y = linear_from_patches(patches(in), in.width, in.size);
        y.data.colwise() += bias;
        return y;
    }

    Batch backward(const Batch& grad_out)
    {
        grad_weights.noalias() = grad_out.data * cached_cols_.transpose();
        grad_bias = grad_out.data.rowwise().sum();
        const Eigen::MatrixXd grad_cols = weights.transpose() * grad_out.data;

        Batch grad_in(c_in_, cached_width_, cached_width_, cached_batch_);
        const int out = cached_width_ - sigma_ + 1;
        const int q_count = sigma_ * sigma_;
        const Eigen::Index plane_out = static_cast<Eigen::Index>(out) * out;
        for (int b = 0; b < cached_batch_; ++b) {
            for (int m = 0; m < out; ++m) {
                for (int n = 0; n < out; ++n) {
                    const Eigen::Index col = b * plane_out + static_cast<Eigen::Index>(m) * out + n;
                    for (int u = 0; u < c_in_; ++u) {
                        for (int i = 0; i < sigma_; ++i) {
                            for (int j = 0; j < sigma_; ++j) {
                                grad_in.at(u, b, m + i, n + j) +=
                                    grad_cols(static_cast<Eigen::Index>(u) * q_count + i * sigma_ + j, col);
                            }
                        }
                    }
                }
            }
        }
        return grad_in;
    }

private:
    void check_input(const Batch& in) const
    {
        if (in.channels != c_in_ || in.height != in.width || in.width < sigma_) {
            throw DimensionError("conv: input is " + std::to_string(in.channels) + "x" +
                                 std::to_string(in.height) + "x" + std::to_string(in.width) +
                                 ", layer expects " + std::to_string(c_in_) +
                                 " square channels of width >= " + std::to_string(sigma_));
        }
    }

    int c_in_ = 0;
    int c_out_ = 0;
    int sigma_ = 0;
    Eigen::MatrixXd cached_cols_;
    int cached_width_ = 0;
    int cached_batch_ = 0;
};

class ReLU {
public:
    Batch forward(const Batch& in)
    {
        cached_ = in;
        return infer(in);
    }

    [[nodiscard]] static Batch infer(const Batch& in)
    {
        Batch out = in;
        out.data = in.data.cwiseMax(0.0);
        return out;
    }

    Batch backward(const Batch& grad_out) const
    {
        Batch g = grad_out;
        g.data = (cached_.data.array() > 0.0).select(grad_out.data, 0.0);
        return g;
    }

private:
    Batch cached_;
};

// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
class MaxPool2 {
public:
    Batch forward(const Batch& in)
    {
        Batch out = run(in, &argmax_);
        in_shape_ = in;
        in_shape_.data.resize(0, 0);
        return out;
    }

    [[nodiscard]] static Batch infer(const Batch& in) { return run(in, nullptr); }

    Batch backward(const Batch& grad_out) const
    {
        Batch g(in_shape_.channels, in_shape_.height, in_shape_.width, in_shape_.size);
        for (Eigen::Index c = 0; c < grad_out.data.rows(); ++c) {
            for (Eigen::Index k = 0; k < grad_out.data.cols(); ++k) {
                g.data(c, argmax_(c, k)) += grad_out.data(c, k);
            }
        }
        return g;
    }

private:
    using IndexMatrix = Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>;

    static Batch run(const Batch& in, IndexMatrix* argmax)
    {
        const int oh = in.height / 2;
        const int ow = in.width / 2;
        Batch out(in.channels, oh, ow, in.size);
        if (argmax != nullptr) {
            argmax->resize(out.data.rows(), out.data.cols());
        }
        for (int c = 0; c < in.channels; ++c) {
            for (int b = 0; b < in.size; ++b) {
                for (int y = 0; y < oh; ++y) {
                    for (int x = 0; x < ow; ++x) {
                        Eigen::Index best = in.column(b, 2 * y, 2 * x);
                        double value = in.data(c, best);
                        for (int dy = 0; dy < 2; ++dy) {
                            for (int dx = 0; dx < 2; ++dx) {
                                const Eigen::Index idx = in.column(b, 2 * y + dy, 2 * x + dx);
                                if (in.data(c, idx) > value) {
                                    value = in.data(c, idx);
                                    best = idx;
                                }
                            }
                        }
                        out.at(c, b, y, x) = value;
                        if (argmax != nullptr) {
                            (*argmax)(c, out.column(b, y, x)) = best;
                        }
                    }
                }
            }
        }
        return out;
    }

    IndexMatrix argmax_;
    Batch in_shape_;
};

// (C x B*H*W) to (C*H*W x B); feature index c*H*W + y*W + x.
class Flatten {
public:
    Batch forward(const Batch& in)
    {
        shape_ = in;
        shape_.data.resize(0, 0);
        return infer(in);
    }

    [[nodiscard]] static Batch infer(const Batch& in)
    {
        const int plane = in.plane();
        Batch out(in.channels * plane, 1, 1, in.size);
        for (int b = 0; b < in.size; ++b) {
            for (int c = 0; c < in.channels; ++c) {
                for (int p = 0; p < plane; ++p) {
                    out.data(static_cast<Eigen::Index>(c) * plane + p, b) =
                        in.data(c, static_cast<Eigen::Index>(b) * plane + p);
                }
            }
        }
        return out;
    }

    Batch backward(const Batch& grad_out) const
    {
        Batch g(shape_.channels, shape_.height, shape_.width, shape_.size);
        const int plane = shape_.plane();
        for (int b = 0; b < shape_.size; ++b) {
            for (int c = 0; c < shape_.channels; ++c) {
                for (int p = 0; p < plane; ++p) {
                    g.data(c, static_cast<Eigen::Index>(b) * plane + p) =
                        grad_out.data(static_cast<Eigen::Index>(c) * plane + p, b);
                }
            }
        }
        return g;
    }

private:
    Batch shape_;
};

class Dense {
public:
    Dense() = default;
    Dense(int in, int out)
        : weights(Eigen::MatrixXd::Zero(out, in)), bias(Eigen::VectorXd::Zero(out))
    {
    }

    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
    Eigen::MatrixXd grad_weights;
    Eigen::VectorXd grad_bias;

    Batch forward(const Batch& in)
    {
        cached_ = in.data;
        return infer(in);
    }

    [[nodiscard]] Batch infer(const Batch& in) const
    {
        if (in.data.rows() != weights.cols() || in.plane() != 1) {
            throw DimensionError("dense: input has " + std::to_string(in.data.rows()) +
                                 " features, layer expects " + std::to_string(weights.cols()));
        }
        Batch out(static_cast<int>(weights.rows()), 1, 1, in.size);
        out.data.noalias() = weights * in.data;
        out.data.colwise() += bias;
        return out;
    }

    Batch backward(const Batch& grad_out)
    {
        grad_weights.noalias() = grad_out.data * cached_.transpose();
        grad_bias = grad_out.data.rowwise().sum();
        Batch g(static_cast<int>(weights.cols()), 1, 1, grad_out.size);
        g.data.noalias() = weights.transpose() * grad_out.data;
        return g;
    }

private:
    Eigen::MatrixXd cached_;
};

struct LossResult {
    double loss = 0.0;
    Eigen::MatrixXd grad;  // d(mean loss)/d(logits)
    int correct = 0;
};

// Mean softmax cross-entropy over the batch columns.
inline LossResult softmax_cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& labels)
{
    if (static_cast<Eigen::Index>(labels.size()) != logits.cols()) {
        throw DimensionError("loss: label count does not match batch size");
    }
    LossResult r;
    r.grad.resize(logits.rows(), logits.cols());
    const double inv_batch = 1.0 / static_cast<double>(logits.cols());
    for (Eigen::Index b = 0; b < logits.cols(); ++b) {
        const int label = labels[static_cast<std::size_t>(b)];
        if (label < 0 || label >= logits.rows()) {
            throw DimensionError("loss: label " + std::to_string(label) + " out of range");
        }
        Eigen::Index arg = 0;
        const double peak = logits.col(b).maxCoeff(&arg);
        const Eigen::VectorXd e = (logits.col(b).array() - peak).exp();
        const double z = e.sum();
        r.loss += (std::log(z) - (logits(label, b) - peak)) * inv_batch;
        r.grad.col(b) = e / z * inv_batch;
        r.grad(label, b) -= inv_batch;
        r.correct += arg == label ? 1 : 0;
    }
    return r;
}

// Index of the largest entry per column; ties resolve to the lowest index.
inline std::vector<int> argmax_columns(const Eigen::MatrixXd& logits)
{
    std::vector<int> out(static_cast<std::size_t>(logits.cols()));
    for (Eigen::Index b = 0; b < logits.cols(); ++b) {
        Eigen::Index arg = 0;
        logits.col(b).maxCoeff(&arg);
        out[static_cast<std::size_t>(b)] = static_cast<int>(arg);
    }
    return out;
}

}  // namespace ipcnn::nn
