#pragma once

// Index algebra for lowering a stride-1, unpadded convolution onto a bank of
// optical delay lines, plus the conventional references it must agree with.
//
// Layout conventions used throughout the library:
//   * images are [channel][row][col], serialized row by row (s = m*L + n)
//   * kernels are [c_in][c_out][i][j]; the tap index is q = i*sigma + j
//   * weight matrices are C_O x (C_I*Q), column u*Q + q, so outputs are rows
//     (the transpose of the usual drawing of the same product)
//
// The delay bank produces Q copies of each serialized channel with the delays
// D_0 < D_1 < ... < D_{Q-1} returned by delay_offsets(). Convolution is a
// correlation, so kernel tap q must see the sample that arrives D_q steps
// *later* than tap 0. Physically that means tap q is fed by the line whose
// delay is D_max - D_q (= D_{Q-1-q}); the output for serialized position s
// then appears at time step t = s + D_max, where every row holds
// x[s + D_q]. Rows of DelayedMatrix are labelled by kernel tap q, so the
// columns at t = s + D_max for valid s are exactly the im2col matrix.

#include "ipcnn/errors.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ipcnn {

struct ConvLayerSpec {
    int c_in = 1;
    int c_out = 1;
    int sigma = 1;
    int image_width = 1;

    [[nodiscard]] int taps() const { return sigma * sigma; }
    [[nodiscard]] int output_width() const { return image_width - sigma + 1; }
    [[nodiscard]] int sequence_length() const { return image_width * image_width; }
    [[nodiscard]] std::int64_t max_delay() const
    {
        return static_cast<std::int64_t>(sigma - 1) * (image_width + 1);
    }
    [[nodiscard]] int delayed_rows() const { return c_in * taps(); }
    [[nodiscard]] std::int64_t delayed_columns() const
    {
        return sequence_length() + max_delay();
    }

    void validate() const
    {
        if (c_in < 1 || c_out < 1 || sigma < 1) {
            throw InvalidSpecError("conv spec: channel counts and sigma must be >= 1");
        }
        if (image_width < sigma) {
            throw InvalidSpecError("conv spec: image width " + std::to_string(image_width) +
                                   " is smaller than kernel width " + std::to_string(sigma));
        }
    }

    friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

// Dense [channel][row][col] tensor of square images.
class ImageTensor {
public:
    ImageTensor() = default;
    ImageTensor(int channels, int width, double fill = 0.0)
        : channels_(channels), width_(width),
          data_(static_cast<std::size_t>(channels) * width * width, fill)
    {
        if (channels < 0 || width < 0) {
            throw DimensionError("image tensor: negative extent");
        }
    }

    [[nodiscard]] int channels() const { return channels_; }
    [[nodiscard]] int width() const { return width_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }

    double& operator()(int u, int m, int n) { return data_[index(u, m, n)]; }
    double operator()(int u, int m, int n) const { return data_[index(u, m, n)]; }

    [[nodiscard]] std::span<double> values() { return data_; }
    [[nodiscard]] std::span<const double> values() const { return data_; }
    [[nodiscard]] std::span<const double> channel(int u) const
    {
        const auto plane = static_cast<std::size_t>(width_) * width_;
        return std::span<const double>(data_).subspan(static_cast<std::size_t>(u) * plane, plane);
    }

    friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

private:
    [[nodiscard]] std::size_t index(int u, int m, int n) const
    {
        return (static_cast<std::size_t>(u) * width_ + m) * width_ + n;
    }

    int channels_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

// Dense [c_in][c_out][i][j] kernel tensor.
class KernelTensor {
public:
    KernelTensor() = default;
    KernelTensor(int c_in, int c_out, int sigma, double fill = 0.0)
        : c_in_(c_in), c_out_(c_out), sigma_(sigma),
          data_(static_cast<std::size_t>(c_in) * c_out * sigma * sigma, fill)
    {
        if (c_in < 0 || c_out < 0 || sigma < 0) {
            throw DimensionError("kernel tensor: negative extent");
        }
    }

    [[nodiscard]] int c_in() const { return c_in_; }
    [[nodiscard]] int c_out() const { return c_out_; }
    [[nodiscard]] int sigma() const { return sigma_; }

    double& operator()(int u, int v, int i, int j) { return data_[index(u, v, i, j)]; }
    double operator()(int u, int v, int i, int j) const { return data_[index(u, v, i, j)]; }

    [[nodiscard]] std::span<double> values() { return data_; }
    [[nodiscard]] std::span<const double> values() const { return data_; }

    friend bool operator==(const KernelTensor&, const KernelTensor&) = default;

private:
    [[nodiscard]] std::size_t index(int u, int v, int i, int j) const
    {
        return ((static_cast<std::size_t>(u) * c_out_ + v) * sigma_ + i) * sigma_ + j;
    }

    int c_in_ = 0;
    int c_out_ = 0;
    int sigma_ = 0;
    std::vector<double> data_;
};

namespace detail {

inline void check_images(const ImageTensor& images, const ConvLayerSpec& spec)
{
    spec.validate();
    if (images.channels() != spec.c_in) {
        throw DimensionError("images: channel axis is " + std::to_string(images.channels()) +
                             ", spec expects c_in = " + std::to_string(spec.c_in));
    }
    if (images.width() != spec.image_width) {
        throw DimensionError("images: width axis is " + std::to_string(images.width()) +
                             ", spec expects image_width = " + std::to_string(spec.image_width));
    }
}

inline void check_kernels(const KernelTensor& kernels, const ConvLayerSpec& spec)
{
    if (kernels.c_in() != spec.c_in) {
        throw DimensionError("kernels: c_in axis is " + std::to_string(kernels.c_in()) +
                             ", spec expects " + std::to_string(spec.c_in));
    }
    if (kernels.c_out() != spec.c_out) {
        throw DimensionError("kernels: c_out axis is " + std::to_string(kernels.c_out()) +
                             ", spec expects " + std::to_string(spec.c_out));
    }
    if (kernels.sigma() != spec.sigma) {
        throw DimensionError("kernels: sigma axis is " + std::to_string(kernels.sigma()) +
                             ", spec expects " + std::to_string(spec.sigma));
    }
}

}  // namespace detail

// Direct evaluation of the correlation sum; no padding, stride 1.
inline ImageTensor conv2d_reference(const ImageTensor& images, const KernelTensor& kernels,
                                    const ConvLayerSpec& spec)
{
    detail::check_images(images, spec);
    detail::check_kernels(kernels, spec);
    const int out = spec.output_width();
    ImageTensor y(spec.c_out, out);
    for (int v = 0; v < spec.c_out; ++v) {
        for (int m = 0; m < out; ++m) {
            for (int n = 0; n < out; ++n) {
                double acc = 0.0;
                for (int u = 0; u < spec.c_in; ++u) {
                    for (int i = 0; i < spec.sigma; ++i) {
                        for (int j = 0; j < spec.sigma; ++j) {
                            acc += kernels(u, v, i, j) * images(u, m + i, n + j);
                        }
                    }
                }
                y(v, m, n) = acc;
            }
        }
    }
    return y;
}

// Row u holds channel u serialized row by row; length L^2.
inline Eigen::MatrixXd serialize(const ImageTensor& images)
{
    const int plane = images.width() * images.width();
    Eigen::MatrixXd seq(images.channels(), plane);
    for (int u = 0; u < images.channels(); ++u) {
        const auto ch = images.channel(u);
        for (int s = 0; s < plane; ++s) {
            seq(u, s) = ch[static_cast<std::size_t>(s)];
        }
    }
    return seq;
}

inline ImageTensor deserialize(const Eigen::MatrixXd& sequences, int width)
{
    if (width < 0 || sequences.cols() != static_cast<Eigen::Index>(width) * width) {
        throw DimensionError("deserialize: sequence length " + std::to_string(sequences.cols()) +
                             " is not width^2 for width " + std::to_string(width));
    }
    ImageTensor images(static_cast<int>(sequences.rows()), width);
    for (int u = 0; u < images.channels(); ++u) {
        for (int s = 0; s < width * width; ++s) {
            images(u, s / width, s % width) = sequences(u, s);
        }
    }
    return images;
}

[[nodiscard]] constexpr std::int64_t serial_index(int m, int n, int width)
{
    return static_cast<std::int64_t>(m) * width + n;
}

inline std::vector<std::int64_t> delay_offsets(int sigma, int width)
{
    if (sigma < 1 || width < sigma) {
        throw InvalidSpecError("delay offsets need image width >= sigma >= 1 (got sigma=" +
                               std::to_string(sigma) + ", L=" + std::to_string(width) + ")");
    }
    std::vector<std::int64_t> offsets(static_cast<std::size_t>(sigma) * sigma);
    for (int q = 0; q < sigma * sigma; ++q) {
        offsets[static_cast<std::size_t>(q)] =
            static_cast<std::int64_t>(q / sigma) * width + (q % sigma);
    }
    return offsets;
}

// Mask over serialized positions s in [0, L^2): true where (m, n) starts a
// full patch.
inline std::vector<bool> valid_positions(const ConvLayerSpec& spec)
{
    spec.validate();
    const int width = spec.image_width;
    std::vector<bool> mask(static_cast<std::size_t>(spec.sequence_length()), false);
    for (int m = 0; m <= width - spec.sigma; ++m) {
        for (int n = 0; n <= width - spec.sigma; ++n) {
            mask[static_cast<std::size_t>(serial_index(m, n, width))] = true;
        }
    }
    return mask;
}

struct DelayedMatrix {
    ConvLayerSpec spec;
    // (C_I * Q) x (L^2 + D_max); row u*Q + q, column = time step.
    Eigen::MatrixXd values;
    // Length L^2, indexed by serialized position s.
    std::vector<bool> valid;

    // Time step at which the patch starting at serialized position s is
    // fully present in the bank.
    [[nodiscard]] std::int64_t column_of(std::int64_t s) const { return s + spec.max_delay(); }

    [[nodiscard]] std::int64_t valid_count() const
    {
        std::int64_t n = 0;
        for (bool b : valid) {
            n += b ? 1 : 0;
        }
        return n;
    }

    // Valid columns in increasing s order.
    [[nodiscard]] Eigen::MatrixXd valid_submatrix() const
    {
        Eigen::MatrixXd sub(values.rows(), valid_count());
        Eigen::Index k = 0;
        for (std::size_t s = 0; s < valid.size(); ++s) {
            if (valid[s]) {
                sub.col(k++) = values.col(column_of(static_cast<std::int64_t>(s)));
            }
        }
        return sub;
    }
};

// Builds X' from an explicit offset table; the table is normally
// delay_offsets(sigma, L) and is exposed so that verification harnesses can
// inject a faulty bank.
inline DelayedMatrix build_delayed_matrix(const ImageTensor& images, const ConvLayerSpec& spec,
                                          std::span<const std::int64_t> offsets)
{
    detail::check_images(images, spec);
    if (offsets.size() != static_cast<std::size_t>(spec.taps())) {
        throw DimensionError("delay table has " + std::to_string(offsets.size()) +
                             " entries, spec needs Q = " + std::to_string(spec.taps()));
    }
    const int q_count = spec.taps();
    const std::int64_t length = spec.sequence_length();
    const std::int64_t d_max = spec.max_delay();
    const std::int64_t columns = spec.delayed_columns();

    DelayedMatrix out;
    out.spec = spec;
    out.values = Eigen::MatrixXd::Zero(spec.delayed_rows(), columns);
    out.valid = valid_positions(spec);

    for (int u = 0; u < spec.c_in; ++u) {
        const auto ch = images.channel(u);
        for (int q = 0; q < q_count; ++q) {
            const std::int64_t line_delay = d_max - offsets[static_cast<std::size_t>(q)];
            const Eigen::Index row = static_cast<Eigen::Index>(u) * q_count + q;
            for (std::int64_t s = 0; s < length; ++s) {
                const std::int64_t t = s + line_delay;
                if (t >= 0 && t < columns) {
                    out.values(row, t) = ch[static_cast<std::size_t>(s)];
                }
            }
        }
    }
    return out;
}

inline DelayedMatrix build_delayed_matrix(const ImageTensor& images, const ConvLayerSpec& spec)
{
    detail::check_images(images, spec);
    const auto offsets = delay_offsets(spec.sigma, spec.image_width);
    return build_delayed_matrix(images, spec, offsets);
}

// Conventional patch-and-flatten lowering: (C_I * Q) x (L - sigma + 1)^2,
// column p = m * (L - sigma + 1) + n.
inline Eigen::MatrixXd im2col(const ImageTensor& images, const ConvLayerSpec& spec)
{
    detail::check_images(images, spec);
    const int out = spec.output_width();
    const int q_count = spec.taps();
    Eigen::MatrixXd cols(spec.delayed_rows(), static_cast<Eigen::Index>(out) * out);
    for (int u = 0; u < spec.c_in; ++u) {
        for (int i = 0; i < spec.sigma; ++i) {
            for (int j = 0; j < spec.sigma; ++j) {
                const Eigen::Index row = static_cast<Eigen::Index>(u) * q_count + i * spec.sigma + j;
                for (int m = 0; m < out; ++m) {
                    for (int n = 0; n < out; ++n) {
                        cols(row, static_cast<Eigen::Index>(m) * out + n) = images(u, m + i, n + j);
                    }
                }
            }
        }
    }
    return cols;
}

// C_O x (C_I * Q) weight matrix, column u*Q + i*sigma + j.
inline Eigen::MatrixXd weight_matrix(const KernelTensor& kernels)
{
    const int q_count = kernels.sigma() * kernels.sigma();
    Eigen::MatrixXd w(kernels.c_out(), static_cast<Eigen::Index>(kernels.c_in()) * q_count);
    for (int u = 0; u < kernels.c_in(); ++u) {
        for (int v = 0; v < kernels.c_out(); ++v) {
            for (int i = 0; i < kernels.sigma(); ++i) {
                for (int j = 0; j < kernels.sigma(); ++j) {
                    w(v, static_cast<Eigen::Index>(u) * q_count + i * kernels.sigma() + j) =
                        kernels(u, v, i, j);
                }
            }
        }
    }
    return w;
}

inline KernelTensor kernel_tensor(const Eigen::MatrixXd& weights, int c_in, int sigma)
{
    const int q_count = sigma * sigma;
    if (weights.cols() != static_cast<Eigen::Index>(c_in) * q_count) {
        throw DimensionError("weight matrix has " + std::to_string(weights.cols()) +
                             " columns, expected c_in * sigma^2 = " +
                             std::to_string(c_in * q_count));
    }
    KernelTensor k(c_in, static_cast<int>(weights.rows()), sigma);
    for (int u = 0; u < c_in; ++u) {
        for (int v = 0; v < k.c_out(); ++v) {
            for (int q = 0; q < q_count; ++q) {
                k(u, v, q / sigma, q % sigma) = weights(v, static_cast<Eigen::Index>(u) * q_count + q);
            }
        }
    }
    return k;
}

struct GemmOutput {
    ConvLayerSpec spec;
    // C_O x (L^2 + D_max), one column per time step.
    Eigen::MatrixXd values;
    std::vector<bool> valid;

    // Valid columns reshaped to [v][m][n].
    [[nodiscard]] ImageTensor valid_outputs() const
    {
        const int out = spec.output_width();
        const int width = spec.image_width;
        ImageTensor y(static_cast<int>(values.rows()), out);
        for (int v = 0; v < y.channels(); ++v) {
            for (int m = 0; m < out; ++m) {
                for (int n = 0; n < out; ++n) {
                    y(v, m, n) = values(v, serial_index(m, n, width) + spec.max_delay());
                }
            }
        }
        return y;
    }
};

inline GemmOutput gemm_conv(const Eigen::MatrixXd& weights, const DelayedMatrix& delayed)
{
    if (weights.cols() != delayed.values.rows()) {
        throw DimensionError("gemm_conv: weight matrix has " + std::to_string(weights.cols()) +
                             " columns but the delayed matrix has " +
                             std::to_string(delayed.values.rows()) + " rows");
    }
    GemmOutput out;
    out.spec = delayed.spec;
    out.spec.c_out = static_cast<int>(weights.rows());
    out.values.noalias() = weights * delayed.values;
    out.valid = delayed.valid;
    return out;
}

struct PhysicalDelay {
    double seconds = 0.0;
    double meters = 0.0;
};

// Converts a delay in modulation clock cycles to time and waveguide length.
inline PhysicalDelay physical_delay(std::int64_t cycles, double modulation_rate_hz,
                                    double group_velocity_m_per_s)
{
    if (!(modulation_rate_hz > 0.0)) {
        throw InvalidSpecError("modulation rate must be positive");
    }
    PhysicalDelay d;
    d.seconds = static_cast<double>(cycles) / modulation_rate_hz;
    d.meters = d.seconds * group_velocity_m_per_s;
    return d;
}

}  // namespace ipcnn
