#pragma once

// Analog forward model of one delay-buffered WDM convolution layer.
//
// Each output channel v owns Q balanced detectors, one per delay tap q. The
// detector for (v, q) sees the C_I wavelengths of tap q, each weighted by a
// micro-ring setting in [-1, 1] and by a fixed per-path gain g(u, q, v)
// modelling source, splitter, modulator and detector imbalance. Each detected
// branch sample gets additive Gaussian noise; the Q branches are summed by the
// voltage adder and scaled back digitally by the output channel's rescale
// factor. Each output channel has its own detectors and ADC, so its weights
// are normalized to its own peak; a small-weight channel keeps its SNR.
//
// Noise is expressed in dBc against `full_scale`, the detected value of one
// path at full intensity through a unit weight.

#include "ipcnn/conv_math.hpp"
#include "ipcnn/errors.hpp"
#include "ipcnn/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace ipcnn::photonic {

enum class NoiseSampling {
    // One independent sample per (v, q, t) branch reading.
    per_branch,
    // One sample per (v, t) output with the summed variance of its Q branches;
    // same output distribution, Q times fewer draws. Branch traces are not
    // available in this mode.
    aggregated,
};

struct AnalogFaultModel {
    double neop_dbc = -std::numeric_limits<double>::infinity();
    double imbalance_db = 0.0;
    // C_O x (C_I * Q), same layout as the weight matrix. Empty means all ones.
    Eigen::MatrixXd path_gains;
    std::uint64_t seed = 0;
    double full_scale = 1.0;
    NoiseSampling sampling = NoiseSampling::per_branch;
    // Uniform ADC after the voltage adder; 0 disables quantization.
    int adc_bits = 0;

    [[nodiscard]] bool noisy() const { return std::isfinite(neop_dbc); }
    // Standard deviation of one branch sample, in detector units.
    [[nodiscard]] double noise_sigma() const
    {
        return noisy() ? std::pow(10.0, neop_dbc / 10.0) * full_scale : 0.0;
    }

    [[nodiscard]] static AnalogFaultModel ideal() { return {}; }
};

struct WeightProgramming {
    int c_in = 0;
    int sigma = 0;
    // C_O x (C_I * Q) ring settings in [-1, 1].
    Eigen::MatrixXd settings;
    // One digital scale per output channel.
    Eigen::VectorXd rescale;

    [[nodiscard]] KernelTensor kernels() const
    {
        return kernel_tensor(rescale.asDiagonal() * settings, c_in, sigma);
    }
};

namespace detail {

// Scales every row of `settings` to peak magnitude 1 and folds the scale
// into `rescale`. All-zero rows keep their scale.
inline void normalize_rows(Eigen::MatrixXd& settings, Eigen::VectorXd& rescale)
{
    for (Eigen::Index v = 0; v < settings.rows(); ++v) {
        const double peak = settings.cols() == 0 ? 0.0 : settings.row(v).cwiseAbs().maxCoeff();
        if (peak > 0.0) {
            settings.row(v) /= peak;
            rescale(v) *= peak;
        }
    }
}

}  // namespace detail

struct CalibrationTable {
    Eigen::MatrixXd gains;  // estimated, same layout as path_gains
    int probe_count = 0;
    int repeats = 0;
    double residual = 0.0;
};

inline WeightProgramming program_weights(const KernelTensor& kernels)
{
    WeightProgramming p;
    p.c_in = kernels.c_in();
    p.sigma = kernels.sigma();
    p.settings = weight_matrix(kernels);
    if (!p.settings.allFinite()) {
        throw InvalidSpecError("program_weights: kernel values must be finite");
    }
    p.rescale = Eigen::VectorXd::Ones(p.settings.rows());
    detail::normalize_rows(p.settings, p.rescale);
    return p;
}

inline Eigen::MatrixXd unit_gains(const ConvLayerSpec& spec)
{
    return Eigen::MatrixXd::Ones(spec.c_out, spec.delayed_rows());
}

// Per-path gains whose dB values are uniform, stretched so that the spread
// max/min is exactly level_db and centred on 0 dB.
inline Eigen::MatrixXd sample_imbalance(const ConvLayerSpec& spec, double level_db,
                                        std::uint64_t seed)
{
    spec.validate();
    if (!(level_db >= 0.0)) {
        throw InvalidSpecError("imbalance level must be >= 0 dB");
    }
    Eigen::MatrixXd gains = unit_gains(spec);
    if (level_db == 0.0) {
        return gains;
    }
    if (gains.size() < 2) {
        throw InvalidSpecError("a single optical path cannot carry a nonzero imbalance");
    }
    Rng rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Eigen::MatrixXd draw(gains.rows(), gains.cols());
    for (Eigen::Index c = 0; c < draw.cols(); ++c) {
        for (Eigen::Index r = 0; r < draw.rows(); ++r) {
            draw(r, c) = uniform(rng);
        }
    }
    const double lo = draw.minCoeff();
    const double hi = draw.maxCoeff();
    if (!(hi > lo)) {
        throw DegenerateHardwareError("imbalance sampler drew identical values");
    }
    for (Eigen::Index i = 0; i < draw.size(); ++i) {
        const double unit = (draw(i) - lo) / (hi - lo);
        gains(i) = std::pow(10.0, level_db * (unit - 0.5) / 10.0);
    }
    // Pin the extremes so the realized ratio is exact.
    Eigen::Index lo_r = 0, lo_c = 0, hi_r = 0, hi_c = 0;
    draw.minCoeff(&lo_r, &lo_c);
    draw.maxCoeff(&hi_r, &hi_c);
    gains(lo_r, lo_c) = std::pow(10.0, -level_db / 20.0);
    gains(hi_r, hi_c) = std::pow(10.0, level_db / 20.0);
    return gains;
}

struct ForwardOptions {
    bool keep_branch_traces = false;
};

struct PhotonicForward {
    ImageTensor outputs;  // [v][m][n] after digital rescale
    // Q matrices of C_O x (L^2 + D_max), branch readings before rescale;
    // filled only when requested.
    std::vector<Eigen::MatrixXd> branch_traces;
};

class PhotonicConvLayer {
public:
    PhotonicConvLayer(ConvLayerSpec spec, AnalogFaultModel faults)
        : spec_(spec), faults_(std::move(faults))
    {
        spec_.validate();
        if (faults_.path_gains.size() == 0) {
            faults_.path_gains = unit_gains(spec_);
        }
        if (faults_.path_gains.rows() != spec_.c_out ||
            faults_.path_gains.cols() != spec_.delayed_rows()) {
            throw DimensionError("path gains must be C_O x (C_I * Q) = " +
                                 std::to_string(spec_.c_out) + " x " +
                                 std::to_string(spec_.delayed_rows()));
        }
        if (!(faults_.full_scale > 0.0)) {
            throw InvalidSpecError("full scale must be positive");
        }
        if (faults_.adc_bits < 0 || faults_.adc_bits > 48) {
            throw InvalidSpecError("ADC bit depth must be in [0, 48]");
        }
    }

    [[nodiscard]] const ConvLayerSpec& spec() const { return spec_; }
    [[nodiscard]] const AnalogFaultModel& faults() const { return faults_; }

    [[nodiscard]] PhotonicConvLayer without_noise() const
    {
        AnalogFaultModel f = faults_;
        f.neop_dbc = -std::numeric_limits<double>::infinity();
        return PhotonicConvLayer(spec_, std::move(f));
    }

    [[nodiscard]] PhotonicForward forward(const ImageTensor& images,
                                          const WeightProgramming& programming,
                                          std::uint64_t seed, ForwardOptions options = {}) const
    {
        check_programming(programming);
        check_intensities(images);
        const DelayedMatrix delayed = build_delayed_matrix(images, spec_);
        const Eigen::MatrixXd effective = faults_.path_gains.cwiseProduct(programming.settings);
        const double sigma_n = faults_.noise_sigma();
        const bool per_branch =
            options.keep_branch_traces || faults_.sampling == NoiseSampling::per_branch;
        if (options.keep_branch_traces && faults_.sampling == NoiseSampling::aggregated &&
            faults_.noisy()) {
            throw InvalidSpecError("branch traces need per-branch noise sampling");
        }

        Rng rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        const int q_count = spec_.taps();
        const Eigen::Index columns = delayed.values.cols();

        PhotonicForward result;
        Eigen::MatrixXd summed;
        if (per_branch) {
            summed = Eigen::MatrixXd::Zero(spec_.c_out, columns);
            for (int q = 0; q < q_count; ++q) {
                const auto taps = Eigen::seqN(q, spec_.c_in, q_count);
                const Eigen::MatrixXd w_q = effective(Eigen::all, taps);
                const Eigen::MatrixXd x_q = delayed.values(taps, Eigen::all);
                Eigen::MatrixXd branch = w_q * x_q;
                if (sigma_n > 0.0) {
                    for (Eigen::Index t = 0; t < columns; ++t) {
                        for (Eigen::Index v = 0; v < branch.rows(); ++v) {
                            branch(v, t) += sigma_n * normal(rng);
                        }
                    }
                }
                summed += branch;
                if (options.keep_branch_traces) {
                    result.branch_traces.push_back(std::move(branch));
                }
            }
        } else {
            summed.noalias() = effective * delayed.values;
        }

        const int out = spec_.output_width();
        const double summed_sigma = sigma_n * std::sqrt(static_cast<double>(q_count));
        result.outputs = ImageTensor(spec_.c_out, out);
        for (int m = 0; m < out; ++m) {
            for (int n = 0; n < out; ++n) {
                const Eigen::Index t = delayed.column_of(serial_index(m, n, spec_.image_width));
                for (int v = 0; v < spec_.c_out; ++v) {
                    double reading = summed(v, t);
                    if (!per_branch && summed_sigma > 0.0) {
                        reading += summed_sigma * normal(rng);
                    }
                    result.outputs(v, m, n) = programming.rescale(v) * quantize(reading);
                }
            }
        }
        return result;
    }

    // Detected response of path (u, q, v) with that ring set to 1, all others
    // to 0, and an all-ones input, averaged over `repeats` readings of one
    // valid time step. An ideal path responds with exactly 1.
    [[nodiscard]] double probe(int u, int q, int v, int repeats, std::uint64_t seed) const
    {
        if (u < 0 || u >= spec_.c_in || q < 0 || q >= spec_.taps() || v < 0 || v >= spec_.c_out) {
            throw DimensionError("probe: path index out of range");
        }
        if (repeats < 1) {
            throw InvalidSpecError("probe: repeats must be >= 1");
        }
        const double signal = faults_.path_gains(v, static_cast<Eigen::Index>(u) * spec_.taps() + q);
        const double sigma_n = faults_.noise_sigma();
        if (sigma_n == 0.0) {
            return quantize(signal);
        }
        Rng rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        const int draws = faults_.sampling == NoiseSampling::per_branch ? spec_.taps() : 1;
        const double draw_sigma =
            faults_.sampling == NoiseSampling::per_branch
                ? sigma_n
                : sigma_n * std::sqrt(static_cast<double>(spec_.taps()));
        double total = 0.0;
        for (int r = 0; r < repeats; ++r) {
            double reading = signal;
            for (int k = 0; k < draws; ++k) {
                reading += draw_sigma * normal(rng);
            }
            total += quantize(reading);
        }
        return total / repeats;
    }

private:
    void check_programming(const WeightProgramming& p) const
    {
        if (p.settings.rows() != spec_.c_out || p.settings.cols() != spec_.delayed_rows()) {
            throw DimensionError("programming: settings are " + std::to_string(p.settings.rows()) +
                                 " x " + std::to_string(p.settings.cols()) + ", layer needs " +
                                 std::to_string(spec_.c_out) + " x " +
                                 std::to_string(spec_.delayed_rows()));
        }
        if (p.rescale.size() != spec_.c_out) {
            throw DimensionError("programming: need one rescale factor per output channel");
        }
        if (!(p.rescale.array() > 0.0).all()) {
            throw InvalidSpecError("programming: rescale factors must be positive");
        }
    }

    static void check_intensities(const ImageTensor& images)
    {
        for (double x : images.values()) {
            if (!(x >= 0.0) || !std::isfinite(x)) {
                throw EncodingError("optical input must be a finite non-negative intensity, got " +
                                    std::to_string(x));
            }
        }
    }

    [[nodiscard]] double quantize(double reading) const
    {
        if (faults_.adc_bits == 0) {
            return reading;
        }
        const double range = faults_.full_scale * spec_.delayed_rows();
        const double levels = std::ldexp(1.0, faults_.adc_bits) - 1.0;
        const double step = 2.0 * range / levels;
        const double clipped = std::clamp(reading, -range, range);
        return -range + step * std::round((clipped + range) / step);
    }

    ConvLayerSpec spec_;
    AnalogFaultModel faults_;
};

inline PhotonicForward photonic_conv_forward(const ImageTensor& images,
                                             const WeightProgramming& programming,
                                             const ConvLayerSpec& spec,
                                             const AnalogFaultModel& faults,
                                             ForwardOptions options = {})
{
    return PhotonicConvLayer(spec, faults).forward(images, programming, faults.seed, options);
}

// Imbalance seen by one-hot noiseless probes: 10 log10(max/min) over paths.
inline double measure_imbalance(const PhotonicConvLayer& layer)
{
    const PhotonicConvLayer quiet = layer.without_noise();
    const auto& spec = layer.spec();
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int v = 0; v < spec.c_out; ++v) {
        for (int u = 0; u < spec.c_in; ++u) {
            for (int q = 0; q < spec.taps(); ++q) {
                const double r = quiet.probe(u, q, v, 1, 0);
                if (!(r > 0.0)) {
                    throw DegenerateHardwareError("path (u=" + std::to_string(u) + ", q=" +
                                                  std::to_string(q) + ", v=" + std::to_string(v) +
                                                  ") has non-positive response");
                }
                lo = std::min(lo, r);
                hi = std::max(hi, r);
            }
        }
    }
    return 10.0 * std::log10(hi / lo);
}

inline WeightProgramming apply_calibration(const WeightProgramming& programming,
                                           const CalibrationTable& table)
{
    if (table.gains.rows() != programming.settings.rows() ||
        table.gains.cols() != programming.settings.cols()) {
        throw DimensionError("calibration table does not match the programming shape");
    }
    if (!(table.gains.array() > 0.0).all()) {
        throw InfeasibleDesignError("calibration: every estimated gain must be positive");
    }
    WeightProgramming out = programming;
    out.settings = programming.settings.cwiseQuotient(table.gains);
    detail::normalize_rows(out.settings, out.rescale);
    return out;
}

// Estimates every path gain from one-hot probes, then checks the result with a
// noiseless all-ones run: residual is the largest relative deviation of the
// calibrated output from the ideal one.
inline CalibrationTable calibrate(const PhotonicConvLayer& layer, int repeats,
                                  std::uint64_t seed)
{
    const auto& spec = layer.spec();
    CalibrationTable table;
    table.repeats = repeats;
    table.gains = Eigen::MatrixXd(spec.c_out, spec.delayed_rows());
    std::uint64_t stream = 0;
    for (int v = 0; v < spec.c_out; ++v) {
        for (int u = 0; u < spec.c_in; ++u) {
            for (int q = 0; q < spec.taps(); ++q) {
                const double r = layer.probe(u, q, v, repeats, derive_seed(seed, stream++));
                if (!(r > 0.0)) {
                    throw DegenerateHardwareError("calibration probe of path (u=" +
                                                  std::to_string(u) + ", q=" + std::to_string(q) +
                                                  ", v=" + std::to_string(v) +
                                                  ") measured a non-positive response");
                }
                table.gains(v, static_cast<Eigen::Index>(u) * spec.taps() + q) = r;
                ++table.probe_count;
            }
        }
    }

    WeightProgramming ones;
    ones.c_in = spec.c_in;
    ones.sigma = spec.sigma;
    ones.settings = Eigen::MatrixXd::Ones(spec.c_out, spec.delayed_rows());
    ones.rescale = Eigen::VectorXd::Ones(spec.c_out);
    const WeightProgramming compensated = apply_calibration(ones, table);
    const ImageTensor lit(spec.c_in, spec.image_width, 1.0);
    const ImageTensor measured = layer.without_noise().forward(lit, compensated, 0).outputs;
    const double ideal = static_cast<double>(spec.delayed_rows());
    for (double y : measured.values()) {
        table.residual = std::max(table.residual, std::abs(y - ideal) / ideal);
    }
    return table;
}

}  // namespace ipcnn::photonic
