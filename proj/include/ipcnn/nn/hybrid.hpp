#pragma once

// Inference with the convolutional layers executed on the photonic simulator
// and everything else digital, plus the Monte Carlo sweeps built on it.

#include "ipcnn/nn/network.hpp"
#include "ipcnn/parallel.hpp"
#include "ipcnn/photonic_sim.hpp"
#include "ipcnn/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace ipcnn::nn {

struct HybridFaults {
    double neop_dbc = -std::numeric_limits<double>::infinity();
    double imbalance_db = 0.0;
    bool calibrate = false;
    int calibration_repeats = 64;
    std::uint64_t seed = 0;
    double full_scale = 1.0;
    photonic::NoiseSampling sampling = photonic::NoiseSampling::aggregated;
    int adc_bits = 0;

    [[nodiscard]] static HybridFaults disabled() { return {}; }
};

struct InferenceReport {
    double accuracy = 0.0;
    int correct = 0;
    int total = 0;
    std::vector<std::array<int, 10>> confusion;  // [true][predicted]
    std::vector<int> predictions;
    HybridFaults faults;
    bool hybrid = false;
    std::uint64_t model_hash = 0;
};

inline constexpr int inference_chunk = 250;

namespace detail {

inline InferenceReport score(const std::vector<int>& predictions, const Dataset& data, int classes)
{
    InferenceReport r;
    r.total = data.size();
    r.predictions = predictions;
    r.confusion.assign(static_cast<std::size_t>(classes), {});
    for (int i = 0; i < r.total; ++i) {
        const int truth = data.labels[static_cast<std::size_t>(i)];
        const int guess = predictions[static_cast<std::size_t>(i)];
        if (truth >= 0 && truth < classes && guess >= 0 && guess < 10) {
            ++r.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(guess)];
        }
        r.correct += truth == guess ? 1 : 0;
    }
    r.accuracy = r.total > 0 ? static_cast<double>(r.correct) / r.total : 0.0;
    return r;
}

template <typename Logits>
std::vector<int> predict_all(const Dataset& data, Logits&& logits_of)
{
    std::vector<int> predictions;
    predictions.reserve(static_cast<std::size_t>(data.size()));
    for (int first = 0; first < data.size(); first += inference_chunk) {
        const int count = std::min(inference_chunk, data.size() - first);
        const auto chunk = argmax_columns(logits_of(make_batch(data, first, count), first));
        predictions.insert(predictions.end(), chunk.begin(), chunk.end());
    }
    return predictions;
}

}  // namespace detail

inline InferenceReport infer_digital(const NetworkModel& model, const Dataset& data)
{
    auto predictions =
        detail::predict_all(data, [&](const Batch& b, int) { return model.logits(b); });
    InferenceReport r = detail::score(predictions, data, model.shape().classes);
    r.model_hash = model.hash();
    return r;
}

// One simulated conv layer, programmed and (optionally) calibrated.
struct PhotonicStage {
    ConvLayerSpec spec;
    std::optional<photonic::PhotonicConvLayer> layer;
    photonic::WeightProgramming programming;
};

inline PhotonicStage build_stage(const Conv2D& conv, int input_width, int layer_index,
                                 const HybridFaults& faults)
{
    PhotonicStage stage;
    stage.spec = ConvLayerSpec{conv.c_in(), conv.c_out(), conv.sigma(), input_width};
    photonic::AnalogFaultModel model;
    model.neop_dbc = faults.neop_dbc;
    model.imbalance_db = faults.imbalance_db;
    model.full_scale = faults.full_scale;
    model.sampling = faults.sampling;
    model.adc_bits = faults.adc_bits;
    model.seed = derive_seed(faults.seed, static_cast<std::uint64_t>(layer_index));
    model.path_gains = photonic::sample_imbalance(stage.spec, faults.imbalance_db,
                                                  derive_seed(faults.seed, 100 + layer_index));
    stage.layer.emplace(stage.spec, model);
    stage.programming =
        photonic::program_weights(kernel_tensor(conv.weights, conv.c_in(), conv.sigma()));
    if (faults.calibrate) {
        const auto table = photonic::calibrate(*stage.layer, faults.calibration_repeats,
                                               derive_seed(faults.seed, 200 + layer_index));
        stage.programming = photonic::apply_calibration(stage.programming, table);
    }
    return stage;
}

// Runs one conv layer of a batch through the simulator. Each sample is scaled
// into the modulators' [0, 1] range by its peak value and scaled back after
// detection.
inline Batch photonic_conv(const PhotonicStage& stage, const Batch& in, std::uint64_t seed,
                           int first_sample)
{
    const ConvLayerSpec& spec = stage.spec;
    const int out_w = spec.output_width();
    Batch y(spec.c_out, out_w, out_w, in.size);
    ImageTensor image(spec.c_in, spec.image_width);
    for (int b = 0; b < in.size; ++b) {
        double peak = 0.0;
        for (int u = 0; u < spec.c_in; ++u) {
            for (int m = 0; m < spec.image_width; ++m) {
                for (int n = 0; n < spec.image_width; ++n) {
                    const double x = in.at(u, b, m, n);
                    image(u, m, n) = x;
                    peak = std::max(peak, x);
                }
            }
        }
        const double scale = peak > 0.0 ? peak : 1.0;
        if (peak > 0.0) {
            for (double& x : image.values()) {
                x /= scale;
            }
        }
        const auto sample_seed =
            derive_seed(seed, static_cast<std::uint64_t>(first_sample) + static_cast<std::uint64_t>(b));
        const auto result = stage.layer->forward(image, stage.programming, sample_seed);
        for (int v = 0; v < spec.c_out; ++v) {
            for (int m = 0; m < out_w; ++m) {
                for (int n = 0; n < out_w; ++n) {
                    y.at(v, b, m, n) = scale * result.outputs(v, m, n);
                }
            }
        }
    }
    return y;
}

inline InferenceReport infer_hybrid(const NetworkModel& model, const Dataset& data,
                                    const HybridFaults& faults)
{
    const auto& shape = model.shape();
    const std::array<PhotonicStage, 2> stages{
        build_stage(model.conv1, shape.input_width, 0, faults),
        build_stage(model.conv2, shape.pool1_out(), 1, faults)};

    auto predictions = detail::predict_all(data, [&](const Batch& b, int first) {
        return model.logits(b, [&](int layer, const Conv2D&, const Batch& in) {
            const auto& stage = stages[static_cast<std::size_t>(layer)];
            return photonic_conv(stage, in, stage.layer->faults().seed, first);
        });
    });
    InferenceReport r = detail::score(predictions, data, shape.classes);
    r.faults = faults;
    r.hybrid = true;
    r.model_hash = model.hash();
    return r;
}

struct LevelStats {
    double level = 0.0;
    int samples = 0;
    double mean = 0.0;
    double stddev = 0.0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

// Linear-interpolated quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double p)
{
    if (sorted.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline LevelStats summarize(double level, std::vector<double> values)
{
    LevelStats s;
    s.level = level;
    s.samples = static_cast<int>(values.size());
    if (values.empty()) {
        return s;
    }
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    s.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) {
        sq += (v - s.mean) * (v - s.mean);
    }
    s.stddev = values.size() > 1 ? std::sqrt(sq / static_cast<double>(values.size() - 1)) : 0.0;
    s.min = values.front();
    s.max = values.back();
    s.q1 = quantile_sorted(values, 0.25);
    s.median = quantile_sorted(values, 0.5);
    s.q3 = quantile_sorted(values, 0.75);
    return s;
}

struct SweepPoint {
    double level = 0.0;
    int trial = 0;
    std::uint64_t seed = 0;
    InferenceReport report;
};

struct SweepResult {
    std::vector<SweepPoint> points;  // sorted by (level index, trial)
    std::vector<LevelStats> levels;
};

struct SweepOptions {
    std::uint64_t base_seed = 0;
    int threads = 1;
    HybridFaults base;  // noise/imbalance fields are overwritten per point
};

namespace detail {

template <typename MakeFaults>
SweepResult run_sweep(const NetworkModel& model, const Dataset& data,
                      const std::vector<double>& levels, int trials, int threads,
                      MakeFaults&& make_faults)
{
    if (trials < 1) {
        throw InvalidSpecError("sweep: trials must be >= 1");
    }
    SweepResult result;
    result.points.resize(levels.size() * static_cast<std::size_t>(trials));
    parallel_for(result.points.size(), threads, [&](std::size_t i) {
        const std::size_t level_index = i / static_cast<std::size_t>(trials);
        const int trial = static_cast<int>(i % static_cast<std::size_t>(trials));
        SweepPoint p;
        p.level = levels[level_index];
        p.trial = trial;
        const HybridFaults f = make_faults(p.level, trial);
        p.seed = f.seed;
        p.report = infer_hybrid(model, data, f);
        result.points[i] = std::move(p);
    });
    for (std::size_t l = 0; l < levels.size(); ++l) {
        std::vector<double> acc;
        for (int t = 0; t < trials; ++t) {
            acc.push_back(result.points[l * static_cast<std::size_t>(trials) + static_cast<std::size_t>(t)]
                              .report.accuracy);
        }
        result.levels.push_back(summarize(levels[l], std::move(acc)));
    }
    return result;
}

}  // namespace detail

// Accuracy versus relative NEOP (dBc); one report per (level, seed) with seed
// base_seed + seed_index.
inline SweepResult sweep_noise(const NetworkModel& model, const Dataset& data,
                               const std::vector<double>& levels_dbc, int seeds,
                               const SweepOptions& options)
{
    if (!std::is_sorted(levels_dbc.begin(), levels_dbc.end())) {
        throw InvalidSpecError("sweep_noise: levels must be sorted ascending");
    }
    return detail::run_sweep(model, data, levels_dbc, seeds, options.threads,
                             [&](double level, int trial) {
                                 HybridFaults f = options.base;
                                 f.neop_dbc = level;
                                 f.imbalance_db = 0.0;
                                 f.seed = options.base_seed + static_cast<std::uint64_t>(trial);
                                 return f;
                             });
}

// Accuracy versus imbalance level (dB) at a fixed noise level; each trial draws
// fresh path gains from seed base_seed + trial.
inline SweepResult sweep_imbalance(const NetworkModel& model, const Dataset& data,
                                   const std::vector<double>& levels_db, int trials,
                                   bool calibrate, double neop_dbc, const SweepOptions& options)
{
    return detail::run_sweep(model, data, levels_db, trials, options.threads,
                             [&](double level, int trial) {
                                 HybridFaults f = options.base;
                                 f.neop_dbc = neop_dbc;
                                 f.imbalance_db = level;
                                 f.calibrate = calibrate;
                                 f.seed = options.base_seed + static_cast<std::uint64_t>(trial);
                                 return f;
                             });
}

}  // namespace ipcnn::nn
