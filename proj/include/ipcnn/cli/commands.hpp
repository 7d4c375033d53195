#pragma once

// Subcommands of the ipcnn tool. Each one writes its CSV/JSON files under the
// output directory and returns a process exit code. Nothing written depends on
// wall-clock time or thread count, so identical configs give identical bytes.

#include "ipcnn/cli/config.hpp"
#include "ipcnn/cli/output.hpp"
#include "ipcnn/conv_math.hpp"
#include "ipcnn/design_space.hpp"
#include "ipcnn/nn/checkpoint.hpp"
#include "ipcnn/nn/hybrid.hpp"
#include "ipcnn/nn/mnist.hpp"
#include "ipcnn/nn/train.hpp"
#include "ipcnn/optics.hpp"
#include "ipcnn/random.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace ipcnn::cli {

inline constexpr std::string_view tool_version = "1.0.0";
inline constexpr int output_schema_version = 1;

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int config = 2;
inline constexpr int io = 3;
}  // namespace exit_code

struct Context {
    ExperimentConfig config;
    std::filesystem::path out_dir = ".";
    int threads = 1;
    std::ostream* log = &std::cerr;
};

struct CommandResult {
    int exit = exit_code::ok;
    std::vector<std::string> outputs;  // file names relative to out_dir
};

namespace detail {

class Outputs {
public:
    explicit Outputs(const Context& ctx) : ctx_(ctx) {}

    void csv(const std::string& name, const CsvTable& t)
    {
        write_csv(ctx_.out_dir / name, t);
        names_.insert(name);
    }

    void json_file(const std::string& name, const nlohmann::json& j)
    {
        write_json(ctx_.out_dir / name, j);
        names_.insert(name);
    }

    void note(const std::string& name) { names_.insert(name); }

    // Summary record: provenance plus results, with the list of every file
    // this command wrote (itself included).
    CommandResult finish(const std::string& command, nlohmann::json results, int exit = exit_code::ok)
    {
        const std::string name = command + ".json";
        names_.insert(name);
        nlohmann::json record{
            {"schema_version", output_schema_version},
            {"tool_version", std::string(tool_version)},
            {"command", command},
            {"config_hash", config_hash(ctx_.config)},
            {"seed", ctx_.config.seed},
            {"config", to_json(ctx_.config)},
            {"results", std::move(results)},
            {"outputs", std::vector<std::string>(names_.begin(), names_.end())},
        };
        write_json(ctx_.out_dir / name, record);
        return {exit, {names_.begin(), names_.end()}};
    }

private:
    const Context& ctx_;
    std::set<std::string> names_;
};

inline std::filesystem::path resolve(const Context& ctx, const std::filesystem::path& p)
{
    return p.is_absolute() ? p : ctx.out_dir / p;
}

inline std::filesystem::path mnist_dir(const Context& ctx)
{
    std::filesystem::path dir = ctx.config.mnist_dir;
    if (dir.empty()) {
        dir = nn::default_mnist_dir();
    }
    if (dir.empty()) {
        throw IoError("no MNIST directory: set mnist_dir in the config or IPCNN_MNIST_DIR");
    }
    return dir;
}

inline nn::Dataset test_subset(const Context& ctx, int start, int size)
{
    const auto files = nn::MnistFiles::in_directory(mnist_dir(ctx));
    const nn::Dataset test = nn::load_idx(files.test_images, files.test_labels);
    if (start + size > test.size()) {
        throw ConfigError("subset [" + std::to_string(start) + ", " + std::to_string(start + size) +
                          ") exceeds the " + std::to_string(test.size()) + "-sample test set");
    }
    return test.slice(start, size);
}

inline nn::NetworkModel load_model(const Context& ctx)
{
    return nn::load_checkpoint(resolve(ctx, ctx.config.checkpoint));
}

inline nn::HybridFaults base_faults(const ExperimentConfig& c)
{
    nn::HybridFaults f;
    f.full_scale = c.analog.full_scale;
    f.sampling = c.analog.sampling;
    f.adc_bits = c.analog.adc_bits;
    f.calibration_repeats = c.analog.calibration_repeats;
    f.seed = c.seed;
    return f;
}

inline double level_or_clean(const std::optional<double>& dbc)
{
    return dbc.value_or(-std::numeric_limits<double>::infinity());
}

inline nlohmann::json report_json(const nn::InferenceReport& r)
{
    return {{"accuracy", r.accuracy}, {"correct", r.correct}, {"total", r.total}};
}

inline nlohmann::json stats_json(const nn::LevelStats& s)
{
    return {{"level", s.level}, {"trials", s.samples}, {"mean", s.mean},   {"stddev", s.stddev},
            {"min", s.min},     {"q1", s.q1},          {"median", s.median}, {"q3", s.q3},
            {"max", s.max}};
}

inline CsvTable stats_table(const std::string& level_name, const std::vector<nn::LevelStats>& levels)
{
    CsvTable t;
    t.header = {level_name, "trials", "mean", "stddev", "min", "q1", "median", "q3", "max"};
    for (const auto& s : levels) {
        t.add({format_number(s.level), format_number(s.samples), format_number(s.mean),
               format_number(s.stddev), format_number(s.min), format_number(s.q1),
               format_number(s.median), format_number(s.q3), format_number(s.max)});
    }
    return t;
}

inline std::uint64_t digest_doubles(std::uint64_t h, std::span<const double> values)
{
    for (double v : values) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof v);
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace detail

// Randomized check that the delay-line lowering reproduces im2col and direct
// convolution. `corrupt_offset` (test mode) shifts one tap of the offset table
// by one cycle so the harness can show it reports the first bad entry.
inline CommandResult cmd_verify_equivalence(const Context& ctx, std::optional<int> corrupt_offset = {})
{
    const auto& v = ctx.config.verify;
    detail::Outputs out(ctx);
    std::uint64_t digest = 0xcbf29ce484222325ULL;
    double worst = 0.0;
    int failed = 0;
    nlohmann::json first_failure;

    for (int i = 0; i < v.instances; ++i) {
        Rng rng(derive_seed(ctx.config.seed, static_cast<std::uint64_t>(i)));
        std::uniform_int_distribution<int> channels(1, v.max_channels);
        std::uniform_int_distribution<std::size_t> pick(0, v.sigmas.size() - 1);
        std::uniform_real_distribution<double> intensity(0.0, 1.0);
        std::uniform_real_distribution<double> weight(-1.0, 1.0);
        ConvLayerSpec spec;
        spec.c_in = channels(rng);
        spec.c_out = channels(rng);
        spec.sigma = v.sigmas[pick(rng)];
        spec.image_width = std::uniform_int_distribution<int>(spec.sigma, v.max_width)(rng);

        ImageTensor images(spec.c_in, spec.image_width);
        for (double& x : images.values()) {
            x = intensity(rng);
        }
        KernelTensor kernels(spec.c_in, spec.c_out, spec.sigma);
        for (double& w : kernels.values()) {
            w = weight(rng);
        }

        auto offsets = delay_offsets(spec.sigma, spec.image_width);
        if (corrupt_offset) {
            offsets[static_cast<std::size_t>(*corrupt_offset) % offsets.size()] += 1;
        }
        const DelayedMatrix delayed = build_delayed_matrix(images, spec, offsets);
        const Eigen::MatrixXd lowered = delayed.valid_submatrix();
        const Eigen::MatrixXd patches = im2col(images, spec);
        const ImageTensor got = gemm_conv(weight_matrix(kernels), delayed).valid_outputs();
        const ImageTensor want = conv2d_reference(images, kernels, spec);
        digest = detail::digest_doubles(digest, got.values());

        std::optional<std::pair<Eigen::Index, Eigen::Index>> mismatch;
        for (Eigen::Index r = 0; r < patches.rows() && !mismatch; ++r) {
            for (Eigen::Index c = 0; c < patches.cols(); ++c) {
                if (lowered(r, c) != patches(r, c)) {
                    mismatch = std::pair{r, c};
                    break;
                }
            }
        }
        double err = 0.0;
        for (std::size_t k = 0; k < got.size(); ++k) {
            err = std::max(err, std::abs(got.values()[k] - want.values()[k]) /
                                    std::max(1.0, std::abs(want.values()[k])));
        }
        worst = std::max(worst, err);
        if (mismatch || err > v.tolerance) {
            ++failed;
            if (first_failure.is_null()) {
                first_failure = {
                    {"instance", i},
                    {"c_in", spec.c_in},
                    {"c_out", spec.c_out},
                    {"sigma", spec.sigma},
                    {"image_width", spec.image_width},
                    {"max_relative_error", err},
                };
                if (mismatch) {
                    const auto [r, c] = *mismatch;
                    first_failure["row"] = r;
                    first_failure["column"] = c;
                    first_failure["expected"] = patches(r, c);
                    first_failure["got"] = lowered(r, c);
                    *ctx.log << "verify-equivalence: instance " << i << " (C_I=" << spec.c_in
                             << ", C_O=" << spec.c_out << ", sigma=" << spec.sigma
                             << ", L=" << spec.image_width << ") first mismatch at (row " << r
                             << ", column " << c << "): expected " << patches(r, c) << ", got "
                             << lowered(r, c) << "\n";
                } else {
                    *ctx.log << "verify-equivalence: instance " << i
                             << " output error " << err << " exceeds tolerance\n";
                }
            }
        }
    }

    const bool pass = failed == 0;
    *ctx.log << "verify-equivalence: " << (pass ? "PASS" : "FAIL") << ", " << v.instances
             << " instances, " << failed << " failed, digest " << hex64(digest) << "\n";
    nlohmann::json results{
        {"pass", pass},
        {"instances", v.instances},
        {"failed", failed},
        {"max_relative_error", worst},
        {"digest", hex64(digest)},
        {"corrupt_offset", corrupt_offset ? nlohmann::json(*corrupt_offset) : nlohmann::json()},
        {"first_failure", first_failure},
    };
    return out.finish("verify_equivalence", std::move(results),
                      pass ? exit_code::ok : exit_code::failure);
}

inline CommandResult cmd_train(const Context& ctx)
{
    detail::Outputs out(ctx);
    const auto data = nn::load_mnist(nn::MnistFiles::in_directory(detail::mnist_dir(ctx)));
    nn::TrainingOptions options = ctx.config.training;
    options.seed = ctx.config.seed;

    CsvTable epochs;
    epochs.header = {"epoch", "mean_loss", "train_accuracy"};
    nn::NetworkModel model = nn::train(nn::NetworkModel{}, data.train, options,
                                       [&](const nn::EpochSummary& e) {
                                           *ctx.log << "epoch " << e.epoch << ": loss " << e.mean_loss
                                                    << ", train accuracy " << e.train_accuracy << "\n";
                                           epochs.add({format_number(e.epoch), format_number(e.mean_loss),
                                                       format_number(e.train_accuracy)});
                                       });
    const auto test = nn::infer_digital(model, data.test);
    model.metadata.test_accuracy = test.accuracy;
    const auto path = detail::resolve(ctx, ctx.config.checkpoint);
    nn::save_checkpoint(model, path);
    *ctx.log << "test accuracy " << test.accuracy << ", checkpoint " << path.string() << "\n";

    out.csv("train_epochs.csv", epochs);
    if (!ctx.config.checkpoint.empty() && !std::filesystem::path(ctx.config.checkpoint).is_absolute()) {
        out.note(ctx.config.checkpoint);
    }
    nlohmann::json results{
        {"test", detail::report_json(test)},
        {"final_train_loss", model.metadata.final_train_loss},
        {"model_hash", hex64(model.hash())},
        {"checkpoint", ctx.config.checkpoint},
    };
    return out.finish("train", std::move(results));
}

inline CommandResult cmd_infer(const Context& ctx)
{
    detail::Outputs out(ctx);
    const auto& ic = ctx.config.infer;
    const nn::NetworkModel model = detail::load_model(ctx);
    const nn::Dataset data = detail::test_subset(ctx, ic.subset_start, ic.subset_size);

    nn::HybridFaults faults = detail::base_faults(ctx.config);
    faults.neop_dbc = detail::level_or_clean(ic.neop_dbc);
    faults.imbalance_db = ic.imbalance_db;
    faults.calibrate = ic.calibrate;

    const auto digital = nn::infer_digital(model, data);
    const auto hybrid = nn::infer_hybrid(model, data, faults);
    int agree = 0;
    CsvTable predictions;
    predictions.header = {"index", "label", "digital", "hybrid"};
    for (int i = 0; i < data.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        agree += digital.predictions[k] == hybrid.predictions[k] ? 1 : 0;
        predictions.add({format_number(ic.subset_start + i), format_number(data.labels[k]),
                         format_number(digital.predictions[k]), format_number(hybrid.predictions[k])});
    }
    out.csv("infer_predictions.csv", predictions);

    CsvTable confusion;
    confusion.header = {"label"};
    for (int p = 0; p < 10; ++p) {
        confusion.header.push_back("predicted_" + std::to_string(p));
    }
    for (std::size_t t = 0; t < hybrid.confusion.size(); ++t) {
        std::vector<std::string> row{format_number(t)};
        for (int c : hybrid.confusion[t]) {
            row.push_back(format_number(c));
        }
        confusion.add(std::move(row));
    }
    out.csv("infer_confusion.csv", confusion);

    // With every fault disabled the simulator must reproduce the digital
    // argmax on every sample.
    const bool ideal = !std::isfinite(faults.neop_dbc) && faults.imbalance_db == 0.0 &&
                       faults.adc_bits == 0;
    const bool pass = !ideal || agree == data.size();
    *ctx.log << "infer: digital " << digital.accuracy << ", hybrid " << hybrid.accuracy << ", agreement "
             << agree << "/" << data.size() << "\n";
    nlohmann::json results{
        {"digital", detail::report_json(digital)},
        {"hybrid", detail::report_json(hybrid)},
        {"agreement", agree},
        {"faults_disabled", ideal},
        {"pass", pass},
        {"model_hash", hex64(model.hash())},
    };
    return out.finish("infer", std::move(results), pass ? exit_code::ok : exit_code::failure);
}

inline CommandResult cmd_sweep_noise(const Context& ctx)
{
    detail::Outputs out(ctx);
    const auto& sc = ctx.config.sweep_noise;
    const nn::NetworkModel model = detail::load_model(ctx);
    const nn::Dataset data = detail::test_subset(ctx, sc.subset_start, sc.subset_size);
    std::vector<double> levels;
    for (const auto& l : sc.levels_dbc) {
        levels.push_back(detail::level_or_clean(l));
    }
    nn::SweepOptions options;
    options.base_seed = ctx.config.seed;
    options.threads = ctx.threads;
    options.base = detail::base_faults(ctx.config);
    const auto sweep = nn::sweep_noise(model, data, levels, sc.seeds, options);
    const auto clean = nn::infer_digital(model, data);

    CsvTable rows;
    rows.header = {"level_dBc", "seed", "accuracy", "correct", "total"};
    for (const auto& p : sweep.points) {
        rows.add({format_number(p.level), format_number(p.seed), format_number(p.report.accuracy),
                  format_number(p.report.correct), format_number(p.report.total)});
    }
    out.csv("sweep_noise.csv", rows);
    out.csv("sweep_noise_summary.csv", detail::stats_table("level_dBc", sweep.levels));

    nlohmann::json levels_json = nlohmann::json::array();
    for (const auto& s : sweep.levels) {
        levels_json.push_back(detail::stats_json(s));
        *ctx.log << "level " << s.level << " dBc: mean accuracy " << s.mean << "\n";
    }
    nlohmann::json results{
        {"clean", detail::report_json(clean)},
        {"levels", levels_json},
        {"model_hash", hex64(model.hash())},
    };
    return out.finish("sweep_noise", std::move(results));
}

inline CommandResult cmd_sweep_imbalance(const Context& ctx)
{
    detail::Outputs out(ctx);
    const auto& sc = ctx.config.sweep_imbalance;
    const nn::NetworkModel model = detail::load_model(ctx);
    const nn::Dataset data = detail::test_subset(ctx, sc.subset_start, sc.subset_size);
    nn::SweepOptions options;
    options.base_seed = ctx.config.seed;
    options.threads = ctx.threads;
    options.base = detail::base_faults(ctx.config);
    const auto sweep = nn::sweep_imbalance(model, data, sc.levels_db, sc.trials, sc.calibrate,
                                           detail::level_or_clean(sc.neop_dbc), options);
    const auto clean = nn::infer_digital(model, data);

    CsvTable rows;
    rows.header = {"level_dB", "trial", "seed", "accuracy", "correct", "total"};
    for (const auto& p : sweep.points) {
        rows.add({format_number(p.level), format_number(p.trial), format_number(p.seed),
                  format_number(p.report.accuracy), format_number(p.report.correct),
                  format_number(p.report.total)});
    }
    out.csv("sweep_imbalance.csv", rows);
    out.csv("sweep_imbalance_summary.csv", detail::stats_table("level_dB", sweep.levels));

    nlohmann::json levels_json = nlohmann::json::array();
    for (const auto& s : sweep.levels) {
        levels_json.push_back(detail::stats_json(s));
        *ctx.log << "imbalance " << s.level << " dB: median accuracy " << s.median << "\n";
    }
    nlohmann::json results{
        {"clean", detail::report_json(clean)},
        {"calibrate", sc.calibrate},
        {"levels", levels_json},
        {"model_hash", hex64(model.hash())},
    };
    return out.finish("sweep_imbalance", std::move(results));
}

namespace detail {

struct EnergyTables {
    CsvTable budget;
    CsvTable efficiency;
    nlohmann::json summary;
};

inline EnergyTables energy_tables(const design::HardwareConfig& hw)
{
    EnergyTables t;
    t.budget.header = {"architecture", "component", "power_W", "ratio", "ratio_without_weighting"};
    t.efficiency.header = {"architecture", "weighting_mode", "mac_per_s", "total_W", "pJ_per_MAC"};
    t.summary = nlohmann::json::object();
    for (auto a : design::all_architectures) {
        const auto b = design::energy_budget(a, hw);
        const std::string name(design::to_string(a));
        nlohmann::json rows = nlohmann::json::object();
        for (const auto& row : b.rows()) {
            t.budget.add({name, std::string(row.name), format_number(row.power_w), format_number(row.ratio),
                          format_number(row.ratio_without_weighting)});
            rows[std::string(row.name)] = row.power_w;
        }
        nlohmann::json eff = nlohmann::json::object();
        for (auto mode : {design::WeightingMode::thermal, design::WeightingMode::capacitive}) {
            const double pj = design::efficiency_pj_per_mac(b, b.mac_per_s, mode);
            const double total = mode == design::WeightingMode::thermal ? b.total() : b.total_without_weighting();
            t.efficiency.add({name, std::string(design::to_string(mode)), format_number(b.mac_per_s),
                              format_number(total), format_number(pj)});
            eff[std::string(design::to_string(mode))] = pj;
        }
        t.summary[name] = {{"power_W", rows},
                           {"total_W", b.total()},
                           {"laser_optical_W", b.laser_optical_w},
                           {"mac_per_s", b.mac_per_s},
                           {"pJ_per_MAC", eff}};
    }
    return t;
}

}  // namespace detail

inline CommandResult cmd_energy(const Context& ctx)
{
    detail::Outputs out(ctx);
    auto t = detail::energy_tables(ctx.config.hardware);
    out.csv("energy_budget.csv", t.budget);
    out.csv("energy_efficiency.csv", t.efficiency);
    return out.finish("energy", std::move(t.summary));
}

inline CommandResult cmd_design_space(const Context& ctx)
{
    detail::Outputs out(ctx);
    const auto& hw = ctx.config.hardware;
    const auto& ds = ctx.config.design_space;
    const std::int64_t requested = static_cast<std::int64_t>(hw.c_out) * hw.taps();

    // Scale versus insertion loss and NEOP; infeasible cells are flagged.
    CsvTable scale;
    scale.header = {"neop_uW", "loss_dB", "scale", "feasible", "limiting_factor"};
    for (double neop : ds.scale_neop_uw) {
        for (double loss : ds.scale_loss_db.values()) {
            const auto r = design::max_scale(hw.power_cap_w, loss, neop * units::micro, hw.snr_target, requested);
            scale.add({format_number(neop), format_number(loss), format_number(r.scale),
                       r.feasible ? "1" : "0", std::string(design::to_string(r.limiting))});
        }
    }
    out.csv("design_scale.csv", scale);

    CsvTable speed;
    speed.header = {"delay_loss_dB_per_m", "modulation_rate_GHz", "mac_per_s", "lossless_mac_per_s",
                    "delay_line_m", "total_loss_dB", "scale", "effective_c_out", "feasible"};
    for (double loss : ds.speed_delay_loss_db_per_m) {
        for (double rate : ds.speed_rate_ghz.values()) {
            design::HardwareConfig c = hw;
            c.delay_line_loss_db_per_m = loss;
            c.modulation_rate_hz = rate * units::giga;
            const auto r = design::speed_or_zero(c);
            speed.add({format_number(loss), format_number(rate), format_number(r.mac_per_s),
                       format_number(r.lossless_mac_per_s), format_number(r.delay_line_length_m),
                       format_number(r.total_loss_db), format_number(r.scale),
                       format_number(r.effective_c_out), r.feasible ? "1" : "0"});
        }
    }
    out.csv("design_speed.csv", speed);

    auto energy = detail::energy_tables(hw);
    out.csv("energy_budget.csv", energy.budget);
    out.csv("energy_efficiency.csv", energy.efficiency);

    const auto marked = design::max_scale(hw.power_cap_w, 7.4, 6.3 * units::micro, hw.snr_target, requested);
    const auto headline = design::speed_or_zero(hw);
    nlohmann::json gammas = nlohmann::json::array();
    for (double area : ctx.config.mode_areas_um2) {
        optics::NonlinearityModel m = ctx.config.nonlinearity;
        m.mode_area_m2 = area * units::micro * units::micro;
        gammas.push_back({{"mode_area_um2", area}, {"gamma_per_W_per_m", optics::nonlinear_coefficient(m)}});
    }
    nlohmann::json results{
        {"scale_at_6.3uW_7.4dB", {{"scale", marked.scale}, {"feasible", marked.feasible}}},
        {"scale_at_config",
         {{"loss_dB", hw.wdm_to_pd_loss_db},
          {"scale", design::max_scale(hw.power_cap_w, hw.wdm_to_pd_loss_db, hw.neop_w, hw.snr_target,
                                      requested)
                        .scale}}},
        {"speed",
         {{"mac_per_s", headline.mac_per_s},
          {"feasible", headline.feasible},
          {"effective_c_out", headline.effective_c_out},
          {"delay_line_m", headline.delay_line_length_m}}},
        {"aggregate_neop_W", optics::aggregate_neop(ctx.config.noise)},
        {"nonlinear_coefficients", gammas},
        {"energy", energy.summary},
    };
    *ctx.log << "design-space: scale " << marked.scale << " at 6.3 uW / 7.4 dB, speed "
             << headline.mac_per_s / 1e12 << " TMAC/s\n";
    return out.finish("design_space", std::move(results));
}

}  // namespace ipcnn::cli
