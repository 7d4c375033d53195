// Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.
// Criteria 8, 9 and 11 need the MNIST IDX files (IPCNN_MNIST_DIR). The
// reference model is trained on the first run and cached at --checkpoint.

#include "ipcnn/cli/commands.hpp"
#include "ipcnn/nn/gradcheck.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

using namespace ipcnn;
namespace fs = std::filesystem;

namespace {

constexpr double equivalence_tolerance = 1e-12;
constexpr double equivalence_seconds = 10.0;
constexpr double neop_target_w = 6.3e-6;
constexpr double neop_tolerance = 0.02;
constexpr double headline_mac_per_s = 92.16e12;
constexpr double gamma_tolerance = 0.01;
constexpr double min_digital_accuracy = 0.975;
constexpr double max_training_seconds = 15.0 * 60.0;
// 1.5 percentage points, compared in whole samples to avoid rounding at the edge.
constexpr double max_noise_drop = 0.015;
constexpr double calibration_tolerance = 1e-9;
constexpr double gradient_tolerance = 1e-4;

int failures = 0;

void report(int id, bool pass, const std::string& detail)
{
    std::printf("criterion %2d %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    failures += pass ? 0 : 1;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

bool within(double got, double want, double rel) { return std::abs(got - want) <= rel * std::abs(want); }

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

cli::Context quiet(const fs::path& dir, cli::ExperimentConfig c)
{
    static std::ostringstream sink;
    cli::Context ctx;
    ctx.config = std::move(c);
    ctx.out_dir = dir;
    ctx.log = &sink;
    return ctx;
}

void criterion1(const fs::path& scratch)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto dir = scratch / "c1";
    const auto r = cli::cmd_verify_equivalence(quiet(dir, {}));
    const double dt = seconds_since(t0);
    const auto j = nlohmann::json::parse(slurp(dir / "verify_equivalence.json"))["results"];
    const int n = j["instances"];
    const double err = j["max_relative_error"];
    report(1, r.exit == 0 && n >= 200 && err <= equivalence_tolerance && dt < equivalence_seconds,
           fmt("%.0f instances, max rel error %.2e, %.2f s", n, err, dt));
}

void criterion2()
{
    const std::vector<std::int64_t> want{0, 1, 2, 6, 7, 8, 12, 13, 14};
    const auto offsets = delay_offsets(3, 6);
    const auto valid = valid_positions(ConvLayerSpec{1, 1, 3, 6});
    const auto count = std::count(valid.begin(), valid.end(), true);
    std::string shown;
    for (auto o : offsets) {
        shown += (shown.empty() ? "" : ",") + std::to_string(o);
    }
    report(2, offsets == want && count == 16,
           "offsets [" + shown + "], " + std::to_string(count) + " valid columns");
}

void criterion3()
{
    optics::NoiseBudget b;
    b.pd_noise_w_per_rthz = 30e-12;
    b.pd_responsivity_a_per_w = 0.9;
    b.tia_noise_a_per_rthz = 50e-12;
    b.bandwidth_hz = 10e9;
    const double neop = optics::aggregate_neop(b);
    report(3, within(neop, neop_target_w, neop_tolerance), fmt("aggregate NEOP %.4f uW", neop * 1e6));
}

void criterion4()
{
    const double cap = units::dbm_to_watts(20.0);
    const auto a = design::max_scale(cap, 7.4, 6.3e-6, 10.0, 288);
    const auto b = design::max_scale(cap, 6.4, 6.3e-6, 10.0, 288);
    report(4, a.scale == 288 && b.scale >= 288 && b.scale == 363,
           fmt("scale %.0f at 7.4 dB, %.0f at 6.4 dB", static_cast<double>(a.scale), static_cast<double>(b.scale)));
}

void criterion5()
{
    const design::HardwareConfig c;
    const auto r = design::speed(c);
    bool monotone = true;
    bool bounded = true;
    for (double loss : {0.0, 0.1, 0.5, 1.0, 2.0}) {
        double prev = 0.0;
        for (int k = 1; k <= 20; ++k) {
            design::HardwareConfig h = c;
            h.delay_line_loss_db_per_m = loss;
            h.modulation_rate_hz = 0.5e9 * k;
            const auto s = design::speed_or_zero(h);
            monotone = monotone && s.mac_per_s >= prev;
            bounded = bounded && s.mac_per_s <= s.lossless_mac_per_s;
            prev = s.mac_per_s;
        }
    }
    report(5, r.mac_per_s == headline_mac_per_s && monotone && bounded,
           fmt("%.4f TMAC/s, monotone %.0f, bounded %.0f", r.mac_per_s / 1e12, monotone, bounded));
}

void criterion6()
{
    using design::Architecture;
    const design::HardwareConfig c;
    const auto ip = design::energy_budget(Architecture::ipcnn, c);
    const auto bw = design::energy_budget(Architecture::bw, c);
    const auto coh = design::energy_budget(Architecture::coherent, c);
    const auto deap = design::energy_budget(Architecture::deap, c);
    const bool ipcnn_ok = within(ip.weighting_w, 359.4, 0.001) && within(ip.eo_w, 5.76, 0.001) &&
                          within(ip.tia_w, 0.63, 0.02) && within(ip.adc_w, 0.16, 0.001) &&
                          within(ip.lasers_w, 7.96, 0.05);
    const bool others_ok = within(bw.weighting_w, 39.93, 0.01) && within(coh.weighting_w, 359.4, 0.01) &&
                           within(coh.eo_w, 51.8, 0.01) && within(deap.weighting_w, 11.23, 0.01);
    const double cap = design::efficiency_pj_per_mac(ip, ip.mac_per_s, design::WeightingMode::capacitive);
    bool thermal_ok = true;
    double worst_thermal = 1e300;
    for (auto a : design::all_architectures) {
        const auto b = design::energy_budget(a, c);
        const double t = design::efficiency_pj_per_mac(b, b.mac_per_s, design::WeightingMode::thermal);
        worst_thermal = std::min(worst_thermal, t);
        thermal_ok = thermal_ok && t > design::electronic_reference_pj_per_mac;
    }
    report(6, ipcnn_ok && others_ok && cap >= 0.14 && cap <= 0.20 && thermal_ok,
           fmt("IPCNN lasers %.3f W, TIA %.3f W, capacitive %.3f pJ/MAC, best thermal %.2f pJ/MAC",
               ip.lasers_w, ip.tia_w, cap, worst_thermal));
}

void criterion7()
{
    optics::NonlinearityModel m;
    m.mode_area_m2 = 0.702e-12;
    const double a = optics::nonlinear_coefficient(m);
    m.mode_area_m2 = 1.599e-12;
    const double b = optics::nonlinear_coefficient(m);
    report(7, within(a, 2.77, gamma_tolerance) && within(b, 1.21, gamma_tolerance),
           fmt("gamma %.4f and %.4f rad/W/m", a, b));
}

void criterion10()
{
    double worst = 0.0;
    long checked = 0;
    const std::vector<nn::NetworkShape> shapes = [] {
        std::vector<nn::NetworkShape> v;
        for (auto [w, c1, c2, hidden, classes] :
             std::vector<std::array<int, 5>>{{10, 2, 2, 6, 3}, {12, 3, 2, 5, 4}, {11, 1, 3, 4, 2}}) {
            nn::NetworkShape s;
            s.input_width = w;
            s.conv1_channels = c1;
            s.conv2_channels = c2;
            s.hidden = hidden;
            s.classes = classes;
            v.push_back(s);
        }
        return v;
    }();
    std::uint64_t seed = 1;
    for (const auto& shape : shapes) {
        nn::NetworkModel model(shape);
        model.initialize(seed);
        Rng rng(seed++);
        std::normal_distribution<double> small(0.0, 0.1);
        std::uniform_real_distribution<double> pixel(0.0, 1.0);
        for (auto* b : model.bias_tensors()) {
            for (Eigen::Index i = 0; i < b->size(); ++i) {
                (*b)(i) = small(rng);
            }
        }
        nn::Batch x(1, shape.input_width, shape.input_width, 3);
        for (Eigen::Index i = 0; i < x.data.size(); ++i) {
            x.data(i) = pixel(rng);
        }
        std::vector<int> labels;
        for (int i = 0; i < 3; ++i) {
            labels.push_back(i % shape.classes);
        }
        const auto r = nn::check_gradients(model, x, labels);
        worst = std::max(worst, r.max_relative_error);
        checked += r.checked;
    }
    report(10, worst < gradient_tolerance,
           fmt("%.0f parameters, max relative error %.2e", static_cast<double>(checked), worst));
}

struct Reference {
    nn::NetworkModel model;
    double training_seconds = 0.0;
    bool cached = false;
};

Reference reference_model(const nn::MnistData& data, const fs::path& checkpoint)
{
    Reference ref;
    const fs::path timing = checkpoint.string() + ".seconds";
    if (fs::exists(checkpoint) && fs::exists(timing)) {
        ref.model = nn::load_checkpoint(checkpoint);
        std::ifstream(timing) >> ref.training_seconds;
        ref.cached = true;
        return ref;
    }
    const auto t0 = std::chrono::steady_clock::now();
    ref.model = nn::train(nn::NetworkModel{}, data.train, nn::TrainingOptions{});
    ref.training_seconds = seconds_since(t0);
    ref.model.metadata.test_accuracy = nn::infer_digital(ref.model, data.test).accuracy;
    nn::save_checkpoint(ref.model, checkpoint);
    std::ofstream(timing) << ref.training_seconds << "\n";
    return ref;
}

void criterion8(const nn::MnistData& data, const Reference& ref)
{
    const auto digital = nn::infer_digital(ref.model, data.test);
    const auto hybrid = nn::infer_hybrid(ref.model, data.test, nn::HybridFaults::disabled());
    const bool agree = digital.predictions == hybrid.predictions;

    const nn::Dataset subset = data.test.slice(0, 1000);
    const double clean = nn::infer_digital(ref.model, subset).accuracy;
    nn::SweepOptions options;
    options.base_seed = 1;
    const auto sweep = nn::sweep_noise(ref.model, subset, {-10.0, -3.0}, 5, options);
    const double at10 = sweep.levels[0].mean;
    const double at3 = sweep.levels[1].mean;

    const bool a = digital.accuracy >= min_digital_accuracy && ref.training_seconds <= max_training_seconds;
    long correct10 = 0;
    for (const auto& p : sweep.points) {
        if (p.level == -10.0) {
            correct10 += p.report.correct;
        }
    }
    const long clean_correct = nn::infer_digital(ref.model, subset).correct;
    const auto allowed = std::lround(max_noise_drop * subset.size());
    const bool c = correct10 >= 5 * (clean_correct - allowed);
    const bool d = at3 < at10;
    int same = 0;
    for (std::size_t i = 0; i < digital.predictions.size(); ++i) {
        same += digital.predictions[i] == hybrid.predictions[i] ? 1 : 0;
    }
    report(8, a && agree && c && d,
           fmt("(a) test %.4f, trained in %.0f s", digital.accuracy, ref.training_seconds) +
               (ref.cached ? " (cached)" : "") +
               fmt("; (b) %.0f/%.0f argmax agree; (c) -10 dBc mean %.4f vs clean %.4f",
                   same, digital.total, at10, clean) +
               fmt("; (d) -3 dBc mean %.4f", at3));
}

void criterion9(const nn::MnistData& data, const Reference& ref)
{
    const auto& model = ref.model;
    const nn::Dataset subset = data.test.slice(0, 1000);
    const auto clean = nn::infer_digital(model, subset);

    // Conv inputs for the output check: real digits for conv1, non-negative
    // random activations for conv2.
    const nn::Batch in1 = nn::make_batch(subset, 0, 8);
    nn::Batch in2(model.shape().conv1_channels, model.shape().pool1_out(), model.shape().pool1_out(), 4);
    {
        Rng rng(9);
        std::uniform_real_distribution<double> u(0.0, 2.0);
        for (Eigen::Index i = 0; i < in2.data.size(); ++i) {
            in2.data(i) = u(rng);
        }
    }
    const std::array<const nn::Batch*, 2> inputs{&in1, &in2};
    const std::array<const nn::Conv2D*, 2> convs{&model.conv1, &model.conv2};
    const std::array<int, 2> widths{model.shape().input_width, model.shape().pool1_out()};
    std::array<nn::Batch, 2> ideal;
    for (int l = 0; l < 2; ++l) {
        const auto stage = nn::build_stage(*convs[l], widths[l], l, nn::HybridFaults::disabled());
        ideal[l] = nn::photonic_conv(stage, *inputs[l], 0, 0);
    }

    double worst = 0.0;
    int accuracy_mismatches = 0;
    for (double level : {2.0, 6.0, 10.0}) {
        for (int trial = 0; trial < 20; ++trial) {
            nn::HybridFaults f;
            f.imbalance_db = level;
            f.calibrate = true;
            f.seed = static_cast<std::uint64_t>(1000 * level) + static_cast<std::uint64_t>(trial);
            for (int l = 0; l < 2; ++l) {
                const auto stage = nn::build_stage(*convs[l], widths[l], l, f);
                const auto y = nn::photonic_conv(stage, *inputs[l], 0, 0);
                const double scale = ideal[l].data.cwiseAbs().maxCoeff();
                worst = std::max(worst, (y.data - ideal[l].data).cwiseAbs().maxCoeff() / scale);
            }
            const auto r = nn::infer_hybrid(model, subset, f);
            accuracy_mismatches += r.correct == clean.correct ? 0 : 1;
        }
    }

    nn::SweepOptions options;
    options.base_seed = 1;
    const auto medium = nn::sweep_imbalance(model, subset, {10.0}, 30, true, -10.0, options);
    const auto low = nn::sweep_imbalance(model, subset, {10.0}, 30, true, -25.0, options);
    const double m10 = medium.levels[0].median;
    const double m25 = low.levels[0].median;
    report(9, worst <= calibration_tolerance && accuracy_mismatches == 0 && m10 < m25,
           fmt("noiseless max rel error %.2e, accuracy mismatches %.0f/60; 10 dB median %.4f at -10 dBc vs %.4f at -25 dBc",
               worst, accuracy_mismatches, m10, m25));
}

void criterion11(const fs::path& scratch)
{
    cli::ExperimentConfig c;
    c.training.max_steps = 20;
    c.training.epochs = 1;
    c.infer.subset_size = 200;
    c.sweep_noise.subset_size = 100;
    c.sweep_noise.seeds = 2;
    c.sweep_imbalance.subset_size = 100;
    c.sweep_imbalance.trials = 2;
    c.sweep_imbalance.levels_db = {0.0, 6.0};
    c.sweep_noise.levels_dbc = {-20.0, -5.0};

    using Command = std::function<cli::CommandResult(const cli::Context&)>;
    const std::vector<std::pair<std::string, Command>> commands{
        {"verify-equivalence", [](const cli::Context& x) { return cli::cmd_verify_equivalence(x); }},
        {"train", cli::cmd_train},
        {"infer", cli::cmd_infer},
        {"sweep-noise", cli::cmd_sweep_noise},
        {"sweep-imbalance", cli::cmd_sweep_imbalance},
        {"design-space", cli::cmd_design_space},
        {"energy", cli::cmd_energy},
    };
    int files = 0;
    std::string differing;
    for (const auto& [name, run] : commands) {
        std::array<std::vector<std::string>, 2> outputs;
        for (int rep = 0; rep < 2; ++rep) {
            auto ctx = quiet(scratch / ("c11_" + std::to_string(rep)), c);
            ctx.threads = rep + 1;
            outputs[static_cast<std::size_t>(rep)] = run(ctx).outputs;
        }
        for (const auto& f : outputs[0]) {
            ++files;
            if (slurp(scratch / "c11_0" / f) != slurp(scratch / "c11_1" / f)) {
                differing += " " + f;
            }
        }
        if (outputs[0] != outputs[1]) {
            differing += " (" + name + " file list)";
        }
    }
    report(11, differing.empty(),
           fmt("%.0f output files from 7 commands compared across reruns", files) +
               (differing.empty() ? "" : ", differing:" + differing));
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance checks"};
    fs::path checkpoint = "acceptance_model.ckpt";
    app.add_option("--checkpoint", checkpoint, "Reference model cache");
    CLI11_PARSE(app, argc, argv);

    const fs::path scratch = fs::temp_directory_path() / ("ipcnn_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(scratch);

    criterion1(scratch);
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();

    const fs::path mnist = nn::default_mnist_dir();
    const bool have_mnist = !mnist.empty() && fs::exists(mnist / "t10k-images-idx3-ubyte");
    if (have_mnist) {
        const auto data = nn::load_mnist(nn::MnistFiles::in_directory(mnist));
        const Reference ref = reference_model(data, checkpoint);
        criterion8(data, ref);
        criterion9(data, ref);
    } else {
        std::printf("criterion  8 SKIP  IPCNN_MNIST_DIR not set\n");
        std::printf("criterion  9 SKIP  IPCNN_MNIST_DIR not set\n");
    }
    criterion10();
    if (have_mnist) {
        criterion11(scratch);
    } else {
        std::printf("criterion 11 SKIP  IPCNN_MNIST_DIR not set\n");
    }

    fs::remove_all(scratch);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
