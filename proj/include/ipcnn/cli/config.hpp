#pragma once

// Experiment configuration: one JSON file, every physical quantity named with
// its unit, unknown keys rejected. See docs/config.md for the schema.

#include "ipcnn/design_space.hpp"
#include "ipcnn/errors.hpp"
#include "ipcnn/nn/hybrid.hpp"
#include "ipcnn/nn/train.hpp"
#include "ipcnn/optics.hpp"
#include "ipcnn/units.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace ipcnn::cli {

using nlohmann::json;

inline constexpr int config_schema_version = 1;

// Inclusive arithmetic range; values are start + i*step rounded to 12
// significant digits so grid labels print cleanly.
struct Range {
    double start = 0.0;
    double stop = 0.0;
    double step = 1.0;

    [[nodiscard]] std::vector<double> values() const
    {
        std::vector<double> v;
        const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
        for (long i = 0; i <= n; ++i) {
            const double x = start + static_cast<double>(i) * step;
            v.push_back(std::stod(format12(x)));
        }
        return v;
    }

    static std::string format12(double x)
    {
        std::ostringstream s;
        s.precision(12);
        s << x;
        return s.str();
    }
};

struct VerifyConfig {
    int instances = 200;
    int max_channels = 8;
    std::vector<int> sigmas{1, 2, 3, 5};
    int max_width = 16;
    double tolerance = 1e-12;
};

struct AnalogConfig {
    double full_scale = 1.0;
    photonic::NoiseSampling sampling = photonic::NoiseSampling::aggregated;
    int adc_bits = 0;
    int calibration_repeats = 64;
};

struct InferConfig {
    int subset_start = 0;
    int subset_size = 10000;
    std::optional<double> neop_dbc;  // empty: noiseless
    double imbalance_db = 0.0;
    bool calibrate = false;
};

struct SweepNoiseConfig {
    std::vector<std::optional<double>> levels_dbc{-25.0, -20.0, -15.0, -10.0, -5.0, -3.0, 0.0};
    int seeds = 5;
    int subset_start = 0;
    int subset_size = 1000;
};

struct SweepImbalanceConfig {
    std::vector<double> levels_db{0.0, 2.0, 4.0, 6.0, 8.0, 10.0};
    int trials = 100;
    bool calibrate = true;
    std::optional<double> neop_dbc = -25.0;
    int subset_start = 0;
    int subset_size = 1000;
};

struct DesignSpaceConfig {
    Range scale_loss_db{0.0, 15.0, 0.1};
    std::vector<double> scale_neop_uw{1.0, 2.0, 3.0, 4.0, 5.0, 6.3, 8.0, 10.0, 12.5, 15.0, 20.0};
    Range speed_rate_ghz{0.5, 10.0, 0.5};
    std::vector<double> speed_delay_loss_db_per_m{0.1, 0.5, 1.0, 2.0};
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string mnist_dir;          // empty: IPCNN_MNIST_DIR
    std::string checkpoint = "model.ckpt";  // relative paths resolve against --out-dir
    design::HardwareConfig hardware;
    optics::NoiseBudget noise;
    optics::NonlinearityModel nonlinearity;
    std::vector<double> mode_areas_um2{0.702, 1.599};
    nn::TrainingOptions training;
    AnalogConfig analog;
    VerifyConfig verify;
    InferConfig infer;
    SweepNoiseConfig sweep_noise;
    SweepImbalanceConfig sweep_imbalance;
    DesignSpaceConfig design_space;
};

namespace detail {

// Reads keys from one JSON object and rejects anything it was not asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j_.is_object()) {
            throw ConfigError(where() + " must be an object");
        }
    }

    template <typename T>
    void read(const std::string& key, T& out)
    {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) {
            return;
        }
        convert(*it, key, out);
    }

    Section child(const std::string& key)
    {
        seen_.insert(key);
        const auto it = j_.find(key);
        static const json empty = json::object();
        return Section(it == j_.end() ? empty : *it, path_ + "." + key);
    }

    void finish() const
    {
        for (const auto& item : j_.items()) {
            if (!seen_.contains(item.key())) {
                throw ConfigError("unknown key '" + path_ + "." + item.key() + "'");
            }
        }
    }

private:
    [[nodiscard]] std::string where() const { return "'" + path_ + "'"; }

    [[noreturn]] void type_error(const std::string& key, const char* want) const
    {
        throw ConfigError("'" + path_ + "." + key + "' must be " + want);
    }

    void convert(const json& v, const std::string& key, double& out) const
    {
        if (!v.is_number()) {
            type_error(key, "a number");
        }
        out = v.get<double>();
    }
    void convert(const json& v, const std::string& key, int& out) const
    {
        if (!v.is_number_integer()) {
            type_error(key, "an integer");
        }
        out = v.get<int>();
    }
    void convert(const json& v, const std::string& key, long& out) const
    {
        if (!v.is_number_integer()) {
            type_error(key, "an integer");
        }
        out = v.get<long>();
    }
    void convert(const json& v, const std::string& key, std::uint64_t& out) const
    {
        if (!v.is_number_unsigned()) {
            type_error(key, "a non-negative integer");
        }
        out = v.get<std::uint64_t>();
    }
    void convert(const json& v, const std::string& key, bool& out) const
    {
        if (!v.is_boolean()) {
            type_error(key, "true or false");
        }
        out = v.get<bool>();
    }
    void convert(const json& v, const std::string& key, std::string& out) const
    {
        if (!v.is_string()) {
            type_error(key, "a string");
        }
        out = v.get<std::string>();
    }
    // null means "off" (noiseless).
    void convert(const json& v, const std::string& key, std::optional<double>& out) const
    {
        if (v.is_null()) {
            out.reset();
            return;
        }
        double x = 0.0;
        convert(v, key, x);
        out = x;
    }
    template <typename T>
    void convert(const json& v, const std::string& key, std::vector<T>& out) const
    {
        if (!v.is_array()) {
            type_error(key, "an array");
        }
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            T x{};
            convert(v[i], key + "[" + std::to_string(i) + "]", x);
            out.push_back(x);
        }
    }
    void convert(const json& v, const std::string& key, Range& out) const
    {
        Section r(v, path_ + "." + key);
        r.read("start", out.start);
        r.read("stop", out.stop);
        r.read("step", out.step);
        r.finish();
    }
    void convert(const json& v, const std::string& key, photonic::NoiseSampling& out) const
    {
        std::string s;
        convert(v, key, s);
        if (s == "per_branch") {
            out = photonic::NoiseSampling::per_branch;
        } else if (s == "aggregated") {
            out = photonic::NoiseSampling::aggregated;
        } else {
            type_error(key, "\"per_branch\" or \"aggregated\"");
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline json optional_to_json(const std::optional<double>& v)
{
    return v ? json(*v) : json(nullptr);
}

inline void require(bool ok, const std::string& message)
{
    if (!ok) {
        throw ConfigError(message);
    }
}

}  // namespace detail

inline void validate(const ExperimentConfig& c)
{
    using detail::require;
    try {
        c.hardware.validate();
        c.training.validate();
    } catch (const InvalidSpecError& e) {
        throw ConfigError(e.what());
    }
    require(c.verify.instances >= 1, "verify.instances must be >= 1");
    require(c.verify.max_channels >= 1, "verify.max_channels must be >= 1");
    require(!c.verify.sigmas.empty(), "verify.sigmas must not be empty");
    for (int s : c.verify.sigmas) {
        require(s >= 1 && s <= c.verify.max_width, "verify.sigmas entries must be in [1, max_width]");
    }
    require(c.verify.tolerance > 0.0, "verify.tolerance must be positive");
    require(c.analog.full_scale > 0.0, "analog.full_scale must be positive");
    require(c.analog.adc_bits >= 0 && c.analog.adc_bits <= 48, "analog.adc_bits must be in [0, 48]");
    require(c.analog.calibration_repeats >= 1, "analog.calibration_repeats must be >= 1");
    require(c.infer.subset_start >= 0 && c.infer.subset_size >= 1, "infer subset must be non-empty");
    require(c.infer.imbalance_db >= 0.0, "infer.imbalance_dB must be >= 0");
    require(c.sweep_noise.seeds >= 1, "sweep_noise.seeds must be >= 1");
    require(!c.sweep_noise.levels_dbc.empty(), "sweep_noise.levels_dBc must not be empty");
    for (std::size_t i = 1; i < c.sweep_noise.levels_dbc.size(); ++i) {
        const auto& a = c.sweep_noise.levels_dbc[i - 1];
        const auto& b = c.sweep_noise.levels_dbc[i];
        require(b.has_value() && (!a.has_value() || *a < *b),
                "sweep_noise.levels_dBc must be strictly increasing (null, if present, first)");
    }
    require(c.sweep_noise.subset_start >= 0 && c.sweep_noise.subset_size >= 1, "sweep_noise subset must be non-empty");
    require(c.sweep_imbalance.trials >= 1, "sweep_imbalance.trials must be >= 1");
    require(!c.sweep_imbalance.levels_db.empty(), "sweep_imbalance.levels_dB must not be empty");
    for (double l : c.sweep_imbalance.levels_db) {
        require(l >= 0.0, "sweep_imbalance.levels_dB must be >= 0");
    }
    require(c.sweep_imbalance.subset_start >= 0 && c.sweep_imbalance.subset_size >= 1,
            "sweep_imbalance subset must be non-empty");
    for (const Range* r : {&c.design_space.scale_loss_db, &c.design_space.speed_rate_ghz}) {
        require(r->step > 0.0 && r->stop >= r->start, "design_space ranges need step > 0 and stop >= start");
        require((r->stop - r->start) / r->step < 1e6, "design_space range has too many points");
    }
    require(c.design_space.scale_loss_db.start >= 0.0, "design_space loss must be >= 0");
    require(c.design_space.speed_rate_ghz.start > 0.0, "design_space modulation rate must be > 0");
    for (double v : c.design_space.scale_neop_uw) {
        require(v > 0.0, "design_space.scale.neop_uW entries must be positive");
    }
    for (double v : c.design_space.speed_delay_loss_db_per_m) {
        require(v >= 0.0, "design_space.speed.delay_loss_dB_per_m entries must be >= 0");
    }
    for (double a : c.mode_areas_um2) {
        require(a > 0.0, "nonlinearity.mode_areas_um2 entries must be positive");
    }
}

inline ExperimentConfig parse_config(const json& root)
{
    ExperimentConfig c;
    detail::Section top(root, "config");
    int version = config_schema_version;
    top.read("schema_version", version);
    if (version != config_schema_version) {
        throw ConfigError("unsupported config schema_version " + std::to_string(version));
    }
    top.read("seed", c.seed);
    top.read("mnist_dir", c.mnist_dir);
    top.read("checkpoint", c.checkpoint);

    {
        auto h = top.child("hardware");
        auto& hw = c.hardware;
        h.read("c_in", hw.c_in);
        h.read("c_out", hw.c_out);
        h.read("sigma", hw.sigma);
        h.read("image_width", hw.image_width);
        double rate_ghz = hw.modulation_rate_hz / units::giga;
        h.read("modulation_rate_GHz", rate_ghz);
        hw.modulation_rate_hz = rate_ghz * units::giga;
        double neop_uw = hw.neop_w / units::micro;
        h.read("neop_uW", neop_uw);
        hw.neop_w = neop_uw * units::micro;
        h.read("snr_target", hw.snr_target);
        double cap_dbm = units::watts_to_dbm(hw.power_cap_w);
        h.read("power_cap_dBm", cap_dbm);
        hw.power_cap_w = units::dbm_to_watts(cap_dbm);
        h.read("splitter_mrr_loss_dB", hw.splitter_mrr_loss_db);
        h.read("wdm_to_pd_loss_dB", hw.wdm_to_pd_loss_db);
        h.read("wdm_loss_dB", hw.wdm_loss_db);
        h.read("modulator_loss_dB", hw.modulator_loss_db);
        h.read("input_port_loss_dB", hw.input_port_loss_db);
        h.read("delay_line_loss_dB_per_m", hw.delay_line_loss_db_per_m);
        h.read("comparative_loss_reduction_dB", hw.comparative_loss_reduction_db);
        double group_index = units::speed_of_light / hw.group_velocity_m_per_s;
        h.read("group_index", group_index);
        detail::require(group_index > 0.0, "hardware.group_index must be positive");
        hw.group_velocity_m_per_s = units::speed_of_light / group_index;
        double mrr_mw = hw.mrr_power_w / units::milli;
        h.read("mrr_power_mW", mrr_mw);
        hw.mrr_power_w = mrr_mw * units::milli;
        double tia_mw = hw.tia_power_w / units::milli;
        h.read("tia_power_mW", tia_mw);
        hw.tia_power_w = tia_mw * units::milli;
        double mod_mw = hw.modulator_power_w / units::milli;
        h.read("modulator_power_mW", mod_mw);
        hw.modulator_power_w = mod_mw * units::milli;
        double adc_pj = hw.adc_energy_j_per_sample / units::pico;
        h.read("adc_energy_pJ_per_sample", adc_pj);
        hw.adc_energy_j_per_sample = adc_pj * units::pico;
        h.read("laser_wall_plug_efficiency", hw.laser_wall_plug);
        h.finish();
    }
    {
        auto n = top.child("noise");
        double pd = c.noise.pd_noise_w_per_rthz / units::pico;
        n.read("pd_noise_pW_per_rtHz", pd);
        c.noise.pd_noise_w_per_rthz = pd * units::pico;
        n.read("pd_responsivity_A_per_W", c.noise.pd_responsivity_a_per_w);
        double tia = c.noise.tia_noise_a_per_rthz / units::pico;
        n.read("tia_noise_pA_per_rtHz", tia);
        c.noise.tia_noise_a_per_rthz = tia * units::pico;
        double bw = c.noise.bandwidth_hz / units::giga;
        n.read("bandwidth_GHz", bw);
        c.noise.bandwidth_hz = bw * units::giga;
        n.finish();
    }
    {
        auto n = top.child("nonlinearity");
        n.read("n2_m2_per_W", c.nonlinearity.n2_m2_per_w);
        double nm = c.nonlinearity.wavelength_m / units::nano;
        n.read("wavelength_nm", nm);
        c.nonlinearity.wavelength_m = nm * units::nano;
        n.read("mode_areas_um2", c.mode_areas_um2);
        n.finish();
    }
    {
        auto t = top.child("training");
        t.read("epochs", c.training.epochs);
        t.read("learning_rate", c.training.learning_rate);
        t.read("momentum", c.training.momentum);
        t.read("batch_size", c.training.batch_size);
        t.read("max_steps", c.training.max_steps);
        t.finish();
    }
    {
        auto a = top.child("analog");
        a.read("full_scale", c.analog.full_scale);
        a.read("noise_sampling", c.analog.sampling);
        a.read("adc_bits", c.analog.adc_bits);
        a.read("calibration_repeats", c.analog.calibration_repeats);
        a.finish();
    }
    {
        auto v = top.child("verify");
        v.read("instances", c.verify.instances);
        v.read("max_channels", c.verify.max_channels);
        v.read("sigmas", c.verify.sigmas);
        v.read("max_width", c.verify.max_width);
        v.read("tolerance", c.verify.tolerance);
        v.finish();
    }
    {
        auto s = top.child("infer");
        s.read("subset_start", c.infer.subset_start);
        s.read("subset_size", c.infer.subset_size);
        s.read("neop_dBc", c.infer.neop_dbc);
        s.read("imbalance_dB", c.infer.imbalance_db);
        s.read("calibrate", c.infer.calibrate);
        s.finish();
    }
    {
        auto s = top.child("sweep_noise");
        s.read("levels_dBc", c.sweep_noise.levels_dbc);
        s.read("seeds", c.sweep_noise.seeds);
        s.read("subset_start", c.sweep_noise.subset_start);
        s.read("subset_size", c.sweep_noise.subset_size);
        s.finish();
    }
    {
        auto s = top.child("sweep_imbalance");
        s.read("levels_dB", c.sweep_imbalance.levels_db);
        s.read("trials", c.sweep_imbalance.trials);
        s.read("calibrate", c.sweep_imbalance.calibrate);
        s.read("neop_dBc", c.sweep_imbalance.neop_dbc);
        s.read("subset_start", c.sweep_imbalance.subset_start);
        s.read("subset_size", c.sweep_imbalance.subset_size);
        s.finish();
    }
    {
        auto d = top.child("design_space");
        auto scale = d.child("scale");
        scale.read("loss_dB", c.design_space.scale_loss_db);
        scale.read("neop_uW", c.design_space.scale_neop_uw);
        scale.finish();
        auto sp = d.child("speed");
        sp.read("modulation_rate_GHz", c.design_space.speed_rate_ghz);
        sp.read("delay_loss_dB_per_m", c.design_space.speed_delay_loss_db_per_m);
        sp.finish();
        d.finish();
    }
    top.finish();
    validate(c);
    return c;
}

inline ExperimentConfig parse_config_text(const std::string& text)
{
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(root);
}

inline ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path.string());
    }
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return parse_config_text(text);
}

// Fully resolved configuration in file units; parse_config(to_json(c))
// reproduces c.
inline json to_json(const ExperimentConfig& c)
{
    const auto& hw = c.hardware;
    json levels = json::array();
    for (const auto& l : c.sweep_noise.levels_dbc) {
        levels.push_back(detail::optional_to_json(l));
    }
    const auto range = [](const Range& r) {
        return json{{"start", r.start}, {"stop", r.stop}, {"step", r.step}};
    };
    return json{
        {"schema_version", config_schema_version},
        {"seed", c.seed},
        {"mnist_dir", c.mnist_dir},
        {"checkpoint", c.checkpoint},
        {"hardware",
         {{"c_in", hw.c_in},
          {"c_out", hw.c_out},
          {"sigma", hw.sigma},
          {"image_width", hw.image_width},
          {"modulation_rate_GHz", hw.modulation_rate_hz / units::giga},
          {"neop_uW", hw.neop_w / units::micro},
          {"snr_target", hw.snr_target},
          {"power_cap_dBm", units::watts_to_dbm(hw.power_cap_w)},
          {"splitter_mrr_loss_dB", hw.splitter_mrr_loss_db},
          {"wdm_to_pd_loss_dB", hw.wdm_to_pd_loss_db},
          {"wdm_loss_dB", hw.wdm_loss_db},
          {"modulator_loss_dB", hw.modulator_loss_db},
          {"input_port_loss_dB", hw.input_port_loss_db},
          {"delay_line_loss_dB_per_m", hw.delay_line_loss_db_per_m},
          {"comparative_loss_reduction_dB", hw.comparative_loss_reduction_db},
          {"group_index", units::speed_of_light / hw.group_velocity_m_per_s},
          {"mrr_power_mW", hw.mrr_power_w / units::milli},
          {"tia_power_mW", hw.tia_power_w / units::milli},
          {"modulator_power_mW", hw.modulator_power_w / units::milli},
          {"adc_energy_pJ_per_sample", hw.adc_energy_j_per_sample / units::pico},
          {"laser_wall_plug_efficiency", hw.laser_wall_plug}}},
        {"noise",
         {{"pd_noise_pW_per_rtHz", c.noise.pd_noise_w_per_rthz / units::pico},
          {"pd_responsivity_A_per_W", c.noise.pd_responsivity_a_per_w},
          {"tia_noise_pA_per_rtHz", c.noise.tia_noise_a_per_rthz / units::pico},
          {"bandwidth_GHz", c.noise.bandwidth_hz / units::giga}}},
        {"nonlinearity",
         {{"n2_m2_per_W", c.nonlinearity.n2_m2_per_w},
          {"wavelength_nm", c.nonlinearity.wavelength_m / units::nano},
          {"mode_areas_um2", c.mode_areas_um2}}},
        {"training",
         {{"epochs", c.training.epochs},
          {"learning_rate", c.training.learning_rate},
          {"momentum", c.training.momentum},
          {"batch_size", c.training.batch_size},
          {"max_steps", c.training.max_steps}}},
        {"analog",
         {{"full_scale", c.analog.full_scale},
          {"noise_sampling",
           c.analog.sampling == photonic::NoiseSampling::per_branch ? "per_branch" : "aggregated"},
          {"adc_bits", c.analog.adc_bits},
          {"calibration_repeats", c.analog.calibration_repeats}}},
        {"verify",
         {{"instances", c.verify.instances},
          {"max_channels", c.verify.max_channels},
          {"sigmas", c.verify.sigmas},
          {"max_width", c.verify.max_width},
          {"tolerance", c.verify.tolerance}}},
        {"infer",
         {{"subset_start", c.infer.subset_start},
          {"subset_size", c.infer.subset_size},
          {"neop_dBc", detail::optional_to_json(c.infer.neop_dbc)},
          {"imbalance_dB", c.infer.imbalance_db},
          {"calibrate", c.infer.calibrate}}},
        {"sweep_noise",
         {{"levels_dBc", levels},
          {"seeds", c.sweep_noise.seeds},
          {"subset_start", c.sweep_noise.subset_start},
          {"subset_size", c.sweep_noise.subset_size}}},
        {"sweep_imbalance",
         {{"levels_dB", c.sweep_imbalance.levels_db},
          {"trials", c.sweep_imbalance.trials},
          {"calibrate", c.sweep_imbalance.calibrate},
          {"neop_dBc", detail::optional_to_json(c.sweep_imbalance.neop_dbc)},
          {"subset_start", c.sweep_imbalance.subset_start},
          {"subset_size", c.sweep_imbalance.subset_size}}},
        {"design_space",
         {{"scale",
           {{"loss_dB", range(c.design_space.scale_loss_db)},
            {"neop_uW", c.design_space.scale_neop_uw}}},
          {"speed",
           {{"modulation_rate_GHz", range(c.design_space.speed_rate_ghz)},
            {"delay_loss_dB_per_m", c.design_space.speed_delay_loss_db_per_m}}}}},
    };
}

// FNV-1a over the canonical (sorted-key, compact) dump.
inline std::uint64_t fnv1a(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

inline std::string config_hash(const ExperimentConfig& c)
{
    return hex64(fnv1a(to_json(c).dump()));
}

}  // namespace ipcnn::cli
