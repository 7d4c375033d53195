#pragma once

// Closed-form scale, speed and power models for the delay-buffered WDM
// accelerator and three reference photonic architectures.

#include "ipcnn/conv_math.hpp"
#include "ipcnn/errors.hpp"
#include "ipcnn/units.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace ipcnn::design {

struct HardwareConfig {
    int c_in = 64;
    int c_out = 32;
    int sigma = 3;
    int image_width = 28;

    double modulation_rate_hz = 5.0 * units::giga;
    double neop_w = 6.3 * units::micro;
    double snr_target = 10.0;
    double power_cap_w = 0.1;  // 20 dBm at the WDM output

    // WDM output to detectors, excluding delay lines (splitters + rings).
    double splitter_mrr_loss_db = 3.4;
    // WDM output to detectors used for the energy budget.
    double wdm_to_pd_loss_db = 6.4;
    double wdm_loss_db = 1.0;
    double modulator_loss_db = 4.0;
    double input_port_loss_db = 2.0;
    double delay_line_loss_db_per_m = 0.0;
    // Reference architectures have no delay lines.
    double comparative_loss_reduction_db = 4.0;
    double group_velocity_m_per_s = units::speed_of_light / 2.0;

    double mrr_power_w = 19.5 * units::milli;
    double tia_power_w = 2.2 * units::milli;
    double modulator_power_w = 90.0 * units::milli;
    double adc_energy_j_per_sample = 1.0 * units::pico;
    double laser_wall_plug = 0.05;

    [[nodiscard]] int taps() const { return sigma * sigma; }

    void validate() const
    {
        if (c_in < 1 || c_out < 1 || sigma < 1 || image_width < sigma) {
            throw InvalidSpecError("hardware config: need c_in, c_out, sigma >= 1 and image_width >= sigma");
        }
        if (!(modulation_rate_hz > 0.0) || !(neop_w > 0.0) || !(power_cap_w > 0.0) ||
            !(group_velocity_m_per_s > 0.0)) {
            throw InvalidSpecError("hardware config: rate, NEOP, power cap and group velocity must be positive");
        }
        if (!(snr_target >= 1.0)) {
            throw InvalidSpecError("hardware config: SNR target must be >= 1");
        }
        for (double v : {splitter_mrr_loss_db, wdm_to_pd_loss_db, wdm_loss_db, modulator_loss_db,
                         input_port_loss_db, delay_line_loss_db_per_m, comparative_loss_reduction_db,
                         mrr_power_w, tia_power_w, modulator_power_w, adc_energy_j_per_sample}) {
            if (!(v >= 0.0)) {
                throw InvalidSpecError("hardware config: losses and device powers must be >= 0");
            }
        }
        if (!(laser_wall_plug > 0.0 && laser_wall_plug <= 1.0)) {
            throw InvalidSpecError("hardware config: wall-plug efficiency must be in (0, 1]");
        }
    }
};

enum class LimitingFactor { none, loss, power_cap, neop };

inline std::string_view to_string(LimitingFactor f)
{
    switch (f) {
    case LimitingFactor::none: return "none";
    case LimitingFactor::loss: return "loss";
    case LimitingFactor::power_cap: return "power_cap";
    case LimitingFactor::neop: return "neop";
    }
    return "unknown";
}

struct ScaleResult {
    std::int64_t scale = 0;
    bool feasible = false;
    LimitingFactor limiting = LimitingFactor::none;
};

// Number of detector branches the capped waveguide power can feed while each
// branch keeps snr_target * neop of signal. `requested` (e.g. C_O * Q) decides
// feasibility; an exact integer tie counts as feasible.
inline ScaleResult max_scale(double power_cap_w, double insertion_loss_db, double neop_w,
                             double snr_target, std::int64_t requested = 1)
{
    if (!(power_cap_w > 0.0) || !(insertion_loss_db >= 0.0) || !(neop_w > 0.0) ||
        !(snr_target > 0.0)) {
        throw InvalidSpecError("max_scale: power cap, NEOP and SNR must be positive, loss >= 0");
    }
    const double per_branch = snr_target * neop_w;
    const double lossless = power_cap_w / per_branch;
    const double branches = lossless * units::loss_to_transmission(insertion_loss_db);
    // Guard the floor against representation error on exact ties.
    const auto floor_count = [](double x) {
        return static_cast<std::int64_t>(std::floor(x * (1.0 + 1e-12)));
    };

    ScaleResult r;
    r.scale = floor_count(branches);
    r.feasible = r.scale >= requested;
    if (r.feasible) {
        r.limiting = LimitingFactor::none;
    } else if (floor_count(lossless) < 1) {
        r.limiting = LimitingFactor::neop;
    } else if (floor_count(lossless) >= requested) {
        r.limiting = LimitingFactor::loss;
    } else {
        r.limiting = LimitingFactor::power_cap;
    }
    return r;
}

struct SpeedResult {
    double mac_per_s = 0.0;
    double lossless_mac_per_s = 0.0;
    double delay_line_length_m = 0.0;
    double delay_loss_db = 0.0;
    double total_loss_db = 0.0;
    std::int64_t scale = 0;
    int effective_c_out = 0;
    bool feasible = false;
};

namespace detail {

inline SpeedResult evaluate_speed(const HardwareConfig& c)
{
    c.validate();
    const ConvLayerSpec spec{c.c_in, c.c_out, c.sigma, c.image_width};
    const std::int64_t q = c.taps();
    SpeedResult r;
    r.delay_line_length_m =
        physical_delay(spec.max_delay(), c.modulation_rate_hz, c.group_velocity_m_per_s).meters;
    r.delay_loss_db = c.delay_line_loss_db_per_m * r.delay_line_length_m;
    r.total_loss_db = c.splitter_mrr_loss_db + r.delay_loss_db;

    const auto speed_at = [&](std::int64_t scale) {
        const std::int64_t channels = std::min<std::int64_t>(c.c_out, scale / q);
        return std::pair{static_cast<int>(channels),
                         static_cast<double>(c.c_in) * static_cast<double>(channels) *
                             static_cast<double>(q) * c.modulation_rate_hz};
    };

    r.scale = max_scale(c.power_cap_w, r.total_loss_db, c.neop_w, c.snr_target, q).scale;
    const auto lossless =
        max_scale(c.power_cap_w, c.splitter_mrr_loss_db, c.neop_w, c.snr_target, q).scale;
    r.lossless_mac_per_s = speed_at(lossless).second;
    r.feasible = r.scale >= q;
    if (r.feasible) {
        std::tie(r.effective_c_out, r.mac_per_s) = speed_at(r.scale);
    }
    return r;
}

}  // namespace detail

// Throughput with the delay-line loss of the longest line folded into the
// scale limit. Throws when the scale cannot support a single output channel.
inline SpeedResult speed(const HardwareConfig& config)
{
    SpeedResult r = detail::evaluate_speed(config);
    if (!r.feasible) {
        throw InfeasibleDesignError("speed: achievable scale " + std::to_string(r.scale) +
                                    " is below Q = " + std::to_string(config.taps()) +
                                    " (delay loss " + std::to_string(r.delay_loss_db) + " dB)");
    }
    return r;
}

// Same as speed() but infeasible points report zero throughput instead of
// throwing; used for sweeps that mark failure cells.
inline SpeedResult speed_or_zero(const HardwareConfig& config)
{
    return detail::evaluate_speed(config);
}

enum class Architecture { ipcnn, deap, bw, coherent };

inline constexpr std::array<Architecture, 4> all_architectures{
    Architecture::ipcnn, Architecture::deap, Architecture::bw, Architecture::coherent};

inline std::string_view to_string(Architecture a)
{
    switch (a) {
    case Architecture::ipcnn: return "IPCNN";
    case Architecture::deap: return "DEAP";
    case Architecture::bw: return "BW";
    case Architecture::coherent: return "Coherent";
    }
    return "unknown";
}

inline Architecture parse_architecture(std::string_view name)
{
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lower == "ipcnn") return Architecture::ipcnn;
    if (lower == "deap") return Architecture::deap;
    if (lower == "bw") return Architecture::bw;
    if (lower == "coherent") return Architecture::coherent;
    throw InvalidSpecError("unknown architecture '" + std::string(name) + "'");
}

// Device inventory of one architecture at a given layer size.
struct ArchitectureModel {
    Architecture architecture = Architecture::ipcnn;
    std::int64_t modulators = 0;
    double modulator_power_w = 0.0;
    std::int64_t weighting_elements = 0;
    double weighting_power_w = 0.0;
    std::int64_t detectors = 0;      // TIAs
    std::int64_t adcs = 0;
    std::int64_t laser_branches = 0; // branches that each need snr * neop
    double laser_chain_loss_db = 0.0;
    std::int64_t macs_per_cycle = 0;
};

inline ArchitectureModel architecture_model(Architecture a, const HardwareConfig& c)
{
    c.validate();
    const std::int64_t ci = c.c_in;
    const std::int64_t co = c.c_out;
    const std::int64_t q = c.taps();
    const double ipcnn_chain =
        c.wdm_to_pd_loss_db + c.wdm_loss_db + c.modulator_loss_db + c.input_port_loss_db;
    const double reference_chain = std::max(0.0, ipcnn_chain - c.comparative_loss_reduction_db);

    ArchitectureModel m;
    m.architecture = a;
    m.weighting_power_w = c.mrr_power_w;
    switch (a) {
    case Architecture::ipcnn:
        m.modulators = ci;
        m.modulator_power_w = c.modulator_power_w;
        m.weighting_elements = ci * co * q;
        m.detectors = co * q;
        m.adcs = co;
        m.laser_branches = co * q;
        m.laser_chain_loss_db = ipcnn_chain;
        m.macs_per_cycle = ci * co * q;
        break;
    case Architecture::deap:
        // Ring modulators on every (channel, tap) input; one output per cycle.
        m.modulators = ci * q;
        m.modulator_power_w = c.mrr_power_w;
        m.weighting_elements = ci * q;
        m.detectors = q;
        m.adcs = 1;
        m.laser_branches = q;
        m.laser_chain_loss_db = reference_chain;
        m.macs_per_cycle = ci * q;
        break;
    case Architecture::bw:
        m.modulators = ci;
        m.modulator_power_w = c.modulator_power_w;
        m.weighting_elements = ci * co;
        m.detectors = co;
        m.adcs = co;
        m.laser_branches = co;
        m.laser_chain_loss_db = reference_chain;
        m.macs_per_cycle = ci * co;
        break;
    case Architecture::coherent:
        m.modulators = ci * q;
        m.modulator_power_w = c.modulator_power_w;
        m.weighting_elements = ci * co * q;
        m.detectors = co;
        m.adcs = co;
        m.laser_branches = co * q;
        m.laser_chain_loss_db = reference_chain;
        m.macs_per_cycle = ci * co * q;
        break;
    }
    return m;
}

struct PowerBudget {
    std::string architecture;
    double lasers_w = 0.0;
    double eo_w = 0.0;
    double weighting_w = 0.0;
    double tia_w = 0.0;
    double adc_w = 0.0;
    double laser_optical_w = 0.0;
    double mac_per_s = 0.0;

    [[nodiscard]] double total() const { return lasers_w + eo_w + weighting_w + tia_w + adc_w; }
    [[nodiscard]] double total_without_weighting() const { return total() - weighting_w; }

    struct Row {
        std::string_view name;
        double power_w;
        double ratio;
        double ratio_without_weighting;  // NaN for the weighting row
    };

    [[nodiscard]] std::vector<Row> rows() const
    {
        const double all = total();
        const double rest = total_without_weighting();
        const auto ratio = [](double part, double whole) { return whole > 0.0 ? part / whole : 0.0; };
        const double nan = std::numeric_limits<double>::quiet_NaN();
        return {
            {"Lasers", lasers_w, ratio(lasers_w, all), ratio(lasers_w, rest)},
            {"E/O", eo_w, ratio(eo_w, all), ratio(eo_w, rest)},
            {"Weighting", weighting_w, ratio(weighting_w, all), nan},
            {"TIA", tia_w, ratio(tia_w, all), ratio(tia_w, rest)},
            {"ADC", adc_w, ratio(adc_w, all), ratio(adc_w, rest)},
        };
    }
};

// Budget from the detectors backwards: every laser branch must deliver
// snr * neop after the full loss chain, and the electrical draw divides the
// optical power by the wall-plug efficiency.
inline PowerBudget energy_budget(Architecture a, const HardwareConfig& c)
{
    const ArchitectureModel m = architecture_model(a, c);
    PowerBudget b;
    b.architecture = std::string(to_string(a));
    b.weighting_w = static_cast<double>(m.weighting_elements) * m.weighting_power_w;
    b.eo_w = static_cast<double>(m.modulators) * m.modulator_power_w;
    b.tia_w = static_cast<double>(m.detectors) * c.tia_power_w;
    b.adc_w = static_cast<double>(m.adcs) * c.modulation_rate_hz * c.adc_energy_j_per_sample;
    const double at_detectors = static_cast<double>(m.laser_branches) * c.snr_target * c.neop_w;
    b.laser_optical_w = at_detectors / units::loss_to_transmission(m.laser_chain_loss_db);
    b.lasers_w = b.laser_optical_w / c.laser_wall_plug;
    b.mac_per_s = static_cast<double>(m.macs_per_cycle) * c.modulation_rate_hz;
    return b;
}

inline PowerBudget energy_budget_ipcnn(const HardwareConfig& c)
{
    return energy_budget(Architecture::ipcnn, c);
}

inline PowerBudget energy_budget_comparative(Architecture a, const HardwareConfig& c)
{
    if (a == Architecture::ipcnn) {
        throw InvalidSpecError("comparative budgets cover DEAP, BW and Coherent");
    }
    return energy_budget(a, c);
}

enum class WeightingMode { thermal, capacitive };

inline std::string_view to_string(WeightingMode w)
{
    return w == WeightingMode::thermal ? "thermal" : "capacitive";
}

// Energy per MAC in pJ. Capacitive weighting holds its state without static
// power, so the weighting row is dropped.
inline double efficiency_pj_per_mac(const PowerBudget& b, double mac_per_s, WeightingMode mode)
{
    if (!(mac_per_s > 0.0)) {
        throw InvalidSpecError("efficiency: speed must be positive");
    }
    const double watts = mode == WeightingMode::thermal ? b.total() : b.total_without_weighting();
    return watts / mac_per_s / units::pico;
}

// Reference line for electronic accelerators.
inline constexpr double electronic_reference_pj_per_mac = 1.0;

}  // namespace ipcnn::design
