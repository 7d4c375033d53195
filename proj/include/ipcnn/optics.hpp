#pragma once

// Scalar models of the passive and active optical parts: the tapped delay
// bank, detector noise, waveguide Kerr nonlinearity, and loss chains.

#include "ipcnn/conv_math.hpp"
#include "ipcnn/errors.hpp"
#include "ipcnn/units.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace ipcnn::optics {

struct DelayTap {
    std::int64_t delay_cycles = 0;
    double length_m = 0.0;            // travel distance from the bank input
    double accumulated_loss_db = 0.0; // propagation loss up to this tap
    double drop_coupling = 1.0;       // fraction of arriving power dropped here
};

struct DelayBankDesign {
    std::vector<DelayTap> taps;
    double group_velocity = units::speed_of_light / 2.0;
    double loss_per_meter_db = 0.0;

    // Power delivered by each drop port for unit input power.
    [[nodiscard]] std::vector<double> tap_outputs(double input_power = 1.0) const
    {
        std::vector<double> out;
        out.reserve(taps.size());
        double remaining = input_power;
        for (std::size_t k = 0; k < taps.size(); ++k) {
            if (k > 0) {
                const double segment_db =
                    taps[k].accumulated_loss_db - taps[k - 1].accumulated_loss_db;
                remaining *= units::loss_to_transmission(segment_db);
            }
            out.push_back(remaining * taps[k].drop_coupling);
            remaining *= 1.0 - taps[k].drop_coupling;
        }
        return out;
    }
};

// Cascaded delay lines with a drop port before each. The couplings are the
// unique set that makes all Q drop outputs equal: with A_k the propagation
// transmission from the input to tap k, every port delivers
// P_in / sum_k(1 / A_k), and tap k drops that amount out of what reaches it.
inline DelayBankDesign design_delay_bank(const ConvLayerSpec& spec, double modulation_rate_hz,
                                         double group_velocity, double loss_per_meter_db)
{
    spec.validate();
    if (!(modulation_rate_hz > 0.0)) {
        throw InvalidSpecError("delay bank: modulation rate must be positive");
    }
    if (!(group_velocity > 0.0)) {
        throw InvalidSpecError("delay bank: group velocity must be positive");
    }
    if (!(loss_per_meter_db >= 0.0)) {
        throw InvalidSpecError("delay bank: loss per meter must be >= 0");
    }

    const auto offsets = delay_offsets(spec.sigma, spec.image_width);
    DelayBankDesign bank;
    bank.group_velocity = group_velocity;
    bank.loss_per_meter_db = loss_per_meter_db;
    bank.taps.resize(offsets.size());

    std::vector<double> transmission(offsets.size());
    double inverse_sum = 0.0;
    for (std::size_t k = 0; k < offsets.size(); ++k) {
        auto& tap = bank.taps[k];
        tap.delay_cycles = offsets[k];
        tap.length_m = physical_delay(offsets[k], modulation_rate_hz, group_velocity).meters;
        tap.accumulated_loss_db = loss_per_meter_db * tap.length_m;
        transmission[k] = units::loss_to_transmission(tap.accumulated_loss_db);
        inverse_sum += 1.0 / transmission[k];
    }

    const double per_tap = 1.0 / inverse_sum;
    double arriving = 1.0;  // power reaching tap k before it drops
    for (std::size_t k = 0; k < offsets.size(); ++k) {
        if (k > 0) {
            arriving *= transmission[k] / transmission[k - 1];
        }
        const double coupling = k + 1 == offsets.size() ? 1.0 : per_tap / arriving;
        if (!(coupling > 0.0 && coupling <= 1.0 + 1e-12) || !std::isfinite(per_tap)) {
            throw InfeasibleDesignError("delay bank: tap " + std::to_string(k) +
                                        " needs drop coupling " + std::to_string(coupling) +
                                        ", outside (0, 1]; loss too high to equalize");
        }
        bank.taps[k].drop_coupling = std::min(coupling, 1.0);
        arriving -= per_tap;
    }
    return bank;
}

struct NoiseBudget {
    double pd_noise_w_per_rthz = 30.0 * units::pico;
    double pd_responsivity_a_per_w = 0.9;
    double tia_noise_a_per_rthz = 50.0 * units::pico;
    double bandwidth_hz = 10.0 * units::giga;
};

// Root-sum-square of the detector's optical noise and the TIA input noise
// referred back to optical power, both integrated over the bandwidth.
inline double aggregate_neop(const NoiseBudget& b)
{
    if (!(b.pd_noise_w_per_rthz >= 0.0) || !(b.tia_noise_a_per_rthz >= 0.0) ||
        !(b.pd_responsivity_a_per_w > 0.0) || !(b.bandwidth_hz > 0.0)) {
        throw InvalidSpecError("noise budget: densities must be >= 0, responsivity and bandwidth > 0");
    }
    const double root_bw = std::sqrt(b.bandwidth_hz);
    const double pd = b.pd_noise_w_per_rthz * root_bw;
    const double tia = b.tia_noise_a_per_rthz * root_bw / b.pd_responsivity_a_per_w;
    return std::hypot(pd, tia);
}

struct NonlinearityModel {
    double n2_m2_per_w = 2.4e-19;
    double wavelength_m = 1550.0 * units::nano;
    double mode_area_m2 = 0.702e-12;
    double max_power_w = 0.1;
};

// Effective Kerr coefficient in rad/W/m. The leading factor of two makes the
// result match the reported Si3N4 values (2.77 and 1.21 rad/W/m); the
// textbook definition is half of this.
inline double nonlinear_coefficient(double n2_m2_per_w, double wavelength_m, double mode_area_m2)
{
    if (!(n2_m2_per_w > 0.0) || !(wavelength_m > 0.0) || !(mode_area_m2 > 0.0)) {
        throw InvalidSpecError("nonlinear coefficient: n2, wavelength and mode area must be positive");
    }
    return 2.0 * (2.0 * std::numbers::pi * n2_m2_per_w) / (wavelength_m * mode_area_m2);
}

inline double nonlinear_coefficient(const NonlinearityModel& m)
{
    return nonlinear_coefficient(m.n2_m2_per_w, m.wavelength_m, m.mode_area_m2);
}

struct PowerCapCheck {
    bool pass = false;
    double margin_db = 0.0;
};

inline PowerCapCheck check_power_cap(double power_w, double cap_w)
{
    if (!(cap_w > 0.0)) {
        throw InvalidSpecError("power cap must be positive");
    }
    PowerCapCheck r;
    r.pass = power_w <= cap_w;
    r.margin_db = units::linear_to_db(cap_w / power_w);
    return r;
}

struct LossStage {
    std::string name;
    double loss_db = 0.0;
};

struct LinkBudget {
    double total_db = 0.0;
    double transmission = 1.0;
};

inline LinkBudget link_loss(const std::vector<LossStage>& stages)
{
    LinkBudget b;
    for (const auto& s : stages) {
        if (!(s.loss_db >= 0.0)) {
            throw InvalidSpecError("link stage '" + s.name + "' has negative loss");
        }
        b.total_db += s.loss_db;
    }
    b.transmission = units::loss_to_transmission(b.total_db);
    return b;
}

}  // namespace ipcnn::optics
