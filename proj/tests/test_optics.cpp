#include "ipcnn/optics.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ipcnn;
using namespace ipcnn::optics;

namespace {

// Segment-by-segment power flow computed from the lengths alone.
std::vector<double> propagate(const DelayBankDesign& bank, double loss_db_per_m)
{
    std::vector<double> dropped;
    double power = 1.0;
    double position = 0.0;
    for (const auto& tap : bank.taps) {
        const double segment = tap.length_m - position;
        power *= std::pow(10.0, -loss_db_per_m * segment / 10.0);
        position = tap.length_m;
        dropped.push_back(power * tap.drop_coupling);
        power -= power * tap.drop_coupling;
    }
    return dropped;
}

}  // namespace

TEST(DelayBank, LosslessCouplingLaw)
{
    const auto bank = design_delay_bank(ConvLayerSpec{1, 1, 3, 6}, 5e9, 1.5e8, 0.0);
    ASSERT_EQ(bank.taps.size(), 9u);
    for (std::size_t k = 0; k < 9; ++k) {
        EXPECT_NEAR(bank.taps[k].drop_coupling, 1.0 / static_cast<double>(9 - k), 1e-15);
    }
    EXPECT_EQ(bank.taps.back().drop_coupling, 1.0);
    double sum = 0.0;
    for (double p : bank.tap_outputs()) {
        sum += p;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(DelayBank, ThreeWaySplitAlgebra)
{
    // Q = 3 is not a square tap count, so check the split on a hand-built bank.
    DelayBankDesign bank;
    bank.taps.resize(3);
    const double couplings[] = {1.0 / 3.0, 0.5, 1.0};
    for (int k = 0; k < 3; ++k) {
        bank.taps[static_cast<std::size_t>(k)].drop_coupling = couplings[k];
    }
    for (double p : bank.tap_outputs()) {
        EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
    }
}

TEST(DelayBank, SingleTap)
{
    const auto bank = design_delay_bank(ConvLayerSpec{1, 1, 1, 28}, 5e9, 1.5e8, 0.5);
    ASSERT_EQ(bank.taps.size(), 1u);
    EXPECT_EQ(bank.taps[0].drop_coupling, 1.0);
    EXPECT_EQ(bank.taps[0].length_m, 0.0);
}

TEST(DelayBank, LossyBankEqualizedAgainstPowerFlowOracle)
{
    const auto bank = design_delay_bank(ConvLayerSpec{1, 1, 3, 28}, 5e9, 1.5e8, 0.5);
    const auto dropped = propagate(bank, 0.5);
    ASSERT_EQ(dropped.size(), 9u);
    double total = 0.0;
    for (double p : dropped) {
        EXPECT_NEAR(p / dropped[0], 1.0, 1e-9);
        total += p;
    }
    EXPECT_LE(total, 1.0);
    EXPECT_NEAR(bank.taps[3].length_m, 28.0 / 5e9 * 1.5e8, 1e-12);
    for (const auto& tap : bank.taps) {
        EXPECT_GT(tap.drop_coupling, 0.0);
        EXPECT_LE(tap.drop_coupling, 1.0);
    }
    EXPECT_EQ(bank.taps.back().drop_coupling, 1.0);
}

TEST(DelayBank, EqualizedAcrossLossLevels)
{
    for (double loss : {0.0, 0.1, 1.0, 5.0, 20.0, 100.0}) {
        const auto bank = design_delay_bank(ConvLayerSpec{1, 1, 5, 16}, 5e9, 1.5e8, loss);
        const auto out = bank.tap_outputs();
        const auto oracle = propagate(bank, loss);
        for (std::size_t k = 0; k < out.size(); ++k) {
            EXPECT_NEAR(out[k] / out[0], 1.0, 1e-9) << "loss " << loss;
            EXPECT_NEAR(oracle[k] / out[k], 1.0, 1e-9) << "loss " << loss;
        }
    }
}

TEST(DelayBank, Errors)
{
    EXPECT_THROW((void)design_delay_bank(ConvLayerSpec{1, 1, 3, 28}, 0.0, 1.5e8, 0.5), InvalidSpecError);
    EXPECT_THROW((void)design_delay_bank(ConvLayerSpec{1, 1, 3, 28}, 5e9, 1.5e8, -1.0), InvalidSpecError);
    // Loss so large that the far taps receive nothing representable.
    EXPECT_THROW((void)design_delay_bank(ConvLayerSpec{1, 1, 3, 28}, 5e9, 1.5e8, 1e5), InfeasibleDesignError);
}

TEST(Neop, PaperDensities)
{
    const double neop = aggregate_neop(NoiseBudget{});
    EXPECT_NEAR(neop, 6.3e-6, 0.02 * 6.3e-6);
    // hand value: hypot(3.0e-6, 5.0e-6/0.9)
    EXPECT_NEAR(neop, std::hypot(3.0e-6, 5.0e-6 / 0.9), 1e-15);
}

TEST(Neop, SingleSourceAndScaling)
{
    NoiseBudget b;
    b.tia_noise_a_per_rthz = 0.0;
    EXPECT_NEAR(aggregate_neop(b), b.pd_noise_w_per_rthz * std::sqrt(b.bandwidth_hz), 1e-18);
    // Noise densities integrate as sqrt(B): doubling B scales neop by sqrt(2).
    NoiseBudget wide;
    wide.bandwidth_hz *= 2.0;
    EXPECT_NEAR(aggregate_neop(wide) / aggregate_neop(NoiseBudget{}), std::sqrt(2.0), 1e-12);
}

TEST(Neop, MonotoneAndDominatesParts)
{
    const NoiseBudget base;
    const double n0 = aggregate_neop(base);
    NoiseBudget b = base;
    b.pd_noise_w_per_rthz *= 1.5;
    EXPECT_GE(aggregate_neop(b), n0);
    b = base;
    b.tia_noise_a_per_rthz *= 1.5;
    EXPECT_GE(aggregate_neop(b), n0);
    b = base;
    b.bandwidth_hz *= 1.5;
    EXPECT_GE(aggregate_neop(b), n0);
    EXPECT_GE(n0, base.pd_noise_w_per_rthz * std::sqrt(base.bandwidth_hz));
    EXPECT_GE(n0, base.tia_noise_a_per_rthz * std::sqrt(base.bandwidth_hz) / base.pd_responsivity_a_per_w);
    b = base;
    b.bandwidth_hz = 0.0;
    EXPECT_THROW((void)aggregate_neop(b), InvalidSpecError);
}

TEST(Nonlinearity, ReportedCoefficients)
{
    EXPECT_NEAR(nonlinear_coefficient(2.4e-19, 1550e-9, 0.702e-12), 2.77, 0.01 * 2.77);
    EXPECT_NEAR(nonlinear_coefficient(2.4e-19, 1550e-9, 1.599e-12), 1.21, 0.01 * 1.21);
}

TEST(Nonlinearity, InverseInArea)
{
    const double g1 = nonlinear_coefficient(2.4e-19, 1550e-9, 1e-12);
    const double g2 = nonlinear_coefficient(2.4e-19, 1550e-9, 2e-12);
    EXPECT_NEAR(g1 / g2, 2.0, 1e-12);
    EXPECT_NEAR(g1 * 1e-12, g2 * 2e-12, 1e-24);
    EXPECT_THROW((void)nonlinear_coefficient(2.4e-19, 1550e-9, 0.0), InvalidSpecError);
}

TEST(PowerCap, Margins)
{
    const double cap = units::dbm_to_watts(20.0);
    EXPECT_NEAR(cap, 0.1, 1e-15);
    auto r = check_power_cap(0.1, cap);
    EXPECT_TRUE(r.pass);
    EXPECT_NEAR(r.margin_db, 0.0, 1e-12);
    r = check_power_cap(0.05, 0.1);
    EXPECT_TRUE(r.pass);
    EXPECT_NEAR(r.margin_db, 3.0103, 1e-4);
    r = check_power_cap(0.2, 0.1);
    EXPECT_FALSE(r.pass);
    EXPECT_NEAR(r.margin_db, -3.0103, 1e-4);
}

TEST(LinkLoss, Sums)
{
    auto b = link_loss({{"splitter+mrr", 3.4}, {"delay", 4.0}});
    EXPECT_NEAR(b.total_db, 7.4, 1e-12);
    EXPECT_NEAR(b.transmission, 0.182, 0.0005);
    b = link_loss({});
    EXPECT_EQ(b.total_db, 0.0);
    EXPECT_EQ(b.transmission, 1.0);
    EXPECT_NEAR(link_loss({{"a", 2}, {"b", 4}, {"c", 0.4}}).total_db, 6.4, 1e-12);
    EXPECT_THROW((void)link_loss({{"bad", -1.0}}), InvalidSpecError);
}
