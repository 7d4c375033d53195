#include "ipcnn/nn/checkpoint.hpp"
#include "ipcnn/nn/hybrid.hpp"
#include "ipcnn/nn/train.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ipcnn;
using namespace ipcnn::nn;

namespace {

// Each class lights its own horizontal band plus uniform speckle.
Dataset synthetic(int count, int width, int classes, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> speckle(0.0, 0.3);
    Dataset d;
    d.rows = width;
    d.cols = width;
    d.pixels.resize(static_cast<std::size_t>(count * width * width));
    d.labels.resize(static_cast<std::size_t>(count));
    const int band = std::max(1, width / classes);
    for (int i = 0; i < count; ++i) {
        const int label = i % classes;
        d.labels[static_cast<std::size_t>(i)] = label;
        for (int y = 0; y < width; ++y) {
            for (int x = 0; x < width; ++x) {
                const bool lit = y / band == label;
                d.pixels[static_cast<std::size_t>((i * width + y) * width + x)] =
                    std::min(1.0, (lit ? 0.8 : 0.0) + speckle(rng));
            }
        }
    }
    return d;
}

NetworkShape small_shape()
{
    NetworkShape s;
    s.input_width = 14;
    s.conv1_channels = 4;
    s.conv2_channels = 4;
    s.hidden = 16;
    s.classes = 4;
    return s;
}

NetworkModel trained_small(std::uint64_t seed = 3)
{
    const Dataset data = synthetic(256, 14, 4, 1);
    TrainingOptions o;
    o.epochs = 3;
    o.batch_size = 16;
    o.seed = seed;
    return train(NetworkModel(small_shape()), data, o);
}

}  // namespace

TEST(Network, ShapeChain)
{
    const NetworkShape s;
    EXPECT_EQ(s.conv1_out(), 26);
    EXPECT_EQ(s.pool1_out(), 13);
    EXPECT_EQ(s.conv2_out(), 11);
    EXPECT_EQ(s.pool2_out(), 5);
    EXPECT_EQ(s.flat_features(), 800);
    const NetworkModel m;
    EXPECT_EQ(m.fc1.weights.cols(), 800);
    EXPECT_EQ(m.fc1.weights.rows(), 512);
    EXPECT_EQ(m.fc2.weights.rows(), 10);
    NetworkShape tiny;
    tiny.input_width = 6;
    EXPECT_THROW((void)NetworkModel(tiny), InvalidSpecError);
}

TEST(Network, LogitsMatchTrainingForward)
{
    NetworkModel m(small_shape());
    m.initialize(5);
    const Dataset d = synthetic(8, 14, 4, 2);
    const Batch b = make_batch(d, 0, 8);
    const Eigen::MatrixXd a = m.forward(b);
    EXPECT_EQ(a, m.logits(b));
    EXPECT_EQ(a.cols(), 8);
    EXPECT_EQ(a.rows(), 4);
}

TEST(Training, OverfitsThirtyTwoSamples)
{
    const Dataset data = synthetic(32, 28, 10, 4);
    TrainingOptions o;
    o.batch_size = 32;
    o.epochs = 200;
    o.max_steps = 200;
    const NetworkModel m = train(NetworkModel{}, data, o);
    EXPECT_EQ(infer_digital(m, data).accuracy, 1.0);
}

TEST(Training, DeterministicGivenSeed)
{
    const NetworkModel a = trained_small(3);
    const NetworkModel b = trained_small(3);
    const NetworkModel c = trained_small(4);
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_NE(a.hash(), c.hash());
    EXPECT_EQ(a.metadata.epochs, 3);
    EXPECT_EQ(a.metadata.seed, 3u);
}

TEST(Training, LearnsSyntheticTask)
{
    const NetworkModel m = trained_small();
    EXPECT_GE(infer_digital(m, synthetic(200, 14, 4, 99)).accuracy, 0.95);
}

TEST(Training, DivergenceReportsEpochAndBatch)
{
    const Dataset data = synthetic(64, 14, 4, 1);
    TrainingOptions o;
    o.learning_rate = 1e300;  // overflows the weights on the first update
    o.batch_size = 16;
    try {
        (void)train(NetworkModel(small_shape()), data, o);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("epoch"), std::string::npos) << msg;
        EXPECT_NE(msg.find("batch"), std::string::npos) << msg;
    }
}

TEST(Training, RejectsBadOptions)
{
    const Dataset data = synthetic(8, 14, 4, 1);
    TrainingOptions o;
    o.epochs = 0;
    EXPECT_THROW((void)train(NetworkModel(small_shape()), data, o), InvalidSpecError);
    o = TrainingOptions{};
    o.learning_rate = 0.0;
    EXPECT_THROW((void)train(NetworkModel(small_shape()), data, o), InvalidSpecError);
    EXPECT_THROW((void)train(NetworkModel{}, data, TrainingOptions{}), DimensionError);
}

TEST(Checkpoint, LosslessRoundTrip)
{
    NetworkModel m = trained_small();
    m.metadata.test_accuracy = 0.987654321;
    const auto bytes = serialize_checkpoint(m);
    const NetworkModel back = deserialize_checkpoint(bytes);
    EXPECT_EQ(back.hash(), m.hash());
    EXPECT_EQ(back.shape(), m.shape());
    EXPECT_EQ(back.metadata.test_accuracy, m.metadata.test_accuracy);
    EXPECT_EQ(back.metadata.final_train_loss, m.metadata.final_train_loss);
    EXPECT_EQ(serialize_checkpoint(back), bytes);

    const auto path = std::filesystem::temp_directory_path() / "ipcnn_test.ckpt";
    save_checkpoint(m, path);
    EXPECT_EQ(load_checkpoint(path).hash(), m.hash());
    std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsDamage)
{
    const auto bytes = serialize_checkpoint(trained_small());
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW((void)deserialize_checkpoint(bad), ParseError);
    bad = bytes;
    bad.resize(bytes.size() - 8);
    EXPECT_THROW((void)deserialize_checkpoint(bad), ParseError);
    bad = bytes;
    bad.push_back(0);
    EXPECT_THROW((void)deserialize_checkpoint(bad), ParseError);
    bad = bytes;
    bad[8] = 9;
    EXPECT_THROW((void)deserialize_checkpoint(bad), ParseError);
    EXPECT_THROW((void)load_checkpoint("/nonexistent/model.ckpt"), IoError);
}

TEST(Hybrid, IdealMatchesDigitalEverySample)
{
    const NetworkModel m = trained_small();
    const Dataset test = synthetic(100, 14, 4, 7);
    const auto digital = infer_digital(m, test);
    const auto hybrid = infer_hybrid(m, test, HybridFaults::disabled());
    EXPECT_EQ(hybrid.predictions, digital.predictions);
    EXPECT_EQ(hybrid.accuracy, digital.accuracy);
    EXPECT_TRUE(hybrid.hybrid);
}

TEST(Hybrid, ReportInvariants)
{
    const NetworkModel m = trained_small();
    const Dataset test = synthetic(60, 14, 4, 8);
    HybridFaults f;
    f.neop_dbc = -5.0;
    f.seed = 2;
    const auto r = infer_hybrid(m, test, f);
    EXPECT_EQ(r.total, 60);
    EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(r.correct) / r.total);
    std::array<int, 4> per_class{};
    for (int l : test.labels) {
        ++per_class[static_cast<std::size_t>(l)];
    }
    int diagonal = 0;
    for (int c = 0; c < 4; ++c) {
        int row = 0;
        for (int p = 0; p < 10; ++p) {
            row += r.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)];
        }
        EXPECT_EQ(row, per_class[static_cast<std::size_t>(c)]);
        diagonal += r.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
    }
    EXPECT_EQ(diagonal, r.correct);
    // Reproducible from (model, subset, faults, seed).
    EXPECT_EQ(infer_hybrid(m, test, f).predictions, r.predictions);
}

TEST(Hybrid, KernelScalingIsCompensated)
{
    // Scaling a conv layer's kernels changes the ring settings only through
    // the rescale factor, so predictions are unchanged.
    NetworkModel m = trained_small();
    const Dataset test = synthetic(50, 14, 4, 9);
    const auto before = infer_hybrid(m, test, HybridFaults::disabled()).predictions;
    const auto prog = photonic::program_weights(kernel_tensor(m.conv1.weights, 1, 3));
    const auto scaled = photonic::program_weights(kernel_tensor(m.conv1.weights * 3.5, 1, 3));
    EXPECT_LE((prog.settings - scaled.settings).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((scaled.rescale - 3.5 * prog.rescale).cwiseAbs().maxCoeff(), 1e-12);
    m.conv2.weights *= 3.5;
    m.conv2.bias *= 3.5;
    m.fc1.weights /= 3.5;
    EXPECT_EQ(infer_hybrid(m, test, HybridFaults::disabled()).predictions, before);
}

TEST(Hybrid, CalibrationRestoresNoiselessAccuracy)
{
    const NetworkModel m = trained_small();
    const Dataset test = synthetic(80, 14, 4, 10);
    const auto clean = infer_hybrid(m, test, HybridFaults::disabled());
    for (double level : {2.0, 6.0, 10.0}) {
        HybridFaults f;
        f.imbalance_db = level;
        f.calibrate = true;
        f.seed = 17;
        EXPECT_EQ(infer_hybrid(m, test, f).predictions, clean.predictions) << level << " dB";
    }
}

TEST(Hybrid, NegativeActivationIsEncodingError)
{
    const NetworkModel m = trained_small();
    photonic::PhotonicConvLayer layer(ConvLayerSpec{1, 4, 3, 14}, {});
    ImageTensor x(1, 14, 0.2);
    x(0, 3, 3) = -0.5;
    EXPECT_THROW((void)layer.forward(x, photonic::program_weights(kernel_tensor(m.conv1.weights, 1, 3)), 0),
                 EncodingError);
}

TEST(Sweeps, NoiseSweepShape)
{
    const NetworkModel m = trained_small();
    const Dataset test = synthetic(60, 14, 4, 11);
    SweepOptions opt;
    opt.base_seed = 100;
    opt.threads = 2;
    const double clean = infer_digital(m, test).accuracy;
    const auto r = sweep_noise(m, test, {-std::numeric_limits<double>::infinity(), -10.0, 0.0}, 2, opt);
    ASSERT_EQ(r.points.size(), 6u);
    ASSERT_EQ(r.levels.size(), 3u);
    EXPECT_EQ(r.levels[0].mean, clean);
    EXPECT_EQ(r.points[2].seed, 100u);
    EXPECT_EQ(r.points[3].seed, 101u);
    EXPECT_NE(r.points[2].report.predictions, r.points[3].report.predictions);
    EXPECT_THROW((void)sweep_noise(m, test, {0.0, -10.0}, 1, opt), InvalidSpecError);

    // Threads do not change results.
    opt.threads = 1;
    const auto serial = sweep_noise(m, test, {-std::numeric_limits<double>::infinity(), -10.0, 0.0}, 2, opt);
    for (std::size_t i = 0; i < r.points.size(); ++i) {
        EXPECT_EQ(serial.points[i].report.predictions, r.points[i].report.predictions);
    }
}

TEST(Sweeps, ImbalanceSweepStatistics)
{
    const NetworkModel m = trained_small();
    const Dataset test = synthetic(60, 14, 4, 12);
    const double clean = infer_digital(m, test).accuracy;
    SweepOptions opt;
    opt.threads = 2;
    const auto r = sweep_imbalance(m, test, {0.0, 6.0}, 4, true, -std::numeric_limits<double>::infinity(), opt);
    ASSERT_EQ(r.levels.size(), 2u);
    for (const auto& s : r.levels) {
        EXPECT_EQ(s.min, clean);
        EXPECT_EQ(s.max, clean);
        EXPECT_EQ(s.median, clean);
    }
    EXPECT_THROW((void)sweep_imbalance(m, test, {0.0}, 0, false, -10.0, opt), InvalidSpecError);
}

TEST(Sweeps, QuantilesAndSummary)
{
    EXPECT_EQ(quantile_sorted({1.0, 2.0, 3.0, 4.0}, 0.5), 2.5);
    EXPECT_EQ(quantile_sorted({1.0, 2.0, 3.0, 4.0, 5.0}, 0.25), 2.0);
    const auto s = summarize(3.0, {4.0, 1.0, 3.0, 2.0, 5.0});
    EXPECT_EQ(s.min, 1.0);
    EXPECT_EQ(s.q1, 2.0);
    EXPECT_EQ(s.median, 3.0);
    EXPECT_EQ(s.q3, 4.0);
    EXPECT_EQ(s.max, 5.0);
    EXPECT_EQ(s.mean, 3.0);
    EXPECT_NEAR(s.stddev, std::sqrt(2.5), 1e-15);
}

TEST(Parallel, RunsEveryItemAndPropagatesErrors)
{
    std::vector<int> hits(100, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) {
        EXPECT_EQ(h, 1);
    }
    EXPECT_THROW(parallel_for(10, 3,
                              [](std::size_t i) {
                                  if (i == 5) {
                                      throw std::runtime_error("boom");
                                  }
                              }),
                 std::runtime_error);
}
