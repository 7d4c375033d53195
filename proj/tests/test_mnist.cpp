#include "ipcnn/nn/mnist.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace ipcnn;
using namespace ipcnn::nn;

namespace {

// Writes IDX bytes field by field, independently of the reader.
void be32(std::vector<unsigned char>& out, std::uint32_t v)
{
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>(v & 0xff));
}

struct Fixture {
    std::vector<unsigned char> images;
    std::vector<unsigned char> labels;
};

Fixture two_images()
{
    Fixture f;
    be32(f.images, 0x803);
    be32(f.images, 2);
    be32(f.images, 3);
    be32(f.images, 2);
    for (int i = 0; i < 12; ++i) {
        f.images.push_back(static_cast<unsigned char>(i * 23));
    }
    be32(f.labels, 0x801);
    be32(f.labels, 2);
    f.labels.push_back(7);
    f.labels.push_back(0);
    return f;
}

std::filesystem::path write_temp(const std::string& name, const std::vector<unsigned char>& bytes)
{
    const auto path = std::filesystem::temp_directory_path() / ("ipcnn_test_" + name);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return path;
}

std::string parse_error(const Fixture& f)
{
    try {
        (void)parse_idx(f.images, f.labels, "fixture");
    } catch (const ParseError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(Idx, FixtureRoundTrip)
{
    const Fixture f = two_images();
    const auto img = write_temp("img", f.images);
    const auto lab = write_temp("lab", f.labels);
    const Dataset d = load_idx(img, lab);
    std::filesystem::remove(img);
    std::filesystem::remove(lab);
    ASSERT_EQ(d.size(), 2);
    EXPECT_EQ(d.rows, 3);
    EXPECT_EQ(d.cols, 2);
    EXPECT_EQ(d.labels, (std::vector<int>{7, 0}));
    for (int i = 0; i < 12; ++i) {
        EXPECT_EQ(d.pixels[static_cast<std::size_t>(i)], (i * 23) / 255.0);
    }
    EXPECT_EQ(d.image(1)[0], (6 * 23) / 255.0);
    const Dataset tail = d.slice(1, 1);
    EXPECT_EQ(tail.labels, std::vector<int>{0});
    EXPECT_EQ(tail.pixels[5], (11 * 23) / 255.0);
    EXPECT_THROW((void)d.slice(1, 2), DimensionError);
}

TEST(Idx, BadMagic)
{
    Fixture f = two_images();
    f.images[3] = 0x01;
    EXPECT_NE(parse_error(f).find("magic"), std::string::npos);
    f = two_images();
    f.labels[3] = 0x03;
    EXPECT_NE(parse_error(f).find("magic"), std::string::npos);
}

TEST(Idx, TruncationNamesOffset)
{
    Fixture f = two_images();
    f.images.resize(f.images.size() - 3);
    const auto msg = parse_error(f);
    EXPECT_NE(msg.find("truncated"), std::string::npos) << msg;
    EXPECT_NE(msg.find("byte offset 25"), std::string::npos) << msg;

    f = two_images();
    f.images.resize(10);
    EXPECT_NE(parse_error(f).find("byte offset 8"), std::string::npos);

    f = two_images();
    f.labels.pop_back();
    EXPECT_NE(parse_error(f).find("byte offset 9"), std::string::npos);
}

TEST(Idx, CountMismatchAndLabelRange)
{
    Fixture f = two_images();
    f.labels[7] = 3;
    f.labels.push_back(1);
    EXPECT_NE(parse_error(f).find("2 images but 3 labels"), std::string::npos);

    f = two_images();
    f.labels[9] = 12;
    EXPECT_NE(parse_error(f).find("byte offset 9"), std::string::npos);
}

TEST(Idx, MissingFileIsIoError)
{
    EXPECT_THROW((void)load_idx("/nonexistent/a", "/nonexistent/b"), IoError);
}

TEST(Idx, OfficialTestSetWhenAvailable)
{
    const auto dir = default_mnist_dir();
    if (dir.empty() || !std::filesystem::exists(dir / "t10k-images-idx3-ubyte")) {
        GTEST_SKIP() << "set IPCNN_MNIST_DIR to run against the official files";
    }
    const Dataset d = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
    EXPECT_EQ(d.size(), 10000);
    EXPECT_EQ(d.rows, 28);
    EXPECT_EQ(d.cols, 28);
    for (double p : d.pixels) {
        ASSERT_GE(p, 0.0);
        ASSERT_LE(p, 1.0);
    }
    std::array<int, 10> per_class{};
    for (int l : d.labels) {
        ++per_class[static_cast<std::size_t>(l)];
    }
    for (int n : per_class) {
        EXPECT_GT(n, 800);
    }
}
