#pragma once

// IDX (MNIST) reader. All header integers are big-endian; image files carry
// magic 0x00000803 followed by count, rows and cols, label files 0x00000801
// followed by count. Pixel bytes are scaled by 1/255.

#include "ipcnn/errors.hpp"

#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

namespace ipcnn::nn {

inline constexpr std::uint32_t idx_image_magic = 0x00000803;
inline constexpr std::uint32_t idx_label_magic = 0x00000801;

struct Dataset {
    int rows = 0;
    int cols = 0;
    // Row-major pixels of each image, concatenated; values in [0, 1].
    std::vector<double> pixels;
    std::vector<int> labels;

    [[nodiscard]] int size() const { return static_cast<int>(labels.size()); }
    [[nodiscard]] std::size_t image_size() const { return static_cast<std::size_t>(rows) * cols; }
    [[nodiscard]] const double* image(int i) const
    {
        return pixels.data() + static_cast<std::size_t>(i) * image_size();
    }

    // Samples [first, first + count).
    [[nodiscard]] Dataset slice(int first, int count) const
    {
        if (first < 0 || count < 0 || first + count > size()) {
            throw DimensionError("dataset slice [" + std::to_string(first) + ", " +
                                 std::to_string(first + count) + ") exceeds " +
                                 std::to_string(size()) + " samples");
        }
        Dataset d;
        d.rows = rows;
        d.cols = cols;
        d.pixels.assign(pixels.begin() + static_cast<std::ptrdiff_t>(first * image_size()),
                        pixels.begin() + static_cast<std::ptrdiff_t>((first + count) * image_size()));
        d.labels.assign(labels.begin() + first, labels.begin() + first + count);
        return d;
    }
};

struct MnistFiles {
    std::filesystem::path train_images;
    std::filesystem::path train_labels;
    std::filesystem::path test_images;
    std::filesystem::path test_labels;

    static MnistFiles in_directory(const std::filesystem::path& dir)
    {
        return {dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte",
                dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte"};
    }
};

// Directory named by IPCNN_MNIST_DIR, or empty.
inline std::filesystem::path default_mnist_dir()
{
    const char* env = std::getenv("IPCNN_MNIST_DIR");
    return env != nullptr ? std::filesystem::path(env) : std::filesystem::path();
}

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                               const std::string& what)
{
    if (offset + 4 > bytes.size()) {
        throw ParseError(what + ": truncated header at byte offset " + std::to_string(offset));
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace detail

inline Dataset parse_idx(const std::vector<unsigned char>& image_bytes,
                         const std::vector<unsigned char>& label_bytes,
                         const std::string& name = "idx")
{
    const std::string img = name + " images";
    const std::string lab = name + " labels";
    if (const auto magic = detail::read_be32(image_bytes, 0, img); magic != idx_image_magic) {
        throw ParseError(img + ": bad magic " + std::to_string(magic) + " at byte offset 0");
    }
    if (const auto magic = detail::read_be32(label_bytes, 0, lab); magic != idx_label_magic) {
        throw ParseError(lab + ": bad magic " + std::to_string(magic) + " at byte offset 0");
    }
    const auto count = detail::read_be32(image_bytes, 4, img);
    const auto rows = detail::read_be32(image_bytes, 8, img);
    const auto cols = detail::read_be32(image_bytes, 12, img);
    const auto label_count = detail::read_be32(label_bytes, 4, lab);
    if (count != label_count) {
        throw ParseError(name + ": " + std::to_string(count) + " images but " +
                         std::to_string(label_count) + " labels");
    }
    const std::size_t plane = std::size_t{rows} * cols;
    const std::size_t need_images = 16 + std::size_t{count} * plane;
    if (image_bytes.size() < need_images) {
        throw ParseError(img + ": truncated pixel data, file ends at byte offset " +
                         std::to_string(image_bytes.size()) + ", expected " +
                         std::to_string(need_images));
    }
    const std::size_t need_labels = 8 + std::size_t{count};
    if (label_bytes.size() < need_labels) {
        throw ParseError(lab + ": truncated label data, file ends at byte offset " +
                         std::to_string(label_bytes.size()) + ", expected " +
                         std::to_string(need_labels));
    }

    Dataset d;
    d.rows = static_cast<int>(rows);
    d.cols = static_cast<int>(cols);
    d.pixels.resize(std::size_t{count} * plane);
    for (std::size_t i = 0; i < d.pixels.size(); ++i) {
        d.pixels[i] = static_cast<double>(image_bytes[16 + i]) / 255.0;
    }
    d.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        d.labels[i] = label_bytes[8 + i];
        if (d.labels[i] > 9) {
            throw ParseError(lab + ": label " + std::to_string(d.labels[i]) +
                             " outside [0, 9] at byte offset " + std::to_string(8 + i));
        }
    }
    return d;
}

inline Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels)
{
    return parse_idx(detail::read_file(images), detail::read_file(labels), images.filename().string());
}

struct MnistData {
    Dataset train;
    Dataset test;
};

inline MnistData load_mnist(const MnistFiles& files)
{
    return {load_idx(files.train_images, files.train_labels),
            load_idx(files.test_images, files.test_labels)};
}

}  // namespace ipcnn::nn
