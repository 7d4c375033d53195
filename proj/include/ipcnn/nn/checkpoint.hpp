#pragma once

// Checkpoint container, version 1 (see docs/checkpoint.md):
//
//   bytes 0..7    ASCII "IPCNNCKP"
//   bytes 8..11   uint32 little-endian format version (1)
//   bytes 12..19  uint64 little-endian header length H
//   next H bytes  UTF-8 JSON header: shape, training metadata, tensor table
//   remainder     IEEE-754 binary64 little-endian tensor payloads, in table
//                 order, each stored column-major
//
// Doubles are written bit-for-bit, so save/load is lossless.

#include "ipcnn/errors.hpp"
#include "ipcnn/nn/network.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace ipcnn::nn {

inline constexpr std::array<char, 8> checkpoint_magic{'I', 'P', 'C', 'N', 'N', 'C', 'K', 'P'};
inline constexpr std::uint32_t checkpoint_version = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::vector<unsigned char>& out, const T& value)
{
    const auto* p = reinterpret_cast<const unsigned char*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<unsigned char>& in, std::size_t& offset)
{
    if (offset + sizeof(T) > in.size()) {
        throw ParseError("checkpoint truncated at byte offset " + std::to_string(offset));
    }
    T value;
    std::memcpy(&value, in.data() + offset, sizeof(T));
    offset += sizeof(T);
    return value;
}

struct TensorRef {
    const char* name;
    double* data;
    Eigen::Index rows;
    Eigen::Index cols;
};

inline std::vector<TensorRef> tensor_table(NetworkModel& model)
{
    auto w = model.weight_tensors();
    auto b = model.bias_tensors();
    static constexpr std::array<const char*, 4> layer{"conv1", "conv2", "fc1", "fc2"};
    std::vector<TensorRef> refs;
    for (std::size_t k = 0; k < 4; ++k) {
        refs.push_back({layer[k], w[k]->data(), w[k]->rows(), w[k]->cols()});
        refs.push_back({layer[k], b[k]->data(), b[k]->size(), 1});
    }
    return refs;
}

}  // namespace detail

inline std::vector<unsigned char> serialize_checkpoint(const NetworkModel& source)
{
    NetworkModel model = source;
    const auto& s = model.shape();
    const auto& m = model.metadata;
    nlohmann::json header;
    header["shape"] = {{"input_width", s.input_width},       {"input_channels", s.input_channels},
                       {"conv1_channels", s.conv1_channels}, {"conv2_channels", s.conv2_channels},
                       {"sigma", s.sigma},                   {"hidden", s.hidden},
                       {"classes", s.classes}};
    header["training"] = {{"epochs", m.epochs},
                          {"learning_rate", m.learning_rate},
                          {"momentum", m.momentum},
                          {"batch_size", m.batch_size},
                          {"seed", m.seed},
                          {"final_train_loss", m.final_train_loss},
                          {"test_accuracy", m.test_accuracy}};
    nlohmann::json tensors = nlohmann::json::array();
    const auto table = detail::tensor_table(model);
    for (std::size_t k = 0; k < table.size(); ++k) {
        tensors.push_back({{"layer", table[k].name},
                           {"kind", k % 2 == 0 ? "weights" : "bias"},
                           {"rows", table[k].rows},
                           {"cols", table[k].cols}});
    }
    header["tensors"] = tensors;
    const std::string text = header.dump();

    std::vector<unsigned char> out(checkpoint_magic.begin(), checkpoint_magic.end());
    detail::put(out, checkpoint_version);
    detail::put(out, static_cast<std::uint64_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& t : table) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(t.data);
        out.insert(out.end(), bytes, bytes + sizeof(double) * static_cast<std::size_t>(t.rows * t.cols));
    }
    return out;
}

inline NetworkModel deserialize_checkpoint(const std::vector<unsigned char>& bytes)
{
    if (bytes.size() < checkpoint_magic.size() ||
        !std::equal(checkpoint_magic.begin(), checkpoint_magic.end(), bytes.begin())) {
        throw ParseError("checkpoint: bad magic at byte offset 0");
    }
    std::size_t offset = checkpoint_magic.size();
    const auto version = detail::take<std::uint32_t>(bytes, offset);
    if (version != checkpoint_version) {
        throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto header_len = detail::take<std::uint64_t>(bytes, offset);
    if (offset + header_len > bytes.size()) {
        throw ParseError("checkpoint: header runs past end of file at byte offset " +
                         std::to_string(offset));
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                                       bytes.begin() + static_cast<std::ptrdiff_t>(offset + header_len));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: malformed header: ") + e.what());
    }
    offset += header_len;

    NetworkShape shape;
    try {
        const auto& j = header.at("shape");
        shape.input_width = j.at("input_width").get<int>();
        shape.input_channels = j.at("input_channels").get<int>();
        shape.conv1_channels = j.at("conv1_channels").get<int>();
        shape.conv2_channels = j.at("conv2_channels").get<int>();
        shape.sigma = j.at("sigma").get<int>();
        shape.hidden = j.at("hidden").get<int>();
        shape.classes = j.at("classes").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: bad shape record: ") + e.what());
    }
    NetworkModel model(shape);
    try {
        const auto& t = header.at("training");
        model.metadata.epochs = t.at("epochs").get<int>();
        model.metadata.learning_rate = t.at("learning_rate").get<double>();
        model.metadata.momentum = t.at("momentum").get<double>();
        model.metadata.batch_size = t.at("batch_size").get<int>();
        model.metadata.seed = t.at("seed").get<std::uint64_t>();
        model.metadata.final_train_loss = t.at("final_train_loss").get<double>();
        model.metadata.test_accuracy = t.at("test_accuracy").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: bad training record: ") + e.what());
    }

    const auto table = detail::tensor_table(model);
    const auto& listed = header.at("tensors");
    if (!listed.is_array() || listed.size() != table.size()) {
        throw ParseError("checkpoint: tensor table does not match the network shape");
    }
    for (std::size_t k = 0; k < table.size(); ++k) {
        if (listed[k].at("rows").get<Eigen::Index>() != table[k].rows ||
            listed[k].at("cols").get<Eigen::Index>() != table[k].cols) {
            throw ParseError("checkpoint: tensor " + std::to_string(k) + " has wrong dimensions");
        }
        const std::size_t n = sizeof(double) * static_cast<std::size_t>(table[k].rows * table[k].cols);
        if (offset + n > bytes.size()) {
            throw ParseError("checkpoint truncated at byte offset " + std::to_string(bytes.size()) +
                             " while reading tensor " + std::to_string(k));
        }
        std::memcpy(table[k].data, bytes.data() + offset, n);
        offset += n;
    }
    if (offset != bytes.size()) {
        throw ParseError("checkpoint: " + std::to_string(bytes.size() - offset) +
                         " trailing bytes after byte offset " + std::to_string(offset));
    }
    return model;
}

inline void save_checkpoint(const NetworkModel& model, const std::filesystem::path& path)
{
    const auto bytes = serialize_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write checkpoint " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to checkpoint " + path.string());
    }
}

inline NetworkModel load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                           std::istreambuf_iterator<char>()};
    return deserialize_checkpoint(bytes);
}

}  // namespace ipcnn::nn
