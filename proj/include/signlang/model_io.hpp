#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "signlang/binary_io.hpp"
#include "signlang/nn.hpp"

namespace signlang {

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Fixed-size prefix of a BSLM file.
struct ModelFileHeader {
    std::uint32_t version = kModelFormatVersion;
    std::uint32_t input_dim = 0;
    std::uint32_t seq_len = 0;
    std::uint32_t num_lstm_layers = 0;
    std::uint32_t num_dense_layers = 0;
    std::uint32_t num_classes = 0;
    Activation output_activation = Activation::Relu;
};

/// Header, label table, then every matrix with a rows/cols prefix, float64.
/// No checksum; callers seal the enclosing buffer.
void write_model(ByteWriter& out, const Model& model);
Model read_model(ByteReader& in);

std::vector<std::uint8_t> encode_model(const Model& model);
Model decode_model(std::span<const std::uint8_t> bytes);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

/// Reads and checks only the fixed header.
ModelFileHeader read_model_header(std::span<const std::uint8_t> bytes);

} // namespace signlang
