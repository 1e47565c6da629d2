#include "signlang/model_io.hpp"

#include <algorithm>
#include <string>

#include "signlang/error.hpp"

namespace signlang {

namespace {

constexpr char kModelMagic[4] = {'B', 'S', 'L', 'M'};

template <typename M>
void write_matrix(ByteWriter& out, const M& m) {
    out.u32(static_cast<std::uint32_t>(m.rows()));
    out.u32(static_cast<std::uint32_t>(m.cols()));
    // Row-major storage: a gate block or a vector is contiguous.
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            out.f64(m(r, c));
        }
    }
}

/// Reads a rows/cols prefixed matrix into `dest`, which already has the
/// shape implied by the header and the preceding layers.
template <typename M>
void read_matrix(ByteReader& in, M&& dest, const char* name) {
    const auto rows = in.u32(name);
    const auto cols = in.u32(name);
    if (rows != static_cast<std::uint32_t>(dest.rows()) ||
        cols != static_cast<std::uint32_t>(dest.cols())) {
        throw LoadError(LoadErrorKind::DimensionMismatch,
                        std::string(name) + " is stored as " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", expected " + std::to_string(dest.rows()) +
                            "x" + std::to_string(dest.cols()));
    }
    in.require(std::size_t{rows} * cols * sizeof(double), name);
    for (Eigen::Index r = 0; r < dest.rows(); ++r) {
        for (Eigen::Index c = 0; c < dest.cols(); ++c) {
            dest(r, c) = in.f64(name);
        }
    }
}

ModelFileHeader read_header(ByteReader& in) {
    const auto magic = in.bytes(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), kModelMagic)) {
        throw LoadError(LoadErrorKind::BadMagic, "not a BSLM model file");
    }
    ModelFileHeader h;
    h.version = in.u32("header");
    if (h.version != kModelFormatVersion) {
        throw LoadError(LoadErrorKind::UnsupportedVersion,
                        "model format version " + std::to_string(h.version));
    }
    h.input_dim = in.u32("header");
    h.seq_len = in.u32("header");
    h.num_lstm_layers = in.u32("header");
    h.num_dense_layers = in.u32("header");
    h.num_classes = in.u32("header");
    const auto act = in.u8("header");
    if (act > 1) {
        throw LoadError(LoadErrorKind::Malformed, "unknown output activation code " + std::to_string(act));
    }
    h.output_activation = static_cast<Activation>(act);
    if (h.input_dim == 0 || h.seq_len == 0 || h.num_lstm_layers == 0 || h.num_dense_layers == 0 ||
        h.num_classes == 0) {
        throw LoadError(LoadErrorKind::DimensionMismatch, "header has a zero dimension or layer count");
    }
    return h;
}

} // namespace

void write_model(ByteWriter& out, const Model& model) {
    model.validate();
    const Activation act = model.lstm.front().output_activation;
    for (const auto& layer : model.lstm) {
        if (layer.output_activation != act) {
            throw ShapeError("the model format stores one output activation for all LSTM layers");
        }
    }
    for (std::size_t l = 0; l + 1 < model.dense.size(); ++l) {
        if (model.dense[l].activation != Activation::Relu) {
            throw ShapeError("the model format stores hidden dense layers as relu");
        }
    }
    out.text({kModelMagic, 4});
    out.u32(kModelFormatVersion);
    out.u32(static_cast<std::uint32_t>(model.input_dim));
    out.u32(static_cast<std::uint32_t>(model.seq_len));
    out.u32(static_cast<std::uint32_t>(model.lstm.size()));
    out.u32(static_cast<std::uint32_t>(model.dense.size()));
    out.u32(static_cast<std::uint32_t>(model.num_classes()));
    out.u8(static_cast<std::uint8_t>(act));

    out.u32(static_cast<std::uint32_t>(model.labels.size()));
    for (const auto& label : model.labels.labels()) {
        out.u32(static_cast<std::uint32_t>(label.size()));
        out.text(label);
    }
    for (const auto& layer : model.lstm) {
        const auto& w = layer.weights;
        for (Gate g : kGates) {
            write_matrix(out, w.W_gate(g));
        }
        for (Gate g : kGates) {
            write_matrix(out, w.U_gate(g));
        }
        for (Gate g : kGates) {
            write_matrix(out, w.b_gate(g));
        }
    }
    for (const auto& layer : model.dense) {
        write_matrix(out, layer.weights.W);
        write_matrix(out, layer.weights.b);
    }
}

Model read_model(ByteReader& in) {
    const ModelFileHeader h = read_header(in);

    Model m;
    m.input_dim = h.input_dim;
    m.seq_len = h.seq_len;

    const auto count = in.u32("label table");
    if (count != h.num_classes) {
        throw LoadError(LoadErrorKind::DimensionMismatch,
                        "label table has " + std::to_string(count) + " entries, header says " +
                            std::to_string(h.num_classes) + " classes");
    }
    std::vector<std::string> labels;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto len = in.u32("label table");
        const auto bytes = in.bytes(len, "label table");
        std::string label(bytes.begin(), bytes.end());
        if (!is_valid_utf8(label)) {
            throw LoadError(LoadErrorKind::InvalidUtf8, "label " + std::to_string(k));
        }
        labels.push_back(std::move(label));
    }
    try {
        m.labels = LabelSet(std::move(labels));
    } catch (const ValidationError& e) {
        throw LoadError(LoadErrorKind::Malformed, e.what());
    }

    std::size_t width = h.input_dim;
    for (std::uint32_t l = 0; l < h.num_lstm_layers; ++l) {
        // The hidden size is carried by the first gate matrix's row count.
        const auto hidden = in.peek_u32("LSTM W_i");
        if (hidden == 0) {
            throw LoadError(LoadErrorKind::DimensionMismatch, "LSTM layer with zero hidden units");
        }
        // Check the whole layer fits before allocating for it.
        const std::size_t H = hidden;
        in.require(12 * 8 + 4 * H * (width + H + 1) * sizeof(double), "LSTM layer");
        LstmLayer layer;
        layer.weights = LstmWeights::zeros(width, hidden);
        layer.return_sequences = l + 1 < h.num_lstm_layers;
        layer.output_activation = h.output_activation;
        static constexpr const char* kW[] = {"LSTM W_i", "LSTM W_f", "LSTM W_g", "LSTM W_o"};
        static constexpr const char* kU[] = {"LSTM U_i", "LSTM U_f", "LSTM U_g", "LSTM U_o"};
        static constexpr const char* kB[] = {"LSTM b_i", "LSTM b_f", "LSTM b_g", "LSTM b_o"};
        for (Gate g : kGates) {
            read_matrix(in, layer.weights.W_gate(g), kW[static_cast<std::size_t>(g)]);
        }
        for (Gate g : kGates) {
            read_matrix(in, layer.weights.U_gate(g), kU[static_cast<std::size_t>(g)]);
        }
        for (Gate g : kGates) {
            read_matrix(in, layer.weights.b_gate(g), kB[static_cast<std::size_t>(g)]);
        }
        m.lstm.push_back(std::move(layer));
        width = hidden;
    }
    for (std::uint32_t l = 0; l < h.num_dense_layers; ++l) {
        const bool last = l + 1 == h.num_dense_layers;
        const auto out_dim = in.peek_u32("dense W");
        if (last && out_dim != h.num_classes) {
            throw LoadError(LoadErrorKind::DimensionMismatch,
                            "output layer width " + std::to_string(out_dim) + " differs from " +
                                std::to_string(h.num_classes) + " classes");
        }
        if (out_dim == 0) {
            throw LoadError(LoadErrorKind::DimensionMismatch, "dense layer with zero units");
        }
        in.require(2 * 8 + std::size_t{out_dim} * (width + 1) * sizeof(double), "dense layer");
        DenseLayer layer;
        layer.weights = DenseWeights::zeros(width, out_dim);
        layer.activation = last ? Activation::Identity : Activation::Relu;
        read_matrix(in, layer.weights.W, "dense W");
        read_matrix(in, layer.weights.b, "dense b");
        m.dense.push_back(std::move(layer));
        width = out_dim;
    }
    try {
        m.validate();
    } catch (const ShapeError& e) {
        throw LoadError(LoadErrorKind::Malformed, e.what());
    }
    return m;
}

std::vector<std::uint8_t> encode_model(const Model& model) {
    ByteWriter w;
    write_model(w, model);
    w.seal();
    return std::move(w).take();
}

Model decode_model(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    Model m = read_model(r);
    r.verify_seal();
    return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
    write_file_atomic(path, encode_model(model));
}

Model load_model(const std::filesystem::path& path) {
    return decode_model(read_file(path));
}

ModelFileHeader read_model_header(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    return read_header(r);
}

} // namespace signlang
