#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "signlang/dataset.hpp"
#include "signlang/landmarks.hpp"

namespace signlang {

template <typename A, typename B>
bool same_values(const A& a, const B& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

/// Parameter storage. Row-major so that each gate's rows form one
/// contiguous block.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Batched activations: features x (steps * batch). Column `t * batch + b`
/// holds step t of sample b.
using Activations = Eigen::MatrixXd;

enum class Activation : std::uint8_t {
    Tanh = 0,
    Relu = 1,
    Identity = 2,
};

/// Gate order inside the stacked LSTM matrices.
enum class Gate : std::size_t {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
};

inline constexpr std::array<Gate, 4> kGates = {Gate::Input, Gate::Forget, Gate::Cell, Gate::Output};

/// Input (W), recurrent (U) and bias (b) parameters of one LSTM layer, the
/// four gates stacked as row blocks in kGates order.
struct LstmWeights {
    Matrix W; ///< 4H x input
    Matrix U; ///< 4H x H
    Vector b; ///< 4H

    std::size_t hidden() const noexcept { return static_cast<std::size_t>(U.cols()); }
    std::size_t input() const noexcept { return static_cast<std::size_t>(W.cols()); }

    auto W_gate(Gate g) { return W.middleRows(gate_row(g), U.cols()); }
    auto W_gate(Gate g) const { return W.middleRows(gate_row(g), U.cols()); }
    auto U_gate(Gate g) { return U.middleRows(gate_row(g), U.cols()); }
    auto U_gate(Gate g) const { return U.middleRows(gate_row(g), U.cols()); }
    auto b_gate(Gate g) { return b.segment(gate_row(g), U.cols()); }
    auto b_gate(Gate g) const { return b.segment(gate_row(g), U.cols()); }

    static LstmWeights zeros(std::size_t input, std::size_t hidden);

    bool operator==(const LstmWeights& o) const {
        return same_values(W, o.W) && same_values(U, o.U) && same_values(b, o.b);
    }

private:
    Eigen::Index gate_row(Gate g) const noexcept {
        return static_cast<Eigen::Index>(g) * U.cols();
    }
};

struct LstmLayer {
    LstmWeights weights;
    bool return_sequences = true;
    Activation output_activation = Activation::Relu;

    bool operator==(const LstmLayer&) const = default;
};

struct DenseWeights {
    Matrix W; ///< out x in
    Vector b; ///< out

    static DenseWeights zeros(std::size_t in, std::size_t out);

    bool operator==(const DenseWeights& o) const { return same_values(W, o.W) && same_values(b, o.b); }
};

struct DenseLayer {
    DenseWeights weights;
    Activation activation = Activation::Relu;

    bool operator==(const DenseLayer&) const = default;
};

/// Stacked LSTM layers, then dense layers, then softmax.
struct Model {
    LabelSet labels;
    std::size_t input_dim = kFeatureDim;
    std::size_t seq_len = kSequenceLength;
    std::vector<LstmLayer> lstm;
    std::vector<DenseLayer> dense;

    std::size_t num_classes() const noexcept { return labels.size(); }

    /// Throws ShapeError if dimensions do not chain, the return_sequences
    /// pattern is wrong, the output width differs from the label count, or a
    /// parameter is non-finite.
    void validate() const;

    bool operator==(const Model&) const = default;
};

struct ModelSpec {
    std::size_t input_dim = kFeatureDim;
    std::size_t seq_len = kSequenceLength;
    std::vector<std::size_t> lstm_hidden = {64, 128, 64};
    std::vector<std::size_t> dense_hidden = {32};
    Activation lstm_output = Activation::Relu;
};

/// Glorot-uniform weights per matrix, zero biases except forget gates at 1.
Model init_model(const ModelSpec& spec, const LabelSet& labels, std::uint64_t seed);

/// Same layout as Model's parameters; used for gradients and optimizer moments.
struct GradientSet {
    std::vector<LstmWeights> lstm;
    std::vector<DenseWeights> dense;

    static GradientSet zeros_like(const Model& model);

    GradientSet& operator+=(const GradientSet& other);
    GradientSet& operator*=(double factor);

    bool operator==(const GradientSet&) const = default;
};

/// Every parameter array in a fixed order: per LSTM layer W, U, b; per
/// dense layer W, b.
std::vector<std::span<double>> parameter_arrays(Model& model);
std::vector<std::span<const double>> parameter_arrays(const Model& model);
std::vector<std::span<double>> parameter_arrays(GradientSet& grads);
std::vector<std::span<const double>> parameter_arrays(const GradientSet& grads);

std::size_t parameter_count(const Model& model);

// ---------------------------------------------------------------------------
// Single cell

struct LstmCellCache {
    Vector x, h_prev, c_prev;
    Vector i, f, g, o; ///< activated gates
    Vector c;
};

struct LstmCellResult {
    Vector h;
    Vector c;
    LstmCellCache cache;
};

/// One step: i,f,o = sigmoid, g = tanh, c = f*c_prev + i*g, h = o*act(c).
LstmCellResult lstm_cell_forward(const Vector& x, const Vector& h_prev, const Vector& c_prev,
                                 const LstmLayer& layer);

// ---------------------------------------------------------------------------
// Batched forward / backward

struct LstmLayerCache {
    Activations input;  ///< in x TB
    Activations gates;  ///< 4H x TB, activated
    Activations cells;  ///< H x TB
    Activations hidden; ///< H x TB
};

/// Unrolls one layer over `input` (in x steps*batch), starting from zero state.
LstmLayerCache lstm_layer_forward(const LstmLayer& layer, Activations input, std::size_t batch);

struct DenseCache {
    Activations input;
    Activations pre;
};

struct ForwardCache {
    std::size_t batch = 0;
    std::size_t steps = 0;
    std::vector<LstmLayerCache> lstm;
    std::vector<DenseCache> dense;
    Activations probs; ///< C x batch
};

/// `input` is input_dim x (seq_len * batch), column t * batch + b.
ForwardCache forward_batch(const Activations& input, std::size_t batch, const Model& model);

/// Sum over the batch of the cross-entropy gradient for every parameter.
GradientSet backward_batch(const ForwardCache& cache, std::span<const std::size_t> targets,
                           const Model& model);

/// Packs samples into the batched input layout, widening to double.
Activations pack_sequences(std::span<const SequenceSample* const> samples);

/// Packs one sequence given as frames.
Activations pack_sequence(std::span<const FeatureVector> frames);

struct ForwardResult {
    std::vector<double> probs;
    ForwardCache cache;
};

/// Classifies one sequence of exactly model.seq_len frames of model.input_dim.
ForwardResult model_forward(std::span<const FeatureVector> sequence, const Model& model);

/// Gradient of cross_entropy(model_forward(...), target).
GradientSet model_backward(const ForwardCache& cache, std::size_t target, const Model& model);

std::vector<double> softmax(std::span<const double> logits);

inline constexpr double kProbabilityFloor = 1e-12;

/// -ln(max(probs[target], 1e-12)).
double cross_entropy(std::span<const double> probs, std::size_t target);

/// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

} // namespace signlang
