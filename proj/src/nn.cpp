#include "signlang/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "signlang/error.hpp"

namespace signlang {

namespace {

using Array = Eigen::ArrayXXd;

template <typename Derived>
Array sigmoid(const Eigen::ArrayBase<Derived>& x) {
    return (1.0 + (-x).exp()).inverse();
}

template <typename Derived>
Array activate(const Eigen::ArrayBase<Derived>& x, Activation act) {
    switch (act) {
    case Activation::Tanh: return x.tanh();
    case Activation::Relu: return x.max(0.0);
    case Activation::Identity: return x;
    }
    return x;
}

/// Derivative of `act` expressed through its input. relu'(0) = 0.
template <typename Derived>
Array activate_grad(const Eigen::ArrayBase<Derived>& x, Activation act) {
    switch (act) {
    case Activation::Tanh: return 1.0 - x.tanh().square();
    case Activation::Relu: return (x > 0.0).template cast<double>();
    case Activation::Identity: return Array::Ones(x.rows(), x.cols());
    }
    return Array::Ones(x.rows(), x.cols());
}

std::string dims(Eigen::Index r, Eigen::Index c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

void check_finite(std::span<const double> values, const std::string& what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw ShapeError(what + " contains a non-finite value");
        }
    }
}

template <typename Block>
void fill_uniform(Block&& block, std::mt19937_64& rng) {
    const double fan_in = static_cast<double>(block.cols());
    const double fan_out = static_cast<double>(block.rows());
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index r = 0; r < block.rows(); ++r) {
        for (Eigen::Index c = 0; c < block.cols(); ++c) {
            block(r, c) = dist(rng);
        }
    }
}

/// BPTT through one layer. Accumulates parameter gradients into `grad` and
/// returns the gradient with respect to the layer input when requested.
Activations lstm_layer_backward(const LstmLayer& layer, const LstmLayerCache& cache,
                                const Activations& d_hidden, std::size_t batch,
                                LstmWeights& grad, bool want_input_grad) {
    const auto& w = layer.weights;
    const Eigen::Index H = static_cast<Eigen::Index>(w.hidden());
    const Eigen::Index B = static_cast<Eigen::Index>(batch);
    const Eigen::Index TB = cache.hidden.cols();
    const Eigen::Index T = TB / B;

    Activations d_pre(4 * H, TB);
    Activations dh_next = Activations::Zero(H, B);
    Array dc_next = Array::Zero(H, B);

    for (Eigen::Index t = T - 1; t >= 0; --t) {
        const auto gates = cache.gates.middleCols(t * B, B);
        const Array i = gates.topRows(H).array();
        const Array f = gates.middleRows(H, H).array();
        const Array g = gates.middleRows(2 * H, H).array();
        const Array o = gates.bottomRows(H).array();
        const Array c = cache.cells.middleCols(t * B, B).array();

        const Array dh = d_hidden.middleCols(t * B, B).array() + dh_next.array();
        const Array dc = dc_next + dh * o * activate_grad(c, layer.output_activation);

        auto dz = d_pre.middleCols(t * B, B);
        dz.topRows(H) = (dc * g * i * (1.0 - i)).matrix();
        if (t > 0) {
            const Array c_prev = cache.cells.middleCols((t - 1) * B, B).array();
            dz.middleRows(H, H) = (dc * c_prev * f * (1.0 - f)).matrix();
        } else {
            dz.middleRows(H, H).setZero();
        }
        dz.middleRows(2 * H, H) = (dc * i * (1.0 - g.square())).matrix();
        dz.bottomRows(H) = (dh * activate(c, layer.output_activation) * o * (1.0 - o)).matrix();

        dc_next = dc * f;
        dh_next.noalias() = w.U.transpose() * dz;
    }

    grad.W.noalias() = d_pre * cache.input.transpose();
    if (T > 1) {
        grad.U.noalias() = d_pre.rightCols(TB - B) * cache.hidden.leftCols(TB - B).transpose();
    } else {
        grad.U.setZero();
    }
    grad.b = d_pre.rowwise().sum();

    if (!want_input_grad) {
        return {};
    }
    return w.W.transpose() * d_pre;
}

} // namespace

LstmWeights LstmWeights::zeros(std::size_t input, std::size_t hidden) {
    const auto in = static_cast<Eigen::Index>(input);
    const auto h = static_cast<Eigen::Index>(hidden);
    return {Matrix::Zero(4 * h, in), Matrix::Zero(4 * h, h), Vector::Zero(4 * h)};
}

DenseWeights DenseWeights::zeros(std::size_t in, std::size_t out) {
    return {Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
            Vector::Zero(static_cast<Eigen::Index>(out))};
}

void Model::validate() const {
    if (lstm.empty()) {
        throw ShapeError("model has no LSTM layers");
    }
    if (dense.empty()) {
        throw ShapeError("model has no dense layers");
    }
    if (seq_len == 0) {
        throw ShapeError("sequence length must be positive");
    }
    std::size_t width = input_dim;
    for (std::size_t l = 0; l < lstm.size(); ++l) {
        const auto& w = lstm[l].weights;
        const std::string name = "LSTM layer " + std::to_string(l);
        const auto H = w.U.cols();
        if (H == 0 || w.U.rows() != 4 * H || w.W.rows() != 4 * H || w.b.size() != 4 * H) {
            throw ShapeError(name + ": W " + dims(w.W.rows(), w.W.cols()) + ", U " +
                             dims(w.U.rows(), w.U.cols()) + ", b " + std::to_string(w.b.size()) +
                             " are not a consistent 4-gate layout");
        }
        if (static_cast<std::size_t>(w.W.cols()) != width) {
            throw ShapeError(name + " expects input width " + std::to_string(w.W.cols()) +
                             ", previous layer provides " + std::to_string(width));
        }
        const bool last = l + 1 == lstm.size();
        if (lstm[l].return_sequences == last) {
            throw ShapeError(name + ": only the last LSTM layer may drop return_sequences");
        }
        if (lstm[l].output_activation != Activation::Tanh &&
            lstm[l].output_activation != Activation::Relu) {
            throw ShapeError(name + ": output activation must be tanh or relu");
        }
        check_finite({w.W.data(), static_cast<std::size_t>(w.W.size())}, name + " W");
        check_finite({w.U.data(), static_cast<std::size_t>(w.U.size())}, name + " U");
        check_finite({w.b.data(), static_cast<std::size_t>(w.b.size())}, name + " b");
        width = static_cast<std::size_t>(H);
    }
    for (std::size_t l = 0; l < dense.size(); ++l) {
        const auto& w = dense[l].weights;
        const std::string name = "dense layer " + std::to_string(l);
        if (static_cast<std::size_t>(w.W.cols()) != width || w.b.size() != w.W.rows() ||
            w.W.rows() == 0) {
            throw ShapeError(name + ": W " + dims(w.W.rows(), w.W.cols()) + ", b " +
                             std::to_string(w.b.size()) + " do not chain from width " +
                             std::to_string(width));
        }
        const bool last = l + 1 == dense.size();
        if (last && dense[l].activation != Activation::Identity) {
            throw ShapeError("the output dense layer must be linear (softmax follows)");
        }
        if (!last && dense[l].activation == Activation::Tanh) {
            throw ShapeError(name + ": hidden dense activation must be relu or identity");
        }
        check_finite({w.W.data(), static_cast<std::size_t>(w.W.size())}, name + " W");
        check_finite({w.b.data(), static_cast<std::size_t>(w.b.size())}, name + " b");
        width = static_cast<std::size_t>(w.W.rows());
    }
    if (width != labels.size()) {
        throw ShapeError("output width " + std::to_string(width) + " differs from " +
                         std::to_string(labels.size()) + " labels");
    }
}

Model init_model(const ModelSpec& spec, const LabelSet& labels, std::uint64_t seed) {
    if (spec.lstm_hidden.empty()) {
        throw ShapeError("at least one LSTM layer is required");
    }
    if (labels.empty()) {
        throw ShapeError("at least one label is required");
    }
    std::mt19937_64 rng(seed);
    Model m;
    m.labels = labels;
    m.input_dim = spec.input_dim;
    m.seq_len = spec.seq_len;

    std::size_t width = spec.input_dim;
    for (std::size_t l = 0; l < spec.lstm_hidden.size(); ++l) {
        LstmLayer layer;
        layer.weights = LstmWeights::zeros(width, spec.lstm_hidden[l]);
        layer.return_sequences = l + 1 < spec.lstm_hidden.size();
        layer.output_activation = spec.lstm_output;
        for (Gate g : kGates) {
            fill_uniform(layer.weights.W_gate(g), rng);
        }
        for (Gate g : kGates) {
            fill_uniform(layer.weights.U_gate(g), rng);
        }
        layer.weights.b_gate(Gate::Forget).setOnes();
        m.lstm.push_back(std::move(layer));
        width = spec.lstm_hidden[l];
    }
    std::vector<std::size_t> widths = spec.dense_hidden;
    widths.push_back(labels.size());
    for (std::size_t l = 0; l < widths.size(); ++l) {
        DenseLayer layer;
        layer.weights = DenseWeights::zeros(width, widths[l]);
        layer.activation = l + 1 < widths.size() ? Activation::Relu : Activation::Identity;
        fill_uniform(layer.weights.W, rng);
        m.dense.push_back(std::move(layer));
        width = widths[l];
    }
    m.validate();
    return m;
}

GradientSet GradientSet::zeros_like(const Model& model) {
    GradientSet g;
    for (const auto& l : model.lstm) {
        g.lstm.push_back(LstmWeights::zeros(l.weights.input(), l.weights.hidden()));
    }
    for (const auto& d : model.dense) {
        g.dense.push_back(DenseWeights::zeros(static_cast<std::size_t>(d.weights.W.cols()),
                                              static_cast<std::size_t>(d.weights.W.rows())));
    }
    return g;
}

GradientSet& GradientSet::operator+=(const GradientSet& other) {
    auto mine = parameter_arrays(*this);
    const auto theirs = parameter_arrays(other);
    if (mine.size() != theirs.size()) {
        throw ShapeError("gradient sets have different layouts");
    }
    for (std::size_t k = 0; k < mine.size(); ++k) {
        if (mine[k].size() != theirs[k].size()) {
            throw ShapeError("gradient sets have different layouts");
        }
        for (std::size_t j = 0; j < mine[k].size(); ++j) {
            mine[k][j] += theirs[k][j];
        }
    }
    return *this;
}

GradientSet& GradientSet::operator*=(double factor) {
    for (auto arr : parameter_arrays(*this)) {
        for (double& v : arr) {
            v *= factor;
        }
    }
    return *this;
}

std::vector<std::span<double>> parameter_arrays(Model& model) {
    std::vector<std::span<double>> out;
    auto add = [&out](auto& m) { out.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
    for (auto& l : model.lstm) {
        add(l.weights.W);
        add(l.weights.U);
        add(l.weights.b);
    }
    for (auto& d : model.dense) {
        add(d.weights.W);
        add(d.weights.b);
    }
    return out;
}

std::vector<std::span<const double>> parameter_arrays(const Model& model) {
    std::vector<std::span<const double>> out;
    auto add = [&out](const auto& m) { out.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
    for (const auto& l : model.lstm) {
        add(l.weights.W);
        add(l.weights.U);
        add(l.weights.b);
    }
    for (const auto& d : model.dense) {
        add(d.weights.W);
        add(d.weights.b);
    }
    return out;
}

std::vector<std::span<double>> parameter_arrays(GradientSet& grads) {
    std::vector<std::span<double>> out;
    auto add = [&out](auto& m) { out.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
    for (auto& l : grads.lstm) {
        add(l.W);
        add(l.U);
        add(l.b);
    }
    for (auto& d : grads.dense) {
        add(d.W);
        add(d.b);
    }
    return out;
}

std::vector<std::span<const double>> parameter_arrays(const GradientSet& grads) {
    std::vector<std::span<const double>> out;
    auto add = [&out](const auto& m) { out.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
    for (const auto& l : grads.lstm) {
        add(l.W);
        add(l.U);
        add(l.b);
    }
    for (const auto& d : grads.dense) {
        add(d.W);
        add(d.b);
    }
    return out;
}

std::size_t parameter_count(const Model& model) {
    std::size_t n = 0;
    for (auto arr : parameter_arrays(model)) {
        n += arr.size();
    }
    return n;
}

LstmCellResult lstm_cell_forward(const Vector& x, const Vector& h_prev, const Vector& c_prev,
                                 const LstmLayer& layer) {
    const auto& w = layer.weights;
    const auto H = static_cast<Eigen::Index>(w.hidden());
    if (x.size() != w.W.cols() || h_prev.size() != H || c_prev.size() != H) {
        throw ShapeError("cell input " + std::to_string(x.size()) + ", state " +
                         std::to_string(h_prev.size()) + "/" + std::to_string(c_prev.size()) +
                         " do not match layer " + dims(w.W.rows(), w.W.cols()));
    }
    const Vector z = w.W * x + w.U * h_prev + w.b;

    LstmCellResult r;
    r.cache.x = x;
    r.cache.h_prev = h_prev;
    r.cache.c_prev = c_prev;
    r.cache.i = sigmoid(z.segment(0, H).array()).matrix();
    r.cache.f = sigmoid(z.segment(H, H).array()).matrix();
    r.cache.g = z.segment(2 * H, H).array().tanh().matrix();
    r.cache.o = sigmoid(z.segment(3 * H, H).array()).matrix();
    r.c = (r.cache.f.array() * c_prev.array() + r.cache.i.array() * r.cache.g.array()).matrix();
    r.cache.c = r.c;
    r.h = (r.cache.o.array() * activate(r.c.array(), layer.output_activation)).matrix();
    return r;
}

LstmLayerCache lstm_layer_forward(const LstmLayer& layer, Activations input, std::size_t batch) {
    const auto& w = layer.weights;
    const auto H = static_cast<Eigen::Index>(w.hidden());
    const auto B = static_cast<Eigen::Index>(batch);
    if (input.rows() != w.W.cols() || B == 0 || input.cols() % B != 0) {
        throw ShapeError("layer input " + dims(input.rows(), input.cols()) +
                         " does not match W " + dims(w.W.rows(), w.W.cols()) + " with batch " +
                         std::to_string(batch));
    }
    const Eigen::Index TB = input.cols();
    const Eigen::Index T = TB / B;

    LstmLayerCache cache;
    cache.gates.noalias() = w.W * input;
    cache.gates.colwise() += w.b;
    cache.cells.resize(H, TB);
    cache.hidden.resize(H, TB);

    for (Eigen::Index t = 0; t < T; ++t) {
        auto z = cache.gates.middleCols(t * B, B);
        if (t > 0) {
            z.noalias() += w.U * cache.hidden.middleCols((t - 1) * B, B);
        }
        z.topRows(2 * H) = sigmoid(z.topRows(2 * H).array()).matrix();
        z.middleRows(2 * H, H) = z.middleRows(2 * H, H).array().tanh().matrix();
        z.bottomRows(H) = sigmoid(z.bottomRows(H).array()).matrix();

        const auto i = z.topRows(H).array();
        const auto f = z.middleRows(H, H).array();
        const auto g = z.middleRows(2 * H, H).array();
        const auto o = z.bottomRows(H).array();
        auto c = cache.cells.middleCols(t * B, B);
        if (t > 0) {
            c = (f * cache.cells.middleCols((t - 1) * B, B).array() + i * g).matrix();
        } else {
            c = (i * g).matrix();
        }
        cache.hidden.middleCols(t * B, B) =
            (o * activate(c.array(), layer.output_activation)).matrix();
    }
    cache.input = std::move(input);
    return cache;
}

ForwardCache forward_batch(const Activations& input, std::size_t batch, const Model& model) {
    const auto B = static_cast<Eigen::Index>(batch);
    const auto T = static_cast<Eigen::Index>(model.seq_len);
    if (input.rows() != static_cast<Eigen::Index>(model.input_dim) || input.cols() != T * B) {
        throw ShapeError("batch input " + dims(input.rows(), input.cols()) + ", expected " +
                         dims(static_cast<Eigen::Index>(model.input_dim), T * B));
    }
    ForwardCache cache;
    cache.batch = batch;
    cache.steps = model.seq_len;

    const Activations* layer_input = &input;
    for (const auto& layer : model.lstm) {
        cache.lstm.push_back(lstm_layer_forward(layer, *layer_input, batch));
        layer_input = &cache.lstm.back().hidden;
    }
    Activations x = cache.lstm.back().hidden.rightCols(B);
    for (const auto& layer : model.dense) {
        DenseCache dc;
        dc.pre.noalias() = layer.weights.W * x;
        dc.pre.colwise() += layer.weights.b;
        dc.input = std::move(x);
        x = activate(dc.pre.array(), layer.activation).matrix();
        cache.dense.push_back(std::move(dc));
    }
    cache.probs.resize(x.rows(), B);
    for (Eigen::Index b = 0; b < B; ++b) {
        const auto col = softmax({x.col(b).data(), static_cast<std::size_t>(x.rows())});
        cache.probs.col(b) = Eigen::Map<const Vector>(col.data(), x.rows());
    }
    return cache;
}

GradientSet backward_batch(const ForwardCache& cache, std::span<const std::size_t> targets,
                           const Model& model) {
    const auto B = static_cast<Eigen::Index>(cache.batch);
    if (cache.lstm.size() != model.lstm.size() || cache.dense.size() != model.dense.size() ||
        cache.steps != model.seq_len || cache.probs.rows() != static_cast<Eigen::Index>(model.num_classes()) ||
        cache.probs.cols() != B) {
        throw ShapeError("forward cache does not belong to this model");
    }
    for (std::size_t l = 0; l < model.lstm.size(); ++l) {
        if (cache.lstm[l].input.rows() != model.lstm[l].weights.W.cols() ||
            cache.lstm[l].hidden.rows() != model.lstm[l].weights.U.cols()) {
            throw ShapeError("forward cache does not belong to this model (LSTM layer " +
                             std::to_string(l) + ")");
        }
    }
    for (std::size_t l = 0; l < model.dense.size(); ++l) {
        if (cache.dense[l].input.rows() != model.dense[l].weights.W.cols() ||
            cache.dense[l].pre.rows() != model.dense[l].weights.W.rows()) {
            throw ShapeError("forward cache does not belong to this model (dense layer " +
                             std::to_string(l) + ")");
        }
    }
    if (targets.size() != cache.batch) {
        throw ShapeError(std::to_string(targets.size()) + " targets for a batch of " +
                         std::to_string(cache.batch));
    }

    GradientSet grads = GradientSet::zeros_like(model);

    // Softmax + cross-entropy: d loss / d logits = probs - one_hot.
    Activations delta = cache.probs;
    for (Eigen::Index b = 0; b < B; ++b) {
        const std::size_t target = targets[static_cast<std::size_t>(b)];
        if (target >= model.num_classes()) {
            throw ShapeError("target " + std::to_string(target) + " outside [0, " +
                             std::to_string(model.num_classes()) + ")");
        }
        delta(static_cast<Eigen::Index>(target), b) -= 1.0;
    }
    for (std::size_t l = model.dense.size(); l-- > 0;) {
        const auto& layer = model.dense[l];
        const auto& dc = cache.dense[l];
        if (layer.activation != Activation::Identity) {
            delta.array() *= activate_grad(dc.pre.array(), layer.activation);
        }
        grads.dense[l].W.noalias() = delta * dc.input.transpose();
        grads.dense[l].b = delta.rowwise().sum();
        delta = layer.weights.W.transpose() * delta;
    }

    const auto& top = cache.lstm.back();
    Activations d_hidden = Activations::Zero(top.hidden.rows(), top.hidden.cols());
    d_hidden.rightCols(B) = delta;
    for (std::size_t l = model.lstm.size(); l-- > 0;) {
        d_hidden = lstm_layer_backward(model.lstm[l], cache.lstm[l], d_hidden, cache.batch,
                                       grads.lstm[l], l > 0);
    }
    return grads;
}

Activations pack_sequences(std::span<const SequenceSample* const> samples) {
    if (samples.empty()) {
        throw ShapeError("empty batch");
    }
    const std::size_t T = samples.front()->seq_len;
    const std::size_t D = samples.front()->feature_dim;
    const auto B = static_cast<Eigen::Index>(samples.size());
    Activations out(static_cast<Eigen::Index>(D), static_cast<Eigen::Index>(T) * B);
    for (Eigen::Index b = 0; b < B; ++b) {
        const SequenceSample& s = *samples[static_cast<std::size_t>(b)];
        if (s.seq_len != T || s.feature_dim != D || s.values.size() != T * D) {
            throw ShapeError("samples in one batch must share their shape");
        }
        for (std::size_t t = 0; t < T; ++t) {
            const auto frame = s.frame(t);
            out.col(static_cast<Eigen::Index>(t) * B + b) =
                Eigen::Map<const Eigen::VectorXf>(frame.data(), static_cast<Eigen::Index>(D))
                    .cast<double>();
        }
    }
    return out;
}

Activations pack_sequence(std::span<const FeatureVector> frames) {
    if (frames.empty()) {
        throw ShapeError("empty sequence");
    }
    const auto D = static_cast<Eigen::Index>(frames.front().size());
    Activations out(D, static_cast<Eigen::Index>(frames.size()));
    for (std::size_t t = 0; t < frames.size(); ++t) {
        if (static_cast<Eigen::Index>(frames[t].size()) != D) {
            throw ShapeError("frame " + std::to_string(t) + " has " +
                             std::to_string(frames[t].size()) + " values, expected " +
                             std::to_string(D));
        }
        out.col(static_cast<Eigen::Index>(t)) = Eigen::Map<const Vector>(frames[t].data(), D);
    }
    return out;
}

ForwardResult model_forward(std::span<const FeatureVector> sequence, const Model& model) {
    if (sequence.size() != model.seq_len) {
        throw ShapeError("sequence has " + std::to_string(sequence.size()) + " frames, model expects " +
                         std::to_string(model.seq_len));
    }
    for (std::size_t t = 0; t < sequence.size(); ++t) {
        if (sequence[t].size() != model.input_dim) {
            throw ShapeError("frame " + std::to_string(t) + " has " +
                             std::to_string(sequence[t].size()) + " values, model expects " +
                             std::to_string(model.input_dim));
        }
    }
    ForwardResult r;
    r.cache = forward_batch(pack_sequence(sequence), 1, model);
    r.probs.assign(r.cache.probs.data(), r.cache.probs.data() + r.cache.probs.size());
    return r;
}

GradientSet model_backward(const ForwardCache& cache, std::size_t target, const Model& model) {
    return backward_batch(cache, std::span<const std::size_t>(&target, 1), model);
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) {
        return {};
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        out[k] = std::exp(logits[k] - top);
        sum += out[k];
    }
    for (double& v : out) {
        v /= sum;
    }
    return out;
}

double cross_entropy(std::span<const double> probs, std::size_t target) {
    if (target >= probs.size()) {
        throw ShapeError("target " + std::to_string(target) + " outside [0, " +
                         std::to_string(probs.size()) + ")");
    }
    return -std::log(std::max(probs[target], kProbabilityFloor));
}

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < values.size(); ++k) {
        if (values[k] > values[best]) {
            best = k;
        }
    }
    return best;
}

} // namespace signlang
