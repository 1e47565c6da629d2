#include "signlang/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "signlang/binary_io.hpp"
#include "signlang/error.hpp"
#include "signlang/model_io.hpp"

namespace signlang {

namespace {

constexpr char kOptimizerTag[4] = {'A', 'D', 'A', 'M'};
constexpr char kHistoryTag[4] = {'H', 'I', 'S', 'T'};

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) noexcept {
    std::uint64_t x = seed ^ (0x9E3779B97F4A7C15ull * (epoch + 1));
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

void write_moments(ByteWriter& out, const GradientSet& g) {
    for (auto arr : parameter_arrays(g)) {
        out.u64(arr.size());
        out.f64s(arr);
    }
}

void read_moments(ByteReader& in, GradientSet& g) {
    for (auto arr : parameter_arrays(g)) {
        const auto n = in.u64("optimizer state");
        if (n != arr.size()) {
            throw LoadError(LoadErrorKind::DimensionMismatch,
                            "optimizer moment array of " + std::to_string(n) +
                                " values, model has " + std::to_string(arr.size()));
        }
        in.require(n * sizeof(double), "optimizer state");
        in.f64s(arr, "optimizer state");
    }
}

} // namespace

void TrainingConfig::validate() const {
    if (epochs < 1) {
        throw ValidationError("epochs must be at least 1");
    }
    if (batch_size < 1) {
        throw ValidationError("batch size must be at least 1");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ValidationError("learning rate must be positive");
    }
}

AdamState AdamState::fresh(const Model& model) {
    return {GradientSet::zeros_like(model), GradientSet::zeros_like(model), 0};
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, std::uint64_t t, const TrainingConfig& config) {
    if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
        throw ShapeError("adam: parameter, gradient and moment sizes differ");
    }
    if (t < 1) {
        throw ValidationError("adam: step index starts at 1");
    }
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double g = grads[k];
        m[k] = b1 * m[k] + (1.0 - b1) * g;
        v[k] = b2 * v[k] + (1.0 - b2) * g * g;
        const double m_hat = m[k] / c1;
        const double v_hat = v[k] / c2;
        params[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
}

void adam_step(Model& model, const GradientSet& grads, AdamState& state,
               const TrainingConfig& config) {
    auto params = parameter_arrays(model);
    const auto g = parameter_arrays(grads);
    auto m = parameter_arrays(state.m);
    auto v = parameter_arrays(state.v);
    if (g.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
        throw ShapeError("adam: gradient layout does not match the model");
    }
    ++state.step;
    for (std::size_t k = 0; k < params.size(); ++k) {
        adam_update(params[k], g[k], m[k], v[k], state.step, config);
    }
}

TrainingState start_training(Model initial) {
    initial.validate();
    TrainingState s;
    s.optimizer = AdamState::fresh(initial);
    s.model = std::move(initial);
    return s;
}

void run_training(TrainingState& state, std::span<const SequenceSample> samples,
                  const TrainingConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    if (samples.empty()) {
        throw ValidationError("training set is empty");
    }
    Model& model = state.model;
    for (const auto& s : samples) {
        if (s.seq_len != model.seq_len || s.feature_dim != model.input_dim) {
            throw ShapeError("sample shape " + std::to_string(s.seq_len) + "x" +
                             std::to_string(s.feature_dim) + " does not match the model's " +
                             std::to_string(model.seq_len) + "x" + std::to_string(model.input_dim));
        }
        if (s.label_index >= model.num_classes()) {
            throw ShapeError("sample label " + std::to_string(s.label_index) + " outside [0, " +
                             std::to_string(model.num_classes()) + ")");
        }
    }

    const std::size_t n = samples.size();
    std::vector<std::size_t> order(n);
    std::vector<const SequenceSample*> batch;
    std::vector<std::size_t> targets;

    for (std::size_t epoch = state.epochs_completed() + 1; epoch <= config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(epoch_seed(config.shuffle_seed, epoch));
        std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0, b = 0; start < n; start += config.batch_size, ++b) {
            const std::size_t end = std::min(n, start + config.batch_size);
            batch.clear();
            targets.clear();
            for (std::size_t k = start; k < end; ++k) {
                batch.push_back(&samples[order[k]]);
                targets.push_back(samples[order[k]].label_index);
            }
            const ForwardCache cache = forward_batch(pack_sequences(batch), batch.size(), model);
            for (std::size_t k = 0; k < batch.size(); ++k) {
                const std::span<const double> probs(cache.probs.col(static_cast<Eigen::Index>(k)).data(),
                                                    model.num_classes());
                const double loss = cross_entropy(probs, targets[k]);
                if (!std::isfinite(loss)) {
                    throw DivergedError(epoch, b);
                }
                loss_sum += loss;
                correct += argmax(probs) == targets[k] ? 1 : 0;
            }
            GradientSet grads = backward_batch(cache, targets, model);
            grads *= 1.0 / static_cast<double>(batch.size());
            adam_step(model, grads, state.optimizer, config);
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        state.history.push_back({epoch, loss_sum / static_cast<double>(n),
                                 static_cast<double>(correct) / static_cast<double>(n), seconds});
        if (on_epoch) {
            on_epoch(state);
        }
    }
}

TrainingState train(std::span<const SequenceSample> samples, const TrainingConfig& config,
                    const ModelSpec& spec, const LabelSet& labels, std::uint64_t init_seed) {
    TrainingState state = start_training(init_model(spec, labels, init_seed));
    run_training(state, samples, config);
    return state;
}

ClassScores class_scores(std::span<const std::size_t> counts, std::size_t num_classes,
                         std::size_t c) noexcept {
    std::size_t predicted = 0;
    std::size_t actual = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
        predicted += counts[k * num_classes + c];
        actual += counts[c * num_classes + k];
    }
    const double tp = static_cast<double>(counts[c * num_classes + c]);
    ClassScores s;
    s.precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
    s.recall = actual ? tp / static_cast<double>(actual) : 0.0;
    const double denom = s.precision + s.recall;
    s.f1 = denom > 0.0 ? 2.0 * s.precision * s.recall / denom : 0.0;
    return s;
}

Summary summarize_confusion(std::span<const std::size_t> counts, std::size_t num_classes) {
    if (counts.size() != num_classes * num_classes) {
        throw ShapeError("confusion matrix must be square");
    }
    std::size_t total = 0;
    std::size_t correct = 0;
    for (std::size_t g = 0; g < num_classes; ++g) {
        for (std::size_t p = 0; p < num_classes; ++p) {
            total += counts[g * num_classes + p];
        }
        correct += counts[g * num_classes + g];
    }
    if (total == 0) {
        throw ValidationError("cannot compute metrics over zero samples");
    }
    double f1_sum = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        f1_sum += class_scores(counts, num_classes, c).f1;
    }
    return {static_cast<double>(correct) / static_cast<double>(total),
            f1_sum / static_cast<double>(num_classes)};
}

Metrics metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion) {
    const std::size_t C = confusion.size();
    std::vector<std::size_t> counts;
    counts.reserve(C * C);
    for (const auto& row : confusion) {
        if (row.size() != C) {
            throw ShapeError("confusion matrix must be square");
        }
        counts.insert(counts.end(), row.begin(), row.end());
    }
    const Summary summary = summarize_confusion(counts, C);
    Metrics out;
    out.accuracy = summary.accuracy;
    out.macro_f1 = summary.macro_f1;
    for (std::size_t c = 0; c < C; ++c) {
        const ClassScores s = class_scores(counts, C, c);
        out.precision.push_back(s.precision);
        out.recall.push_back(s.recall);
        out.f1.push_back(s.f1);
    }
    out.confusion = std::move(confusion);
    return out;
}

Metrics metrics_from_predictions(std::span<const std::size_t> gold,
                                 std::span<const std::size_t> predicted, std::size_t num_classes) {
    if (gold.size() != predicted.size()) {
        throw ShapeError("gold and predicted lists differ in length");
    }
    if (gold.empty()) {
        throw ValidationError("cannot evaluate an empty list");
    }
    std::vector<std::vector<std::size_t>> confusion(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t k = 0; k < gold.size(); ++k) {
        if (gold[k] >= num_classes || predicted[k] >= num_classes) {
            throw ShapeError("class index outside [0, " + std::to_string(num_classes) + ")");
        }
        ++confusion[gold[k]][predicted[k]];
    }
    return metrics_from_confusion(std::move(confusion));
}

Metrics evaluate(const Model& model, std::span<const SequenceSample> samples) {
    if (samples.empty()) {
        throw ValidationError("cannot evaluate an empty list");
    }
    constexpr std::size_t kChunk = 64;
    std::vector<std::size_t> gold;
    std::vector<std::size_t> predicted;
    std::vector<const SequenceSample*> chunk;
    for (std::size_t start = 0; start < samples.size(); start += kChunk) {
        chunk.clear();
        for (std::size_t k = start; k < std::min(samples.size(), start + kChunk); ++k) {
            chunk.push_back(&samples[k]);
            gold.push_back(samples[k].label_index);
        }
        const auto cache = forward_batch(pack_sequences(chunk), chunk.size(), model);
        for (std::size_t k = 0; k < chunk.size(); ++k) {
            predicted.push_back(argmax({cache.probs.col(static_cast<Eigen::Index>(k)).data(),
                                        model.num_classes()}));
        }
    }
    return metrics_from_predictions(gold, predicted, model.num_classes());
}

std::string history_csv(std::span<const EpochRecord> history) {
    std::string out = "epoch,loss,accuracy,seconds\n";
    char line[128];
    for (const auto& r : history) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.6f\n", r.epoch, r.loss, r.accuracy,
                      r.seconds);
        out += line;
    }
    return out;
}

void write_history_csv(std::span<const EpochRecord> history, const std::filesystem::path& path) {
    const std::string text = history_csv(history);
    write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::vector<std::uint8_t> encode_checkpoint(const TrainingState& state) {
    ByteWriter w;
    write_model(w, state.model);
    w.text({kOptimizerTag, 4});
    w.u64(state.optimizer.step);
    write_moments(w, state.optimizer.m);
    write_moments(w, state.optimizer.v);
    w.text({kHistoryTag, 4});
    w.u32(static_cast<std::uint32_t>(state.history.size()));
    for (const auto& r : state.history) {
        w.u32(static_cast<std::uint32_t>(r.epoch));
        w.f64(r.loss);
        w.f64(r.accuracy);
        w.f64(r.seconds);
    }
    w.seal();
    return std::move(w).take();
}

TrainingState decode_checkpoint(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    TrainingState s;
    s.model = read_model(r);
    auto tag = r.bytes(4, "optimizer tag");
    if (!std::equal(tag.begin(), tag.end(), kOptimizerTag)) {
        throw LoadError(LoadErrorKind::Malformed, "checkpoint lacks an optimizer section");
    }
    s.optimizer = AdamState::fresh(s.model);
    s.optimizer.step = r.u64("optimizer state");
    read_moments(r, s.optimizer.m);
    read_moments(r, s.optimizer.v);
    tag = r.bytes(4, "history tag");
    if (!std::equal(tag.begin(), tag.end(), kHistoryTag)) {
        throw LoadError(LoadErrorKind::Malformed, "checkpoint lacks a history section");
    }
    const auto count = r.u32("history");
    r.require(std::size_t{count} * (4 + 3 * 8), "history");
    for (std::uint32_t k = 0; k < count; ++k) {
        EpochRecord rec;
        rec.epoch = r.u32("history");
        rec.loss = r.f64("history");
        rec.accuracy = r.f64("history");
        rec.seconds = r.f64("history");
        if (rec.epoch != k + 1) {
            throw LoadError(LoadErrorKind::Malformed, "history epochs are not consecutive");
        }
        s.history.push_back(rec);
    }
    r.verify_seal();
    return s;
}

void save_checkpoint(const TrainingState& state, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(state));
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file(path));
}

} // namespace signlang
