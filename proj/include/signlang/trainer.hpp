#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "signlang/dataset.hpp"
#include "signlang/nn.hpp"

namespace signlang {

struct TrainingConfig {
    std::size_t epochs = 500;
    std::size_t batch_size = 32;
    double learning_rate = 0.001;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t shuffle_seed = 0;
    std::size_t checkpoint_every = 50;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0; ///< 1-based
    double loss = 0.0;     ///< mean per-sample cross-entropy over the epoch
    double accuracy = 0.0; ///< fraction of samples whose pre-update argmax was correct
    double seconds = 0.0;  ///< wall clock

    bool operator==(const EpochRecord&) const = default;
};

/// Adam first/second moments and the number of updates applied so far.
struct AdamState {
    GradientSet m;
    GradientSet v;
    std::uint64_t step = 0;

    static AdamState fresh(const Model& model);

    bool operator==(const AdamState&) const = default;
};

/// Elementwise Adam update at step `t` (t >= 1) with bias correction.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, std::uint64_t t, const TrainingConfig& config);

/// Advances `state.step` and applies one Adam update to every parameter.
void adam_step(Model& model, const GradientSet& grads, AdamState& state,
               const TrainingConfig& config);

/// Everything needed to continue training bit-identically.
struct TrainingState {
    Model model;
    AdamState optimizer;
    std::vector<EpochRecord> history;

    std::size_t epochs_completed() const noexcept { return history.size(); }

    bool operator==(const TrainingState&) const = default;
};

TrainingState start_training(Model initial);

/// Called after every epoch with the updated state.
using EpochCallback = std::function<void(const TrainingState&)>;

/// Trains from `state.epochs_completed() + 1` through `config.epochs`.
/// Throws DivergedError on a non-finite loss.
void run_training(TrainingState& state, std::span<const SequenceSample> samples,
                  const TrainingConfig& config, const EpochCallback& on_epoch = {});

/// Initializes a model from `spec` and trains it for `config.epochs`.
TrainingState train(std::span<const SequenceSample> samples, const TrainingConfig& config,
                    const ModelSpec& spec, const LabelSet& labels, std::uint64_t init_seed);

struct Metrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    /// confusion[gold][predicted]
    std::vector<std::vector<std::size_t>> confusion;
};

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Scores of class `c` from row-major `num_classes` x `num_classes` counts
/// (rows gold, columns predicted). A zero denominator gives 0.
ClassScores class_scores(std::span<const std::size_t> counts, std::size_t num_classes,
                         std::size_t c) noexcept;

struct Summary {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};

/// Accuracy and macro-F1 without per-class allocation. Throws on an empty
/// matrix.
Summary summarize_confusion(std::span<const std::size_t> counts, std::size_t num_classes);

/// Precision, recall, F1 per class (0 when a denominator is 0), macro-F1
/// over every class, and accuracy.
Metrics metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion);

Metrics metrics_from_predictions(std::span<const std::size_t> gold,
                                 std::span<const std::size_t> predicted, std::size_t num_classes);

/// Argmax prediction per sample against its label.
Metrics evaluate(const Model& model, std::span<const SequenceSample> samples);

/// `epoch,loss,accuracy,seconds`, values printed round-trip exact.
void write_history_csv(std::span<const EpochRecord> history, const std::filesystem::path& path);
std::string history_csv(std::span<const EpochRecord> history);

/// Checkpoint: model body, optimizer state, history, CRC-32.
std::vector<std::uint8_t> encode_checkpoint(const TrainingState& state);
TrainingState decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);
TrainingState load_checkpoint(const std::filesystem::path& path);

} // namespace signlang
