#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "signlang/nn.hpp"

namespace signlang {

/// The most recent frames of one stream, oldest first.
class WindowState {
public:
    explicit WindowState(std::size_t capacity = kSequenceLength) : capacity_(capacity) {}

    /// Appends, evicting the oldest frame once `capacity` is reached.
    void push(FeatureVector frame);

    bool full() const noexcept { return frames_.size() == capacity_; }
    std::size_t size() const noexcept { return frames_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    std::uint64_t frames_seen() const noexcept { return frames_seen_; }
    std::uint64_t forward_passes() const noexcept { return forward_passes_; }

    std::vector<FeatureVector> frames() const { return {frames_.begin(), frames_.end()}; }

private:
    friend struct WindowAccess;

    std::size_t capacity_;
    std::deque<FeatureVector> frames_;
    std::uint64_t frames_seen_ = 0;
    std::uint64_t forward_passes_ = 0;
};

struct Prediction {
    std::vector<double> probs;
    std::size_t argmax_index = 0;
    std::int64_t timestamp_ms = 0;
};

/// Adds `frame` to the window and, once the window holds model.seq_len
/// frames, classifies it with exactly one model_forward.
std::optional<Prediction> push_frame(WindowState& window, FeatureVector frame, const Model& model,
                                     std::int64_t timestamp_ms = 0);

struct SmoothingPolicy {
    std::size_t k = 10;  ///< consecutive agreeing predictions required
    double tau = 0.7;    ///< minimum newest probability of the agreed class

    void validate() const;
};

/// Returns c iff the last `k` predictions all have argmax c and the newest
/// assigns c at least `tau`. `history` is ordered oldest to newest.
std::optional<std::size_t> stabilize(std::span<const Prediction> history,
                                     const SmoothingPolicy& policy);

/// Committed words; never holds the same label twice in a row.
class SentenceBuffer {
public:
    /// Returns false when `label` repeats the last word and was dropped.
    bool append(std::size_t label);
    void clear() noexcept { words_.clear(); }

    const std::vector<std::size_t>& words() const noexcept { return words_; }
    bool operator==(const SentenceBuffer&) const = default;

private:
    std::vector<std::size_t> words_;
};

SentenceBuffer append_word(SentenceBuffer sentence, std::size_t label);

/// Window, recent-prediction history and sentence for one stream.
class Recognizer {
public:
    Recognizer(const Model& model, SmoothingPolicy policy);

    struct Step {
        Prediction prediction;
        bool stable = false;                   ///< stabilize() emitted on this step
        std::optional<std::size_t> committed;  ///< label appended to the sentence
    };

    std::optional<Step> push(FeatureVector frame, std::int64_t timestamp_ms);

    const WindowState& window() const noexcept { return window_; }
    const SentenceBuffer& sentence() const noexcept { return sentence_; }
    std::vector<std::string> sentence_labels() const;
    void clear_sentence() noexcept { sentence_.clear(); }

private:
    const Model& model_;
    SmoothingPolicy policy_;
    WindowState window_;
    std::vector<Prediction> history_;
    SentenceBuffer sentence_;
};

} // namespace signlang
