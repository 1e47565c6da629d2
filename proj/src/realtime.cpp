#include "signlang/realtime.hpp"

#include "signlang/error.hpp"

namespace signlang {

struct WindowAccess {
    static void count_forward(WindowState& w) { ++w.forward_passes_; }
};

void WindowState::push(FeatureVector frame) {
    if (frames_.size() == capacity_) {
        frames_.pop_front();
    }
    frames_.push_back(std::move(frame));
    ++frames_seen_;
}

std::optional<Prediction> push_frame(WindowState& window, FeatureVector frame, const Model& model,
                                     std::int64_t timestamp_ms) {
    if (frame.size() != model.input_dim) {
        throw ValidationError("frame has " + std::to_string(frame.size()) +
                              " features, model expects " + std::to_string(model.input_dim));
    }
    if (window.capacity() != model.seq_len) {
        throw ShapeError("window length " + std::to_string(window.capacity()) +
                         " differs from the model's sequence length " + std::to_string(model.seq_len));
    }
    window.push(std::move(frame));
    if (!window.full()) {
        return std::nullopt;
    }
    const auto frames = window.frames();
    auto result = model_forward(frames, model);
    WindowAccess::count_forward(window);
    Prediction p;
    p.argmax_index = argmax(result.probs);
    p.probs = std::move(result.probs);
    p.timestamp_ms = timestamp_ms;
    return p;
}

void SmoothingPolicy::validate() const {
    if (k < 1) {
        throw ValidationError("smoothing k must be at least 1");
    }
    if (!(tau >= 0.0 && tau <= 1.0)) {
        throw ValidationError("smoothing tau must lie in [0, 1]");
    }
}

std::optional<std::size_t> stabilize(std::span<const Prediction> history,
                                     const SmoothingPolicy& policy) {
    if (policy.k == 0 || history.size() < policy.k) {
        return std::nullopt;
    }
    const Prediction& newest = history.back();
    const std::size_t label = newest.argmax_index;
    for (std::size_t j = history.size() - policy.k; j < history.size(); ++j) {
        if (history[j].argmax_index != label) {
            return std::nullopt;
        }
    }
    if (label >= newest.probs.size() || newest.probs[label] < policy.tau) {
        return std::nullopt;
    }
    return label;
}

bool SentenceBuffer::append(std::size_t label) {
    if (!words_.empty() && words_.back() == label) {
        return false;
    }
    words_.push_back(label);
    return true;
}

SentenceBuffer append_word(SentenceBuffer sentence, std::size_t label) {
    sentence.append(label);
    return sentence;
}

Recognizer::Recognizer(const Model& model, SmoothingPolicy policy)
    : model_(model), policy_(policy), window_(model.seq_len) {
    policy_.validate();
}

std::optional<Recognizer::Step> Recognizer::push(FeatureVector frame, std::int64_t timestamp_ms) {
    auto prediction = push_frame(window_, std::move(frame), model_, timestamp_ms);
    if (!prediction) {
        return std::nullopt;
    }
    history_.push_back(*prediction);
    if (history_.size() > policy_.k) {
        history_.erase(history_.begin(), history_.end() - static_cast<std::ptrdiff_t>(policy_.k));
    }
    Step step;
    step.prediction = std::move(*prediction);
    if (const auto label = stabilize(history_, policy_)) {
        step.stable = true;
        if (sentence_.append(*label)) {
            step.committed = label;
        }
    }
    return step;
}

std::vector<std::string> Recognizer::sentence_labels() const {
    std::vector<std::string> out;
    for (std::size_t w : sentence_.words()) {
        out.push_back(model_.labels[w]);
    }
    return out;
}

} // namespace signlang
