#include <gtest/gtest.h>

#include <random>

#include "signlang/error.hpp"
#include "signlang/realtime.hpp"
#include "support/oracles.hpp"

using namespace signlang;

namespace {

Prediction pred(std::vector<double> probs) {
    Prediction p;
    p.argmax_index = argmax(probs);
    p.probs = std::move(probs);
    return p;
}

} // namespace

TEST(Window, FifoEvictionAndCapacity) {
    WindowState w(3);
    for (int k = 0; k < 5; ++k) {
        w.push(FeatureVector{double(k)});
        EXPECT_LE(w.size(), 3u);
    }
    const auto frames = w.frames();
    ASSERT_EQ(frames.size(), 3u);
    EXPECT_EQ(frames[0][0], 2.0);
    EXPECT_EQ(frames[2][0], 4.0);
    EXPECT_EQ(w.frames_seen(), 5u);
}

TEST(PushFrame, FillRuleAndSlidingOracle) {
    std::mt19937_64 rng(3);
    const Model m = oracle::random_model(6, {4, 5}, {3}, 3, 30, 1);
    const auto stream = oracle::random_sequence(45, 6, rng);
    WindowState w;
    for (std::size_t k = 0; k < stream.size(); ++k) {
        const auto p = push_frame(w, stream[k], m, std::int64_t(k));
        if (k < 29) {
            EXPECT_FALSE(p) << k;
            EXPECT_EQ(w.forward_passes(), 0u);
            continue;
        }
        ASSERT_TRUE(p) << k;
        const std::vector<FeatureVector> window(stream.begin() + long(k) - 29, stream.begin() + long(k) + 1);
        EXPECT_EQ(p->probs, model_forward(window, m).probs) << k;
        EXPECT_EQ(p->argmax_index, argmax(p->probs));
        EXPECT_EQ(p->timestamp_ms, std::int64_t(k));
        EXPECT_EQ(w.forward_passes(), k - 28);
    }
}

TEST(PushFrame, ZeroModelUniform) {
    ModelSpec spec;
    spec.input_dim = 4;
    spec.lstm_hidden = {3};
    spec.dense_hidden = {};
    Model m = init_model(spec, oracle::labels(4), 1);
    for (auto s : parameter_arrays(m)) std::fill(s.begin(), s.end(), 0.0);
    WindowState w;
    for (int k = 0; k < 40; ++k) {
        const auto p = push_frame(w, FeatureVector(4, 0.0), m);
        if (k >= 29) {
            ASSERT_TRUE(p);
            for (double v : p->probs) EXPECT_EQ(v, 0.25);
        }
    }
}

TEST(PushFrame, Errors) {
    const Model m = oracle::random_model(6, {4}, {}, 3, 30, 1);
    WindowState w;
    EXPECT_THROW(push_frame(w, FeatureVector(5), m), ValidationError);
    EXPECT_EQ(w.size(), 0u);
    WindowState small(10);
    EXPECT_THROW(push_frame(small, FeatureVector(6), m), ShapeError);
}

TEST(Stabilize, Examples) {
    const SmoothingPolicy policy;
    std::vector<Prediction> h(10, pred({0.05, 0.05, 0.9}));
    EXPECT_EQ(stabilize(h, policy), 2u);

    std::vector<Prediction> broken(9, pred({0.05, 0.05, 0.9}));
    broken.push_back(pred({0.9, 0.05, 0.05}));
    EXPECT_FALSE(stabilize(broken, policy));

    std::vector<Prediction> weak(10, pred({0.2, 0.15, 0.65}));
    EXPECT_FALSE(stabilize(weak, policy));

    std::vector<Prediction> short_run(9, pred({0.0, 0.0, 1.0}));
    EXPECT_FALSE(stabilize(short_run, policy));
}

TEST(Stabilize, RandomStreamProperties) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t C = 2 + rng() % 3;
        SmoothingPolicy policy{1 + rng() % 6, std::uniform_real_distribution<double>(0, 1)(rng)};
        std::vector<Prediction> history;
        const std::size_t n = rng() % 20;
        for (std::size_t k = 0; k < n; ++k) {
            std::vector<double> p(C);
            double sum = 0;
            // Skewed toward one class so agreement runs actually occur.
            for (std::size_t c = 0; c < C; ++c) sum += p[c] = std::uniform_real_distribution<double>(0, 1)(rng) + (c == 0 && rng() % 4 ? 2.0 : 0.0);
            for (double& v : p) v /= sum;
            history.push_back(pred(p));
        }
        const auto got = stabilize(history, policy);
        // Brute-force restatement of the rule.
        std::optional<std::size_t> want;
        if (history.size() >= policy.k) {
            const std::size_t c = history.back().argmax_index;
            bool agree = true;
            for (std::size_t k = history.size() - policy.k; k < history.size(); ++k)
                agree = agree && history[k].argmax_index == c;
            if (agree && history.back().probs[c] >= policy.tau) want = c;
        }
        ASSERT_EQ(got, want) << trial;
        if (got) {
            EXPECT_GE(history.back().probs[*got], policy.tau);
            EXPECT_GE(history.size(), policy.k);
        }
    }
}

TEST(Sentence, Examples) {
    SentenceBuffer s;
    s = append_word(s, 0);
    EXPECT_EQ(s.words(), (std::vector<std::size_t>{0}));
    s = append_word(s, 0);
    EXPECT_EQ(s.words(), (std::vector<std::size_t>{0}));
    s = append_word(append_word(s, 1), 0);
    EXPECT_EQ(s.words(), (std::vector<std::size_t>{0, 1, 0}));
}

TEST(Sentence, RandomStreamsNeverRepeatConsecutively) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        SentenceBuffer s;
        std::vector<std::size_t> expected;
        const std::size_t C = 1 + rng() % 4;
        for (int k = 0; k < 50; ++k) {
            const std::size_t label = rng() % C;
            const bool appended = s.append(label);
            EXPECT_EQ(appended, expected.empty() || expected.back() != label);
            if (appended) expected.push_back(label);
        }
        ASSERT_EQ(s.words(), expected);
        for (std::size_t k = 1; k < expected.size(); ++k) ASSERT_NE(expected[k], expected[k - 1]);
    }
}

TEST(SmoothingPolicy, Validation) {
    EXPECT_THROW((SmoothingPolicy{0, 0.5}.validate()), ValidationError);
    EXPECT_THROW((SmoothingPolicy{3, 1.5}.validate()), ValidationError);
    EXPECT_NO_THROW((SmoothingPolicy{1, 0.0}.validate()));
}

// A recognizer commits exactly when stabilize emits and the label is new.
TEST(Recognizer, CommitsFollowStabilizeAndDedup) {
    std::mt19937_64 rng(9);
    const Model m = oracle::random_model(3, {3}, {}, 2, 30, 4, 2.0);
    const SmoothingPolicy policy{3, 0.5};
    Recognizer r(m, policy);
    WindowState w;
    std::vector<Prediction> history;
    SentenceBuffer sentence;
    std::size_t commits = 0;
    for (int k = 0; k < 400; ++k) {
        // Slowly drifting input so the argmax changes now and then.
        FeatureVector f = {std::sin(k / 15.0) * 3, std::cos(k / 23.0) * 3,
                           std::uniform_real_distribution<double>(-0.1, 0.1)(rng)};
        const auto step = r.push(f, k);
        const auto p = push_frame(w, f, m, k);
        ASSERT_EQ(step.has_value(), p.has_value());
        if (!p) continue;
        ASSERT_EQ(step->prediction.probs, p->probs);
        history.push_back(*p);
        const auto emitted = stabilize(history, policy);
        EXPECT_EQ(step->stable, emitted.has_value());
        const bool appended = emitted && sentence.append(*emitted);
        EXPECT_EQ(step->committed.has_value(), appended);
        commits += appended;
    }
    EXPECT_EQ(r.sentence(), sentence);
    EXPECT_GT(commits, 1u);
}
