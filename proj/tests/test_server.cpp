#include <gtest/gtest.h>

#include <future>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "signlang/error.hpp"
#include "signlang/server.hpp"
#include "signlang/session.hpp"
#include "support/harness.hpp"
#include "support/oracles.hpp"

using namespace signlang;
using nlohmann::json;

namespace {

std::shared_ptr<const Model> small_model(std::uint64_t seed) {
    return std::make_shared<const Model>(
        oracle::random_model(kFeatureDim, {4}, {3}, 3, 30, seed, 0.05));
}

std::vector<std::string> random_stream(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::string> lines;
    for (std::size_t k = 0; k < n; ++k) {
        json j;
        j["type"] = "features";
        j["t"] = k;
        std::vector<double> v(kFeatureDim);
        for (double& x : v) x = std::uniform_real_distribution<double>(-1, 1)(rng);
        j["v"] = v;
        lines.push_back(j.dump());
    }
    return lines;
}

std::vector<std::string> offline(const Model& m, const std::vector<std::string>& lines) {
    Session s(m, {});
    std::vector<std::string> out = {s.hello()};
    for (const auto& l : lines)
        for (auto& msg : s.handle_line(l)) out.push_back(std::move(msg));
    return out;
}

std::vector<std::string> online(std::uint16_t port, const std::vector<std::string>& lines) {
    harness::LineClient client("127.0.0.1", port);
    for (const auto& l : lines) client.send_line(l);
    client.finish();
    return client.read_all();
}

} // namespace

TEST(BindAddress, Parsing) {
    EXPECT_EQ(parse_bind_address("127.0.0.1:7861"), std::make_pair(std::string("127.0.0.1"), std::uint16_t(7861)));
    EXPECT_EQ(parse_bind_address("::1:0").first, "::1");
    EXPECT_THROW(parse_bind_address("localhost"), ValidationError);
    EXPECT_THROW(parse_bind_address("h:99999"), ValidationError);
    EXPECT_THROW(parse_bind_address("h:12x"), ValidationError);
    EXPECT_THROW(parse_bind_address(":80"), ValidationError);
}

TEST(Server, TwentyNineFramesThenDisconnect) {
    auto model = small_model(1);
    StreamServer server(model, {}, {"127.0.0.1", 0});
    server.start();
    const auto lines = online(server.port(), random_stream(29, 3));
    ASSERT_EQ(lines.size(), 1u);
    EXPECT_EQ(json::parse(lines[0])["type"], "hello");
    server.stop();
    EXPECT_EQ(server.sessions_opened(), 1u);
}

TEST(Server, TranscriptEqualsOfflineSessionAndSurvivesGarbage) {
    auto model = small_model(2);
    StreamServer server(model, {}, {"127.0.0.1", 0});
    server.start();
    auto lines = random_stream(40, 4);
    lines.insert(lines.begin() + 33, "not json");
    lines.insert(lines.begin() + 35, "\r");
    const auto got = online(server.port(), lines);
    const auto want = offline(*model, lines);
    EXPECT_EQ(got, want);
    std::size_t errors = 0, predictions = 0;
    for (const auto& l : got) {
        const auto type = json::parse(l)["type"];
        errors += type == "error";
        predictions += type == "prediction";
    }
    EXPECT_EQ(errors, 1u);
    EXPECT_EQ(predictions, 11u);
}

TEST(Server, CrLfLineEndings) {
    auto model = small_model(2);
    StreamServer server(model, {}, {"127.0.0.1", 0});
    server.start();
    harness::LineClient client("127.0.0.1", server.port());
    client.send_raw("not json\r\n");
    client.finish();
    const auto got = client.read_all();
    ASSERT_EQ(got.size(), 2u);
    EXPECT_EQ(json::parse(got[1])["type"], "error");
}

TEST(Server, ConcurrentSessionsAreIsolated) {
    auto model = small_model(3);
    StreamServer server(model, {}, {"127.0.0.1", 0});
    server.start();
    std::vector<std::vector<std::string>> streams;
    for (std::uint64_t s = 0; s < 4; ++s) streams.push_back(random_stream(40 + 5 * s, 10 + s));

    std::vector<std::vector<std::string>> serial;
    for (const auto& s : streams) serial.push_back(online(server.port(), s));

    std::vector<std::future<std::vector<std::string>>> futures;
    for (const auto& s : streams)
        futures.push_back(std::async(std::launch::async, [&, port = server.port()] { return online(port, s); }));
    for (std::size_t k = 0; k < streams.size(); ++k) {
        const auto concurrent = futures[k].get();
        EXPECT_EQ(concurrent, serial[k]) << k;
        EXPECT_EQ(concurrent, offline(*model, streams[k])) << k;
    }
}

TEST(Server, OverloadDropsOldestAndReportsCount) {
    // Wide enough that each forward pass is far slower than reading a line.
    ModelSpec spec;
    spec.lstm_hidden = {384};
    spec.dense_hidden = {};
    auto model = std::make_shared<const Model>(init_model(spec, oracle::labels(3), 1));
    ServerOptions options{"127.0.0.1", 0};
    options.max_queue = 64;
    StreamServer server(model, {}, options);
    server.start();
    const std::size_t n = 150;
    const auto got = online(server.port(), random_stream(n, 6));
    std::size_t predictions = 0;
    std::uint64_t last_dropped = 0;
    for (const auto& l : got) {
        const auto j = json::parse(l);
        if (j["type"] != "prediction") continue;
        ++predictions;
        const auto d = j["dropped"].get<std::uint64_t>();
        EXPECT_GE(d, last_dropped);
        last_dropped = d;
    }
    EXPECT_GT(last_dropped, 0u) << got.size() << " lines, " << predictions << " predictions";
    EXPECT_GT(predictions, 0u);
    EXPECT_LE(predictions + 29 + last_dropped, n);
}

TEST(Server, OversizedLineGetsErrorAndSessionContinues) {
    auto model = small_model(4);
    ServerOptions options{"127.0.0.1", 0};
    options.max_line_bytes = 1000;
    StreamServer server(model, {}, options);
    server.start();
    harness::LineClient client("127.0.0.1", server.port());
    client.send_line(std::string(5000, 'x'));
    client.send_line("still here");
    client.finish();
    const auto got = client.read_all();
    ASSERT_EQ(got.size(), 3u);
    EXPECT_EQ(json::parse(got[1])["type"], "error");
    EXPECT_EQ(json::parse(got[2])["type"], "error");
}

TEST(Server, StopClosesOpenSessions) {
    auto model = small_model(5);
    auto server = std::make_unique<StreamServer>(model, SmoothingPolicy{}, ServerOptions{"127.0.0.1", 0});
    server->start();
    harness::LineClient client("127.0.0.1", server->port());
    EXPECT_EQ(json::parse(client.read_line())["type"], "hello");
    server->stop();
    EXPECT_EQ(client.read_line(std::chrono::seconds(5)), "");
}

TEST(Server, BindFailureThrows) {
    auto model = small_model(6);
    StreamServer a(model, {}, {"127.0.0.1", 0});
    a.start();
    StreamServer b(model, {}, {"127.0.0.1", a.port()});
    EXPECT_THROW(b.start(), Error);
}
