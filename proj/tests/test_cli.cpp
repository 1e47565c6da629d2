#include <gtest/gtest.h>

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "signlang/model_io.hpp"
#include "signlang/server.hpp"
#include "signlang/session.hpp"
#include "support/harness.hpp"
#include "support/oracles.hpp"

extern char** environ;

using namespace signlang;
using nlohmann::json;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Result cli(const std::string& args) {
    static oracle::TempDir scratch;
    const auto out = scratch / "stdout";
    const auto err = scratch / "stderr";
    const std::string cmd = std::string(SIGNLANG_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string l; std::getline(ss, l);) out.push_back(l);
    return out;
}

// One tiny dataset and model shared by the tests in this file.
class CliFixture : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new oracle::TempDir();
        const auto d = data();
        ASSERT_EQ(cli("synth --out " + d + " --classes 3 --per-class 4 --seed 7").code, 0);
        ASSERT_EQ(cli("train --data " + d + " --out " + model() + " --epochs 2 --lstm 4 --dense 3 --quiet --history " +
                      (*dir_ / "h.csv").string())
                      .code,
                  0);
    }
    static void TearDownTestSuite() { delete dir_; }

    static std::string data() { return (*dir_ / "data").string(); }
    static std::string model() { return (*dir_ / "m.bslm").string(); }
    static std::string path(const char* name) { return (*dir_ / name).string(); }

    static oracle::TempDir* dir_;
};

oracle::TempDir* CliFixture::dir_ = nullptr;

} // namespace

TEST_F(CliFixture, SynthPrintsSummary) {
    const auto r = cli("synth --out " + path("d2") + " --labels হরিণ,শিক্ষিত --per-class 2");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = json::parse(r.out);
    EXPECT_EQ(j["classes"], 2);
    EXPECT_EQ(j["samples"], 4);
    EXPECT_EQ(load_manifest(path("d2")).labels[0], "হরিণ");
}

TEST_F(CliFixture, InspectEchoesHeader) {
    const auto r = cli("inspect --model " + model());
    ASSERT_EQ(r.code, 0) << r.err;
    const auto l = lines_of(r.out);
    EXPECT_NE(std::find(l.begin(), l.end(), "classes: 3"), l.end()) << r.out;
    EXPECT_NE(std::find(l.begin(), l.end(), "seq_len: 30"), l.end()) << r.out;
    EXPECT_NE(std::find(l.begin(), l.end(), "dim: 1662"), l.end()) << r.out;
    EXPECT_NE(r.out.find("labels: sign_0 sign_1 sign_2"), std::string::npos) << r.out;
}

TEST_F(CliFixture, TrainWritesHistory) {
    const auto csv = lines_of(slurp(path("h.csv")));
    ASSERT_EQ(csv.size(), 3u);
    EXPECT_EQ(csv[0], "epoch,loss,accuracy,seconds");
    EXPECT_EQ(csv[1].substr(0, 2), "1,");
}

TEST_F(CliFixture, EvalPrintsMetrics) {
    for (const char* side : {"test", "train", "all"}) {
        const auto r = cli("eval --data " + data() + " --model " + model() + " --split-side " + side);
        ASSERT_EQ(r.code, 0) << r.err;
        const auto j = json::parse(r.out);
        EXPECT_EQ(j["side"], side);
        EXPECT_TRUE(j["accuracy"].is_number());
        EXPECT_TRUE(j["macro_f1"].is_number());
        EXPECT_EQ(j["confusion"].size(), 3u);
        std::size_t total = 0;
        for (const auto& row : j["confusion"])
            for (const auto& v : row) total += v.get<std::size_t>();
        EXPECT_EQ(total, j["samples"].get<std::size_t>());
    }
}

TEST_F(CliFixture, EvalDimensionMismatchExitsTwo) {
    const Model narrow = oracle::random_model(100, {2}, {}, 3, 30, 1);
    Model relabeled = narrow;
    relabeled.labels = LabelSet({"sign_0", "sign_1", "sign_2"});
    save_model(relabeled, path("narrow.bslm"));
    const auto r = cli("eval --data " + data() + " --model " + path("narrow.bslm"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("1662"), std::string::npos) << r.err;
    EXPECT_TRUE(r.out.empty());
}

TEST_F(CliFixture, UsageErrorsExitOne) {
    EXPECT_EQ(cli("").code, 1);
    EXPECT_EQ(cli("frobnicate").code, 1);
    EXPECT_EQ(cli("eval --data x").code, 1);
    EXPECT_EQ(cli("eval --data " + data() + " --model " + model() + " --bogus").code, 1);
    EXPECT_EQ(cli("eval --data " + data() + " --model " + model() + " --split-side middle").code, 1);
    EXPECT_EQ(cli("synth --out x --classes 2 --labels a,b").code, 1);
    EXPECT_EQ(cli("train --data d --out m --resume c --lstm 4").code, 1);
    EXPECT_EQ(cli("train --data " + data() + " --out " + path("x.bslm") + " --lstm 4,zero").code, 1);
}

TEST_F(CliFixture, DataErrorsExitTwo) {
    EXPECT_EQ(cli("eval --data /nonexistent --model " + model()).code, 2);
    EXPECT_EQ(cli("inspect --model " + path("h.csv")).code, 2);
    const auto r = cli("predict --model " + model() + " --input /nonexistent.ndjson");
    EXPECT_EQ(r.code, 2);
    EXPECT_FALSE(r.err.empty());
}

TEST_F(CliFixture, HelpDocumentsSeeds) {
    const auto r = cli("--help");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("seed"), std::string::npos);
    EXPECT_NE(cli("train --help").out.find("--seed"), std::string::npos);
}

TEST_F(CliFixture, PredictEqualsServerTranscript) {
    auto lines = harness::synthetic_feature_lines(1, 45);
    lines.insert(lines.begin() + 31, "not json");
    {
        std::ofstream f(path("stream.ndjson"));
        for (const auto& l : lines) f << l << "\n";
    }
    const auto r = cli("predict --model " + model() + " --input " + path("stream.ndjson"));
    ASSERT_EQ(r.code, 0) << r.err;
    auto offline = lines_of(r.out);
    ASSERT_FALSE(offline.empty());
    EXPECT_EQ(json::parse(offline.back())["type"], "sentence");
    offline.pop_back();

    auto model_ptr = std::make_shared<const Model>(load_model(model()));
    StreamServer server(model_ptr, {}, {"127.0.0.1", 0});
    server.start();
    harness::LineClient client("127.0.0.1", server.port());
    for (const auto& l : lines) client.send_line(l);
    client.finish();
    auto online = client.read_all();
    ASSERT_FALSE(online.empty());
    online.erase(online.begin()); // hello
    EXPECT_EQ(offline, online);
    std::size_t predictions = 0, errors = 0;
    for (const auto& l : offline) {
        const auto type = json::parse(l)["type"];
        predictions += type == "prediction";
        errors += type == "error";
    }
    EXPECT_EQ(predictions, 16u);
    EXPECT_EQ(errors, 1u);
}

TEST_F(CliFixture, PredictAcceptsBareFrameRecords) {
    {
        std::ofstream f(path("frames.ndjson"));
        for (int k = 0; k < 31; ++k) {
            LandmarkFrame fr;
            fr.timestamp_ms = k;
            fr.left_hand = std::vector<Landmark3>(21, {0.1 * k, 0.2, 0.3});
            f << emit_frame(fr) << "\n";
        }
    }
    const auto r = cli("predict --model " + model() + " --input " + path("frames.ndjson"));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto l = lines_of(r.out);
    ASSERT_EQ(l.size(), 3u) << r.out;
    EXPECT_EQ(json::parse(l[0])["type"], "prediction");
    EXPECT_EQ(json::parse(l[0])["t"], 29);
}

TEST_F(CliFixture, ServeRunsUntilSignalled) {
    int out_pipe[2];
    ASSERT_EQ(::pipe(out_pipe), 0);
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&actions, out_pipe[0]);
    const std::string m = model();
    const char* argv[] = {SIGNLANG_CLI, "serve", "--model", m.c_str(), "--bind", "127.0.0.1:0", nullptr};
    pid_t pid = 0;
    ASSERT_EQ(posix_spawn(&pid, SIGNLANG_CLI, &actions, nullptr, const_cast<char**>(argv), environ), 0);
    posix_spawn_file_actions_destroy(&actions);
    ::close(out_pipe[1]);

    std::string first;
    char ch;
    while (::read(out_pipe[0], &ch, 1) == 1 && ch != '\n') first += ch;
    const auto listening = json::parse(first);
    ASSERT_EQ(listening["type"], "listening");
    {
        harness::LineClient client("127.0.0.1", listening["port"].get<std::uint16_t>());
        const auto hello = json::parse(client.read_line());
        EXPECT_EQ(hello["labels"].size(), 3u);
        client.send_line("not json");
        EXPECT_EQ(json::parse(client.read_line())["type"], "error");
        ::kill(pid, SIGTERM);
        EXPECT_EQ(client.read_line(std::chrono::seconds(10)), "");
    }
    int status = 0;
    ::waitpid(pid, &status, 0);
    ::close(out_pipe[0]);
    EXPECT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), 0);
}
