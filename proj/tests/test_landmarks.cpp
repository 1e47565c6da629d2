#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "signlang/error.hpp"
#include "signlang/landmarks.hpp"
#include "support/oracles.hpp"

using namespace signlang;

namespace {

std::size_t only_nonzero(const FeatureVector& v) {
    std::size_t found = v.size();
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (v[k] != 0.0) {
            EXPECT_EQ(found, v.size()) << "second nonzero at " << k;
            found = k;
        }
    }
    return found;
}

std::string numbers(std::size_t n, double value = 0.0) {
    std::string s = "[";
    for (std::size_t k = 0; k < n; ++k) {
        s += (k ? "," : "") + std::to_string(value);
    }
    return s + "]";
}

} // namespace

TEST(Flatten, AllAbsentIsZero) {
    const auto v = flatten(LandmarkFrame{});
    ASSERT_EQ(v.size(), 1662u);
    for (double x : v) EXPECT_EQ(x, 0.0);
}

TEST(Flatten, FirstPoseLandmark) {
    LandmarkFrame f;
    f.pose = std::vector<Landmark4>(33);
    (*f.pose)[0] = {0.5, 0.5, 0.0, 1.0};
    const auto v = flatten(f);
    EXPECT_EQ(v[0], 0.5);
    EXPECT_EQ(v[1], 0.5);
    EXPECT_EQ(v[2], 0.0);
    EXPECT_EQ(v[3], 1.0);
    for (std::size_t k = 4; k < v.size(); ++k) ASSERT_EQ(v[k], 0.0) << k;
}

// Probe each landmark of each part with a single nonzero coordinate and
// locate where it lands.
TEST(Flatten, SingleLandmarkProbeFindsEveryOffset) {
    for (std::size_t j = 0; j < 33; ++j) {
        for (std::size_t field = 0; field < 4; ++field) {
            LandmarkFrame f;
            f.pose = std::vector<Landmark4>(33);
            Landmark4& p = (*f.pose)[j];
            (field == 0 ? p.x : field == 1 ? p.y : field == 2 ? p.z : p.visibility) = 0.75;
            ASSERT_EQ(only_nonzero(flatten(f)), 4 * j + field);
        }
    }
    struct Part {
        std::optional<std::vector<Landmark3>> LandmarkFrame::*member;
        std::size_t count;
        std::size_t base;
    };
    const Part parts[] = {{&LandmarkFrame::face, 468, 132},
                          {&LandmarkFrame::left_hand, 21, 1536},
                          {&LandmarkFrame::right_hand, 21, 1599}};
    for (const auto& part : parts) {
        for (std::size_t j = 0; j < part.count; ++j) {
            for (std::size_t field = 0; field < 3; ++field) {
                LandmarkFrame f;
                f.*part.member = std::vector<Landmark3>(part.count);
                Landmark3& p = (*(f.*part.member))[j];
                (field == 0 ? p.x : field == 1 ? p.y : p.z) = -0.25;
                ASSERT_EQ(only_nonzero(flatten(f)), part.base + 3 * j + field);
            }
        }
    }
}

TEST(Flatten, AbsentEqualsPresentZero) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        LandmarkFrame f = oracle::random_frame(rng);
        LandmarkFrame g = f;
        if (!g.face) g.face = std::vector<Landmark3>(468);
        if (!g.left_hand) g.left_hand = std::vector<Landmark3>(21);
        if (!g.right_hand) g.right_hand = std::vector<Landmark3>(21);
        if (!g.pose) g.pose = std::vector<Landmark4>(33);
        EXPECT_EQ(flatten(f), flatten(g));
    }
}

TEST(Flatten, WrongCardinalityNamesPart) {
    LandmarkFrame f;
    f.left_hand = std::vector<Landmark3>(20);
    try {
        flatten(f);
        FAIL();
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("lh"), std::string::npos) << msg;
        EXPECT_NE(msg.find("21"), std::string::npos) << msg;
        EXPECT_NE(msg.find("20"), std::string::npos) << msg;
    }
}

TEST(Validate, RejectsNonFiniteAndBadVisibility) {
    LandmarkFrame f;
    f.pose = std::vector<Landmark4>(33);
    (*f.pose)[3].visibility = 1.5;
    EXPECT_THROW(validate(f), ValidationError);
    (*f.pose)[3].visibility = 1.0;
    (*f.pose)[4].x = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(validate(f), ValidationError);
    LandmarkFrame g;
    g.timestamp_ms = -1;
    EXPECT_THROW(validate(g), ValidationError);
}

TEST(ParseFrame, MinimalRecord) {
    const auto f = parse_frame(R"({"t":0})");
    EXPECT_EQ(f.timestamp_ms, 0);
    EXPECT_FALSE(f.pose || f.face || f.left_hand || f.right_hand);
}

TEST(ParseFrame, PoseRowMajorPerLandmark) {
    std::string arr = "[";
    for (int k = 0; k < 132; ++k) arr += (k ? "," : "") + std::to_string(k % 4 == 3 ? 0.5 : k);
    arr += "]";
    const auto f = parse_frame(R"({"t":7,"pose":)" + arr + "}");
    ASSERT_TRUE(f.pose);
    EXPECT_EQ((*f.pose)[2].x, 8.0);
    EXPECT_EQ((*f.pose)[2].y, 9.0);
    EXPECT_EQ((*f.pose)[2].z, 10.0);
    EXPECT_EQ((*f.pose)[2].visibility, 0.5);
}

TEST(ParseFrame, ShortHandCitesExpectedCount) {
    try {
        parse_frame(R"({"t":0,"lh":)" + numbers(62) + "}");
        FAIL();
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("63"), std::string::npos) << msg;
        EXPECT_NE(msg.find("lh"), std::string::npos) << msg;
    }
}

TEST(ParseFrame, SyntaxErrorGivesByteOffset) {
    try {
        parse_frame(R"({"t":0,)");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos) << e.what();
    }
}

TEST(ParseFrame, RejectsBadContent) {
    EXPECT_THROW(parse_frame(R"({"pose":[]})"), ParseError);           // no t
    EXPECT_THROW(parse_frame(R"({"t":-3})"), ParseError);              // negative
    EXPECT_THROW(parse_frame(R"({"t":1.5})"), ParseError);             // not integral
    EXPECT_THROW(parse_frame(R"({"t":0,"rh":"x"})"), ParseError);      // not an array
    EXPECT_THROW(parse_frame(R"({"t":0,"extra":1})"), ParseError);     // unknown key
    EXPECT_THROW(parse_frame(R"([1,2])"), ParseError);                 // not an object
    std::string bad = numbers(63);
    bad.replace(1, 8, "\"a\"");
    EXPECT_THROW(parse_frame(R"({"t":0,"rh":)" + bad + "}"), ParseError);
    // 1e999 overflows to infinity in the JSON reader.
    std::string inf = numbers(62);
    inf.insert(1, "1e999,");
    EXPECT_THROW(parse_frame(R"({"t":0,"rh":)" + inf + "}"), ParseError);
}

TEST(EmitFrame, AllAbsent) {
    LandmarkFrame f;
    f.timestamp_ms = 5;
    EXPECT_EQ(emit_frame(f), R"({"t":5})");
}

TEST(EmitFrame, OnlyRightHandKeys) {
    LandmarkFrame f;
    f.timestamp_ms = 1;
    f.right_hand = std::vector<Landmark3>(21, {0.1, 0.2, 0.3});
    const auto j = nlohmann::json::parse(emit_frame(f));
    EXPECT_EQ(j.size(), 2u);
    EXPECT_TRUE(j.contains("t"));
    EXPECT_TRUE(j.contains("rh"));
    EXPECT_EQ(j["rh"].size(), 63u);
}

TEST(EmitFrame, KeyOrderIsFixed) {
    std::mt19937_64 rng(1);
    LandmarkFrame f = oracle::random_frame(rng);
    f.pose = std::vector<Landmark4>(33);
    f.face = std::vector<Landmark3>(468);
    f.left_hand = std::vector<Landmark3>(21);
    f.right_hand = std::vector<Landmark3>(21);
    const std::string s = emit_frame(f);
    const auto pos = [&](const char* key) { return s.find(std::string("\"") + key + "\""); };
    EXPECT_LT(pos("t"), pos("pose"));
    EXPECT_LT(pos("pose"), pos("face"));
    EXPECT_LT(pos("face"), pos("lh"));
    EXPECT_LT(pos("lh"), pos("rh"));
    EXPECT_EQ(s.find('\n'), std::string::npos);
}

TEST(EmitFrame, RoundTripThousandRandomFrames) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const LandmarkFrame f = oracle::random_frame(rng);
        ASSERT_EQ(parse_frame(emit_frame(f)), f) << "trial " << trial;
    }
}
