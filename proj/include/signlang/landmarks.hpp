#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace signlang {

// Holistic topology. Everything that depends on the feature layout derives
// from these constants.
inline constexpr std::size_t kPoseLandmarks = 33;
inline constexpr std::size_t kFaceLandmarks = 468;
inline constexpr std::size_t kHandLandmarks = 21;

inline constexpr std::size_t kPoseValues = kPoseLandmarks * 4;
inline constexpr std::size_t kFaceValues = kFaceLandmarks * 3;
inline constexpr std::size_t kHandValues = kHandLandmarks * 3;

inline constexpr std::size_t kPoseOffset = 0;
inline constexpr std::size_t kFaceOffset = kPoseOffset + kPoseValues;
inline constexpr std::size_t kLeftHandOffset = kFaceOffset + kFaceValues;
inline constexpr std::size_t kRightHandOffset = kLeftHandOffset + kHandValues;
inline constexpr std::size_t kFeatureDim = kRightHandOffset + kHandValues;

static_assert(kFaceOffset == 132 && kLeftHandOffset == 1536 && kRightHandOffset == 1599);
static_assert(kFeatureDim == 1662);

struct Landmark3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    bool operator==(const Landmark3&) const = default;
};

/// Pose landmarks additionally carry a visibility confidence in [0, 1].
struct Landmark4 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double visibility = 0.0;

    bool operator==(const Landmark4&) const = default;
};

/// One time step of tracker output. A disengaged part was not detected.
struct LandmarkFrame {
    std::optional<std::vector<Landmark4>> pose;
    std::optional<std::vector<Landmark3>> face;
    std::optional<std::vector<Landmark3>> left_hand;
    std::optional<std::vector<Landmark3>> right_hand;
    std::int64_t timestamp_ms = 0;

    bool operator==(const LandmarkFrame&) const = default;
};

/// Flattened frame: pose | face | left hand | right hand.
using FeatureVector = std::vector<double>;

/// Throws ValidationError naming the offending part and its counts.
void validate(const LandmarkFrame& frame);

/// Absent parts are written as zeros over their whole block.
FeatureVector flatten(const LandmarkFrame& frame);

/// Parses one frame record, e.g. `{"t":0,"rh":[...63 numbers...]}`.
/// Throws ParseError with a byte offset (syntax) or key path (content).
LandmarkFrame parse_frame(std::string_view text);

/// Same as parse_frame on an already decoded object. Keys listed in
/// `ignored_keys` are skipped; any other unknown key is an error.
LandmarkFrame frame_from_json(const nlohmann::json& object,
                              std::initializer_list<std::string_view> ignored_keys = {});

/// Single-line record with keys in the fixed order t, pose, face, lh, rh.
std::string emit_frame(const LandmarkFrame& frame);

nlohmann::ordered_json frame_to_json(const LandmarkFrame& frame);

} // namespace signlang
