#include "signlang/landmarks.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "signlang/error.hpp"

namespace signlang {

namespace {

template <typename Part>
void check_count(const std::optional<std::vector<Part>>& part, std::size_t expected,
                 const char* name) {
    if (part && part->size() != expected) {
        throw ValidationError(std::string("landmark part '") + name + "' has " +
                              std::to_string(part->size()) + " landmarks, expected " +
                              std::to_string(expected));
    }
}

template <typename Part>
void check_finite(const std::optional<std::vector<Part>>& part, const char* name) {
    if (!part) {
        return;
    }
    for (std::size_t i = 0; i < part->size(); ++i) {
        const Part& p = (*part)[i];
        bool ok = std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
        if constexpr (std::is_same_v<Part, Landmark4>) {
            ok = ok && p.visibility >= 0.0 && p.visibility <= 1.0;
        }
        if (!ok) {
            throw ValidationError(std::string("landmark part '") + name + "' entry " +
                                  std::to_string(i) + " is non-finite or out of range");
        }
    }
}

void write_part(const std::optional<std::vector<Landmark3>>& part, double* out) {
    if (!part) {
        return;
    }
    for (const Landmark3& p : *part) {
        *out++ = p.x;
        *out++ = p.y;
        *out++ = p.z;
    }
}

void write_part(const std::optional<std::vector<Landmark4>>& part, double* out) {
    if (!part) {
        return;
    }
    for (const Landmark4& p : *part) {
        *out++ = p.x;
        *out++ = p.y;
        *out++ = p.z;
        *out++ = p.visibility;
    }
}

std::vector<double> read_numbers(const nlohmann::json& value, const std::string& key,
                                 std::size_t expected) {
    if (!value.is_array()) {
        throw ParseError("'" + key + "' must be an array of numbers", key);
    }
    if (value.size() != expected) {
        throw ParseError("'" + key + "' has " + std::to_string(value.size()) +
                             " numbers, expected " + std::to_string(expected),
                         key);
    }
    std::vector<double> numbers;
    numbers.reserve(expected);
    for (std::size_t i = 0; i < value.size(); ++i) {
        const auto& item = value[i];
        const std::string path = key + "[" + std::to_string(i) + "]";
        if (!item.is_number()) {
            throw ParseError("expected a number", path);
        }
        const double v = item.get<double>();
        if (!std::isfinite(v)) {
            throw ParseError("non-finite number", path);
        }
        numbers.push_back(v);
    }
    return numbers;
}

std::vector<Landmark3> to_landmark3(const std::vector<double>& v) {
    std::vector<Landmark3> out(v.size() / 3);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
    }
    return out;
}

nlohmann::ordered_json numbers_of(const std::vector<Landmark3>& part) {
    auto arr = nlohmann::ordered_json::array();
    for (const Landmark3& p : part) {
        arr.push_back(p.x);
        arr.push_back(p.y);
        arr.push_back(p.z);
    }
    return arr;
}

} // namespace

void validate(const LandmarkFrame& frame) {
    check_count(frame.pose, kPoseLandmarks, "pose");
    check_count(frame.face, kFaceLandmarks, "face");
    check_count(frame.left_hand, kHandLandmarks, "lh");
    check_count(frame.right_hand, kHandLandmarks, "rh");
    check_finite(frame.pose, "pose");
    check_finite(frame.face, "face");
    check_finite(frame.left_hand, "lh");
    check_finite(frame.right_hand, "rh");
    if (frame.timestamp_ms < 0) {
        throw ValidationError("negative timestamp " + std::to_string(frame.timestamp_ms));
    }
}

FeatureVector flatten(const LandmarkFrame& frame) {
    validate(frame);
    FeatureVector out(kFeatureDim, 0.0);
    write_part(frame.pose, out.data() + kPoseOffset);
    write_part(frame.face, out.data() + kFaceOffset);
    write_part(frame.left_hand, out.data() + kLeftHandOffset);
    write_part(frame.right_hand, out.data() + kRightHandOffset);
    return out;
}

LandmarkFrame frame_from_json(const nlohmann::json& object,
                              std::initializer_list<std::string_view> ignored_keys) {
    if (!object.is_object()) {
        throw ParseError("frame record must be an object", "$");
    }
    LandmarkFrame frame;
    bool have_t = false;
    for (const auto& [key, value] : object.items()) {
        if (key == "t") {
            if (!value.is_number_integer() || value.get<std::int64_t>() < 0) {
                throw ParseError("'t' must be a non-negative integer", "t");
            }
            frame.timestamp_ms = value.get<std::int64_t>();
            have_t = true;
        } else if (key == "pose") {
            const auto v = read_numbers(value, key, kPoseValues);
            std::vector<Landmark4> pose(kPoseLandmarks);
            for (std::size_t i = 0; i < kPoseLandmarks; ++i) {
                pose[i] = {v[4 * i], v[4 * i + 1], v[4 * i + 2], v[4 * i + 3]};
                if (pose[i].visibility < 0.0 || pose[i].visibility > 1.0) {
                    throw ParseError("visibility outside [0,1]",
                                     "pose[" + std::to_string(4 * i + 3) + "]");
                }
            }
            frame.pose = std::move(pose);
        } else if (key == "face") {
            frame.face = to_landmark3(read_numbers(value, key, kFaceValues));
        } else if (key == "lh") {
            frame.left_hand = to_landmark3(read_numbers(value, key, kHandValues));
        } else if (key == "rh") {
            frame.right_hand = to_landmark3(read_numbers(value, key, kHandValues));
        } else if (std::find(ignored_keys.begin(), ignored_keys.end(), key) == ignored_keys.end()) {
            throw ParseError("unknown key '" + key + "'", key);
        }
    }
    if (!have_t) {
        throw ParseError("missing key 't'", "t");
    }
    return frame;
}

LandmarkFrame parse_frame(std::string_view text) {
    nlohmann::json object;
    try {
        object = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(e.what(), "byte " + std::to_string(e.byte));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(e.what(), "number");
    }
    return frame_from_json(object);
}

nlohmann::ordered_json frame_to_json(const LandmarkFrame& frame) {
    validate(frame);
    nlohmann::ordered_json out;
    out["t"] = frame.timestamp_ms;
    if (frame.pose) {
        auto arr = nlohmann::ordered_json::array();
        for (const Landmark4& p : *frame.pose) {
            arr.push_back(p.x);
            arr.push_back(p.y);
            arr.push_back(p.z);
            arr.push_back(p.visibility);
        }
        out["pose"] = std::move(arr);
    }
    if (frame.face) {
        out["face"] = numbers_of(*frame.face);
    }
    if (frame.left_hand) {
        out["lh"] = numbers_of(*frame.left_hand);
    }
    if (frame.right_hand) {
        out["rh"] = numbers_of(*frame.right_hand);
    }
    return out;
}

std::string emit_frame(const LandmarkFrame& frame) {
    return frame_to_json(frame).dump();
}

} // namespace signlang
