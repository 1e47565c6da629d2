#include "signlang/session.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "signlang/error.hpp"

namespace signlang {

using ojson = nlohmann::ordered_json;

std::string error_message(std::string_view message) {
    ojson j;
    j["type"] = "error";
    j["msg"] = std::string(message);
    // Replace rather than throw on invalid UTF-8 echoed back from the client.
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

Session::Session(const Model& model, SmoothingPolicy policy)
    : model_(model), recognizer_(model, policy) {}

std::string Session::hello() const {
    ojson j;
    j["type"] = "hello";
    j["labels"] = model_.labels.labels();
    j["dim"] = model_.input_dim;
    j["seq_len"] = model_.seq_len;
    return j.dump();
}

std::string Session::error(std::string_view message) {
    ++counters_.errors;
    return error_message(message);
}

std::vector<std::string> Session::handle_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
    }
    if (line.empty()) {
        return {};
    }
    nlohmann::json msg;
    try {
        msg = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        return {error("invalid JSON at byte " + std::to_string(e.byte))};
    } catch (const nlohmann::json::exception& e) {
        return {error(std::string("invalid JSON: ") + e.what())};
    }
    if (!msg.is_object()) {
        return {error("message must be a JSON object")};
    }
    const auto type_it = msg.find("type");
    if (type_it == msg.end() || !type_it->is_string()) {
        return {error("message lacks a string 'type'")};
    }
    const auto type = type_it->get<std::string>();

    try {
        if (type == "frame") {
            if (model_.input_dim != kFeatureDim) {
                return {error("model expects " + std::to_string(model_.input_dim) +
                              " features; landmark frames flatten to " + std::to_string(kFeatureDim))};
            }
            const LandmarkFrame frame = frame_from_json(msg, {"type"});
            return accept_frame(flatten(frame), frame.timestamp_ms);
        }
        if (type == "features") {
            for (const auto& [key, value] : msg.items()) {
                if (key != "type" && key != "t" && key != "v") {
                    return {error("unknown key '" + key + "' in features message")};
                }
            }
            const auto t = msg.find("t");
            if (t == msg.end() || !t->is_number_integer() || t->get<std::int64_t>() < 0) {
                return {error("'t' must be a non-negative integer")};
            }
            const auto v = msg.find("v");
            if (v == msg.end() || !v->is_array()) {
                return {error("'v' must be an array of numbers")};
            }
            if (v->size() != model_.input_dim) {
                return {error("'v' has " + std::to_string(v->size()) + " values, expected " +
                              std::to_string(model_.input_dim))};
            }
            FeatureVector features;
            features.reserve(v->size());
            for (const auto& x : *v) {
                if (!x.is_number() || !std::isfinite(x.get<double>())) {
                    return {error("'v' must contain only finite numbers")};
                }
                features.push_back(x.get<double>());
            }
            return accept_frame(std::move(features), t->get<std::int64_t>());
        }
    } catch (const ParseError& e) {
        return {error(e.what())};
    } catch (const ValidationError& e) {
        return {error(e.what())};
    }
    return {error("unknown message type '" + type + "'")};
}

std::vector<std::string> Session::accept_frame(FeatureVector frame, std::int64_t timestamp_ms) {
    if (last_timestamp_ && timestamp_ms < *last_timestamp_) {
        return {error("timestamp " + std::to_string(timestamp_ms) + " precedes " +
                      std::to_string(*last_timestamp_))};
    }
    last_timestamp_ = timestamp_ms;
    ++counters_.frames_received;

    auto step = recognizer_.push(std::move(frame), timestamp_ms);
    if (!step) {
        return {};
    }
    ++counters_.predictions_emitted;
    std::vector<std::string> out;
    const auto& p = step->prediction;
    ojson pred;
    pred["type"] = "prediction";
    pred["t"] = p.timestamp_ms;
    pred["probs"] = p.probs;
    pred["argmax"] = p.argmax_index;
    pred["label"] = model_.labels[p.argmax_index];
    pred["stable"] = step->stable;
    pred["dropped"] = counters_.frames_dropped;
    out.push_back(pred.dump());
    if (step->committed) {
        ojson word;
        word["type"] = "word";
        word["label"] = model_.labels[*step->committed];
        word["sentence"] = recognizer_.sentence_labels();
        out.push_back(word.dump());
    }
    return out;
}

} // namespace signlang
