#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "signlang/realtime.hpp"

namespace signlang {

struct SessionCounters {
    std::uint64_t frames_received = 0;
    std::uint64_t frames_dropped = 0;
    std::uint64_t predictions_emitted = 0;
    std::uint64_t errors = 0;
};

/// Protocol state of one stream: turns inbound message lines into outbound
/// message lines. Transport-independent; the server and the offline
/// `predict` command both drive it.
class Session {
public:
    Session(const Model& model, SmoothingPolicy policy);

    /// `{"type":"hello","labels":[...],"dim":D,"seq_len":T}`
    std::string hello() const;

    /// Processes one inbound line. Malformed input yields a single error
    /// message and leaves the session usable. A trailing CR is stripped and
    /// empty lines are ignored.
    std::vector<std::string> handle_line(std::string_view line);

    /// Records frames discarded by the transport before reaching the session.
    void note_dropped(std::uint64_t count) noexcept { counters_.frames_dropped += count; }

    const SessionCounters& counters() const noexcept { return counters_; }
    const Recognizer& recognizer() const noexcept { return recognizer_; }
    std::vector<std::string> sentence_labels() const { return recognizer_.sentence_labels(); }

private:
    std::vector<std::string> accept_frame(FeatureVector frame, std::int64_t timestamp_ms);
    std::string error(std::string_view message);

    const Model& model_;
    Recognizer recognizer_;
    SessionCounters counters_;
    std::optional<std::int64_t> last_timestamp_;
};

/// `{"type":"error","msg":...}`
std::string error_message(std::string_view message);

} // namespace signlang
