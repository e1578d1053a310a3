#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "actrace/util.hpp"

namespace actrace {

struct SyscallEvent {
    std::int64_t ts_us = 0;
    std::string endpoint_id;
    std::int32_t pid = 0;
    std::int32_t tid = 0;
    std::int32_t syscall_id = 0;
    std::string process_name;  // optional metadata

    friend bool operator==(const SyscallEvent&, const SyscallEvent&) = default;
};

// All calls collected on one endpoint during one 5 s sensor window.
struct Batch {
    static constexpr std::int64_t kDurationUs = 5'000'000;

    std::string endpoint_id;
    std::int64_t t_start_us = 0;
    std::vector<SyscallEvent> events;  // ordered by ts_us, input order on ties

    std::int64_t t_end_us() const { return t_start_us + kDurationUs; }
};

// Sampled idle gap (µs) between consecutive sensor windows; may return 0.
using IdleSampler = std::function<std::int64_t()>;

inline IdleSampler zero_idle() {
    return [] { return std::int64_t{0}; };
}

// Splits per-endpoint event streams into non-overlapping 5 s collection
// windows separated by sampled idle gaps. Events that fall into an idle
// gap are not collected (the sensor is asleep). Events may arrive out of
// order by at most reorder_slack_us; anything older is rejected.
std::vector<Batch> assemble_batches(const std::vector<SyscallEvent>& events,
                                    const IdleSampler& idle,
                                    std::int64_t reorder_slack_us = 0);

// Sliding 5-grams (stride 1) of each thread's call sequence. Threads with
// fewer than five calls map to an empty list.
std::map<ThreadId, std::vector<WordKey>> extract_words(const Batch& batch);

// -- trace file format: JSON lines --------------------------------------
// {"ts": µs, "ep": string, "pid": int, "tid": int, "sc": int, "pn": string?}
// Unknown fields are ignored; field order is irrelevant.

SyscallEvent parse_event_line(const std::string& line);
std::string event_to_line(const SyscallEvent& ev);

std::vector<SyscallEvent> read_trace(std::istream& in);
std::vector<SyscallEvent> read_trace_file(const std::string& path);
void write_trace(std::ostream& out, const std::vector<SyscallEvent>& events);
void write_trace_file(const std::string& path,
                      const std::vector<SyscallEvent>& events);

// Batch round-trip form used by tests and intermediate files.
std::string batch_to_json(const Batch& b);
Batch batch_from_json(const std::string& text);

}  // namespace actrace
