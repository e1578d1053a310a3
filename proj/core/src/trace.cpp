#include "actrace/trace.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace actrace {

using nlohmann::json;

std::vector<Batch> assemble_batches(const std::vector<SyscallEvent>& events,
                                    const IdleSampler& idle,
                                    std::int64_t reorder_slack_us) {
    // Partition by endpoint, preserving input order.
    std::map<std::string, std::vector<SyscallEvent>> per_ep;
    std::map<std::string, std::int64_t> max_ts;
    for (const auto& ev : events) {
        auto [it, fresh] = max_ts.try_emplace(ev.endpoint_id, ev.ts_us);
        if (!fresh) {
            if (ev.ts_us + reorder_slack_us < it->second) {
                throw std::runtime_error(
                    "out-of-order event at ts=" + std::to_string(ev.ts_us) +
                    " on endpoint '" + ev.endpoint_id +
                    "' exceeds reordering slack of " +
                    std::to_string(reorder_slack_us) + " us");
            }
            it->second = std::max(it->second, ev.ts_us);
        }
        per_ep[ev.endpoint_id].push_back(ev);
    }

    std::vector<Batch> out;
    for (auto& [ep, stream] : per_ep) {
        std::stable_sort(stream.begin(), stream.end(),
                         [](const SyscallEvent& a, const SyscallEvent& b) {
                             return a.ts_us < b.ts_us;
                         });
        std::size_t i = 0;
        std::int64_t window_start = stream.front().ts_us;
        while (i < stream.size()) {
            Batch b;
            b.endpoint_id = ep;
            b.t_start_us = window_start;
            const std::int64_t window_end = window_start + Batch::kDurationUs;
            while (i < stream.size() && stream[i].ts_us < window_end) {
                if (stream[i].ts_us >= window_start) b.events.push_back(stream[i]);
                ++i;  // events older than the window start fell into an idle gap
            }
            if (!b.events.empty()) out.push_back(std::move(b));
            window_start = window_end + std::max<std::int64_t>(0, idle());
            // sensor idles through quiet periods; skip ahead window by window
            while (i < stream.size() &&
                   stream[i].ts_us >= window_start + Batch::kDurationUs) {
                window_start += Batch::kDurationUs + std::max<std::int64_t>(0, idle());
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Batch& a, const Batch& b) {
        if (a.t_start_us != b.t_start_us) return a.t_start_us < b.t_start_us;
        return a.endpoint_id < b.endpoint_id;
    });
    return out;
}

std::map<ThreadId, std::vector<WordKey>> extract_words(const Batch& batch) {
    std::map<ThreadId, std::vector<std::uint16_t>> calls;
    for (const auto& ev : batch.events)
        calls[{ev.pid, ev.tid}].push_back(
            static_cast<std::uint16_t>(ev.syscall_id));

    std::map<ThreadId, std::vector<WordKey>> words;
    for (const auto& [tidk, seq] : calls) {
        auto& ws = words[tidk];
        if (seq.size() >= kWordLen) {
            ws.reserve(seq.size() - kWordLen + 1);
            for (std::size_t i = 0; i + kWordLen <= seq.size(); ++i) {
                Word w;
                std::copy_n(seq.begin() + i, kWordLen, w.begin());
                ws.push_back(pack_word(w));
            }
        }
    }
    return words;
}

static json event_to_json(const SyscallEvent& ev) {
    json j{{"ts", ev.ts_us}, {"ep", ev.endpoint_id}, {"pid", ev.pid},
           {"tid", ev.tid},  {"sc", ev.syscall_id}};
    if (!ev.process_name.empty()) j["pn"] = ev.process_name;
    return j;
}

static SyscallEvent event_from_json(const json& j) {
    SyscallEvent ev;
    ev.ts_us = j.at("ts").get<std::int64_t>();
    ev.endpoint_id = j.at("ep").get<std::string>();
    ev.pid = j.at("pid").get<std::int32_t>();
    ev.tid = j.at("tid").get<std::int32_t>();
    ev.syscall_id = j.at("sc").get<std::int32_t>();
    if (j.contains("pn") && j["pn"].is_string())
        ev.process_name = j["pn"].get<std::string>();
    if (ev.ts_us < 0) throw std::runtime_error("negative timestamp");
    if (ev.pid < 0 || ev.tid < 0) throw std::runtime_error("negative pid/tid");
    if (ev.syscall_id < 0 || ev.syscall_id >= kMaxAlphabet)
        throw std::runtime_error("syscall id out of range: " +
                                 std::to_string(ev.syscall_id));
    return ev;
}

SyscallEvent parse_event_line(const std::string& line) {
    return event_from_json(json::parse(line));
}

std::string event_to_line(const SyscallEvent& ev) {
    return event_to_json(ev).dump();
}

std::vector<SyscallEvent> read_trace(std::istream& in) {
    std::vector<SyscallEvent> events;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            events.push_back(parse_event_line(line));
        } catch (const std::exception& e) {
            throw std::runtime_error("trace line " + std::to_string(lineno) +
                                     ": " + e.what());
        }
    }
    return events;
}

std::vector<SyscallEvent> read_trace_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace file: " + path);
    return read_trace(in);
}

void write_trace(std::ostream& out, const std::vector<SyscallEvent>& events) {
    for (const auto& ev : events) out << event_to_line(ev) << '\n';
}

void write_trace_file(const std::string& path,
                      const std::vector<SyscallEvent>& events) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    write_trace(out, events);
}

std::string batch_to_json(const Batch& b) {
    json j{{"ep", b.endpoint_id}, {"t_start", b.t_start_us}};
    json evs = json::array();
    for (const auto& ev : b.events) evs.push_back(event_to_json(ev));
    j["events"] = std::move(evs);
    return j.dump();
}

Batch batch_from_json(const std::string& text) {
    json j = json::parse(text);
    Batch b;
    b.endpoint_id = j.at("ep").get<std::string>();
    b.t_start_us = j.at("t_start").get<std::int64_t>();
    for (const auto& je : j.at("events")) b.events.push_back(event_from_json(je));
    return b;
}

}  // namespace actrace
