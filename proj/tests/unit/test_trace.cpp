#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "actrace/rng.hpp"
#include "actrace/trace.hpp"

using namespace actrace;

namespace {

SyscallEvent ev(std::int64_t ts, int sc, int pid = 1, int tid = 1,
                const std::string& ep = "ep0") {
    SyscallEvent e;
    e.ts_us = ts;
    e.endpoint_id = ep;
    e.pid = pid;
    e.tid = tid;
    e.syscall_id = sc;
    return e;
}

}  // namespace

TEST_CASE("word packing round-trips and is injective for 12-bit ids") {
    Word w{1, 2, 3, 4, 4095};
    CHECK(unpack_word(pack_word(w)) == w);
    Word v{2, 1, 3, 4, 4095};
    CHECK(pack_word(w) != pack_word(v));
}

TEST_CASE("assemble_batches: empty stream") {
    CHECK(assemble_batches({}, zero_idle()).empty());
}

TEST_CASE("assemble_batches: one window swallows a 5s burst") {
    std::vector<SyscallEvent> events;
    for (int i = 0; i < 10; ++i) events.push_back(ev(i * 400'000, i % 8));
    const auto batches = assemble_batches(events, zero_idle());
    REQUIRE(batches.size() == 1);
    CHECK(batches[0].t_start_us == 0);
    CHECK(batches[0].events.size() == 10);
}

TEST_CASE("assemble_batches: idle gap positions the second window") {
    std::vector<SyscallEvent> events;
    for (int t = 0; t <= 4; ++t) events.push_back(ev(t * 1'000'000, t));
    events.push_back(ev(8'000'000, 5));
    events.push_back(ev(9'000'000, 6));
    const auto batches =
        assemble_batches(events, [] { return std::int64_t{3'000'000}; });
    REQUIRE(batches.size() == 2);
    CHECK(batches[0].t_start_us == 0);
    CHECK(batches[0].events.size() == 5);
    CHECK(batches[1].t_start_us == 8'000'000);
    CHECK(batches[1].events.size() == 2);
}

TEST_CASE("assemble_batches: rejects disorder beyond the slack") {
    std::vector<SyscallEvent> events{ev(5'000'000, 1), ev(1'000'000, 2)};
    CHECK_THROWS_WITH_AS(assemble_batches(events, zero_idle(), 0),
                         doctest::Contains("1000000"), std::runtime_error);
    // generous slack accepts and re-sorts
    const auto batches = assemble_batches(events, zero_idle(), 5'000'000);
    REQUIRE(batches.size() == 1);
    CHECK(batches[0].events.front().ts_us == 1'000'000);
}

TEST_CASE("assemble_batches: no event lost or duplicated with zero idle") {
    Rng rng(99);
    for (int round = 0; round < 20; ++round) {
        std::vector<SyscallEvent> events;
        std::int64_t ts = 0;
        const int n = 50 + static_cast<int>(rng.below(200));
        for (int i = 0; i < n; ++i) {
            ts += static_cast<std::int64_t>(rng.below(3'000'000));
            events.push_back(ev(ts, static_cast<int>(rng.below(16)),
                                static_cast<int>(rng.below(3)), 1,
                                rng.below(2) ? "epA" : "epB"));
        }
        const auto batches = assemble_batches(events, zero_idle());
        std::multiset<std::int64_t> in, out;
        for (const auto& e : events) in.insert(e.ts_us);
        std::size_t total = 0;
        for (const auto& b : batches) {
            total += b.events.size();
            for (const auto& e : b.events) {
                out.insert(e.ts_us);
                CHECK(b.t_start_us <= e.ts_us);
                CHECK(e.ts_us < b.t_end_us());
            }
        }
        CHECK(total == events.size());
        CHECK(in == out);
    }
}

TEST_CASE("extract_words: thread shorter than a word yields nothing") {
    Batch b;
    b.endpoint_id = "ep0";
    for (int i = 0; i < 4; ++i) b.events.push_back(ev(i, i + 1));
    const auto words = extract_words(b);
    CHECK(words.at({1, 1}).empty());
}

TEST_CASE("extract_words: exact window and sliding stride") {
    Batch b;
    b.endpoint_id = "ep0";
    for (int i = 0; i < 5; ++i) b.events.push_back(ev(i, i + 1));
    auto words = extract_words(b);
    REQUIRE(words.at({1, 1}).size() == 1);
    CHECK(words.at({1, 1})[0] == pack_word({1, 2, 3, 4, 5}));

    b.events.push_back(ev(5, 6));
    words = extract_words(b);
    REQUIRE(words.at({1, 1}).size() == 2);
    CHECK(words.at({1, 1})[1] == pack_word({2, 3, 4, 5, 6}));
}

TEST_CASE("extract_words: interleaved threads are separated") {
    Batch b;
    b.endpoint_id = "ep0";
    const int a_calls[] = {1, 2, 3, 4, 5, 6};
    const int b_calls[] = {7, 8, 9, 7, 8};
    std::int64_t ts = 0;
    std::size_t ia = 0, ib = 0;
    while (ia < 6 || ib < 5) {
        if (ia < 6) b.events.push_back(ev(ts++, a_calls[ia++], 1, 1));
        if (ib < 5) b.events.push_back(ev(ts++, b_calls[ib++], 1, 2));
    }
    const auto words = extract_words(b);
    REQUIRE(words.at({1, 1}).size() == 2);
    CHECK(words.at({1, 1})[0] == pack_word({1, 2, 3, 4, 5}));
    CHECK(words.at({1, 1})[1] == pack_word({2, 3, 4, 5, 6}));
    REQUIRE(words.at({1, 2}).size() == 1);
    CHECK(words.at({1, 2})[0] == pack_word({7, 8, 9, 7, 8}));
}

TEST_CASE("word count per thread is max(0, n-4), invariant to interleaving") {
    Rng rng(7);
    for (int round = 0; round < 10; ++round) {
        Batch b;
        b.endpoint_id = "ep0";
        std::map<ThreadId, int> calls;
        const int n = 30 + static_cast<int>(rng.below(60));
        for (int i = 0; i < n; ++i) {
            const ThreadId t{static_cast<int>(rng.below(3)),
                             static_cast<int>(rng.below(2))};
            ++calls[t];
            b.events.push_back(
                ev(i, static_cast<int>(rng.below(10)), t.pid, t.tid));
        }
        const auto words = extract_words(b);
        std::size_t total = 0;
        for (const auto& [t, ws] : words) {
            CHECK(static_cast<int>(ws.size()) == std::max(0, calls[t] - 4));
            total += ws.size();
        }
        // reversing equal-timestamp interleaving does not change totals
        Batch shuffled = b;
        rng.shuffle(shuffled.events);
        for (std::size_t i = 0; i < shuffled.events.size(); ++i)
            shuffled.events[i].ts_us = static_cast<std::int64_t>(i);
        std::size_t total2 = 0;
        for (const auto& [t, ws] : extract_words(shuffled)) total2 += ws.size();
        CHECK(total == total2);
    }
}

TEST_CASE("trace jsonl round-trip is the identity") {
    std::vector<SyscallEvent> events;
    for (int i = 0; i < 25; ++i) {
        auto e = ev(i * 1000, i % 12, i % 3, i % 2, "epZ");
        if (i % 4 == 0) e.process_name = "proc" + std::to_string(i);
        events.push_back(e);
    }
    std::stringstream ss;
    write_trace(ss, events);
    const auto parsed = read_trace(ss);
    CHECK(parsed == events);
}

TEST_CASE("trace parser ignores unknown fields, validates known ones") {
    const auto e = parse_event_line(
        R"({"ts": 5, "ep": "x", "pid": 1, "tid": 2, "sc": 3, "future": [1,2]})");
    CHECK(e.ts_us == 5);
    CHECK(e.syscall_id == 3);
    CHECK_THROWS(parse_event_line(R"({"ts": 5, "ep": "x", "pid": 1, "tid": 2})"));
    CHECK_THROWS(parse_event_line(
        R"({"ts": -1, "ep": "x", "pid": 1, "tid": 2, "sc": 3})"));
    CHECK_THROWS(parse_event_line(
        R"({"ts": 1, "ep": "x", "pid": 1, "tid": 2, "sc": 9999})"));
}

TEST_CASE("batch serialization round-trips") {
    Batch b;
    b.endpoint_id = "ep7";
    b.t_start_us = 42;
    for (int i = 0; i < 8; ++i) b.events.push_back(ev(42 + i, i, 2, 3, "ep7"));
    const Batch back = batch_from_json(batch_to_json(b));
    CHECK(back.endpoint_id == b.endpoint_id);
    CHECK(back.t_start_us == b.t_start_us);
    CHECK(back.events == b.events);
}
