#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <offkit/correlation.hpp>
#include <offkit/message.hpp>

#include <atomic>
#include <chrono>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

using namespace offkit;
using namespace std::chrono_literals;

namespace {

std::vector<std::uint8_t> as_bytes(const std::string& s) {
    return std::vector<std::uint8_t>(s.begin(), s.end());
}

std::string as_string(const std::vector<std::uint8_t>& b) {
    return std::string(b.begin(), b.end());
}

std::chrono::steady_clock::time_point far_deadline() {
    return std::chrono::steady_clock::now() + 1h;
}

}  // namespace

// ── construction ──

TEST_CASE("new_request builds a request envelope") {
    RequestIdGenerator ids(3);
    const auto m = new_request(ids, "GET", "com.example.myapp.process");
    CHECK(m.kind == MessageKind::kRequest);
    CHECK(m.method == "GET");
    CHECK(m.url == "com.example.myapp.process");
    CHECK(!m.has_body());
}

TEST_CASE("new_request carries a large body inline") {
    RequestIdGenerator ids(3);
    const std::vector<std::uint8_t> frame(64 * 1024, 0x7E);
    const auto m = new_request(ids, "POST", "com.example.myapp.process", frame);
    REQUIRE(m.payload.has_value());
    CHECK(m.payload->size() == 64 * 1024);
    CHECK(!m.payload_ref.has_value());
    CHECK(m.body_length() == 64 * 1024);
}

TEST_CASE("consecutive requests get distinct ids") {
    RequestIdGenerator ids(3);
    const auto a = new_request(ids, "GET", "x.y");
    const auto b = new_request(ids, "GET", "x.y");
    CHECK(a.request_id != b.request_id);
}

TEST_CASE("concurrent id generation never collides") {
    RequestIdGenerator ids(9);
    constexpr int kThreads = 8;
    constexpr int kPerThread = 5000;
    std::vector<std::vector<std::uint64_t>> buckets(kThreads);
    std::vector<std::thread> workers;
    for (int t = 0; t < kThreads; ++t) {
        workers.emplace_back([&ids, &buckets, t] {
            buckets[t].reserve(kPerThread);
            for (int i = 0; i < kPerThread; ++i) buckets[t].push_back(ids.next());
        });
    }
    for (auto& w : workers) w.join();
    std::set<std::uint64_t> all;
    for (const auto& b : buckets) all.insert(b.begin(), b.end());
    CHECK(all.size() == kThreads * kPerThread);
}

TEST_CASE("unsupported verb and empty url are rejected") {
    RequestIdGenerator ids(3);
    CHECK_THROWS_AS((void)new_request(ids, "YEET", "x.y"), std::invalid_argument);
    CHECK_THROWS_AS((void)new_request(ids, "GET", ""), std::invalid_argument);
}

TEST_CASE("new_response mirrors the request id") {
    RequestIdGenerator ids(3);
    const auto req = new_request(ids, "POST", "x.y", as_bytes("ping"));
    const auto ok = new_response(req, 200, as_bytes("pong"));
    CHECK(ok.kind == MessageKind::kResponse);
    CHECK(ok.status == 200);
    CHECK(ok.request_id == req.request_id);
    REQUIRE(ok.payload.has_value());
    CHECK(as_string(*ok.payload) == "pong");

    const auto missing = new_response(req, 404);
    CHECK(missing.status == 404);
    CHECK(!missing.has_body());

    CHECK_THROWS_AS((void)new_response(ok, 200), std::invalid_argument);
}

// ── bus record form (golden bytes) ──

TEST_CASE("request with inline payload encodes to the canonical record") {
    Message m;
    m.request_id = 42;
    m.kind = MessageKind::kRequest;
    m.method = "POST";
    m.url = "com.example.myapp.process";
    m.payload = as_bytes("hello");

    const std::string expected =
        "Reqid: 42\n"
        "Method: POST\n"
        "URL: com.example.myapp.process\n"
        "Payload: 5\n"
        "\n"
        "hello";
    CHECK(as_string(encode_bus(m)) == expected);
    CHECK(decode_bus(encode_bus(m)) == m);
}

TEST_CASE("empty-body response encodes to headers only") {
    Message m;
    m.request_id = 42;
    m.kind = MessageKind::kResponse;
    m.status = 200;

    const std::string expected =
        "Reqid: 42\n"
        "Status: 200\n"
        "\n";
    CHECK(as_string(encode_bus(m)) == expected);
    CHECK(decode_bus(encode_bus(m)) == m);
}

TEST_CASE("heap-reference request encodes the reference, not the bytes") {
    Message m;
    m.request_id = 7;
    m.kind = MessageKind::kRequest;
    m.method = "GET";
    m.url = "a.b";
    m.payload_ref = PayloadRef{1024, 512};

    const std::string expected =
        "Reqid: 7\n"
        "Method: GET\n"
        "URL: a.b\n"
        "PaylRef: 1024 512\n"
        "\n";
    CHECK(as_string(encode_bus(m)) == expected);
    CHECK(decode_bus(encode_bus(m)) == m);
}

TEST_CASE("response with body keeps the canonical key order") {
    Message m;
    m.request_id = 9001;
    m.kind = MessageKind::kResponse;
    m.status = 503;
    m.payload = as_bytes("busy");

    const std::string expected =
        "Reqid: 9001\n"
        "Status: 503\n"
        "Payload: 4\n"
        "\n"
        "busy";
    CHECK(as_string(encode_bus(m)) == expected);
    CHECK(decode_bus(encode_bus(m)) == m);
}

TEST_CASE("binary payloads with newlines and NULs round-trip") {
    Message m;
    m.request_id = 3;
    m.kind = MessageKind::kRequest;
    m.method = "POST";
    m.url = "x.y";
    m.payload = std::vector<std::uint8_t>{0x00, 0x0A, 0xFF, 0x0A, 0x00};
    CHECK(decode_bus(encode_bus(m)) == m);
}

TEST_CASE("randomized envelopes survive an encode/decode round-trip") {
    std::mt19937_64 rng(0xFACE);
    RequestIdGenerator ids(static_cast<std::uint16_t>(rng()));
    for (int i = 0; i < 2000; ++i) {
        Message m;
        m.request_id = ids.next();
        if (rng() % 2 == 0) {
            m.kind = MessageKind::kRequest;
            m.method = (rng() % 2 == 0) ? "GET" : "POST";
            m.url = "com.site" + std::to_string(rng() % 100) + ".app.fn";
        } else {
            m.kind = MessageKind::kResponse;
            m.status = 100 + static_cast<int>(rng() % 500);
        }
        switch (rng() % 3) {
            case 0:
                break;  // empty body
            case 1: {
                std::vector<std::uint8_t> body(rng() % 300);
                for (auto& b : body) b = static_cast<std::uint8_t>(rng());
                m.payload = std::move(body);
                break;
            }
            case 2:
                m.payload_ref = PayloadRef{rng() % (1u << 20), 1 + rng() % 65536};
                break;
        }
        CHECK(decode_bus(encode_bus(m)) == m);
    }
}

TEST_CASE("malformed records are rejected") {
    CHECK_THROWS_AS((void)decode_bus(as_bytes("")), std::invalid_argument);
    CHECK_THROWS_AS((void)decode_bus(as_bytes("Method: GET\n\n")),
                    std::invalid_argument);  // missing Reqid
    CHECK_THROWS_AS((void)decode_bus(as_bytes("Reqid: 1\n\n")),
                    std::invalid_argument);  // neither request nor response keys
    CHECK_THROWS_AS(
        (void)decode_bus(as_bytes("Reqid: 1\nStatus: 200\nPayload: 10\n\nabc")),
        std::invalid_argument);  // body shorter than declared
    CHECK_THROWS_AS(
        (void)decode_bus(as_bytes("Reqid: 1\nMethod: GET\nURL: a.b\nStatus: 200\n\n")),
        std::invalid_argument);  // request and response keys together
}

// ── correlation ──

TEST_CASE("a response completes its pending request and clears the entry") {
    CorrelationTable table;
    auto fut = table.add(11, far_deadline());
    CHECK(table.pending_count() == 1);

    Message resp;
    resp.request_id = 11;
    resp.kind = MessageKind::kResponse;
    resp.status = 200;
    CHECK(table.complete(resp));
    CHECK(table.pending_count() == 0);

    const auto got = fut.get();
    CHECK(got.status == 200);
    CHECK(got.request_id == 11);
    CHECK(table.orphan_count() == 0);
}

TEST_CASE("a duplicate response is orphaned") {
    CorrelationTable table;
    auto fut = table.add(5, far_deadline());
    Message resp;
    resp.request_id = 5;
    resp.kind = MessageKind::kResponse;
    resp.status = 200;
    CHECK(table.complete(resp));
    CHECK(!table.complete(resp));
    CHECK(table.orphan_count() == 1);
    CHECK(fut.get().status == 200);
}

TEST_CASE("a response with no pending request is orphaned") {
    CorrelationTable table;
    Message resp;
    resp.request_id = 999;
    resp.kind = MessageKind::kResponse;
    resp.status = 200;
    CHECK(!table.complete(resp));
    CHECK(table.orphan_count() == 1);
}

TEST_CASE("expiry synthesizes a 504 and later responses are orphaned") {
    CorrelationTable table;
    auto fut = table.add(8, std::chrono::steady_clock::now());
    CHECK(table.expire(8));
    const auto got = fut.get();
    CHECK(got.status == 504);
    CHECK(got.request_id == 8);

    Message late;
    late.request_id = 8;
    late.kind = MessageKind::kResponse;
    late.status = 200;
    CHECK(!table.complete(late));
    CHECK(table.orphan_count() == 1);
    CHECK(!table.expire(8));  // nothing left to expire
}

TEST_CASE("cancellation resolves with 499") {
    CorrelationTable table;
    auto fut = table.add(21, far_deadline());
    CHECK(table.cancel(21));
    CHECK(fut.get().status == 499);
    CHECK(!table.cancel(21));
}

TEST_CASE("expire_due sweeps only overdue entries") {
    CorrelationTable table;
    const auto now = std::chrono::steady_clock::now();
    auto due1 = table.add(1, now - 5ms);
    auto due2 = table.add(2, now);
    auto live = table.add(3, now + 1h);
    CHECK(table.expire_due(now) == 2);
    CHECK(due1.get().status == 504);
    CHECK(due2.get().status == 504);
    CHECK(table.pending_count() == 1);

    Message resp;
    resp.request_id = 3;
    resp.kind = MessageKind::kResponse;
    resp.status = 201;
    CHECK(table.complete(resp));
    CHECK(live.get().status == 201);
}

TEST_CASE("exactly one resolver wins under a completion race") {
    for (int round = 0; round < 50; ++round) {
        CorrelationTable table;
        auto fut = table.add(77, std::chrono::steady_clock::now());
        std::atomic<int> wins{0};
        std::vector<std::thread> racers;
        for (int t = 0; t < 4; ++t) {
            racers.emplace_back([&table, &wins, t] {
                if (t % 2 == 0) {
                    Message resp;
                    resp.request_id = 77;
                    resp.kind = MessageKind::kResponse;
                    resp.status = 200;
                    if (table.complete(resp)) wins.fetch_add(1);
                } else {
                    if (table.expire(77)) wins.fetch_add(1);
                }
            });
        }
        for (auto& r : racers) r.join();
        CHECK(wins.load() == 1);
        const int status = fut.get().status;
        CHECK((status == 200 || status == 504));
    }
}
