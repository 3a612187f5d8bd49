#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <offkit/transport.hpp>

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <future>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

using namespace offkit;
using namespace std::chrono_literals;

namespace {

std::vector<std::uint8_t> as_bytes(const std::string& s) {
    return std::vector<std::uint8_t>(s.begin(), s.end());
}

std::vector<std::uint8_t> copy_of(std::span<const std::uint8_t> view) {
    return std::vector<std::uint8_t>(view.begin(), view.end());
}

Message request_to(const std::string& address,
                   std::optional<std::vector<std::uint8_t>> body = std::nullopt,
                   std::uint64_t id = 1) {
    Message m;
    m.request_id = id;
    m.kind = MessageKind::kRequest;
    m.method = "POST";
    m.url = address;
    m.payload = std::move(body);
    return m;
}

// Blocks until the completion fires, then exposes what it saw.
struct CapturedResponse {
    Message envelope;
    std::vector<std::uint8_t> body;

    Completion capture() {
        return [this](Message response, std::span<const std::uint8_t> view) {
            envelope = std::move(response);
            body = copy_of(view);
            done_.set_value();
        };
    }
    void wait() { done_.get_future().wait(); }

private:
    std::promise<void> done_;
};

// Post-completion bookkeeping (releasing buffers, freeing response blocks)
// happens on the worker after the completion fires, so quiescence checks
// poll briefly.
template <typename Pred>
bool eventually(Pred pred) {
    const auto deadline = std::chrono::steady_clock::now() + 5s;
    while (std::chrono::steady_clock::now() < deadline) {
        if (pred()) return true;
        std::this_thread::sleep_for(1ms);
    }
    return pred();
}

Handler echo_handler() {
    return [](const Message& request, std::span<const std::uint8_t> body) {
        Message response;
        response.request_id = request.request_id;
        response.kind = MessageKind::kResponse;
        response.status = 200;
        if (!body.empty()) response.payload = copy_of(body);
        return response;
    };
}

}  // namespace

// ── bus: fidelity and accounting ──

TEST_CASE("copy mode round-trips payload bytes and counts two stores each way") {
    BusStack bus("copy", BusStack::Options{BusMode::kCopy});
    bus.attach("app.echo", echo_handler());

    const auto payload = as_bytes(std::string(1024, 'x'));
    CapturedResponse got;
    bus.send(request_to("app.echo", payload), got.capture());
    got.wait();

    CHECK(got.envelope.status == 200);
    CHECK(got.envelope.request_id == 1);
    CHECK(got.body == payload);

    REQUIRE(eventually([&] { return bus.counters().responses == 1; }));
    const auto c = bus.counters();
    // 1024 in (marshal + unmarshal) and 1024 back out the same way.
    CHECK(c.bytes_copied == 4 * 1024);
    CHECK(c.deliveries == 1);
    CHECK(c.resident_payload_bytes == 0);           // all buffers released
    CHECK(c.peak_resident_payload_bytes >= 1024);   // record + delivery overlap
}

TEST_CASE("heap mode stores each payload once and returns the heap to empty") {
    ContiguousHeap heap(1 << 20, /*auto_merge=*/true);
    BusStack bus("heap_ref", BusStack::Options{BusMode::kHeapRef, &heap});
    bus.attach("app.echo", echo_handler());

    const auto payload = as_bytes(std::string(1024, 'y'));
    CapturedResponse got;
    bus.send(request_to("app.echo", payload), got.capture());
    got.wait();

    CHECK(got.envelope.status == 200);
    CHECK(got.body == payload);

    REQUIRE(eventually([&] { return bus.counters().responses == 1; }));
    const auto c = bus.counters();
    CHECK(c.bytes_copied == 2 * 1024);  // one store in, one store back
    CHECK(c.resident_payload_bytes == 0);

    const auto st = heap.stats();
    CHECK(st.used_bytes == 0);
    CHECK(st.free_bytes_in_blocks == 0);
    CHECK(st.block_count == 0);
}

TEST_CASE("heap mode delivers the handler a view into the arena") {
    ContiguousHeap heap(1 << 20, /*auto_merge=*/true);
    BusStack bus("heap_ref", BusStack::Options{BusMode::kHeapRef, &heap});

    std::atomic<bool> view_was_in_arena{false};
    bus.attach("app.peek", [&](const Message& request,
                               std::span<const std::uint8_t> body) {
        // The request envelope carries the reference; the view must alias
        // the very block it names.
        if (request.payload_ref.has_value() && !body.empty()) {
            const auto arena_view = heap.view(request.payload_ref->reference,
                                              request.payload_ref->length);
            view_was_in_arena = (arena_view.data() == body.data());
        }
        Message response;
        response.request_id = request.request_id;
        response.kind = MessageKind::kResponse;
        response.status = 204;
        return response;
    });

    CapturedResponse got;
    bus.send(request_to("app.peek", as_bytes("frame")), got.capture());
    got.wait();
    CHECK(got.envelope.status == 204);
    CHECK(view_was_in_arena.load());
}

TEST_CASE("empty-body requests perform no heap allocation") {
    ContiguousHeap heap(1 << 20, /*auto_merge=*/true);
    BusStack bus("heap_ref", BusStack::Options{BusMode::kHeapRef, &heap});
    std::atomic<std::size_t> seen_body{999};
    bus.attach("app.null", [&](const Message& request,
                               std::span<const std::uint8_t> body) {
        seen_body = body.size();
        Message r;
        r.request_id = request.request_id;
        r.kind = MessageKind::kResponse;
        r.status = 200;
        return r;
    });

    CapturedResponse got;
    bus.send(request_to("app.null"), got.capture());
    got.wait();
    CHECK(seen_body.load() == 0);
    CHECK(bus.counters().bytes_copied == 0);
    CHECK(heap.peak_used_bytes() == 0);
}

TEST_CASE("no handler yields an immediate 404") {
    BusStack bus("copy", BusStack::Options{BusMode::kCopy});
    CapturedResponse got;
    bus.send(request_to("app.nobody", as_bytes("x"), 77), got.capture());
    got.wait();
    CHECK(got.envelope.status == 404);
    CHECK(got.envelope.request_id == 77);
    CHECK(got.body.empty());
    CHECK(bus.counters().deliveries == 0);
}

TEST_CASE("heap exhaustion yields 503 and the request is never delivered") {
    ContiguousHeap heap(256, /*auto_merge=*/true);
    BusStack bus("heap_ref", BusStack::Options{BusMode::kHeapRef, &heap});
    std::atomic<int> delivered{0};
    bus.attach("app.big", [&](const Message& request, std::span<const std::uint8_t>) {
        ++delivered;
        Message r;
        r.request_id = request.request_id;
        r.kind = MessageKind::kResponse;
        r.status = 200;
        return r;
    });

    CapturedResponse got;
    bus.send(request_to("app.big", std::vector<std::uint8_t>(1024, 1), 5),
             got.capture());
    got.wait();
    CHECK(got.envelope.status == 503);
    CHECK(delivered.load() == 0);
    CHECK(heap.stats().used_bytes == 0);  // nothing leaked by the failed send
}

TEST_CASE("a single sender's messages arrive in send order") {
    BusStack bus("copy", BusStack::Options{BusMode::kCopy});
    std::mutex order_mutex;
    std::vector<std::uint64_t> seen;
    bus.attach("app.seq", [&](const Message& request, std::span<const std::uint8_t>) {
        {
            std::lock_guard lock(order_mutex);
            seen.push_back(request.request_id);
        }
        Message r;
        r.request_id = request.request_id;
        r.kind = MessageKind::kResponse;
        r.status = 200;
        return r;
    });

    constexpr int kCount = 200;
    std::vector<CapturedResponse> slots(kCount);
    for (int i = 0; i < kCount; ++i) {
        bus.send(request_to("app.seq", std::nullopt, 1000 + i), slots[i].capture());
    }
    for (auto& s : slots) s.wait();

    REQUIRE(seen.size() == kCount);
    for (int i = 0; i < kCount; ++i) CHECK(seen[i] == 1000 + i);
}

TEST_CASE("handlers for distinct addresses run concurrently") {
    BusStack bus("copy", BusStack::Options{BusMode::kCopy});
    std::mutex m;
    std::condition_variable cv;
    int inside = 0;
    bool both_seen = false;

    const auto meet = [&](const Message& request, std::span<const std::uint8_t>) {
        {
            std::unique_lock lock(m);
            ++inside;
            if (inside == 2) both_seen = true;
            cv.notify_all();
            // Wait (bounded) until the other handler is also inside.
            cv.wait_for(lock, 5s, [&] { return both_seen; });
        }
        Message r;
        r.request_id = request.request_id;
        r.kind = MessageKind::kResponse;
        r.status = 200;
        return r;
    };
    bus.attach("app.a", meet);
    bus.attach("app.b", meet);

    CapturedResponse ra, rb;
    bus.send(request_to("app.a"), ra.capture());
    bus.send(request_to("app.b"), rb.capture());
    ra.wait();
    rb.wait();
    CHECK(both_seen);
}

// ── bus: detach semantics ──

TEST_CASE("detach answering 503 rejects queued items but finishes the in-flight one") {
    ContiguousHeap heap(1 << 20, /*auto_merge=*/true);
    BusStack bus("heap_ref", BusStack::Options{BusMode::kHeapRef, &heap});

    std::promise<void> entered;
    std::promise<void> release;
    auto released = release.get_future().share();
    bool first = true;
    bus.attach("app.slow", [&](const Message& request, std::span<const std::uint8_t>) {
        if (first) {
            first = false;
            entered.set_value();
            released.wait();
        }
        Message r;
        r.request_id = request.request_id;
        r.kind = MessageKind::kResponse;
        r.status = 200;
        return r;
    });

    CapturedResponse inflight;
    bus.send(request_to("app.slow", as_bytes("busy"), 1), inflight.capture());
    entered.get_future().wait();  // handler is now stuck inside item 1

    std::vector<CapturedResponse> queued(3);
    for (int i = 0; i < 3; ++i) {
        bus.send(request_to("app.slow", as_bytes("q"), 10 + i), queued[i].capture());
    }

    std::thread detacher([&] { bus.detach("app.slow", BusStack::Drain::kAnswer503); });
    // The queued items are rejected as soon as detach claims the queue —
    // while item 1's handler is still stuck inside. Waiting for those
    // completions pins the ordering before the handler is released.
    for (int i = 0; i < 3; ++i) {
        queued[i].wait();
        CHECK(queued[i].envelope.status == 503);
        CHECK(queued[i].envelope.request_id == 10 + i);
    }
    release.set_value();
    detacher.join();

    inflight.wait();
    CHECK(inflight.envelope.status == 200);
    // Undelivered heap blocks were reclaimed.
    CHECK(eventually([&] { return heap.stats().used_bytes == 0; }));
    CHECK(!bus.has_handler("app.slow"));
}

TEST_CASE("detach finishing the queue delivers everything already queued") {
    BusStack bus("copy", BusStack::Options{BusMode::kCopy});
    bus.attach("app.drain", echo_handler());

    constexpr int kCount = 50;
    std::vector<CapturedResponse> slots(kCount);
    for (int i = 0; i < kCount; ++i) {
        bus.send(request_to("app.drain", as_bytes("d"), i), slots[i].capture());
    }
    bus.detach("app.drain", BusStack::Drain::kFinishQueue);
    for (int i = 0; i < kCount; ++i) {
        slots[i].wait();
        CHECK(slots[i].envelope.status == 200);
    }
    CHECK(!bus.has_handler("app.drain"));
}

TEST_CASE("detach then send yields 404 and re-attach restores delivery") {
    BusStack bus("copy", BusStack::Options{BusMode::kCopy});
    bus.attach("app.x", echo_handler());
    bus.detach("app.x", BusStack::Drain::kAnswer503);

    CapturedResponse miss;
    bus.send(request_to("app.x"), miss.capture());
    miss.wait();
    CHECK(miss.envelope.status == 404);

    bus.attach("app.x", echo_handler());
    CapturedResponse hit;
    bus.send(request_to("app.x"), hit.capture());
    hit.wait();
    CHECK(hit.envelope.status == 200);
}

TEST_CASE("attaching the same address twice is an error") {
    BusStack bus("copy", BusStack::Options{BusMode::kCopy});
    bus.attach("app.x", echo_handler());
    CHECK_THROWS_AS(bus.attach("app.x", echo_handler()), std::logic_error);
}

TEST_CASE("a throwing handler surfaces as a 500 response") {
    BusStack bus("copy", BusStack::Options{BusMode::kCopy});
    bus.attach("app.boom", [](const Message&, std::span<const std::uint8_t>)
                   -> Message { throw std::runtime_error("kaboom"); });
    CapturedResponse got;
    bus.send(request_to("app.boom"), got.capture());
    got.wait();
    CHECK(got.envelope.status == 500);
}

TEST_CASE("copy crash cap turns sustained traffic into a hard failure") {
    BusStack bus("copy", BusStack::Options{BusMode::kCopy, nullptr,
                                           /*copy_crash_cap_bytes=*/3000});
    bus.attach("app.sink", [](const Message& request, std::span<const std::uint8_t>) {
        Message r;
        r.request_id = request.request_id;
        r.kind = MessageKind::kResponse;
        r.status = 200;
        return r;
    });

    CapturedResponse first;
    bus.send(request_to("app.sink", std::vector<std::uint8_t>(1024, 0)),
             first.capture());
    first.wait();  // 2048 cumulative after delivery

    CHECK_THROWS_AS(
        bus.send(request_to("app.sink", std::vector<std::uint8_t>(1024, 0)),
                 [](Message, std::span<const std::uint8_t>) {}),
        TransportCrash);
}

// ── stack registry ──

TEST_CASE("selection follows the record's priority order") {
    ContiguousHeap heap(1 << 16);
    StackRegistry registry;
    registry.register_stack(
        std::make_shared<BusStack>("copy", BusStack::Options{BusMode::kCopy}));
    registry.register_stack(std::make_shared<BusStack>(
        "heap_ref", BusStack::Options{BusMode::kHeapRef, &heap}));

    FunctionRecord record{"a.b", {"heap_ref", "copy"}, Scope::kLocalApp};
    CHECK(registry.select_stack(record)->id() == "heap_ref");
    record.comm_methods = {"copy"};
    CHECK(registry.select_stack(record)->id() == "copy");
    record.comm_methods = {"unknown"};
    CHECK_THROWS_AS((void)registry.select_stack(record), std::invalid_argument);
    record.comm_methods = {"unknown", "copy"};
    CHECK(registry.select_stack(record)->id() == "copy");
}

TEST_CASE("new stacks can be registered and duplicates cannot") {
    StackRegistry registry;
    registry.register_stack(
        std::make_shared<BusStack>("loopback", BusStack::Options{BusMode::kCopy}));
    FunctionRecord record{"a.b", {"loopback"}, Scope::kLocalApp};
    CHECK(registry.select_stack(record)->id() == "loopback");
    CHECK_THROWS_AS(
        registry.register_stack(std::make_shared<BusStack>(
            "loopback", BusStack::Options{BusMode::kCopy})),
        std::logic_error);
}

// ── http stack ──

namespace {

struct TestServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    TestServer() {
        server.Post("/echo", [](const httplib::Request& req, httplib::Response& res) {
            res.set_content(req.body, "application/octet-stream");
        });
        server.Post("/fail", [](const httplib::Request&, httplib::Response& res) {
            res.status = 500;
            res.set_content("server burst", "text/plain");
        });
        server.Get("/query", [](const httplib::Request& req, httplib::Response& res) {
            res.set_content(req.get_param_value("a"), "text/plain");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~TestServer() {
        server.stop();
        thread.join();
    }
    std::string url(const std::string& target) const {
        return "http://127.0.0.1:" + std::to_string(port) + target;
    }
};

}  // namespace

TEST_CASE("http exchange maps the response back onto the request id") {
    TestServer remote;
    HttpStack http;

    CapturedResponse got;
    http.send(request_to("com.example.myapp.process", as_bytes("frame-bytes"), 31),
              remote.url("/echo"), got.capture());
    got.wait();
    CHECK(got.envelope.status == 200);
    CHECK(got.envelope.request_id == 31);
    CHECK(got.body == as_bytes("frame-bytes"));
    CHECK(http.exchanges() == 1);
}

TEST_CASE("remote 5xx passes through as a status, not a transport error") {
    TestServer remote;
    HttpStack http;
    CapturedResponse got;
    http.send(request_to("a.b", as_bytes("x")), remote.url("/fail"), got.capture());
    got.wait();
    CHECK(got.envelope.status == 500);
    CHECK(got.body == as_bytes("server burst"));
}

TEST_CASE("query strings survive the exchange") {
    TestServer remote;
    HttpStack http;
    Message req = request_to("a.b");
    req.method = "GET";
    CapturedResponse got;
    http.send(req, remote.url("/query?a=hello"), got.capture());
    got.wait();
    CHECK(got.envelope.status == 200);
    CHECK(got.body == as_bytes("hello"));
}

TEST_CASE("an unreachable host surfaces as 504 within the timeout budget") {
    HttpStack http(HttpStack::Options{100ms, 500ms, 1});
    const auto begin = std::chrono::steady_clock::now();
    CapturedResponse got;
    // Port 9 (discard) on localhost is not listening.
    http.send(request_to("a.b", as_bytes("x"), 13), "http://127.0.0.1:9/echo",
              got.capture());
    got.wait();
    const auto elapsed = std::chrono::steady_clock::now() - begin;
    CHECK(got.envelope.status == 504);
    CHECK(got.envelope.request_id == 13);
    CHECK(elapsed < 10s);
}

TEST_CASE("heap references must never reach the network boundary") {
    HttpStack http;
    Message req = request_to("a.b");
    req.payload_ref = PayloadRef{0, 16};
    CHECK_THROWS_AS(
        http.send(req, "http://127.0.0.1:9/x",
                  [](Message, std::span<const std::uint8_t>) {}),
        std::logic_error);
}

TEST_CASE("concurrent exchanges all complete") {
    TestServer remote;
    HttpStack http(HttpStack::Options{2000ms, 10000ms, 4});
    constexpr int kCount = 32;
    std::vector<CapturedResponse> slots(kCount);
    for (int i = 0; i < kCount; ++i) {
        http.send(request_to("a.b", as_bytes("m" + std::to_string(i)), 100 + i),
                  remote.url("/echo"), slots[i].capture());
    }
    for (int i = 0; i < kCount; ++i) {
        slots[i].wait();
        CHECK(slots[i].envelope.status == 200);
        CHECK(slots[i].body == as_bytes("m" + std::to_string(i)));
    }
}
