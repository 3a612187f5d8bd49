#include "offkit/transport.hpp"

#include <algorithm>
#include <utility>

#include <httplib.h>

namespace offkit {

std::string to_string(BusMode mode) {
    return mode == BusMode::kCopy ? "copy" : "heap_ref";
}

namespace {

Message synthesized_response(std::uint64_t request_id, int status) {
    Message m;
    m.request_id = request_id;
    m.kind = MessageKind::kResponse;
    m.status = status;
    return m;
}

// Strips the inline payload off an envelope before handing it to a handler
// or completion: consumers get bytes through the borrowed view only, so both
// bus modes present the same shape.
Message envelope_of(const Message& message) {
    Message env = message;
    env.payload.reset();
    return env;
}

}  // namespace

// ── BusStack ──

BusStack::BusStack(std::string id, Options options)
    : id_(std::move(id)), options_(options) {
    if (options_.mode == BusMode::kHeapRef && options_.heap == nullptr) {
        throw std::logic_error("heap_ref bus needs a heap");
    }
}

BusStack::~BusStack() {
    std::vector<std::string> addresses;
    {
        std::lock_guard lock(mutex_);
        for (const auto& [address, _] : inboxes_) addresses.push_back(address);
    }
    for (const auto& address : addresses) detach(address, Drain::kAnswer503);
}

void BusStack::attach(const std::string& address, Handler handler) {
    std::lock_guard lock(mutex_);
    if (inboxes_.contains(address)) {
        throw std::logic_error("handler already attached: " + address);
    }
    auto inbox = std::make_shared<Inbox>();
    inbox->handler = std::move(handler);
    inbox->worker = std::thread([this, inbox] { run_worker(inbox); });
    inboxes_.emplace(address, std::move(inbox));
}

void BusStack::detach(const std::string& address, Drain drain) {
    std::shared_ptr<Inbox> inbox;
    {
        std::lock_guard lock(mutex_);
        const auto it = inboxes_.find(address);
        if (it == inboxes_.end()) return;
        inbox = it->second;
        inboxes_.erase(it);  // new sends see no handler from here on
    }

    std::deque<Pending> rejected;
    {
        std::lock_guard lock(inbox->mutex);
        inbox->closing = true;
        if (drain == Drain::kAnswer503) rejected.swap(inbox->queue);
        inbox->cv.notify_all();
    }
    for (Pending& item : rejected) {
        if (options_.mode == BusMode::kCopy) {
            sub_resident(item.message.body_length());
        } else if (item.message.payload_ref) {
            options_.heap->free(item.message.payload_ref->reference);
        }
        reply(synthesized_response(item.message.request_id, kStatusExhausted),
              item.done);
    }
    if (inbox->worker.joinable()) inbox->worker.join();
}

bool BusStack::has_handler(const std::string& address) const {
    std::lock_guard lock(mutex_);
    return inboxes_.contains(address);
}

void BusStack::send(Message request, Completion done) {
    if (request.payload_ref) {
        throw std::logic_error("bus send expects inline payloads");
    }
    if (request.payload && request.payload->empty()) {
        request.payload.reset();  // empty bodies normalize to absent
    }

    std::shared_ptr<Inbox> inbox;
    {
        std::lock_guard lock(mutex_);
        const auto it = inboxes_.find(request.url);
        if (it != inboxes_.end()) inbox = it->second;
    }
    if (!inbox) {
        reply(synthesized_response(request.request_id, kStatusNoHandler), done);
        return;
    }

    const std::uint64_t n = request.body_length();
    Pending item;
    item.done = std::move(done);

    if (options_.mode == BusMode::kCopy) {
        if (options_.copy_crash_cap_bytes > 0) {
            std::lock_guard lock(mutex_);
            if (counters_.bytes_copied + n > options_.copy_crash_cap_bytes) {
                throw TransportCrash(
                    "copy transport exceeded its cumulative byte cap");
            }
        }
        item.record = encode_bus(request);  // marshal: payload enters the record
        item.message = envelope_of(request);
        add_copied(n);
        add_resident(n);
    } else {
        if (n > 0) {
            const auto ref = options_.heap->malloc(n);
            if (!ref) {
                reply(synthesized_response(request.request_id, kStatusExhausted),
                      item.done);
                return;
            }
            options_.heap->write(*ref, *request.payload);  // the single store
            add_copied(n);
            request.payload_ref = PayloadRef{*ref, n};
            request.payload.reset();
        }
        item.message = std::move(request);
    }

    {
        std::lock_guard lock(inbox->mutex);
        if (inbox->closing) {
            // Lost the race with detach: treat like the queue rejection path.
            if (options_.mode == BusMode::kCopy) {
                sub_resident(n);
            } else if (item.message.payload_ref) {
                options_.heap->free(item.message.payload_ref->reference);
            }
            reply(synthesized_response(item.message.request_id, kStatusExhausted),
                  item.done);
            return;
        }
        inbox->queue.push_back(std::move(item));
        inbox->cv.notify_one();
    }
}

void BusStack::run_worker(const std::shared_ptr<Inbox>& inbox) {
    for (;;) {
        Pending item;
        {
            std::unique_lock lock(inbox->mutex);
            inbox->cv.wait(lock,
                           [&] { return inbox->closing || !inbox->queue.empty(); });
            if (inbox->queue.empty()) return;  // closing and drained
            item = std::move(inbox->queue.front());
            inbox->queue.pop_front();
        }
        deliver(*inbox, std::move(item));
    }
}

void BusStack::deliver(Inbox& inbox, Pending item) {
    Message request;
    std::span<const std::uint8_t> body;
    std::optional<PayloadRef> block;

    if (options_.mode == BusMode::kCopy) {
        request = decode_bus(item.record);  // unmarshal: payload copied back out
        const auto n = request.body_length();
        add_copied(n);
        add_resident(n);  // the delivery buffer now holds the bytes too
        sub_resident(n);  // ... and the inbox record is released
        if (request.payload) body = *request.payload;
    } else {
        request = std::move(item.message);
        block = request.payload_ref;
        if (block) body = options_.heap->view(block->reference, block->length);
    }

    {
        std::lock_guard lock(mutex_);
        ++counters_.deliveries;
    }

    Message response;
    try {
        response = inbox.handler(envelope_of(request), body);
    } catch (const std::exception&) {
        response = synthesized_response(request.request_id, 500);
    }
    response.request_id = request.request_id;
    response.kind = MessageKind::kResponse;

    // Release the request body before the response takes space: per frame the
    // transport holds at most one body at a time.
    if (options_.mode == BusMode::kCopy) {
        sub_resident(request.body_length());
        request.payload.reset();
    } else if (block) {
        options_.heap->free(block->reference);
    }

    reply(std::move(response), item.done);
}

void BusStack::reply(Message response, const Completion& done) {
    const std::uint64_t m =
        response.payload && !response.payload->empty() ? response.payload->size() : 0;

    if (m == 0 || options_.mode == BusMode::kCopy) {
        std::span<const std::uint8_t> body;
        Message delivered;
        std::vector<std::uint8_t> record;
        if (m > 0) {
            record = encode_bus(response);  // marshal
            add_copied(m);
            add_resident(m);
            delivered = decode_bus(record);  // unmarshal
            add_copied(m);
            add_resident(m);
            sub_resident(m);  // record released
            body = *delivered.payload;
        } else {
            delivered = std::move(response);
        }
        done(envelope_of(delivered), body);
        if (m > 0) sub_resident(m);  // delivery buffer released
    } else {
        const auto ref = options_.heap->malloc(m);
        if (!ref) {
            done(synthesized_response(response.request_id, kStatusExhausted), {});
        } else {
            options_.heap->write(*ref, *response.payload);  // the single store
            add_copied(m);
            Message env = envelope_of(response);
            env.payload_ref = PayloadRef{*ref, m};
            done(std::move(env), options_.heap->view(*ref, m));
            options_.heap->free(*ref);
        }
    }
    std::lock_guard lock(mutex_);
    ++counters_.responses;
}

BusCounters BusStack::counters() const {
    std::lock_guard lock(mutex_);
    return counters_;
}

void BusStack::add_copied(std::uint64_t n) {
    std::lock_guard lock(mutex_);
    counters_.bytes_copied += n;
}

void BusStack::add_resident(std::uint64_t n) {
    std::lock_guard lock(mutex_);
    counters_.resident_payload_bytes += n;
    counters_.peak_resident_payload_bytes =
        std::max(counters_.peak_resident_payload_bytes,
                 counters_.resident_payload_bytes);
}

void BusStack::sub_resident(std::uint64_t n) {
    std::lock_guard lock(mutex_);
    counters_.resident_payload_bytes -= n;
}

// ── StackRegistry ──

void StackRegistry::register_stack(std::shared_ptr<BusStack> stack) {
    std::lock_guard lock(mutex_);
    const auto [_, inserted] = stacks_.emplace(stack->id(), stack);
    if (!inserted) {
        throw std::logic_error("stack id already registered: " + stack->id());
    }
}

std::shared_ptr<BusStack> StackRegistry::select_stack(
    const FunctionRecord& record) const {
    std::lock_guard lock(mutex_);
    for (const auto& method : record.comm_methods) {
        const auto it = stacks_.find(method);
        if (it != stacks_.end()) return it->second;
    }
    throw std::invalid_argument("no registered stack matches comm methods of " +
                                record.address);
}

std::shared_ptr<BusStack> StackRegistry::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = stacks_.find(id);
    return it == stacks_.end() ? nullptr : it->second;
}

// ── HttpStack ──

namespace {

// scheme://host[:port][/path?query] → {scheme://host[:port], /path?query}
std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw std::invalid_argument("url needs a scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpStack::HttpStack() : HttpStack(Options{}) {}

HttpStack::HttpStack(Options options) : options_(options) {
    for (int i = 0; i < options_.workers; ++i) {
        workers_.emplace_back([this] { run_worker(); });
    }
}

HttpStack::~HttpStack() {
    {
        std::lock_guard lock(mutex_);
        stopping_ = true;
        cv_.notify_all();
    }
    for (auto& w : workers_) w.join();
}

void HttpStack::send(Message request, const std::string& url, Completion done) {
    if (request.payload_ref) {
        throw std::logic_error(
            "heap reference crossed the network boundary: " + request.url);
    }
    std::lock_guard lock(mutex_);
    if (stopping_) return;
    jobs_.push_back(Job{std::move(request), url, std::move(done)});
    cv_.notify_one();
}

void HttpStack::run_worker() {
    for (;;) {
        Job job;
        {
            std::unique_lock lock(mutex_);
            cv_.wait(lock, [&] { return stopping_ || !jobs_.empty(); });
            if (jobs_.empty()) return;
            job = std::move(jobs_.front());
            jobs_.pop_front();
        }

        Message response;
        response.request_id = job.request.request_id;
        response.kind = MessageKind::kResponse;
        std::vector<std::uint8_t> body;

        try {
            const auto [base, target] = split_url(job.url);
            httplib::Client client(base);
            const auto connect = options_.connect_timeout;
            const auto exchange = options_.exchange_timeout;
            client.set_connection_timeout(connect.count() / 1000,
                                          (connect.count() % 1000) * 1000);
            client.set_read_timeout(exchange.count() / 1000,
                                    (exchange.count() % 1000) * 1000);
            client.set_write_timeout(exchange.count() / 1000,
                                     (exchange.count() % 1000) * 1000);

            httplib::Request http_request;
            http_request.method = job.request.method;
            http_request.path = target;
            http_request.set_header("Accept", "*/*");
            if (job.request.payload) {
                http_request.body.assign(job.request.payload->begin(),
                                         job.request.payload->end());
                http_request.set_header("Content-Type", "application/octet-stream");
            }

            const auto result = client.send(http_request);
            if (result) {
                response.status = result->status;
                body.assign(result->body.begin(), result->body.end());
            } else {
                response.status = kStatusUnreachable;
            }
        } catch (const std::exception&) {
            response.status = kStatusUnreachable;
        }

        exchanges_.fetch_add(1);
        job.done(std::move(response), body);
    }
}

}  // namespace offkit
