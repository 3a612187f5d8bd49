#include "offkit/runtime.hpp"

#include <exception>
#include <stdexcept>
#include <utility>

namespace offkit {

namespace {

Message synthesize(std::uint64_t request_id, int status) {
    Message response;
    response.request_id = request_id;
    response.kind = MessageKind::kResponse;
    response.status = status;
    return response;
}

}  // namespace

// ── construction / teardown ──

Runtime::Runtime(RuntimeOptions options, std::vector<PlacementRule> rules)
    : options_(std::move(options)),
      heap_(options_.heap_capacity, options_.heap_auto_merge),
      policy_(std::move(rules)),
      http_(options_.http) {
    copy_stack_ = std::make_shared<BusStack>(
        kCopyStackId,
        BusStack::Options{BusMode::kCopy, nullptr, options_.copy_crash_cap_bytes});
    heap_ref_stack_ = std::make_shared<BusStack>(
        kHeapRefStackId, BusStack::Options{BusMode::kHeapRef, &heap_, 0});
    registry_.register_stack(copy_stack_);
    registry_.register_stack(heap_ref_stack_);

    policy_.set_listener([this](const std::vector<TransitionAction>& actions) {
        apply_transitions(actions);
    });

    dispatcher_ = std::thread([this] { run_dispatcher(); });
}

Runtime::~Runtime() {
    {
        std::lock_guard lock(queue_mutex_);
        stopping_ = true;
    }
    queue_cv_.notify_all();
    if (dispatcher_.joinable()) dispatcher_.join();

    // Stop every running function; their queued items answer 503.
    std::vector<std::pair<std::string, std::string>> running;
    {
        std::lock_guard lock(functions_mutex_);
        for (auto& [address, entry] : functions_) {
            if (entry.running) {
                running.emplace_back(address, entry.attached_stack);
                entry.running = false;
            }
        }
    }
    for (const auto& [address, stack_id] : running) {
        try {
            catalogue_.deregister(address);
        } catch (const CatalogueError&) {
        }
        if (auto stack = registry_.find(stack_id)) {
            stack->detach(address, BusStack::Drain::kAnswer503);
        }
    }

    // Outcomes that will never arrive (e.g. exchanges cut off mid-flight)
    // resolve as cancelled rather than leaving waiters stuck.
    correlation_.cancel_all();
}

// ── function lifecycle ──

void Runtime::start_locked(const std::string& address, FunctionEntry& entry) {
    const FunctionRecord record{address, entry.comm_methods, entry.scope};
    auto stack = registry_.select_stack(record);  // validates comm methods
    catalogue_.register_function(record);
    try {
        stack->attach(address, entry.handler);
    } catch (...) {
        catalogue_.deregister(address);
        throw;
    }
    entry.attached_stack = stack->id();
    entry.running = true;
}

void Runtime::start_function(const std::string& address, Handler handler,
                             std::vector<std::string> comm_methods, Scope scope) {
    if (!handler) throw std::invalid_argument("start_function: null handler");
    if (comm_methods.empty()) comm_methods = {options_.default_comm_method};

    std::lock_guard lock(functions_mutex_);
    const bool existed = functions_.contains(address);
    auto& entry = functions_[address];
    if (entry.running) {
        throw std::invalid_argument("function already running: " + address);
    }
    entry.handler = std::move(handler);
    entry.comm_methods = std::move(comm_methods);
    entry.scope = scope;
    try {
        start_locked(address, entry);
    } catch (...) {
        if (!existed) functions_.erase(address);
        throw;
    }
}

void Runtime::stop_function(const std::string& address) {
    std::string stack_id;
    {
        std::lock_guard lock(functions_mutex_);
        const auto it = functions_.find(address);
        if (it == functions_.end() || !it->second.running) {
            throw std::invalid_argument("function not running: " + address);
        }
        it->second.running = false;
        stack_id = it->second.attached_stack;
    }
    catalogue_.deregister(address);
    if (auto stack = registry_.find(stack_id)) {
        stack->detach(address, BusStack::Drain::kAnswer503);
    }
}

bool Runtime::function_running(const std::string& address) const {
    std::lock_guard lock(functions_mutex_);
    const auto it = functions_.find(address);
    return it != functions_.end() && it->second.running;
}

// ── request path ──

std::future<Message> Runtime::submit(Message request,
                                     std::optional<std::chrono::milliseconds> timeout) {
    if (request.kind != MessageKind::kRequest) {
        throw std::invalid_argument("submit: message is not a request");
    }
    if (request.payload_ref) {
        throw std::invalid_argument(
            "submit: requests carry inline payloads; heap references are "
            "transport-internal");
    }

    const auto id = request.request_id;
    const auto now = std::chrono::steady_clock::now();
    auto future = correlation_.add(id, now + timeout.value_or(options_.request_timeout));

    // Count before the item becomes visible to the dispatcher: a completion
    // may race this function's tail, and its decrement must never observe a
    // gauge the increment hasn't reached yet.
    {
        std::lock_guard lock(stats_mutex_);
        ++counters_.submitted;
        ++counters_.inflight;
        counters_.peak_inflight = std::max(counters_.peak_inflight, counters_.inflight);
    }

    bool rejected = false;
    {
        std::lock_guard lock(queue_mutex_);
        if (stopping_) {
            rejected = true;
        } else {
            enqueue_order_.push_back(id);
            queue_.push_back(QueueItem{std::move(request), now});
        }
    }
    if (rejected) {
        // cancel() resolves the future; the waiting side never ran, so the
        // books are settled here: one submitted, one failed outcome.
        if (correlation_.cancel(id, kStatusExhausted)) {
            std::lock_guard lock(stats_mutex_);
            ++counters_.completed;
            ++counters_.failed;
            if (counters_.inflight > 0) --counters_.inflight;
        }
        return future;
    }
    queue_cv_.notify_one();
    return future;
}

Message Runtime::request(const std::string& method, const std::string& address,
                         std::optional<std::vector<std::uint8_t>> body,
                         std::optional<std::chrono::milliseconds> timeout) {
    auto message = new_request(ids_, method, address, std::move(body));
    const auto id = message.request_id;
    const auto wait = timeout.value_or(options_.request_timeout);
    auto future = submit(std::move(message), wait);
    if (future.wait_for(wait) != std::future_status::ready) {
        // Either this 504 wins or the real response beat us to it; both
        // leave the future ready exactly once.
        if (correlation_.expire(id)) {
            std::lock_guard lock(stats_mutex_);
            ++counters_.completed;
            ++counters_.failed;
            if (counters_.inflight > 0) --counters_.inflight;
        }
    }
    return future.get();
}

// ── dispatcher ──

void Runtime::run_dispatcher() {
    for (;;) {
        QueueItem item;
        {
            std::unique_lock lock(queue_mutex_);
            queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
            if (queue_.empty()) break;  // stopping and fully drained
            item = std::move(queue_.front());
            queue_.pop_front();
            dispatch_order_.push_back(item.request.request_id);
        }
        route(std::move(item));
    }
}

void Runtime::route(QueueItem item) {
    const std::string address = item.request.url;
    const std::uint64_t id = item.request.request_id;
    Completion done = make_completion(item.enqueued_at);

    // The placement read and a local enqueue happen under one lock, so an
    // offload's drain always sees every request routed before the flip.
    {
        std::unique_lock lock(route_mutex_);
        if (routing_.placement_for(address) == Placement::kLocal) {
            std::shared_ptr<BusStack> stack;
            if (const auto record = catalogue_.lookup(address)) {
                try {
                    stack = registry_.select_stack(*record);
                } catch (const std::invalid_argument&) {
                }
            }
            if (stack) {
                bool crashed = false;
                try {
                    stack->send(std::move(item.request), std::move(done));
                } catch (const TransportCrash&) {
                    crashed = true;
                }
                lock.unlock();
                if (crashed) {
                    const bool resolved = correlation_.cancel(id, kStatusExhausted);
                    std::lock_guard stats(stats_mutex_);
                    crashed_ = true;
                    if (resolved) {
                        ++counters_.completed;
                        ++counters_.failed;
                        if (counters_.inflight > 0) --counters_.inflight;
                    }
                } else {
                    std::lock_guard stats(stats_mutex_);
                    ++counters_.dispatched_local;
                }
                return;
            }
            if (!options_.fallback_remote) {
                lock.unlock();
                done(synthesize(id, kStatusNoHandler), {});
                return;
            }
            // fall through: retry remotely
        }
    }

    http_.send(std::move(item.request), resolve_remote_url(address), std::move(done));
    std::lock_guard stats(stats_mutex_);
    ++counters_.dispatched_remote;
}

Completion Runtime::make_completion(std::chrono::steady_clock::time_point enqueued_at) {
    return [this, enqueued_at](Message response, std::span<const std::uint8_t> body) {
        if (!body.empty()) {
            response.payload.emplace(body.begin(), body.end());
        }
        response.payload_ref.reset();
        const int status = response.status;
        const auto elapsed = std::chrono::duration<double, std::milli>(
                                 std::chrono::steady_clock::now() - enqueued_at)
                                 .count();
        const bool delivered = correlation_.complete(std::move(response));
        std::lock_guard lock(stats_mutex_);
        latency_ms_.push_back(elapsed);
        if (delivered) {
            ++counters_.completed;
            if (status >= 400) ++counters_.failed;
            if (counters_.inflight > 0) --counters_.inflight;
        }
    };
}

std::string Runtime::resolve_remote_url(const std::string& address) const {
    const auto it = options_.remote_map.find(address);
    if (it != options_.remote_map.end()) return it->second;
    return to_remote_url(address, options_.remote_scheme);
}

// ── placement & transitions ──

void Runtime::ingest_context(const ContextSnapshot& snapshot) {
    policy_.ingest(snapshot);  // the listener applies any transitions inline
}

Placement Runtime::placement_for(const std::string& address) const {
    std::lock_guard lock(route_mutex_);
    return routing_.placement_for(address);
}

void Runtime::apply_transitions(const std::vector<TransitionAction>& actions) {
    for (const auto& action : actions) {
        {
            std::lock_guard lock(stats_mutex_);
            transition_log_.push_back(action);
        }
        const auto& address = action.function_address;

        if (action.kind == TransitionKind::kOffload) {
            // Flip first: new requests leave immediately, then the local
            // instance drains whatever it already accepted.
            {
                std::lock_guard lock(route_mutex_);
                routing_.entries[address] = Placement::kRemote;
            }
            std::string stack_id;
            bool was_running = false;
            {
                std::lock_guard lock(functions_mutex_);
                const auto it = functions_.find(address);
                if (it != functions_.end() && it->second.running) {
                    was_running = true;
                    it->second.running = false;
                    stack_id = it->second.attached_stack;
                }
            }
            if (was_running) {
                try {
                    catalogue_.deregister(address);
                } catch (const CatalogueError&) {
                }
                if (auto stack = registry_.find(stack_id)) {
                    stack->detach(address, BusStack::Drain::kFinishQueue);
                }
            } else {
                std::lock_guard lock(stats_mutex_);
                skipped_.push_back(action);
            }
        } else {
            // Re-localize: the handler must be live before traffic returns.
            bool live = false;
            {
                std::lock_guard lock(functions_mutex_);
                const auto it = functions_.find(address);
                if (it != functions_.end()) {
                    if (it->second.running) {
                        live = true;
                    } else {
                        try {
                            start_locked(address, it->second);
                            live = true;
                        } catch (...) {
                        }
                    }
                }
            }
            if (!live) {
                std::lock_guard lock(stats_mutex_);
                skipped_.push_back(action);
            }
            {
                std::lock_guard lock(route_mutex_);
                routing_.entries[address] = Placement::kLocal;
            }
        }
    }
}

std::vector<TransitionAction> Runtime::transition_log() const {
    std::lock_guard lock(stats_mutex_);
    return transition_log_;
}

std::vector<TransitionAction> Runtime::skipped_transitions() const {
    std::lock_guard lock(stats_mutex_);
    return skipped_;
}

// ── introspection ──

BusCounters Runtime::bus_counters() const {
    return bus_counters(options_.default_comm_method);
}

BusCounters Runtime::bus_counters(const std::string& stack_id) const {
    const auto stack = registry_.find(stack_id);
    if (!stack) throw std::invalid_argument("unknown stack: " + stack_id);
    return stack->counters();
}

RuntimeCounters Runtime::counters() const {
    std::lock_guard lock(stats_mutex_);
    return counters_;
}

std::vector<std::uint64_t> Runtime::enqueue_order() const {
    std::lock_guard lock(queue_mutex_);
    return enqueue_order_;
}

std::vector<std::uint64_t> Runtime::dispatch_order() const {
    std::lock_guard lock(queue_mutex_);
    return dispatch_order_;
}

std::vector<double> Runtime::latency_samples_ms() const {
    std::lock_guard lock(stats_mutex_);
    return latency_ms_;
}

std::size_t Runtime::queue_depth() const {
    std::lock_guard lock(queue_mutex_);
    return queue_.size();
}

bool Runtime::transport_crashed() const {
    std::lock_guard lock(stats_mutex_);
    return crashed_;
}

}  // namespace offkit
