#pragma once

#include <chrono>
#include <cstdint>
#include <future>
#include <mutex>
#include <unordered_map>

#include "offkit/message.hpp"

namespace offkit {

// Matches responses back to waiting requesters by request_id.
//
// Every pending entry resolves exactly once — with the real response, a
// synthesized timeout (status 504), or a cancellation (status 499). Anything
// arriving for an id that is no longer pending is dropped and counted as an
// orphan; orphans are metrics, not faults.
class CorrelationTable {
public:
    static constexpr int kTimeoutStatus = 504;
    static constexpr int kCancelStatus = 499;

    // Registers a pending request and returns the future its outcome will
    // arrive on. The deadline is bookkeeping for expire_due(); waiters that
    // drive their own timeout call expire() directly.
    std::future<Message> add(std::uint64_t request_id,
                             std::chrono::steady_clock::time_point deadline);

    // Delivers a response to its waiter. Returns false (and counts an
    // orphan) when the id is not pending.
    bool complete(Message response);

    // Resolves a still-pending entry with a synthesized 504 response.
    // Returns false when a real response already won the race.
    bool expire(std::uint64_t request_id);

    // Resolves a still-pending entry with the given cancellation status.
    bool cancel(std::uint64_t request_id, int status = kCancelStatus);

    // Expires every entry whose deadline is at or before `now`; returns how
    // many were expired.
    std::size_t expire_due(std::chrono::steady_clock::time_point now);

    // Resolves every still-pending entry with the given status. Shutdown
    // hygiene: no waiter is ever left holding an unresolvable future.
    std::size_t cancel_all(int status = kCancelStatus);

    std::size_t pending_count() const;
    std::uint64_t orphan_count() const;

private:
    struct Slot {
        std::promise<Message> promise;
        std::chrono::steady_clock::time_point deadline;
    };

    bool resolve(std::uint64_t request_id, int status);

    mutable std::mutex mutex_;
    std::unordered_map<std::uint64_t, Slot> pending_;
    std::uint64_t orphans_ = 0;
};

}  // namespace offkit
