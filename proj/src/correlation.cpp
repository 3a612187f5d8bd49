#include "offkit/correlation.hpp"

#include <utility>
#include <vector>

namespace offkit {

std::future<Message> CorrelationTable::add(
    std::uint64_t request_id, std::chrono::steady_clock::time_point deadline) {
    std::lock_guard lock(mutex_);
    Slot slot;
    slot.deadline = deadline;
    auto future = slot.promise.get_future();
    pending_.emplace(request_id, std::move(slot));
    return future;
}

bool CorrelationTable::complete(Message response) {
    std::promise<Message> winner;
    {
        std::lock_guard lock(mutex_);
        const auto it = pending_.find(response.request_id);
        if (it == pending_.end()) {
            ++orphans_;
            return false;
        }
        winner = std::move(it->second.promise);
        pending_.erase(it);
    }
    // Fulfil outside the lock; waiters may run arbitrary code on wake-up.
    winner.set_value(std::move(response));
    return true;
}

bool CorrelationTable::expire(std::uint64_t request_id) {
    return resolve(request_id, kTimeoutStatus);
}

bool CorrelationTable::cancel(std::uint64_t request_id, int status) {
    return resolve(request_id, status);
}

bool CorrelationTable::resolve(std::uint64_t request_id, int status) {
    std::promise<Message> winner;
    {
        std::lock_guard lock(mutex_);
        const auto it = pending_.find(request_id);
        if (it == pending_.end()) {
            return false;  // a real response won; not an orphan, just a lost race
        }
        winner = std::move(it->second.promise);
        pending_.erase(it);
    }
    Message synthesized;
    synthesized.request_id = request_id;
    synthesized.kind = MessageKind::kResponse;
    synthesized.status = status;
    winner.set_value(std::move(synthesized));
    return true;
}

std::size_t CorrelationTable::expire_due(
    std::chrono::steady_clock::time_point now) {
    std::vector<std::pair<std::uint64_t, std::promise<Message>>> due;
    {
        std::lock_guard lock(mutex_);
        for (auto it = pending_.begin(); it != pending_.end();) {
            if (it->second.deadline <= now) {
                due.emplace_back(it->first, std::move(it->second.promise));
                it = pending_.erase(it);
            } else {
                ++it;
            }
        }
    }
    for (auto& [id, promise] : due) {
        Message synthesized;
        synthesized.request_id = id;
        synthesized.kind = MessageKind::kResponse;
        synthesized.status = kTimeoutStatus;
        promise.set_value(std::move(synthesized));
    }
    return due.size();
}

std::size_t CorrelationTable::cancel_all(int status) {
    std::unordered_map<std::uint64_t, Slot> drained;
    {
        std::lock_guard lock(mutex_);
        drained.swap(pending_);
    }
    for (auto& [id, slot] : drained) {
        Message synthesized;
        synthesized.request_id = id;
        synthesized.kind = MessageKind::kResponse;
        synthesized.status = status;
        slot.promise.set_value(std::move(synthesized));
    }
    return drained.size();
}

std::size_t CorrelationTable::pending_count() const {
    std::lock_guard lock(mutex_);
    return pending_.size();
}

std::uint64_t CorrelationTable::orphan_count() const {
    std::lock_guard lock(mutex_);
    return orphans_;
}

}  // namespace offkit
