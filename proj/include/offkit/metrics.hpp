#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "offkit/runtime.hpp"

namespace offkit {

// One sampled row. tick_ms and the heap/resident columns are gauges; the
// dispatched/bytes_copied columns are cumulative counters and never decrease
// from row to row. Latency quantiles are over all samples so far.
struct MetricsRow {
    std::int64_t tick_ms = 0;
    std::size_t heap_used_bytes = 0;
    std::size_t heap_free_bytes = 0;
    std::size_t heap_block_count = 0;
    std::uint64_t resident_payload_bytes = 0;
    std::uint64_t dispatched_local = 0;
    std::uint64_t dispatched_remote = 0;
    std::uint64_t bytes_copied = 0;
    double latency_p50_ms = 0.0;
    double latency_p95_ms = 0.0;
    double latency_max_ms = 0.0;
};

// Samples a runtime either on demand or on a fixed wall-clock tick.
class MetricsCollector {
public:
    static constexpr const char* kCsvHeader =
        "tick_ms,heap_used_bytes,heap_free_bytes,heap_block_count,"
        "resident_payload_bytes,dispatched_local,dispatched_remote,bytes_copied,"
        "latency_p50_ms,latency_p95_ms,latency_max_ms";

    // Reads heap and engine state plus the bus counters of `stack_id`.
    MetricsCollector(Runtime& runtime, std::string stack_id);
    ~MetricsCollector();

    MetricsCollector(const MetricsCollector&) = delete;
    MetricsCollector& operator=(const MetricsCollector&) = delete;

    MetricsRow sample();

    void start(std::chrono::milliseconds period);
    void stop();  // idempotent; takes one final sample

    std::vector<MetricsRow> rows() const;
    void write_csv(std::ostream& out) const;

private:
    Runtime& runtime_;
    const std::string stack_id_;
    const std::chrono::steady_clock::time_point started_;

    mutable std::mutex mutex_;
    std::vector<MetricsRow> rows_;

    std::mutex ticker_mutex_;
    std::condition_variable ticker_cv_;
    bool ticking_ = false;
    std::thread ticker_;
};

// Nearest-rank quantile of an unsorted sample set; q in [0, 1]. Empty input
// yields 0.
double quantile(std::vector<double> samples, double q);

}  // namespace offkit
