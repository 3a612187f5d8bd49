#include "offkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <utility>

namespace offkit {

double quantile(std::vector<double> samples, double q) {
    if (samples.empty()) return 0.0;
    q = std::clamp(q, 0.0, 1.0);
    const auto rank = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(samples.size())));
    const auto index = rank == 0 ? 0 : rank - 1;
    std::nth_element(samples.begin(), samples.begin() + index, samples.end());
    return samples[index];
}

MetricsCollector::MetricsCollector(Runtime& runtime, std::string stack_id)
    : runtime_(runtime),
      stack_id_(std::move(stack_id)),
      started_(std::chrono::steady_clock::now()) {}

MetricsCollector::~MetricsCollector() { stop(); }

MetricsRow MetricsCollector::sample() {
    MetricsRow row;
    row.tick_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - started_)
                      .count();

    const auto heap = runtime_.heap().stats();
    row.heap_used_bytes = heap.used_bytes;
    row.heap_free_bytes = heap.free_bytes_in_blocks;
    row.heap_block_count = heap.block_count;

    const auto bus = runtime_.bus_counters(stack_id_);
    row.resident_payload_bytes = bus.resident_payload_bytes;
    row.bytes_copied = bus.bytes_copied;

    const auto engine = runtime_.counters();
    row.dispatched_local = engine.dispatched_local;
    row.dispatched_remote = engine.dispatched_remote;

    const auto latencies = runtime_.latency_samples_ms();
    row.latency_p50_ms = quantile(latencies, 0.50);
    row.latency_p95_ms = quantile(latencies, 0.95);
    row.latency_max_ms = latencies.empty()
                             ? 0.0
                             : *std::max_element(latencies.begin(), latencies.end());

    std::lock_guard lock(mutex_);
    rows_.push_back(row);
    return row;
}

void MetricsCollector::start(std::chrono::milliseconds period) {
    std::lock_guard lock(ticker_mutex_);
    if (ticking_) return;
    ticking_ = true;
    ticker_ = std::thread([this, period] {
        std::unique_lock lock(ticker_mutex_);
        while (ticking_) {
            lock.unlock();
            sample();
            lock.lock();
            ticker_cv_.wait_for(lock, period, [this] { return !ticking_; });
        }
    });
}

void MetricsCollector::stop() {
    {
        std::lock_guard lock(ticker_mutex_);
        if (!ticking_ && !ticker_.joinable()) return;
        ticking_ = false;
    }
    ticker_cv_.notify_all();
    if (ticker_.joinable()) ticker_.join();
    sample();
}

std::vector<MetricsRow> MetricsCollector::rows() const {
    std::lock_guard lock(mutex_);
    return rows_;
}

void MetricsCollector::write_csv(std::ostream& out) const {
    out << kCsvHeader << '\n';
    for (const auto& row : rows()) {
        out << row.tick_ms << ',' << row.heap_used_bytes << ','
            << row.heap_free_bytes << ',' << row.heap_block_count << ','
            << row.resident_payload_bytes << ',' << row.dispatched_local << ','
            << row.dispatched_remote << ',' << row.bytes_copied << ','
            << std::fixed << std::setprecision(3) << row.latency_p50_ms << ','
            << row.latency_p95_ms << ',' << row.latency_max_ms << '\n';
    }
}

}  // namespace offkit
