#include "offkit/heap.hpp"

#include <algorithm>
#include <cstring>

namespace offkit {

namespace {

std::string describe(std::size_t reference, const char* what) {
    return "heap: " + std::string(what) + " (reference " +
           std::to_string(reference) + ")";
}

}  // namespace

ContiguousHeap::ContiguousHeap(std::size_t capacity, bool auto_merge)
    : capacity_(capacity), auto_merge_(auto_merge), arena_(capacity) {}

std::optional<std::size_t> ContiguousHeap::malloc(std::size_t size) {
    if (size == 0) {
        throw std::invalid_argument("heap: malloc size must be >= 1");
    }
    std::lock_guard lock(mutex_);

    // First fit: reuse the first free block that can hold the request,
    // splitting off any remainder as a fresh free block right after it.
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (blocks_[i].status != BlockStatus::kFree || blocks_[i].size < size) {
            continue;
        }
        const std::size_t reference = blocks_[i].reference;
        const std::size_t remainder = blocks_[i].size - size;
        blocks_[i].size = size;
        blocks_[i].status = BlockStatus::kUsed;
        used_bytes_ += size;
        free_bytes_ -= size;
        if (remainder > 0) {
            blocks_.insert(
                blocks_.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                Block{reference + size, remainder, BlockStatus::kFree});
        }
        note_watermarks();
        return reference;
    }

    // Nothing to reuse: append after the listed region if it fits.
    const std::size_t end =
        blocks_.empty() ? 0 : blocks_.back().reference + blocks_.back().size;
    if (size > capacity_ - end) {
        return std::nullopt;
    }
    blocks_.push_back(Block{end, size, BlockStatus::kUsed});
    used_bytes_ += size;
    note_watermarks();
    return end;
}

void ContiguousHeap::write(std::size_t reference,
                           std::span<const std::uint8_t> data) {
    std::lock_guard lock(mutex_);
    const auto it = find_block(reference);
    if (it == blocks_.end() || it->status != BlockStatus::kUsed) {
        throw HeapError(HeapFault::kUnknownReference,
                        describe(reference, "write to unknown reference"));
    }
    if (data.size() != it->size) {
        throw HeapError(HeapFault::kSizeMismatch,
                        describe(reference, "write length differs from block size"));
    }
    std::memcpy(arena_.data() + reference, data.data(), data.size());
}

std::vector<std::uint8_t> ContiguousHeap::read(std::size_t reference,
                                               std::size_t size) const {
    std::lock_guard lock(mutex_);
    const auto it = find_block(reference);
    if (it == blocks_.end() || it->status != BlockStatus::kUsed) {
        throw HeapError(HeapFault::kUnknownReference,
                        describe(reference, "read of unknown reference"));
    }
    if (size != it->size) {
        throw HeapError(HeapFault::kSizeMismatch,
                        describe(reference, "read length differs from block size"));
    }
    return std::vector<std::uint8_t>(arena_.begin() + static_cast<std::ptrdiff_t>(reference),
                                     arena_.begin() + static_cast<std::ptrdiff_t>(reference + size));
}

std::span<const std::uint8_t> ContiguousHeap::view(std::size_t reference,
                                                   std::size_t size) const {
    std::lock_guard lock(mutex_);
    const auto it = find_block(reference);
    if (it == blocks_.end() || it->status != BlockStatus::kUsed) {
        throw HeapError(HeapFault::kUnknownReference,
                        describe(reference, "view of unknown reference"));
    }
    if (size != it->size) {
        throw HeapError(HeapFault::kSizeMismatch,
                        describe(reference, "view length differs from block size"));
    }
    return std::span<const std::uint8_t>(arena_.data() + reference, size);
}

void ContiguousHeap::free(std::size_t reference) {
    std::lock_guard lock(mutex_);
    const auto it = find_block(reference);
    if (it == blocks_.end()) {
        throw HeapError(HeapFault::kUnknownReference,
                        describe(reference, "free of unknown reference"));
    }
    if (it->status == BlockStatus::kFree) {
        throw HeapError(HeapFault::kDoubleFree,
                        describe(reference, "double free"));
    }
    it->status = BlockStatus::kFree;
    used_bytes_ -= it->size;
    free_bytes_ += it->size;
    // Bytes stay in place; only the status changes. Reuse overwrites them.
    if (auto_merge_) {
        merge_locked();
    }
}

void ContiguousHeap::merge() {
    std::lock_guard lock(mutex_);
    merge_locked();
}

void ContiguousHeap::merge_locked() {
    std::vector<Block> merged;
    merged.reserve(blocks_.size());
    for (const Block& b : blocks_) {
        if (!merged.empty() && merged.back().status == BlockStatus::kFree &&
            b.status == BlockStatus::kFree) {
            merged.back().size += b.size;
        } else {
            merged.push_back(b);
        }
    }
    // A trailing free block returns to unallocated space.
    if (!merged.empty() && merged.back().status == BlockStatus::kFree) {
        free_bytes_ -= merged.back().size;
        merged.pop_back();
    }
    blocks_ = std::move(merged);
}

HeapStats ContiguousHeap::stats() const {
    std::lock_guard lock(mutex_);
    return HeapStats{used_bytes_, free_bytes_, blocks_.size()};
}

std::size_t ContiguousHeap::peak_used_bytes() const {
    std::lock_guard lock(mutex_);
    return peak_used_bytes_;
}

std::size_t ContiguousHeap::peak_block_count() const {
    std::lock_guard lock(mutex_);
    return peak_block_count_;
}

std::vector<Block> ContiguousHeap::blocks() const {
    std::lock_guard lock(mutex_);
    return blocks_;
}

std::vector<Block>::iterator ContiguousHeap::find_block(std::size_t reference) {
    const auto it = std::lower_bound(
        blocks_.begin(), blocks_.end(), reference,
        [](const Block& b, std::size_t ref) { return b.reference < ref; });
    if (it == blocks_.end() || it->reference != reference) {
        return blocks_.end();
    }
    return it;
}

std::vector<Block>::const_iterator ContiguousHeap::find_block(
    std::size_t reference) const {
    const auto it = std::lower_bound(
        blocks_.begin(), blocks_.end(), reference,
        [](const Block& b, std::size_t ref) { return b.reference < ref; });
    if (it == blocks_.end() || it->reference != reference) {
        return blocks_.end();
    }
    return it;
}

void ContiguousHeap::note_watermarks() {
    peak_used_bytes_ = std::max(peak_used_bytes_, used_bytes_);
    peak_block_count_ = std::max(peak_block_count_, blocks_.size());
}

}  // namespace offkit
