#pragma once

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace offkit {

enum class BlockStatus : std::uint8_t { kFree, kUsed };

// One entry of the heap's block list. `reference` is the byte offset of the
// block's first byte within the arena; blocks are kept ordered by reference,
// contiguous (each begins where the previous ends) and non-overlapping.
struct Block {
    std::size_t reference = 0;
    std::size_t size = 0;
    BlockStatus status = BlockStatus::kFree;
};

enum class HeapFault {
    kUnknownReference,  // reference does not name a live (used) block
    kSizeMismatch,      // read/write length differs from the block size
    kDoubleFree,        // free of a block that is already free
};

class HeapError : public std::runtime_error {
public:
    HeapError(HeapFault fault, const std::string& what)
        : std::runtime_error(what), fault_(fault) {}
    HeapFault fault() const { return fault_; }

private:
    HeapFault fault_;
};

struct HeapStats {
    std::size_t used_bytes = 0;            // sum of sizes of used blocks
    std::size_t free_bytes_in_blocks = 0;  // sum of sizes of free blocks
    std::size_t block_count = 0;           // listed blocks, used + free
};

// Contiguous byte arena with explicit block management. Payloads are stored
// once and addressed by integer references (the block's start offset), so a
// reference can cross thread boundaries while the bytes stay put.
//
// malloc is first-fit: the first free block large enough is resized to the
// request and reused, with the remainder split off as a new free block; when
// nothing fits, a fresh block is appended after the listed region. Freed
// bytes are never erased, only overwritten by later reuse; read enforces the
// block border so stale residue beyond a block is unreachable.
//
// merge coalesces each maximal run of adjacent free blocks into one and drops
// a trailing free block back to unallocated space. With auto_merge the heap
// runs merge after every free; callers can leave it off and schedule merge
// themselves (the fragmentation experiments rely on that switch).
//
// All operations are serialized by an internal mutex.
class ContiguousHeap {
public:
    explicit ContiguousHeap(std::size_t capacity, bool auto_merge = false);

    // Returns the reference of a used block of exactly `size` bytes, or
    // nullopt when neither reuse nor append fits (state unchanged).
    // size must be >= 1.
    std::optional<std::size_t> malloc(std::size_t size);

    // data.size() must equal the block size. Throws HeapError.
    void write(std::size_t reference, std::span<const std::uint8_t> data);

    // Returns exactly `size` bytes starting at `reference`. Throws HeapError.
    std::vector<std::uint8_t> read(std::size_t reference, std::size_t size) const;

    // Borrows the block's bytes without copying. The arena never reallocates,
    // so the span stays valid exactly as long as the block stays allocated;
    // the caller must not touch it after freeing the block. Same validation
    // and errors as read().
    std::span<const std::uint8_t> view(std::size_t reference, std::size_t size) const;

    // Marks the block free. Bytes are left in place. Throws HeapError.
    void free(std::size_t reference);

    void merge();

    HeapStats stats() const;
    std::size_t capacity() const { return capacity_; }

    // High-water marks, updated on every mutation.
    std::size_t peak_used_bytes() const;
    std::size_t peak_block_count() const;

    // Snapshot of the block list, for tests and diagnostics.
    std::vector<Block> blocks() const;

private:
    // Callers hold mutex_.
    std::vector<Block>::iterator find_block(std::size_t reference);
    std::vector<Block>::const_iterator find_block(std::size_t reference) const;
    void merge_locked();
    void note_watermarks();

    const std::size_t capacity_;
    const bool auto_merge_;

    mutable std::mutex mutex_;
    std::vector<std::uint8_t> arena_;
    std::vector<Block> blocks_;
    std::size_t used_bytes_ = 0;
    std::size_t free_bytes_ = 0;
    std::size_t peak_used_bytes_ = 0;
    std::size_t peak_block_count_ = 0;
};

}  // namespace offkit
