#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace offkit {

// Frames are row-major RGB byte grids: width × height pixels, 3 bytes each.
struct FrameGeometry {
    int width = 0;
    int height = 0;

    std::size_t byte_size() const {
        return static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
    }

    friend bool operator==(const FrameGeometry&, const FrameGeometry&) = default;
};

// The fixed deterministic transform set shared by the local processing
// handler and the stub HTTP service; both sides computing the same bytes is
// what makes placement transparent.
enum class Transform : std::uint8_t {
    kIdentity,    // frame unchanged
    kGray,        // each pixel becomes its integer channel mean
    kSharpen3x3,  // integer convolution, kernel {0,-1,0;-1,5,-1;0,-1,0}
};

std::optional<Transform> transform_from_name(const std::string& name);
std::string to_string(Transform transform);
std::vector<std::string> transform_names();

// Applies the transform to one frame. Output has the same geometry. Throws
// std::invalid_argument on non-positive dimensions or when frame.size()
// differs from geometry.byte_size().
std::vector<std::uint8_t> apply_transform(Transform transform,
                                          std::span<const std::uint8_t> frame,
                                          const FrameGeometry& geometry);

// Deterministic pseudo-random frame: same geometry + seed → same bytes on
// every platform.
std::vector<std::uint8_t> synthetic_frame(const FrameGeometry& geometry,
                                          std::uint64_t seed);

// FNV-1a, the digest the display stage reports back so chain output can be
// verified without shipping frames around.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

}  // namespace offkit
