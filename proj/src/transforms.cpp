#include "offkit/transforms.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace offkit {

namespace {

void validate(std::span<const std::uint8_t> frame, const FrameGeometry& geometry) {
    if (geometry.width <= 0 || geometry.height <= 0) {
        throw std::invalid_argument("frame geometry must be positive");
    }
    if (frame.size() != geometry.byte_size()) {
        throw std::invalid_argument("frame size does not match geometry");
    }
}

std::vector<std::uint8_t> gray(std::span<const std::uint8_t> frame) {
    std::vector<std::uint8_t> out(frame.size());
    for (std::size_t i = 0; i + 2 < frame.size(); i += 3) {
        const int mean = (frame[i] + frame[i + 1] + frame[i + 2]) / 3;
        out[i] = out[i + 1] = out[i + 2] = static_cast<std::uint8_t>(mean);
    }
    return out;
}

std::vector<std::uint8_t> sharpen3x3(std::span<const std::uint8_t> frame,
                                     const FrameGeometry& geometry) {
    const int w = geometry.width;
    const int h = geometry.height;
    std::vector<std::uint8_t> out(frame.size());

    // Replicate-edge sampling: out-of-range coordinates clamp to the border.
    const auto at = [&](int x, int y, int c) -> int {
        x = std::clamp(x, 0, w - 1);
        y = std::clamp(y, 0, h - 1);
        return frame[(static_cast<std::size_t>(y) * w + x) * 3 + c];
    };

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const int v = 5 * at(x, y, c) - at(x - 1, y, c) - at(x + 1, y, c) -
                              at(x, y - 1, c) - at(x, y + 1, c);
                out[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
                    static_cast<std::uint8_t>(std::clamp(v, 0, 255));
            }
        }
    }
    return out;
}

}  // namespace

std::optional<Transform> transform_from_name(const std::string& name) {
    if (name == "identity") return Transform::kIdentity;
    if (name == "gray") return Transform::kGray;
    if (name == "sharpen3x3") return Transform::kSharpen3x3;
    return std::nullopt;
}

std::string to_string(Transform transform) {
    switch (transform) {
        case Transform::kIdentity: return "identity";
        case Transform::kGray: return "gray";
        case Transform::kSharpen3x3: return "sharpen3x3";
    }
    return "identity";
}

std::vector<std::string> transform_names() {
    return {"identity", "gray", "sharpen3x3"};
}

std::vector<std::uint8_t> apply_transform(Transform transform,
                                          std::span<const std::uint8_t> frame,
                                          const FrameGeometry& geometry) {
    validate(frame, geometry);
    switch (transform) {
        case Transform::kIdentity:
            return {frame.begin(), frame.end()};
        case Transform::kGray:
            return gray(frame);
        case Transform::kSharpen3x3:
            return sharpen3x3(frame, geometry);
    }
    return {frame.begin(), frame.end()};
}

std::vector<std::uint8_t> synthetic_frame(const FrameGeometry& geometry,
                                          std::uint64_t seed) {
    if (geometry.width <= 0 || geometry.height <= 0) {
        throw std::invalid_argument("frame geometry must be positive");
    }
    std::vector<std::uint8_t> frame(geometry.byte_size());
    std::mt19937_64 rng(seed);
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < frame.size(); ++i) {
        if (i % 8 == 0) word = rng();
        frame[i] = static_cast<std::uint8_t>(word >> ((i % 8) * 8));
    }
    return frame;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (const auto b : bytes) {
        hash ^= b;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

}  // namespace offkit
