#pragma once

#include <span>
#include <string>

#include "offkit/runtime.hpp"
#include "offkit/transforms.hpp"

namespace offkit {

// The demo pipeline: Control receives a frame, has Process transform it,
// hands the result to Display, and answers with Display's reply.
struct ChainConfig {
    std::string control = "com.example.myapp.control";
    std::string process = "com.example.myapp.process";
    std::string display = "com.example.myapp.display";
    Transform transform = Transform::kIdentity;
    FrameGeometry geometry{360, 640};
};

// Starts the three functions on `runtime`. Process applies the configured
// transform (identity accepts any payload; the frame effects answer 400 on
// a size mismatch). Display answers with the 16-hex-digit fnv1a64 digest of
// the bytes it observed, so callers can verify the pipeline output without
// shipping frames back. Control propagates a failing stage's status.
void install_chain(Runtime& runtime, const ChainConfig& config);

// The digest Display would report for these bytes.
std::string chain_digest_hex(std::span<const std::uint8_t> bytes);

// The digest a frame should produce after flowing through the whole chain.
std::string expected_chain_digest(const ChainConfig& config,
                                  std::span<const std::uint8_t> frame);

}  // namespace offkit
