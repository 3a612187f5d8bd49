#include "offkit/chain.hpp"

#include <cstdio>
#include <utility>
#include <vector>

namespace offkit {

namespace {

std::vector<std::uint8_t> as_bytes(const std::string& text) {
    return {text.begin(), text.end()};
}

std::vector<std::uint8_t> run_transform(const ChainConfig& config,
                                        std::span<const std::uint8_t> body) {
    if (config.transform == Transform::kIdentity) {
        return {body.begin(), body.end()};  // byte-oriented: any size passes
    }
    return apply_transform(config.transform, body, config.geometry);
}

}  // namespace

std::string chain_digest_hex(std::span<const std::uint8_t> bytes) {
    char out[17];
    std::snprintf(out, sizeof out, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes)));
    return out;
}

std::string expected_chain_digest(const ChainConfig& config,
                                  std::span<const std::uint8_t> frame) {
    const auto transformed = run_transform(config, frame);
    return chain_digest_hex(transformed);
}

void install_chain(Runtime& runtime, const ChainConfig& config) {
    runtime.start_function(
        config.process,
        [config](const Message& request, std::span<const std::uint8_t> body) {
            if (config.transform != Transform::kIdentity &&
                body.size() != config.geometry.byte_size()) {
                return new_response(request, 400,
                                    as_bytes("frame size does not match geometry"));
            }
            return new_response(request, 200, run_transform(config, body));
        });

    runtime.start_function(
        config.display,
        [](const Message& request, std::span<const std::uint8_t> body) {
            return new_response(request, 200, as_bytes(chain_digest_hex(body)));
        });

    runtime.start_function(
        config.control,
        [&runtime, config](const Message& request,
                           std::span<const std::uint8_t> body) {
            auto processed =
                runtime.request("POST", config.process,
                                std::vector<std::uint8_t>(body.begin(), body.end()));
            if (processed.status != 200) {
                return new_response(request, processed.status,
                                    as_bytes("processing stage failed"));
            }
            auto displayed = runtime.request("POST", config.display,
                                             std::move(processed.payload));
            if (displayed.status != 200) {
                return new_response(request, displayed.status,
                                    as_bytes("display stage failed"));
            }
            return new_response(request, 200, std::move(displayed.payload));
        });
}

}  // namespace offkit
