#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace offkit {

enum class MessageKind : std::uint8_t { kRequest, kResponse };

// Body stored in the application heap instead of the envelope. Only
// meaningful inside the process: these never cross the network boundary.
struct PayloadRef {
    std::size_t reference = 0;
    std::size_t length = 0;

    friend bool operator==(const PayloadRef&, const PayloadRef&) = default;
};

// The request/response envelope both transports carry. Requests have
// method + url; responses have a status code (HTTP conventions). A body, if
// any, travels either inline (payload) or as a heap reference (payload_ref)
// — never both.
struct Message {
    std::uint64_t request_id = 0;
    MessageKind kind = MessageKind::kRequest;
    std::string method;  // requests only
    std::string url;     // requests only
    int status = 0;      // responses only
    std::optional<std::vector<std::uint8_t>> payload;
    std::optional<PayloadRef> payload_ref;

    bool has_body() const { return payload.has_value() || payload_ref.has_value(); }
    std::size_t body_length() const {
        if (payload) return payload->size();
        if (payload_ref) return payload_ref->length;
        return 0;
    }

    friend bool operator==(const Message&, const Message&) = default;
};

// Unique ids: a per-instance random nonce in the top 16 bits, a monotonic
// counter below. Uniqueness is all that is required of them.
class RequestIdGenerator {
public:
    RequestIdGenerator();
    explicit RequestIdGenerator(std::uint16_t nonce) : nonce_(nonce) {}
    std::uint64_t next();

private:
    std::uint16_t nonce_;
    std::atomic<std::uint64_t> counter_{0};
};

bool is_supported_verb(const std::string& method);

// Throws std::invalid_argument on an empty url or unsupported verb.
Message new_request(RequestIdGenerator& ids, const std::string& method,
                    const std::string& url,
                    std::optional<std::vector<std::uint8_t>> body = std::nullopt);

// Throws std::invalid_argument when `request` is not a REQUEST.
Message new_response(const Message& request, int status,
                     std::optional<std::vector<std::uint8_t>> body = std::nullopt);

// ── bus record form ──
//
// Key-value record with a fixed key order (Reqid, Method, URL, Status, then
// Payload or PaylRef), one "Key: value" line each, a blank line, then the
// raw payload bytes when a Payload header is present:
//
//   Reqid: 42
//   Method: POST
//   URL: com.example.myapp.process
//   Payload: 5
//   <blank>
//   hello
//
// PaylRef encodes as "PaylRef: <reference> <length>" with no body section.
// The payload is length-prefixed, so arbitrary binary bodies round-trip.

std::vector<std::uint8_t> encode_bus(const Message& message);

// Throws std::invalid_argument on malformed records.
Message decode_bus(std::span<const std::uint8_t> record);

}  // namespace offkit
