#include "offkit/message.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <random>

namespace offkit {

namespace {

constexpr std::array<const char*, 7> kVerbs = {
    "GET", "POST", "PUT", "DELETE", "PATCH", "HEAD", "OPTIONS"};

std::uint16_t random_nonce() {
    std::random_device rd;
    return static_cast<std::uint16_t>(rd());
}

void append(std::vector<std::uint8_t>& out, const std::string& text) {
    out.insert(out.end(), text.begin(), text.end());
}

// Parses a non-negative integer out of `text`, requiring full consumption.
template <typename Int>
Int parse_int(std::string_view text, const char* what) {
    Int value{};
    const auto [ptr, ec] =
        std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw std::invalid_argument("bus record: bad " + std::string(what));
    }
    return value;
}

}  // namespace

RequestIdGenerator::RequestIdGenerator() : nonce_(random_nonce()) {}

std::uint64_t RequestIdGenerator::next() {
    const std::uint64_t seq = counter_.fetch_add(1, std::memory_order_relaxed) + 1;
    return (static_cast<std::uint64_t>(nonce_) << 48) | (seq & 0xFFFFFFFFFFFFull);
}

bool is_supported_verb(const std::string& method) {
    return std::find(kVerbs.begin(), kVerbs.end(), method) != kVerbs.end();
}

Message new_request(RequestIdGenerator& ids, const std::string& method,
                    const std::string& url,
                    std::optional<std::vector<std::uint8_t>> body) {
    if (url.empty()) {
        throw std::invalid_argument("request url must be non-empty");
    }
    if (!is_supported_verb(method)) {
        throw std::invalid_argument("unsupported verb: " + method);
    }
    Message m;
    m.request_id = ids.next();
    m.kind = MessageKind::kRequest;
    m.method = method;
    m.url = url;
    m.payload = std::move(body);
    return m;
}

Message new_response(const Message& request, int status,
                     std::optional<std::vector<std::uint8_t>> body) {
    if (request.kind != MessageKind::kRequest) {
        throw std::invalid_argument("new_response requires a REQUEST");
    }
    Message m;
    m.request_id = request.request_id;
    m.kind = MessageKind::kResponse;
    m.status = status;
    m.payload = std::move(body);
    return m;
}

std::vector<std::uint8_t> encode_bus(const Message& message) {
    std::vector<std::uint8_t> out;
    out.reserve(64 + message.body_length());
    append(out, "Reqid: " + std::to_string(message.request_id) + "\n");
    if (message.kind == MessageKind::kRequest) {
        append(out, "Method: " + message.method + "\n");
        append(out, "URL: " + message.url + "\n");
    } else {
        append(out, "Status: " + std::to_string(message.status) + "\n");
    }
    if (message.payload) {
        append(out, "Payload: " + std::to_string(message.payload->size()) + "\n\n");
        out.insert(out.end(), message.payload->begin(), message.payload->end());
    } else if (message.payload_ref) {
        append(out, "PaylRef: " + std::to_string(message.payload_ref->reference) +
                        " " + std::to_string(message.payload_ref->length) + "\n\n");
    } else {
        append(out, "\n");
    }
    return out;
}

Message decode_bus(std::span<const std::uint8_t> record) {
    const std::string_view text(reinterpret_cast<const char*>(record.data()),
                                record.size());

    Message m;
    bool saw_reqid = false;
    bool saw_request_keys = false;
    bool saw_status = false;
    std::optional<std::size_t> payload_length;

    std::size_t pos = 0;
    while (true) {
        const std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) {
            throw std::invalid_argument("bus record: missing blank line");
        }
        const std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) break;  // end of headers

        const std::size_t sep = line.find(": ");
        if (sep == std::string_view::npos) {
            throw std::invalid_argument("bus record: malformed header line");
        }
        const std::string_view key = line.substr(0, sep);
        const std::string_view value = line.substr(sep + 2);

        if (key == "Reqid") {
            m.request_id = parse_int<std::uint64_t>(value, "Reqid");
            saw_reqid = true;
        } else if (key == "Method") {
            m.method = std::string(value);
            saw_request_keys = true;
        } else if (key == "URL") {
            m.url = std::string(value);
            saw_request_keys = true;
        } else if (key == "Status") {
            m.status = parse_int<int>(value, "Status");
            saw_status = true;
        } else if (key == "Payload") {
            payload_length = parse_int<std::size_t>(value, "Payload length");
        } else if (key == "PaylRef") {
            const std::size_t space = value.find(' ');
            if (space == std::string_view::npos) {
                throw std::invalid_argument("bus record: bad PaylRef");
            }
            m.payload_ref =
                PayloadRef{parse_int<std::size_t>(value.substr(0, space), "PaylRef reference"),
                           parse_int<std::size_t>(value.substr(space + 1), "PaylRef length")};
        } else {
            throw std::invalid_argument("bus record: unknown key " + std::string(key));
        }
    }

    if (!saw_reqid) {
        throw std::invalid_argument("bus record: missing Reqid");
    }
    if (saw_request_keys == saw_status) {
        throw std::invalid_argument(
            "bus record: need either request keys or a status, not both");
    }
    m.kind = saw_status ? MessageKind::kResponse : MessageKind::kRequest;
    if (payload_length && m.payload_ref) {
        throw std::invalid_argument("bus record: Payload and PaylRef together");
    }
    if (payload_length) {
        if (text.size() - pos != *payload_length) {
            throw std::invalid_argument("bus record: body length mismatch");
        }
        m.payload = std::vector<std::uint8_t>(record.begin() + static_cast<std::ptrdiff_t>(pos),
                                              record.end());
    } else if (pos != text.size()) {
        throw std::invalid_argument("bus record: trailing bytes without Payload");
    }
    return m;
}

}  // namespace offkit
