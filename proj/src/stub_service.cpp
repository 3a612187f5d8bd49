#include "offkit/stub_service.hpp"

#include <atomic>
#include <charconv>
#include <optional>
#include <stdexcept>
#include <thread>

#include <httplib.h>

namespace offkit {

namespace {

std::optional<int> parse_positive_int(const std::string& text) {
    int value = 0;
    const auto* end = text.data() + text.size();
    const auto result = std::from_chars(text.data(), end, value);
    if (result.ec != std::errc{} || result.ptr != end || value <= 0) {
        return std::nullopt;
    }
    return value;
}

}  // namespace

struct StubService::Impl {
    Options options;
    httplib::Server server;
    int port = 0;
    std::thread listener;
    std::atomic<std::uint64_t> requests{0};

    explicit Impl(Options opts) : options(std::move(opts)) {
        server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
            ++requests;
            res.set_content("ok", "text/plain");
        });

        server.Post("/process", [this](const httplib::Request& req,
                                       httplib::Response& res) {
            ++requests;

            auto transform = options.default_transform;
            if (req.has_param("effect")) {
                const auto named = transform_from_name(req.get_param_value("effect"));
                if (!named) {
                    res.status = 400;
                    res.set_content("unknown effect", "text/plain");
                    return;
                }
                transform = *named;
            }

            const auto w = parse_positive_int(req.get_param_value("w"));
            const auto h = parse_positive_int(req.get_param_value("h"));
            if (!w || !h) {
                res.status = 400;
                res.set_content("bad frame dimensions", "text/plain");
                return;
            }
            const FrameGeometry geometry{*w, *h};

            // Identity is byte-oriented and accepts any payload; the frame
            // effects require an exact w*h*3 grid.
            if (transform == Transform::kIdentity) {
                res.set_content(req.body, "application/octet-stream");
                return;
            }
            if (req.body.size() != geometry.byte_size()) {
                res.status = 400;
                res.set_content("frame size does not match dimensions", "text/plain");
                return;
            }
            const auto out = apply_transform(
                transform,
                std::span<const std::uint8_t>(
                    reinterpret_cast<const std::uint8_t*>(req.body.data()),
                    req.body.size()),
                geometry);
            res.set_content(std::string(out.begin(), out.end()),
                            "application/octet-stream");
        });

        if (options.port == 0) {
            port = server.bind_to_any_port(options.host);
            if (port <= 0) throw std::runtime_error("stub: failed to bind a port");
        } else {
            if (!server.bind_to_port(options.host, options.port)) {
                throw std::runtime_error("stub: failed to bind port " +
                                         std::to_string(options.port));
            }
            port = options.port;
        }
    }
};

StubService::StubService(Options options)
    : impl_(std::make_unique<Impl>(std::move(options))) {}

StubService::~StubService() {
    stop();
}

int StubService::port() const { return impl_->port; }

std::string StubService::base_url() const {
    return "http://" + impl_->options.host + ":" + std::to_string(impl_->port);
}

std::string StubService::process_url(Transform transform,
                                     const FrameGeometry& geometry) const {
    return base_url() + "/process?effect=" + to_string(transform) +
           "&w=" + std::to_string(geometry.width) +
           "&h=" + std::to_string(geometry.height);
}

void StubService::start() {
    if (impl_->listener.joinable()) return;
    impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void StubService::stop() {
    impl_->server.stop();
    if (impl_->listener.joinable()) impl_->listener.join();
}

void StubService::run() {
    impl_->server.listen_after_bind();
}

std::uint64_t StubService::requests_served() const { return impl_->requests.load(); }

}  // namespace offkit
