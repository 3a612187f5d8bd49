#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "offkit/transforms.hpp"

namespace offkit {

// The remote counterpart of the processing stage: a long-running HTTP
// service answering
//
//   POST /process?effect=<id>&w=<int>&h=<int>   body = frame bytes
//   GET  /healthz
//
// The effect query parameter overrides the configured default; w and h must
// be positive integers, and for frame-shaped effects the body must be
// exactly w*h*3 bytes — anything else answers 400. It applies the same
// transform code the local handler runs, which is what keeps placement
// transparent.
class StubService {
public:
    struct Options {
        std::string host = "127.0.0.1";
        int port = 0;  // 0 picks any free port
        Transform default_transform = Transform::kIdentity;
    };

    StubService() : StubService(Options{}) {}
    explicit StubService(Options options);
    ~StubService();

    StubService(const StubService&) = delete;
    StubService& operator=(const StubService&) = delete;

    int port() const;
    std::string base_url() const;

    // Full /process URL with the query preset for one transform + geometry;
    // the shape remote_map entries want.
    std::string process_url(Transform transform, const FrameGeometry& geometry) const;

    void start();  // serve in the background
    void stop();
    void run();  // serve on the calling thread until stop()

    std::uint64_t requests_served() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace offkit
