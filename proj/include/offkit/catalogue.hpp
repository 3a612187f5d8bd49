#pragma once

#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace offkit {

// LOCAL_APP records are the in-app default; GLOBAL records are visible to
// every tenant sharing the registry.
enum class Scope : std::uint8_t { kLocalApp, kGlobal };

std::string to_string(Scope scope);

struct FunctionRecord {
    std::string address;                     // reverse-FQDN, e.g. "com.example.myapp.process"
    std::vector<std::string> comm_methods;   // highest-priority transport first
    Scope scope = Scope::kLocalApp;

    friend bool operator==(const FunctionRecord&, const FunctionRecord&) = default;
};

enum class CatalogueFault {
    kDuplicateAddress,
    kUnknownAddress,
    kMalformedAddress,
};

class CatalogueError : public std::runtime_error {
public:
    CatalogueError(CatalogueFault fault, const std::string& what)
        : std::runtime_error(what), fault_(fault) {}
    CatalogueFault fault() const { return fault_; }

private:
    CatalogueFault fault_;
};

// ── address mapping ──
//
// Function addresses are the reverse FQDN of their web-service counterpart:
// "com.example.myapp.process" ↔ host "process.myapp.example.com". Reversing
// the dot-separated labels is an involution, so the mapping is a bijection.

// Throws CatalogueError(kMalformedAddress) unless `dotted` has >= 2
// non-empty dot-separated labels.
std::vector<std::string> split_labels(const std::string& dotted);

// "com.example.myapp.process" -> "http://process.myapp.example.com"
std::string to_remote_url(const std::string& address,
                          const std::string& scheme = "http");

// "process.myapp.example.com" -> "com.example.myapp.process"
std::string address_from_host(const std::string& host);

// Thread-safe registry of live functions. An address may be registered once
// per scope; lookups search LOCAL_APP before GLOBAL.
class Catalogue {
public:
    void register_function(FunctionRecord record);

    // Removes the address from every scope it is registered in, so it is
    // absent from subsequent lookups. Throws kUnknownAddress if nowhere.
    void deregister(const std::string& address);

    std::optional<FunctionRecord> lookup(const std::string& address) const;

    // All live records, ordered by address then scope (for stable output).
    std::vector<FunctionRecord> list() const;

private:
    mutable std::mutex mutex_;
    std::vector<FunctionRecord> records_;
};

}  // namespace offkit
