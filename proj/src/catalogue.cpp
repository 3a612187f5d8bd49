#include "offkit/catalogue.hpp"

#include <algorithm>

namespace offkit {

std::string to_string(Scope scope) {
    return scope == Scope::kLocalApp ? "local" : "global";
}

std::vector<std::string> split_labels(const std::string& dotted) {
    std::vector<std::string> labels;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', start);
        const std::string label = dotted.substr(
            start, dot == std::string::npos ? std::string::npos : dot - start);
        if (label.empty()) {
            throw CatalogueError(CatalogueFault::kMalformedAddress,
                                 "empty label in address: " + dotted);
        }
        labels.push_back(label);
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (labels.size() < 2) {
        throw CatalogueError(CatalogueFault::kMalformedAddress,
                             "address needs at least two labels: " + dotted);
    }
    return labels;
}

namespace {

std::string join_reversed(const std::vector<std::string>& labels) {
    std::string out;
    for (auto it = labels.rbegin(); it != labels.rend(); ++it) {
        if (!out.empty()) out += '.';
        out += *it;
    }
    return out;
}

}  // namespace

std::string to_remote_url(const std::string& address, const std::string& scheme) {
    return scheme + "://" + join_reversed(split_labels(address));
}

std::string address_from_host(const std::string& host) {
    return join_reversed(split_labels(host));
}

void Catalogue::register_function(FunctionRecord record) {
    if (record.comm_methods.empty()) {
        throw CatalogueError(CatalogueFault::kMalformedAddress,
                             "record needs at least one comm method");
    }
    (void)split_labels(record.address);  // validate shape up front
    std::lock_guard lock(mutex_);
    for (const auto& existing : records_) {
        if (existing.address == record.address && existing.scope == record.scope) {
            throw CatalogueError(
                CatalogueFault::kDuplicateAddress,
                "already registered in scope: " + record.address);
        }
    }
    records_.push_back(std::move(record));
}

void Catalogue::deregister(const std::string& address) {
    std::lock_guard lock(mutex_);
    const auto first_removed = std::remove_if(
        records_.begin(), records_.end(),
        [&](const FunctionRecord& r) { return r.address == address; });
    if (first_removed == records_.end()) {
        throw CatalogueError(CatalogueFault::kUnknownAddress,
                             "not registered: " + address);
    }
    records_.erase(first_removed, records_.end());
}

std::optional<FunctionRecord> Catalogue::lookup(const std::string& address) const {
    std::lock_guard lock(mutex_);
    const FunctionRecord* global_hit = nullptr;
    for (const auto& r : records_) {
        if (r.address != address) continue;
        if (r.scope == Scope::kLocalApp) return r;  // local always wins
        global_hit = &r;
    }
    if (global_hit != nullptr) return *global_hit;
    return std::nullopt;
}

std::vector<FunctionRecord> Catalogue::list() const {
    std::lock_guard lock(mutex_);
    auto out = records_;
    std::sort(out.begin(), out.end(),
              [](const FunctionRecord& a, const FunctionRecord& b) {
                  if (a.address != b.address) return a.address < b.address;
                  return a.scope < b.scope;
              });
    return out;
}

}  // namespace offkit
