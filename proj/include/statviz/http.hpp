#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

namespace statviz::http {

struct Response {
    int status = 0;
    std::string body;
};

using Headers = std::map<std::string, std::string>;

// Minimal blocking HTTP client surface. Implementations throw
// TransportError when no response could be obtained at all; non-2xx
// statuses are returned as values.
class Transport {
public:
    virtual ~Transport() = default;
    virtual Response get(const std::string& url, const Headers& headers = {}) = 0;
    virtual Response post(const std::string& url, const std::string& body,
                          const Headers& headers = {}) = 0;
};

// cpp-httplib backed transport; supports http:// and https:// URLs.
class NetworkTransport final : public Transport {
public:
    explicit NetworkTransport(std::chrono::seconds timeout = std::chrono::seconds(60));
    Response get(const std::string& url, const Headers& headers = {}) override;
    Response post(const std::string& url, const std::string& body,
                  const Headers& headers = {}) override;

private:
    std::chrono::seconds timeout_;
};

// Caches successful GET responses on disk; each entry is keyed by a hash of
// the URL and stored as <cache_dir>/<hash>.body. POSTs pass through.
class CachingTransport final : public Transport {
public:
    CachingTransport(std::shared_ptr<Transport> inner, std::filesystem::path cache_dir);
    Response get(const std::string& url, const Headers& headers = {}) override;
    Response post(const std::string& url, const std::string& body,
                  const Headers& headers = {}) override;

    std::filesystem::path entry_path(const std::string& url) const;

private:
    std::shared_ptr<Transport> inner_;
    std::filesystem::path cache_dir_;
};

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string target;  // path?query
};
SplitUrl split_url(const std::string& url);

} // namespace statviz::http
