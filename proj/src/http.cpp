#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "statviz/http.hpp"

#include "statviz/error.hpp"
#include "statviz/util.hpp"

#include <fmt/format.h>

namespace statviz::http {

namespace fs = std::filesystem;

SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw PreconditionError("URL without scheme: " + url);
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

namespace {

httplib::Headers to_httplib(const Headers& headers) {
    httplib::Headers out;
    for (const auto& [k, v] : headers) {
        out.emplace(k, v);
    }
    return out;
}

Response finish(const httplib::Result& res, const std::string& url) {
    if (!res) {
        throw TransportError(fmt::format("request to {} failed: {}", url, httplib::to_string(res.error())));
    }
    return {res->status, res->body};
}

} // namespace

NetworkTransport::NetworkTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

Response NetworkTransport::get(const std::string& url, const Headers& headers) {
    auto [origin, target] = split_url(url);
    httplib::Client client(origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_follow_location(true);
    return finish(client.Get(target, to_httplib(headers)), url);
}

Response NetworkTransport::post(const std::string& url, const std::string& body, const Headers& headers) {
    auto [origin, target] = split_url(url);
    httplib::Client client(origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    std::string content_type = "application/json";
    auto hs = to_httplib(headers);
    if (auto it = headers.find("Content-Type"); it != headers.end()) {
        content_type = it->second;
        hs.erase("Content-Type");
    }
    return finish(client.Post(target, hs, body, content_type), url);
}

CachingTransport::CachingTransport(std::shared_ptr<Transport> inner, fs::path cache_dir)
    : inner_(std::move(inner)), cache_dir_(std::move(cache_dir)) {}

fs::path CachingTransport::entry_path(const std::string& url) const {
    return cache_dir_ / (util::sha256_hex(url).substr(0, 32) + ".body");
}

Response CachingTransport::get(const std::string& url, const Headers& headers) {
    auto entry = entry_path(url);
    if (fs::exists(entry)) {
        return {200, util::read_file(entry)};
    }
    auto response = inner_->get(url, headers);
    if (response.status == 200) {
        fs::create_directories(cache_dir_);
        util::write_file_atomic(entry, response.body);
    }
    return response;
}

Response CachingTransport::post(const std::string& url, const std::string& body, const Headers& headers) {
    return inner_->post(url, body, headers);
}

} // namespace statviz::http
