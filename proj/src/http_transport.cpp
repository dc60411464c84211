#include "http_transport.hpp"

#include <httplib.h>

namespace listen_http {

PostResult post_json(const std::string& host, const std::string& path, const std::string& body,
                     const std::string& bearer_token, std::chrono::seconds timeout) {
    httplib::Client cli(host);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);
    PostResult out;
    auto res = cli.Post(path, headers, body, "application/json");
    if (!res) {
        out.error = httplib::to_string(res.error());
        return out;
    }
    out.ok = true;
    out.status = res->status;
    out.body = res->body;
    return out;
}

}  // namespace listen_http
