#pragma once

#include <chrono>
#include <string>

// Plain HTTP transport kept out of the project namespace: the socket headers
// pulled in by the HTTP library declare a global `listen` function.
namespace listen_http {

struct PostResult {
    bool ok = false;
    int status = 0;
    std::string body;
    std::string error;
};

PostResult post_json(const std::string& host, const std::string& path, const std::string& body,
                     const std::string& bearer_token, std::chrono::seconds timeout);

}  // namespace listen_http
