#include <cstdlib>

#include <nlohmann/json.hpp>

#include "listen/datagen.hpp"
#include "listen/errors.hpp"
#include "http_transport.hpp"

namespace listen::datagen {

HttpClient::HttpClient(std::string endpoint, std::string token_env, std::chrono::seconds timeout)
    : endpoint_(std::move(endpoint)), token_env_(std::move(token_env)), timeout_(timeout) {
    if (endpoint_.rfind("http://", 0) != 0) throw ConfigError("external endpoint must be an http:// URL");
}

std::string HttpClient::generate(const GenerationRequest& request) {
    const std::size_t path_pos = endpoint_.find('/', 7);
    const std::string host = endpoint_.substr(0, path_pos);
    const std::string path = path_pos == std::string::npos ? "/" : endpoint_.substr(path_pos);

    std::string token;
    if (const char* env = std::getenv(token_env_.c_str()); env != nullptr) token = env;
    const nlohmann::json body = {
        {"prompt", request.prompt}, {"max_new_tokens", request.max_new_tokens}, {"decoding", "greedy"}};
    const auto res = listen_http::post_json(host, path, body.dump(), token, timeout_);
    if (!res.ok) throw GenerationError("request to " + endpoint_ + " failed: " + res.error, request.prompt);
    if (res.status != 200)
        throw GenerationError("endpoint " + endpoint_ + " returned HTTP " + std::to_string(res.status), request.prompt);
    try {
        return nlohmann::json::parse(res.body).at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw GenerationError(std::string("malformed response: ") + e.what(), request.prompt);
    }
}

}  // namespace listen::datagen
