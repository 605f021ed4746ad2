#include <chrono>
#include <cstdlib>
#include <thread>

#include "crossexam/backend.hpp"

#include "httplib.h"

namespace crossexam {

using nlohmann::json;

namespace {

bool is_transient_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

FinishReason finish_reason_from_api(const std::string& reason) {
    if (reason == "stop") return FinishReason::stop;
    if (reason == "length") return FinishReason::length;
    return FinishReason::error;
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (config_.base_url.empty() || config_.path.empty()) {
        throw Error(errkind::config_error,
                    "http backend '" + config_.descriptor.id + "' needs base_url and path");
    }
}

CompletionResponse HttpBackend::generate(const CompletionRequest& request) {
    json body;
    body["model"] = config_.model;
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;
    if (request.seed && config_.descriptor.supports_seed) {
        body["seed"] = *request.seed;
    }
    if (config_.descriptor.style == BackendStyle::chat) {
        json messages = json::array();
        for (const auto& message : request.messages) {
            messages.push_back({{"role", to_string(message.role)}, {"content", message.content}});
        }
        body["messages"] = std::move(messages);
        if (request.want_logprobs) {
            body["logprobs"] = true;
        }
    } else {
        body["prompt"] = flatten_messages(request.messages);
        if (request.want_logprobs) {
            body["logprobs"] = 1;
        }
    }

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (!key || !*key) {
            throw Error(errkind::config_error, "environment variable '" + config_.api_key_env +
                                                   "' is not set for backend '" +
                                                   config_.descriptor.id + "'");
        }
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    const std::string payload = body.dump();
    std::string last_failure = "no attempts made";
    int backoff_ms = config_.retry.initial_backoff_ms;

    for (int attempt = 1; attempt <= config_.retry.attempts; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms *= 2;
        }
        httplib::Client client(config_.base_url);
        client.set_read_timeout(config_.timeout_seconds, 0);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        auto result = client.Post(config_.path, headers, payload, "application/json");
        if (!result) {
            last_failure = "transport error: " + httplib::to_string(result.error());
            continue;
        }
        if (result->status == 200) {
            json parsed = json::parse(result->body, nullptr, false);
            if (parsed.is_discarded()) {
                throw Error(errkind::backend_unavailable,
                            "backend '" + config_.descriptor.id + "' returned malformed JSON");
            }
            const json& choice = parsed.at("choices").at(0);
            CompletionResponse response;
            if (config_.descriptor.style == BackendStyle::chat) {
                response.text = choice.at("message").at("content").get<std::string>();
            } else {
                response.text = choice.at("text").get<std::string>();
            }
            response.finish_reason = finish_reason_from_api(choice.value("finish_reason", "stop"));
            if (request.want_logprobs && choice.contains("logprobs") &&
                !choice.at("logprobs").is_null()) {
                const json& lp = choice.at("logprobs");
                std::vector<TokenLogprob> logprobs;
                if (lp.contains("tokens") && lp.contains("token_logprobs")) {
                    // completions schema: parallel arrays
                    const json& tokens = lp.at("tokens");
                    const json& values = lp.at("token_logprobs");
                    for (std::size_t i = 0; i < tokens.size() && i < values.size(); ++i) {
                        if (values[i].is_null()) {
                            continue;  // first prompt token has null logprob
                        }
                        logprobs.push_back(
                            {tokens[i].get<std::string>(), values[i].get<double>()});
                    }
                } else if (lp.contains("content")) {
                    // chat schema: [{token, logprob}, ...]
                    for (const auto& e : lp.at("content")) {
                        logprobs.push_back(
                            {e.at("token").get<std::string>(), e.at("logprob").get<double>()});
                    }
                }
                if (!logprobs.empty()) {
                    response.token_logprobs = std::move(logprobs);
                }
            }
            return response;
        }
        if (is_transient_status(result->status)) {
            last_failure = "status " + std::to_string(result->status);
            continue;
        }
        throw Error(errkind::backend_unavailable,
                    "backend '" + config_.descriptor.id + "' returned status " +
                        std::to_string(result->status) + ": " + result->body);
    }
    throw Error(errkind::backend_unavailable,
                "backend '" + config_.descriptor.id + "' unreachable after " +
                    std::to_string(config_.retry.attempts) + " attempts (" + last_failure + ")");
}

}  // namespace crossexam
