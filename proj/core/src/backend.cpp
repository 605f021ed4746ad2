#include "crossexam/backend.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "crossexam/jsonl.hpp"

namespace crossexam {

using nlohmann::json;

namespace {

std::string trim_copy(std::string_view s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) {
        return "";
    }
    auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

const std::string* last_user_message(const std::vector<ChatMessage>& messages) {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role == Role::user) {
            return &it->content;
        }
    }
    return nullptr;
}

void validate_scripted_reply(const ScriptedReply& reply, bool logprobs_enabled) {
    if (logprobs_enabled && !reply.token_logprobs) {
        throw Error(errkind::config_error,
                    "scripted backend advertises logprobs but reply '" + reply.text +
                        "' carries none");
    }
}

CompletionResponse reply_to_response(const ScriptedReply& reply, bool want_logprobs) {
    CompletionResponse response;
    response.text = reply.text;
    if (want_logprobs) {
        response.token_logprobs = reply.token_logprobs;
    }
    response.finish_reason = FinishReason::stop;
    return response;
}

}  // namespace

const char* to_string(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

Role role_from_string(const std::string& s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw Error(errkind::value_error, "unknown role: " + s);
}

const char* to_string(BackendStyle style) {
    return style == BackendStyle::chat ? "chat" : "completion";
}

BackendStyle backend_style_from_string(const std::string& s) {
    if (s == "chat") return BackendStyle::chat;
    if (s == "completion") return BackendStyle::completion;
    throw Error(errkind::value_error, "unknown backend style: " + s);
}

CompletionResponse Backend::complete(const CompletionRequest& request) {
    const auto& desc = descriptor();
    if (request.messages.empty()) {
        throw Error(errkind::value_error, "completion request has no messages");
    }
    for (const auto& message : request.messages) {
        if (trim_copy(message.content).empty()) {
            throw Error(errkind::value_error, "completion request has an empty message");
        }
    }
    if (request.temperature < 0.0) {
        throw Error(errkind::value_error, "temperature must be >= 0");
    }
    if (request.max_tokens <= 0) {
        throw Error(errkind::value_error, "max_tokens must be positive");
    }
    if (request.want_logprobs && !desc.supports_logprobs) {
        throw Error(errkind::capability_error,
                    "backend '" + desc.id + "' does not support logprobs");
    }

    CompletionResponse response = generate(request);

    // Logprob presence contract: present iff requested and advertised.
    if (!request.want_logprobs) {
        response.token_logprobs.reset();
    } else if (!response.token_logprobs) {
        throw Error(errkind::capability_error,
                    "backend '" + desc.id + "' advertised logprobs but returned none");
    } else {
        for (const auto& tl : *response.token_logprobs) {
            if (tl.logprob > 0.0) {
                throw Error(errkind::value_error, "logprob > 0 in backend response");
            }
        }
    }
    return response;
}

std::string flatten_messages(const std::vector<ChatMessage>& messages) {
    std::ostringstream out;
    for (const auto& message : messages) {
        switch (message.role) {
            case Role::system: out << "System: "; break;
            case Role::user: out << "User: "; break;
            case Role::assistant: out << "Assistant: "; break;
        }
        out << message.content << "\n\n";
    }
    out << "Assistant:";
    return out.str();
}

// ---------------------------------------------------------------------------
// Scripted backends
// ---------------------------------------------------------------------------

ScriptedMapBackend::ScriptedMapBackend(std::string id, std::map<std::string, ScriptedReply> script,
                                       BackendStyle style)
    : script_(std::move(script)) {
    if (script_.empty()) {
        throw Error(errkind::value_error, "scripted backend requires a non-empty script");
    }
    descriptor_.id = std::move(id);
    descriptor_.style = style;
    descriptor_.supports_seed = true;
    descriptor_.supports_logprobs =
        std::all_of(script_.begin(), script_.end(),
                    [](const auto& kv) { return kv.second.token_logprobs.has_value(); });
}

CompletionResponse ScriptedMapBackend::generate(const CompletionRequest& request) {
    const std::string* key = last_user_message(request.messages);
    if (!key) {
        throw Error(errkind::script_miss,
                    "scripted backend '" + descriptor_.id + "': no user message to key on");
    }
    auto it = script_.find(*key);
    if (it == script_.end()) {
        throw Error(errkind::script_miss,
                    "scripted backend '" + descriptor_.id + "': no entry for key \"" + *key + "\"");
    }
    validate_scripted_reply(it->second, request.want_logprobs);
    return reply_to_response(it->second, request.want_logprobs);
}

ScriptedSequenceBackend::ScriptedSequenceBackend(std::string id, std::vector<ScriptedReply> script,
                                                 BackendStyle style)
    : script_(std::move(script)) {
    if (script_.empty()) {
        throw Error(errkind::value_error, "scripted backend requires a non-empty script");
    }
    descriptor_.id = std::move(id);
    descriptor_.style = style;
    descriptor_.supports_seed = true;
    descriptor_.supports_logprobs =
        std::all_of(script_.begin(), script_.end(),
                    [](const auto& r) { return r.token_logprobs.has_value(); });
}

CompletionResponse ScriptedSequenceBackend::generate(const CompletionRequest& request) {
    if (cursor_ >= script_.size()) {
        throw Error(errkind::script_miss, "scripted backend '" + descriptor_.id +
                                              "': sequence exhausted after " +
                                              std::to_string(script_.size()) + " replies");
    }
    const ScriptedReply& reply = script_[cursor_++];
    validate_scripted_reply(reply, request.want_logprobs);
    return reply_to_response(reply, request.want_logprobs);
}

// ---------------------------------------------------------------------------
// Cassettes
// ---------------------------------------------------------------------------

json request_to_json(const std::string& backend_id, const CompletionRequest& request) {
    json messages = json::array();
    for (const auto& message : request.messages) {
        messages.push_back({{"role", to_string(message.role)}, {"content", message.content}});
    }
    json j{{"backend_id", backend_id},
           {"messages", std::move(messages)},
           {"temperature", request.temperature},
           {"max_tokens", request.max_tokens},
           {"want_logprobs", request.want_logprobs}};
    if (request.seed) {
        j["seed"] = *request.seed;
    }
    return j;
}

json response_to_json(const CompletionResponse& response) {
    json j{{"text", response.text}};
    switch (response.finish_reason) {
        case FinishReason::stop: j["finish_reason"] = "stop"; break;
        case FinishReason::length: j["finish_reason"] = "length"; break;
        case FinishReason::error: j["finish_reason"] = "error"; break;
    }
    if (response.token_logprobs) {
        json lps = json::array();
        for (const auto& tl : *response.token_logprobs) {
            lps.push_back({{"token", tl.token}, {"logprob", tl.logprob}});
        }
        j["token_logprobs"] = std::move(lps);
    }
    return j;
}

CompletionResponse response_from_json(const json& j) {
    CompletionResponse response;
    response.text = j.at("text").get<std::string>();
    std::string reason = j.value("finish_reason", "stop");
    if (reason == "length") {
        response.finish_reason = FinishReason::length;
    } else if (reason == "error") {
        response.finish_reason = FinishReason::error;
    } else {
        response.finish_reason = FinishReason::stop;
    }
    if (j.contains("token_logprobs")) {
        std::vector<TokenLogprob> lps;
        for (const auto& e : j.at("token_logprobs")) {
            lps.push_back({e.at("token").get<std::string>(), e.at("logprob").get<double>()});
        }
        response.token_logprobs = std::move(lps);
    }
    return response;
}

std::string hash_request(const std::string& backend_id, const CompletionRequest& request) {
    // max_tokens (and want_logprobs) are excluded so cassettes survive
    // budget tuning.
    json key{{"backend_id", backend_id}, {"temperature", request.temperature}};
    json messages = json::array();
    for (const auto& message : request.messages) {
        messages.push_back({{"role", to_string(message.role)}, {"content", message.content}});
    }
    key["messages"] = std::move(messages);
    if (request.seed) {
        key["seed"] = *request.seed;
    }
    return fnv1a_hex(key.dump());
}

std::vector<CassetteEntry> load_cassette(const std::string& path) {
    JsonlReadResult raw = read_jsonl(path);
    if (!raw.bad_lines.empty()) {
        throw Error(errkind::io_error, "cassette " + path + " has malformed line " +
                                           std::to_string(raw.bad_lines.front().first));
    }
    std::vector<CassetteEntry> entries;
    entries.reserve(raw.lines.size());
    for (const auto& line : raw.lines) {
        CassetteEntry entry;
        entry.request_hash = line.value.at("request_hash").get<std::string>();
        entry.request = line.value.at("request");
        entry.response = line.value.at("response");
        entry.recorded_at = line.value.value("recorded_at", "");
        entries.push_back(std::move(entry));
    }
    return entries;
}

CassetteWriter::CassetteWriter(std::string path) : path_(std::move(path)) {
    // Probe writability up front so record_wrap fails fast on a bad path.
    std::ofstream probe(path_, std::ios::app);
    if (!probe) {
        throw Error(errkind::io_error, "cassette path not writable: " + path_);
    }
}

void CassetteWriter::append(const std::string& backend_id, const CompletionRequest& request,
                            const CompletionResponse& response) {
    json line{{"request_hash", hash_request(backend_id, request)},
              {"request", request_to_json(backend_id, request)},
              {"response", response_to_json(response)},
              {"recorded_at", utc_timestamp()}};
    std::lock_guard<std::mutex> lock(mutex_);
    append_jsonl_line(path_, line);
}

RecordingBackend::RecordingBackend(BackendPtr inner, std::shared_ptr<CassetteWriter> writer)
    : inner_(std::move(inner)), writer_(std::move(writer)) {}

CompletionResponse RecordingBackend::generate(const CompletionRequest& request) {
    CompletionResponse response = inner_->complete(request);
    writer_->append(inner_->descriptor().id, request, response);
    return response;
}

BackendPtr record_wrap(BackendPtr inner, const std::string& cassette_path) {
    auto writer = std::make_shared<CassetteWriter>(cassette_path);
    return std::make_shared<RecordingBackend>(std::move(inner), std::move(writer));
}

ReplayBackend::ReplayBackend(BackendDescriptor descriptor,
                             const std::vector<CassetteEntry>& entries)
    : descriptor_(std::move(descriptor)) {
    for (const auto& entry : entries) {
        if (entry.request.value("backend_id", descriptor_.id) != descriptor_.id) {
            continue;
        }
        queues_[entry.request_hash].push_back(entry.response);
        last_[entry.request_hash] = entry.response;
    }
}

CompletionResponse ReplayBackend::generate(const CompletionRequest& request) {
    std::string hash = hash_request(descriptor_.id, request);
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = queues_.find(hash);
    if (it == queues_.end()) {
        throw Error(errkind::backend_unavailable,
                    "replay backend '" + descriptor_.id + "': no recorded response for hash " +
                        hash);
    }
    if (!it->second.empty()) {
        json response = it->second.front();
        it->second.pop_front();
        return response_from_json(response);
    }
    return response_from_json(last_.at(hash));
}

CachingBackend::CachingBackend(BackendPtr inner, const std::string& cassette_path)
    : inner_(std::move(inner)) {
    std::ifstream exists(cassette_path);
    if (exists.good()) {
        for (const auto& entry : load_cassette(cassette_path)) {
            if (entry.request.value("backend_id", inner_->descriptor().id) !=
                inner_->descriptor().id) {
                continue;
            }
            queues_[entry.request_hash].push_back(entry.response);
            last_[entry.request_hash] = entry.response;
        }
    }
    writer_ = std::make_shared<CassetteWriter>(cassette_path);
}

CompletionResponse CachingBackend::generate(const CompletionRequest& request) {
    std::string hash = hash_request(inner_->descriptor().id, request);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = queues_.find(hash);
        if (it != queues_.end()) {
            if (!it->second.empty()) {
                json response = it->second.front();
                it->second.pop_front();
                return response_from_json(response);
            }
            return response_from_json(last_.at(hash));
        }
    }
    CompletionResponse response = inner_->complete(request);
    writer_->append(inner_->descriptor().id, request, response);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        last_[hash] = response_to_json(response);
    }
    return response;
}

void CallBudget::charge() {
    std::lock_guard<std::mutex> lock(mutex_);
    if (used_ >= max_calls_) {
        throw Error(errkind::budget_exhausted,
                    "backend call budget of " + std::to_string(max_calls_) + " exhausted");
    }
    ++used_;
}

std::uint64_t CallBudget::used() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return used_;
}

}  // namespace crossexam
