#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "crossexam/errors.hpp"

#include "json.hpp"

namespace crossexam {

enum class Role { system, user, assistant };

const char* to_string(Role role);
Role role_from_string(const std::string& s);

struct ChatMessage {
    Role role = Role::user;
    std::string content;
};

struct TokenLogprob {
    std::string token;
    double logprob = 0.0;  // always <= 0
};

struct CompletionRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 512;
    std::optional<std::uint64_t> seed;
    bool want_logprobs = false;
};

enum class FinishReason { stop, length, error };

struct CompletionResponse {
    std::string text;
    std::optional<std::vector<TokenLogprob>> token_logprobs;
    FinishReason finish_reason = FinishReason::stop;
};

enum class BackendStyle { chat, completion };

const char* to_string(BackendStyle style);
BackendStyle backend_style_from_string(const std::string& s);

struct BackendDescriptor {
    std::string id;
    BackendStyle style = BackendStyle::chat;
    bool supports_logprobs = false;
    bool supports_seed = false;
};

/// Text-generation backend. complete() validates the request against the
/// shared invariants (non-empty messages, trimmed-non-empty contents,
/// temperature >= 0, logprobs capability) before dispatching, and enforces
/// that token_logprobs is present iff it was requested and advertised.
///
/// Handles are shared across concurrent examinations; implementations must
/// make generate() safe to call from multiple threads unless documented
/// otherwise (sequence scripts are single-examination only).
class Backend {
public:
    virtual ~Backend() = default;

    virtual const BackendDescriptor& descriptor() const = 0;

    CompletionResponse complete(const CompletionRequest& request);

protected:
    virtual CompletionResponse generate(const CompletionRequest& request) = 0;
};

using BackendPtr = std::shared_ptr<Backend>;

/// Collapses a chat message list into a single prompt for completion-style
/// models: one "Role: content" block per message, ending with an
/// "Assistant:" cue.
std::string flatten_messages(const std::vector<ChatMessage>& messages);

/// One scripted reply: plain text, optionally with token logprobs for
/// backends that advertise the logprobs capability.
struct ScriptedReply {
    std::string text;
    std::optional<std::vector<TokenLogprob>> token_logprobs;
};

/// Deterministic backend answering by exact-key lookup on the final user
/// message. Missing key -> script-miss (tests must fail loudly).
class ScriptedMapBackend : public Backend {
public:
    ScriptedMapBackend(std::string id, std::map<std::string, ScriptedReply> script,
                       BackendStyle style = BackendStyle::chat);

    const BackendDescriptor& descriptor() const override { return descriptor_; }

protected:
    CompletionResponse generate(const CompletionRequest& request) override;

private:
    BackendDescriptor descriptor_;
    std::map<std::string, ScriptedReply> script_;
};

/// Consumes a fixed reply sequence in order; raises script-miss on
/// exhaustion. Stateful cursor: single-examination use only, do not share
/// across concurrent exams.
class ScriptedSequenceBackend : public Backend {
public:
    ScriptedSequenceBackend(std::string id, std::vector<ScriptedReply> script,
                            BackendStyle style = BackendStyle::chat);

    const BackendDescriptor& descriptor() const override { return descriptor_; }

    std::size_t replies_served() const { return cursor_; }

protected:
    CompletionResponse generate(const CompletionRequest& request) override;

private:
    BackendDescriptor descriptor_;
    std::vector<ScriptedReply> script_;
    std::size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// Cassettes (record / replay)
// ---------------------------------------------------------------------------

/// Cassette line: {request_hash, request, response, recorded_at}, one JSON
/// object per line. The hash covers (backend id, messages, temperature,
/// seed); max_tokens is excluded so cassettes survive budget tuning.
struct CassetteEntry {
    std::string request_hash;
    nlohmann::json request;
    nlohmann::json response;
    std::string recorded_at;
};

std::string hash_request(const std::string& backend_id, const CompletionRequest& request);

nlohmann::json request_to_json(const std::string& backend_id, const CompletionRequest& request);
nlohmann::json response_to_json(const CompletionResponse& response);
CompletionResponse response_from_json(const nlohmann::json& j);

std::vector<CassetteEntry> load_cassette(const std::string& path);

/// Append-only cassette writer. Appends are serialized through one writer
/// so concurrent examinations can share it.
class CassetteWriter {
public:
    explicit CassetteWriter(std::string path);

    void append(const std::string& backend_id, const CompletionRequest& request,
                const CompletionResponse& response);

    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::mutex mutex_;
};

/// Pass-through wrapper that records every (request, response) pair.
class RecordingBackend : public Backend {
public:
    RecordingBackend(BackendPtr inner, std::shared_ptr<CassetteWriter> writer);

    const BackendDescriptor& descriptor() const override { return inner_->descriptor(); }

protected:
    CompletionResponse generate(const CompletionRequest& request) override;

private:
    BackendPtr inner_;
    std::shared_ptr<CassetteWriter> writer_;
};

/// record_wrap: wraps `inner` so every completed call is appended to the
/// cassette at `path`.
BackendPtr record_wrap(BackendPtr inner, const std::string& cassette_path);

/// Serves recorded responses only. Entries sharing a request hash are
/// replayed in recording order; once a hash's queue is exhausted the last
/// recorded response is repeated so re-running a sequence stays
/// deterministic. Unknown hash -> backend-unavailable.
class ReplayBackend : public Backend {
public:
    ReplayBackend(BackendDescriptor descriptor, const std::vector<CassetteEntry>& entries);

    const BackendDescriptor& descriptor() const override { return descriptor_; }

protected:
    CompletionResponse generate(const CompletionRequest& request) override;

private:
    BackendDescriptor descriptor_;
    std::map<std::string, std::deque<nlohmann::json>> queues_;
    std::map<std::string, nlohmann::json> last_;
    std::mutex mutex_;
};

/// Replay-or-record cache: serves a hash from the cassette when present,
/// otherwise calls the inner backend and appends the new entry. A second
/// identical run issues zero inner calls.
class CachingBackend : public Backend {
public:
    CachingBackend(BackendPtr inner, const std::string& cassette_path);

    const BackendDescriptor& descriptor() const override { return inner_->descriptor(); }

protected:
    CompletionResponse generate(const CompletionRequest& request) override;

private:
    BackendPtr inner_;
    std::shared_ptr<CassetteWriter> writer_;
    std::map<std::string, std::deque<nlohmann::json>> queues_;
    std::map<std::string, nlohmann::json> last_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Remote HTTP backend (JSON chat-completions schema)
// ---------------------------------------------------------------------------

struct RetryPolicy {
    int attempts = 3;
    int initial_backoff_ms = 1000;  // doubles per retry
};

struct HttpBackendConfig {
    BackendDescriptor descriptor;
    std::string base_url;          // e.g. "https://api.openai.com" or "http://127.0.0.1:8089"
    std::string path;              // e.g. "/v1/chat/completions"
    std::string model;             // model id sent in the request body
    std::string api_key_env;       // environment variable holding the bearer token
    RetryPolicy retry;
    int timeout_seconds = 120;
};

/// Chat-completions HTTP client. Completion-style descriptors flatten the
/// message list into a single prompt with role headers. Transient failures
/// (transport errors, 429, 5xx) are retried with exponential backoff.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config);

    const BackendDescriptor& descriptor() const override { return config_.descriptor; }

protected:
    CompletionResponse generate(const CompletionRequest& request) override;

private:
    HttpBackendConfig config_;
};

/// Shared call budget. Wraps backends so a run can be aborted cleanly once
/// the configured number of backend calls is exceeded.
class CallBudget {
public:
    explicit CallBudget(std::uint64_t max_calls) : max_calls_(max_calls) {}

    /// Throws budget-exhausted once the budget is used up.
    void charge();

    std::uint64_t used() const;

private:
    std::uint64_t max_calls_;
    std::uint64_t used_ = 0;
    mutable std::mutex mutex_;
};

class BudgetedBackend : public Backend {
public:
    BudgetedBackend(BackendPtr inner, std::shared_ptr<CallBudget> budget)
        : inner_(std::move(inner)), budget_(std::move(budget)) {}

    const BackendDescriptor& descriptor() const override { return inner_->descriptor(); }

protected:
    CompletionResponse generate(const CompletionRequest& request) override {
        budget_->charge();
        return inner_->complete(request);
    }

private:
    BackendPtr inner_;
    std::shared_ptr<CallBudget> budget_;
};

}  // namespace crossexam
