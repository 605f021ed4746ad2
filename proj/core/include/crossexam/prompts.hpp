#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "crossexam/backend.hpp"

namespace crossexam {

enum class PromptStyle { chat, completion, both };

const char* to_string(PromptStyle style);
PromptStyle prompt_style_from_string(const std::string& s);

/// A template body with {name} placeholders.
struct PromptTemplate {
    std::string name;
    PromptStyle style = PromptStyle::both;
    std::string body;

    /// Placeholder names referenced by the body, in first-occurrence order.
    std::vector<std::string> placeholders() const;
};

/// Exact substitution of every placeholder; the body is not otherwise
/// modified. Throws template-error listing the missing names when bindings
/// do not cover all placeholders.
std::string render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& bindings);

/// Catalog keys. "setup" exists in both styles; everything else is shared.
namespace prompt_key {
inline constexpr const char* setup_chat = "setup-chat";
inline constexpr const char* setup_completion = "setup-completion";
inline constexpr const char* followup_ask = "followup-ask";
inline constexpr const char* followup_get = "followup-get";
inline constexpr const char* decision = "decision";
inline constexpr const char* examinee_answer = "examinee-answer";
inline constexpr const char* claim_from_question = "claim-from-question";
inline constexpr const char* claim_phrase_suffix = "claim-phrase-suffix";
inline constexpr const char* ays = "ays";
inline constexpr const char* idk_suffix = "idk-suffix";
inline constexpr const char* falsehood_question = "falsehood-question";
inline constexpr const char* falsehood_completion = "falsehood-completion";
inline constexpr const char* falsehood_phrase_suffix = "falsehood-phrase-suffix";
}  // namespace prompt_key

/// Immutable after load; freely shareable across threads.
class PromptCatalog {
public:
    /// The bundled catalog (embedded copy of core/resources/prompts.json).
    static PromptCatalog builtin();

    /// Load from a JSON map key -> {style, body}; validates completeness.
    static PromptCatalog from_file(const std::string& path);
    static PromptCatalog from_json(const nlohmann::json& j);

    /// Stage lookup: "setup" resolves per style; other stages must either
    /// match the requested style or be declared for both.
    const PromptTemplate& get(std::string_view stage, BackendStyle style) const;

    const PromptTemplate& at(std::string_view key) const;
    bool contains(std::string_view key) const;

    /// Completeness invariant: every required key present, every body's
    /// placeholders well formed. Throws template-error on violation.
    void validate() const;

    const std::map<std::string, PromptTemplate>& entries() const { return entries_; }

private:
    std::map<std::string, PromptTemplate> entries_;
};

/// Splits a chat-style setup template at the first sentence boundary of the
/// *template* (placeholders are opaque, so claim text cannot split the
/// sentence): first sentence becomes the system message, remainder the user
/// message. Used when mapping the setup prompt onto chat roles.
std::pair<std::string, std::string> split_first_sentence(const std::string& body);

}  // namespace crossexam
