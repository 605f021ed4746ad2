#include "crossexam/prompts.hpp"

#include <array>
#include <cctype>
#include <sstream>

#include "crossexam/jsonl.hpp"

#include "prompts_data.hpp"

namespace crossexam {

using nlohmann::json;

namespace {

constexpr std::array<const char*, 13> kRequiredKeys = {
    prompt_key::setup_chat,         prompt_key::setup_completion,
    prompt_key::followup_ask,       prompt_key::followup_get,
    prompt_key::decision,           prompt_key::examinee_answer,
    prompt_key::claim_from_question, prompt_key::claim_phrase_suffix,
    prompt_key::ays,                prompt_key::idk_suffix,
    prompt_key::falsehood_question, prompt_key::falsehood_completion,
    prompt_key::falsehood_phrase_suffix,
};

bool is_placeholder_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
}

/// Scans the body for {name} spans; returns (name, start, end-past-brace).
std::vector<std::tuple<std::string, std::size_t, std::size_t>> scan_placeholders(
    const std::string& body) {
    std::vector<std::tuple<std::string, std::size_t, std::size_t>> spans;
    std::size_t i = 0;
    while (i < body.size()) {
        if (body[i] != '{') {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < body.size() && is_placeholder_char(body[j])) {
            ++j;
        }
        if (j > i + 1 && j < body.size() && body[j] == '}') {
            spans.emplace_back(body.substr(i + 1, j - i - 1), i, j + 1);
            i = j + 1;
        } else {
            ++i;  // stray brace, left verbatim
        }
    }
    return spans;
}

}  // namespace

const char* to_string(PromptStyle style) {
    switch (style) {
        case PromptStyle::chat: return "chat";
        case PromptStyle::completion: return "completion";
        case PromptStyle::both: return "both";
    }
    return "both";
}

PromptStyle prompt_style_from_string(const std::string& s) {
    if (s == "chat") return PromptStyle::chat;
    if (s == "completion") return PromptStyle::completion;
    if (s == "both") return PromptStyle::both;
    throw Error(errkind::template_error, "unknown prompt style: " + s);
}

std::vector<std::string> PromptTemplate::placeholders() const {
    std::vector<std::string> names;
    for (const auto& [name, begin, end] : scan_placeholders(body)) {
        (void)begin;
        (void)end;
        if (std::find(names.begin(), names.end(), name) == names.end()) {
            names.push_back(name);
        }
    }
    return names;
}

std::string render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& bindings) {
    auto spans = scan_placeholders(tmpl.body);
    std::vector<std::string> missing;
    for (const auto& [name, begin, end] : spans) {
        (void)begin;
        (void)end;
        if (!bindings.count(name) &&
            std::find(missing.begin(), missing.end(), name) == missing.end()) {
            missing.push_back(name);
        }
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "template '" << tmpl.name << "' missing bindings:";
        for (const auto& name : missing) {
            msg << " {" << name << "}";
        }
        throw Error(errkind::template_error, msg.str());
    }
    std::string out;
    out.reserve(tmpl.body.size());
    std::size_t cursor = 0;
    for (const auto& [name, begin, end] : spans) {
        out.append(tmpl.body, cursor, begin - cursor);
        out.append(bindings.at(name));
        cursor = end;
    }
    out.append(tmpl.body, cursor, tmpl.body.size() - cursor);
    return out;
}

PromptCatalog PromptCatalog::builtin() {
    return from_json(json::parse(detail::kBuiltinPromptsJson));
}

PromptCatalog PromptCatalog::from_file(const std::string& path) {
    json j = json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) {
        throw Error(errkind::template_error, "prompt catalog file is not valid JSON: " + path);
    }
    return from_json(j);
}

PromptCatalog PromptCatalog::from_json(const json& j) {
    if (!j.is_object()) {
        throw Error(errkind::template_error, "prompt catalog must be a JSON object");
    }
    PromptCatalog catalog;
    for (const auto& [key, value] : j.items()) {
        PromptTemplate tmpl;
        tmpl.name = key;
        tmpl.style = prompt_style_from_string(value.value("style", "both"));
        tmpl.body = value.at("body").get<std::string>();
        catalog.entries_[key] = std::move(tmpl);
    }
    catalog.validate();
    return catalog;
}

const PromptTemplate& PromptCatalog::at(std::string_view key) const {
    auto it = entries_.find(std::string(key));
    if (it == entries_.end()) {
        throw Error(errkind::template_error, "prompt catalog has no entry '" + std::string(key) + "'");
    }
    return it->second;
}

bool PromptCatalog::contains(std::string_view key) const {
    return entries_.count(std::string(key)) > 0;
}

const PromptTemplate& PromptCatalog::get(std::string_view stage, BackendStyle style) const {
    if (stage == "setup") {
        return at(style == BackendStyle::chat ? prompt_key::setup_chat
                                              : prompt_key::setup_completion);
    }
    const PromptTemplate& tmpl = at(stage);
    if (tmpl.style != PromptStyle::both &&
        tmpl.style != (style == BackendStyle::chat ? PromptStyle::chat : PromptStyle::completion)) {
        throw Error(errkind::template_error,
                    "prompt '" + std::string(stage) + "' is not declared for style " +
                        to_string(style));
    }
    return tmpl;
}

void PromptCatalog::validate() const {
    std::vector<std::string> missing;
    for (const char* key : kRequiredKeys) {
        if (!entries_.count(key)) {
            missing.emplace_back(key);
        }
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "prompt catalog incomplete, missing:";
        for (const auto& key : missing) {
            msg << " " << key;
        }
        throw Error(errkind::template_error, msg.str());
    }
    if (at(prompt_key::setup_chat).style != PromptStyle::chat ||
        at(prompt_key::setup_completion).style != PromptStyle::completion) {
        throw Error(errkind::template_error, "setup templates must declare their style");
    }
}

std::pair<std::string, std::string> split_first_sentence(const std::string& body) {
    // Sentence boundary in the *template*: ". " outside any placeholder.
    auto spans = scan_placeholders(body);
    std::size_t pos = 0;
    while (true) {
        pos = body.find(". ", pos);
        if (pos == std::string::npos) {
            return {body, ""};
        }
        bool inside = false;
        for (const auto& [name, begin, end] : spans) {
            (void)name;
            if (pos >= begin && pos < end) {
                inside = true;
                break;
            }
        }
        if (!inside) {
            break;
        }
        ++pos;
    }
    std::string first = body.substr(0, pos + 1);
    std::size_t rest = body.find_first_not_of(' ', pos + 1);
    return {first, rest == std::string::npos ? "" : body.substr(rest)};
}

}  // namespace crossexam
