#include "crossexam/dataset.hpp"

#include <algorithm>
#include <random>
#include <set>

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

/// Finds the blank marker in a fill-in query: the first run of two or more
/// underscores.
std::pair<std::size_t, std::size_t> find_blank(const std::string& query) {
    std::size_t begin = query.find("__");
    if (begin == std::string::npos) {
        return {std::string::npos, 0};
    }
    std::size_t end = begin;
    while (end < query.size() && query[end] == '_') {
        ++end;
    }
    return {begin, end - begin};
}

CompletionResponse generate_text(Backend& backend, const std::string& prompt,
                                 const GenOptions& options) {
    CompletionRequest request;
    request.messages = {{Role::user, prompt}};
    request.temperature = options.temperature;
    request.max_tokens = options.max_tokens;
    request.seed = options.seed;
    request.want_logprobs = options.want_logprobs && backend.descriptor().supports_logprobs;
    return backend.complete(request);
}

std::optional<std::vector<double>> logprob_values(const CompletionResponse& response) {
    if (!response.token_logprobs) {
        return std::nullopt;
    }
    std::vector<double> values;
    values.reserve(response.token_logprobs->size());
    for (const auto& tl : *response.token_logprobs) {
        values.push_back(tl.logprob);
    }
    return values;
}

}  // namespace

const char* to_string(QueryFormat f) {
    return f == QueryFormat::question ? "question" : "fill_blank";
}

QueryFormat query_format_from_string(const std::string& s) {
    if (s == "question") return QueryFormat::question;
    if (s == "fill_blank") return QueryFormat::fill_blank;
    throw Error(errkind::value_error, "unknown query format: " + s);
}

const char* to_string(ClaimMode m) {
    return m == ClaimMode::truthful ? "truthful" : "falsehood";
}

ClaimMode claim_mode_from_string(const std::string& s) {
    if (s == "truthful") return ClaimMode::truthful;
    if (s == "falsehood") return ClaimMode::falsehood;
    throw Error(errkind::value_error, "unknown claim mode: " + s);
}

json qa_item_to_json(const QAItem& item) {
    return {{"id", item.id},
            {"dataset", item.dataset},
            {"query", item.query},
            {"query_format", to_string(item.query_format)},
            {"gold_answer", item.gold_answer},
            {"aliases", item.aliases}};
}

QAItem qa_item_from_json(const json& j) {
    QAItem item;
    item.id = j.at("id").get<std::string>();
    item.dataset = j.value("dataset", "");
    item.query = j.at("query").get<std::string>();
    item.query_format = query_format_from_string(j.value("query_format", "question"));
    item.gold_answer = j.at("gold_answer").get<std::string>();
    if (j.contains("aliases")) {
        item.aliases = j.at("aliases").get<std::vector<std::string>>();
    }
    if (item.id.empty()) {
        throw Error(errkind::value_error, "item id must be non-empty");
    }
    if (trim_copy(item.gold_answer).empty()) {
        throw Error(errkind::value_error, "gold_answer must be non-empty");
    }
    if (trim_copy(item.query).empty()) {
        throw Error(errkind::value_error, "query must be non-empty");
    }
    return item;
}

DatasetLoadResult load_dataset(const std::string& path) {
    JsonlReadResult raw = read_jsonl(path);
    DatasetLoadResult result;
    std::size_t total_lines = raw.lines.size() + raw.bad_lines.size();
    for (const auto& [line_number, text] : raw.bad_lines) {
        result.rejects.push_back({line_number, "not valid JSON", text});
    }
    std::set<std::string> seen_ids;
    for (const auto& line : raw.lines) {
        try {
            QAItem item = qa_item_from_json(line.value);
            if (!seen_ids.insert(item.id).second) {
                throw Error(errkind::dataset_error,
                            "duplicate item id '" + item.id + "' at line " +
                                std::to_string(line.line_number));
            }
            result.items.push_back(std::move(item));
        } catch (const Error& e) {
            if (std::string(e.kind()) == errkind::dataset_error) {
                throw;
            }
            result.rejects.push_back({line.line_number, e.what(), line.value.dump()});
        } catch (const json::exception& e) {
            result.rejects.push_back({line.line_number, e.what(), line.value.dump()});
        }
    }
    if (total_lines > 0 && result.rejects.size() * 10 > total_lines) {
        throw Error(errkind::dataset_error,
                    "dataset " + path + " has " + std::to_string(result.rejects.size()) + "/" +
                        std::to_string(total_lines) + " malformed lines (>10%)");
    }
    return result;
}

std::vector<QAItem> sample_subset(const std::vector<QAItem>& items, std::size_t n,
                                  std::uint64_t seed) {
    if (n > items.size()) {
        throw Error(errkind::value_error, "sample size " + std::to_string(n) +
                                              " exceeds population " +
                                              std::to_string(items.size()));
    }
    std::vector<std::size_t> indices(items.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        indices[i] = i;
    }
    // Partial Fisher-Yates: the first n slots are a uniform sample, in an
    // order fully determined by the seed.
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, indices.size() - 1);
        std::swap(indices[i], indices[pick(rng)]);
    }
    std::vector<QAItem> sample;
    sample.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        sample.push_back(items[indices[i]]);
    }
    return sample;
}

json claim_to_json(const GeneratedClaim& c) {
    json j{{"item_id", c.item_id},
           {"text", c.text},
           {"generator_backend", c.generator_backend},
           {"mode", to_string(c.mode)},
           {"prompt_used", c.prompt_used}};
    if (c.answer_logprobs) {
        j["answer_logprobs"] = *c.answer_logprobs;
    }
    return j;
}

GeneratedClaim claim_from_json(const json& j) {
    GeneratedClaim c;
    c.item_id = j.at("item_id").get<std::string>();
    c.text = j.at("text").get<std::string>();
    c.generator_backend = j.value("generator_backend", "");
    c.mode = claim_mode_from_string(j.value("mode", "truthful"));
    c.prompt_used = j.value("prompt_used", "");
    if (j.contains("answer_logprobs")) {
        c.answer_logprobs = j.at("answer_logprobs").get<std::vector<double>>();
    }
    return c;
}

std::vector<GeneratedClaim> load_claims(const std::string& path) {
    JsonlReadResult raw = read_jsonl(path);
    if (!raw.bad_lines.empty()) {
        throw Error(errkind::io_error, "claims file " + path + " has malformed line " +
                                           std::to_string(raw.bad_lines.front().first));
    }
    std::vector<GeneratedClaim> claims;
    claims.reserve(raw.lines.size());
    for (const auto& line : raw.lines) {
        claims.push_back(claim_from_json(line.value));
    }
    return claims;
}

GeneratedClaim generate_claim(const QAItem& item, Backend& backend, const PromptCatalog& catalog,
                              const GenOptions& options) {
    GeneratedClaim claim;
    claim.item_id = item.id;
    claim.generator_backend = backend.descriptor().id;
    claim.mode = ClaimMode::truthful;

    if (item.query_format == QueryFormat::question) {
        std::string prompt = render(catalog.at(prompt_key::claim_from_question),
                                    {{"question", item.query}}) +
                             " " + render(catalog.at(prompt_key::claim_phrase_suffix), {});
        claim.prompt_used = prompt;
        CompletionResponse response = generate_text(backend, prompt, options);
        claim.text = trim_copy(response.text);
        claim.answer_logprobs = logprob_values(response);
        if (claim.text.empty()) {
            throw Error(errkind::generation_error, "empty claim for item " + item.id);
        }
        return claim;
    }

    // Fill-in-the-blank: complete the sentence prefix and substitute the
    // completion back into the query.
    auto [blank_begin, blank_len] = find_blank(item.query);
    std::string prompt = blank_begin == std::string::npos
                             ? item.query
                             : trim_copy(item.query.substr(0, blank_begin));
    claim.prompt_used = prompt;
    CompletionResponse response = generate_text(backend, prompt, options);
    std::string completion = trim_copy(response.text);
    claim.answer_logprobs = logprob_values(response);
    if (completion.empty()) {
        throw Error(errkind::generation_error, "empty completion for item " + item.id);
    }
    if (blank_begin == std::string::npos) {
        claim.text = trim_copy(item.query) + " " + completion;
    } else {
        claim.text = item.query.substr(0, blank_begin) + completion +
                     item.query.substr(blank_begin + blank_len);
    }
    return claim;
}

bool verify_falsehood(const std::string& claim_text, const QAItem& item) {
    if (normalized_contains(claim_text, item.gold_answer)) {
        return false;
    }
    for (const auto& alias : item.aliases) {
        if (normalized_contains(claim_text, alias)) {
            return false;
        }
    }
    return true;
}

FalsehoodResult generate_falsehood(const QAItem& item, Backend& backend,
                                   const PromptCatalog& catalog, const GenOptions& options,
                                   int max_attempts) {
    FalsehoodResult result;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        ++result.attempts;
        GenOptions attempt_options = options;
        if (options.seed) {
            attempt_options.seed = splitmix64(*options.seed + static_cast<std::uint64_t>(attempt));
        }

        GeneratedClaim claim;
        claim.item_id = item.id;
        claim.generator_backend = backend.descriptor().id;
        claim.mode = ClaimMode::falsehood;

        std::string text;
        if (item.query_format == QueryFormat::question) {
            std::string prompt = render(catalog.at(prompt_key::falsehood_question),
                                        {{"question", item.query}}) +
                                 " " +
                                 render(catalog.at(prompt_key::falsehood_phrase_suffix), {});
            claim.prompt_used = prompt;
            CompletionResponse response = generate_text(backend, prompt, attempt_options);
            text = trim_copy(response.text);
        } else {
            std::string prompt = render(catalog.at(prompt_key::falsehood_completion),
                                        {{"question", item.query}});
            claim.prompt_used = prompt;
            CompletionResponse response = generate_text(backend, prompt, attempt_options);
            std::string answer = trim_copy(response.text);
            if (answer.empty()) {
                throw Error(errkind::generation_error, "empty falsehood for item " + item.id);
            }
            auto [blank_begin, blank_len] = find_blank(item.query);
            if (blank_begin == std::string::npos) {
                text = trim_copy(item.query) + " " + answer;
            } else {
                text = item.query.substr(0, blank_begin) + answer +
                       item.query.substr(blank_begin + blank_len);
            }
        }
        if (text.empty()) {
            throw Error(errkind::generation_error, "empty falsehood for item " + item.id);
        }
        if (!verify_falsehood(text, item)) {
            continue;  // echoed the gold answer; counted as a discard attempt
        }
        claim.text = std::move(text);
        result.claim = std::move(claim);
        return result;
    }
    return result;  // discarded
}

GoldLabel auto_label(const GeneratedClaim& claim, const QAItem& item) {
    return label_claim_text(claim.text, item.gold_answer, item.aliases);
}

}  // namespace crossexam
