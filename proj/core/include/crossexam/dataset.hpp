#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crossexam/backend.hpp"
#include "crossexam/labeling.hpp"
#include "crossexam/prompts.hpp"

namespace crossexam {

enum class QueryFormat { question, fill_blank };

const char* to_string(QueryFormat f);
QueryFormat query_format_from_string(const std::string& s);

/// Unified QA item schema. Source datasets are converted offline into this
/// JSONL form (see README).
struct QAItem {
    std::string id;
    std::string dataset;
    std::string query;
    QueryFormat query_format = QueryFormat::question;
    std::string gold_answer;
    std::vector<std::string> aliases;
};

nlohmann::json qa_item_to_json(const QAItem& item);
QAItem qa_item_from_json(const nlohmann::json& j);

struct DatasetLoadResult {
    struct RejectedLine {
        std::size_t line_number = 0;  // 1-based
        std::string error;
        std::string raw;
    };

    std::vector<QAItem> items;
    std::vector<RejectedLine> rejects;
};

/// Loads a JSONL dataset. Malformed lines go to the rejects report instead
/// of being dropped silently; more than 10% malformed or a duplicate id is a
/// dataset-error, an unreadable file an io-error.
DatasetLoadResult load_dataset(const std::string& path);

/// Seeded uniform sample without replacement (partial Fisher-Yates); the
/// output order is a deterministic function of the seed. n == items.size()
/// yields a full permutation.
std::vector<QAItem> sample_subset(const std::vector<QAItem>& items, std::size_t n,
                                  std::uint64_t seed);

enum class ClaimMode { truthful, falsehood };

const char* to_string(ClaimMode m);
ClaimMode claim_mode_from_string(const std::string& s);

struct GeneratedClaim {
    std::string item_id;
    std::string text;
    std::string generator_backend;
    ClaimMode mode = ClaimMode::truthful;
    std::string prompt_used;
    /// Logprobs of the generated answer tokens, captured when the generating
    /// backend advertises the capability; consumed by the confidence detector.
    std::optional<std::vector<double>> answer_logprobs;
};

nlohmann::json claim_to_json(const GeneratedClaim& c);
GeneratedClaim claim_from_json(const nlohmann::json& j);

std::vector<GeneratedClaim> load_claims(const std::string& path);

struct GenOptions {
    double temperature = 0.0;
    int max_tokens = 512;
    std::optional<std::uint64_t> seed;
    bool want_logprobs = false;
};

/// Question-format items are prompted to answer in claim form; fill-blank
/// items are completed and the blank replaced by the completion, so the
/// original query prefix survives verbatim. Empty completions are a
/// generation-error.
GeneratedClaim generate_claim(const QAItem& item, Backend& backend, const PromptCatalog& catalog,
                              const GenOptions& options = {});

/// True iff neither the normalized gold answer nor any normalized alias
/// occurs as a substring of the normalized claim text.
bool verify_falsehood(const std::string& claim_text, const QAItem& item);

struct FalsehoodResult {
    std::optional<GeneratedClaim> claim;  // nullopt = discarded
    int attempts = 0;
};

/// Prompts for a deliberately wrong answer and keeps the result only when
/// verify_falsehood passes; retries up to max_attempts before counting the
/// item as discarded.
FalsehoodResult generate_falsehood(const QAItem& item, Backend& backend,
                                   const PromptCatalog& catalog, const GenOptions& options = {},
                                   int max_attempts = 3);

/// Correct iff the gold answer or an alias appears as a substring of the
/// claim (shared normalization); otherwise Incorrect.
GoldLabel auto_label(const GeneratedClaim& claim, const QAItem& item);

}  // namespace crossexam
