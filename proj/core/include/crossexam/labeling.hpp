#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace crossexam {

enum class GoldLabel { correct, incorrect, excluded };

const char* to_string(GoldLabel label);
GoldLabel gold_label_from_string(const std::string& s);

/// Text normalization shared by labeling, falsehood verification and the
/// IDK-style detectors: lowercases (ASCII + Latin-1), folds typographic
/// punctuation to ASCII (curly apostrophes/quotes, dashes, ellipsis,
/// non-breaking space), collapses whitespace runs to single spaces and trims.
/// Idempotent: normalize(normalize(x)) == normalize(x).
std::string normalize(std::string_view text);

/// True iff `needle` (normalized) occurs as a substring of `haystack`
/// (normalized). Plain substring matching, not word-boundary.
bool normalized_contains(std::string_view haystack, std::string_view needle);

struct OverrideEntry {
    std::string item_id;
    GoldLabel label = GoldLabel::correct;
    std::string note;
};

nlohmann::json override_to_json(const OverrideEntry& e);
OverrideEntry override_from_json(const nlohmann::json& j);

/// Override file: JSON Lines of OverrideEntry.
std::vector<OverrideEntry> load_overrides(const std::string& path);

/// Correct iff the normalized gold answer or any normalized alias is a
/// substring of the normalized claim text; otherwise Incorrect.
GoldLabel label_claim_text(const std::string& claim_text, const std::string& gold_answer,
                           const std::vector<std::string>& aliases);

/// Applies manual overrides on top of automatic labels. Overrides win;
/// Excluded marks the item for removal from every downstream metric.
/// Unknown ids -> override-error.
std::map<std::string, GoldLabel> apply_overrides(std::map<std::string, GoldLabel> labels,
                                                 const std::vector<OverrideEntry>& overrides);

}  // namespace crossexam
