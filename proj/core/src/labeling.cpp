#include "crossexam/labeling.hpp"

#include <cstdint>

#include "crossexam/errors.hpp"
#include "crossexam/jsonl.hpp"

namespace crossexam {

using nlohmann::json;

namespace {

/// Decodes one UTF-8 code point starting at `i`; on malformed input the
/// single byte is passed through as-is.
std::uint32_t decode_utf8(std::string_view s, std::size_t& i) {
    unsigned char c0 = static_cast<unsigned char>(s[i]);
    if (c0 < 0x80) {
        ++i;
        return c0;
    }
    auto cont = [&](std::size_t k) {
        return i + k < s.size() && (static_cast<unsigned char>(s[i + k]) & 0xC0) == 0x80;
    };
    if ((c0 & 0xE0) == 0xC0 && cont(1)) {
        std::uint32_t cp = (c0 & 0x1Fu) << 6 | (static_cast<unsigned char>(s[i + 1]) & 0x3Fu);
        i += 2;
        return cp;
    }
    if ((c0 & 0xF0) == 0xE0 && cont(1) && cont(2)) {
        std::uint32_t cp = (c0 & 0x0Fu) << 12 | (static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 6 |
                           (static_cast<unsigned char>(s[i + 2]) & 0x3Fu);
        i += 3;
        return cp;
    }
    if ((c0 & 0xF8) == 0xF0 && cont(1) && cont(2) && cont(3)) {
        std::uint32_t cp = (c0 & 0x07u) << 18 | (static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 12 |
                           (static_cast<unsigned char>(s[i + 2]) & 0x3Fu) << 6 |
                           (static_cast<unsigned char>(s[i + 3]) & 0x3Fu);
        i += 4;
        return cp;
    }
    ++i;
    return c0;
}

void encode_utf8(std::uint32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

/// Folds a code point for matching. Returns the replacement as a small
/// string (a fold can expand, e.g. ellipsis -> "..."), or empty when the
/// code point is whitespace.
void fold_codepoint(std::uint32_t cp, std::string& out, bool& pending_space) {
    // Whitespace classes: ASCII ws, NBSP, Unicode space separators.
    bool is_space = cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' ||
                    cp == '\v' || cp == 0xA0 || (cp >= 0x2000 && cp <= 0x200B) || cp == 0x202F ||
                    cp == 0x3000;
    if (is_space) {
        pending_space = true;
        return;
    }
    if (pending_space) {
        if (!out.empty()) {
            out.push_back(' ');
        }
        pending_space = false;
    }
    // ASCII lowercase.
    if (cp >= 'A' && cp <= 'Z') {
        out.push_back(static_cast<char>(cp - 'A' + 'a'));
        return;
    }
    // Latin-1 uppercase (keeps the multiplication sign 0xD7 intact).
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) {
        encode_utf8(cp + 0x20, out);
        return;
    }
    switch (cp) {
        case 0x2018:  // left single quote
        case 0x2019:  // right single quote / curly apostrophe
        case 0x201A:
        case 0x201B:
        case 0x02BC:  // modifier letter apostrophe
        case 0x0060:  // backtick
        case 0x00B4:  // acute accent
            out.push_back('\'');
            return;
        case 0x201C:  // curly double quotes
        case 0x201D:
        case 0x201E:
        case 0x201F:
            out.push_back('"');
            return;
        case 0x2010:  // hyphen/dash family
        case 0x2011:
        case 0x2012:
        case 0x2013:
        case 0x2014:
        case 0x2015:
        case 0x2212:  // minus sign
            out.push_back('-');
            return;
        case 0x2026:  // ellipsis
            out.append("...");
            return;
        default:
            encode_utf8(cp, out);
            return;
    }
}

}  // namespace

const char* to_string(GoldLabel label) {
    switch (label) {
        case GoldLabel::correct: return "correct";
        case GoldLabel::incorrect: return "incorrect";
        case GoldLabel::excluded: return "excluded";
    }
    return "correct";
}

GoldLabel gold_label_from_string(const std::string& s) {
    if (s == "correct") return GoldLabel::correct;
    if (s == "incorrect") return GoldLabel::incorrect;
    if (s == "excluded") return GoldLabel::excluded;
    throw Error(errkind::value_error, "unknown gold label: " + s);
}

std::string normalize(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    std::size_t i = 0;
    while (i < text.size()) {
        std::uint32_t cp = decode_utf8(text, i);
        fold_codepoint(cp, out, pending_space);
    }
    return out;
}

bool normalized_contains(std::string_view haystack, std::string_view needle) {
    std::string h = normalize(haystack);
    std::string n = normalize(needle);
    if (n.empty()) {
        return false;
    }
    return h.find(n) != std::string::npos;
}

GoldLabel label_claim_text(const std::string& claim_text, const std::string& gold_answer,
                           const std::vector<std::string>& aliases) {
    if (normalized_contains(claim_text, gold_answer)) {
        return GoldLabel::correct;
    }
    for (const auto& alias : aliases) {
        if (normalized_contains(claim_text, alias)) {
            return GoldLabel::correct;
        }
    }
    return GoldLabel::incorrect;
}

json override_to_json(const OverrideEntry& e) {
    return {{"item_id", e.item_id}, {"label", to_string(e.label)}, {"note", e.note}};
}

OverrideEntry override_from_json(const json& j) {
    OverrideEntry e;
    e.item_id = j.at("item_id").get<std::string>();
    e.label = gold_label_from_string(j.at("label").get<std::string>());
    e.note = j.value("note", "");
    return e;
}

std::vector<OverrideEntry> load_overrides(const std::string& path) {
    JsonlReadResult raw = read_jsonl(path);
    if (!raw.bad_lines.empty()) {
        throw Error(errkind::override_error, "override file " + path + " has malformed line " +
                                                 std::to_string(raw.bad_lines.front().first));
    }
    std::vector<OverrideEntry> overrides;
    for (const auto& line : raw.lines) {
        overrides.push_back(override_from_json(line.value));
    }
    return overrides;
}

std::map<std::string, GoldLabel> apply_overrides(std::map<std::string, GoldLabel> labels,
                                                 const std::vector<OverrideEntry>& overrides) {
    for (const auto& entry : overrides) {
        auto it = labels.find(entry.item_id);
        if (it == labels.end()) {
            throw Error(errkind::override_error,
                        "override references unknown item id '" + entry.item_id + "'");
        }
        it->second = entry.label;
    }
    return labels;
}

}  // namespace crossexam
