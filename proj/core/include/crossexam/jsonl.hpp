#pragma once

#include <functional>
#include <string>
#include <vector>

#include "crossexam/errors.hpp"

#include "json.hpp"

namespace crossexam {

struct JsonlLine {
    std::size_t line_number = 0;  // 1-based
    nlohmann::json value;
};

/// Reads a JSONL file. Blank lines are skipped. A malformed *final* line is
/// tolerated (torn tail after a crash) and reported via `torn_tail`;
/// malformed interior lines are collected into `bad_lines`.
struct JsonlReadResult {
    std::vector<JsonlLine> lines;
    std::vector<std::pair<std::size_t, std::string>> bad_lines;  // (line number, raw text)
    bool torn_tail = false;
};

JsonlReadResult read_jsonl(const std::string& path);

/// Appends one object per call as a single line+newline write, serialized
/// through the caller's locking. Throws io-error when the file cannot be
/// opened.
void append_jsonl_line(const std::string& path, const nlohmann::json& value);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

/// ISO-8601 UTC timestamp, e.g. "2024-05-01T12:00:00Z".
std::string utc_timestamp();

/// FNV-1a 64-bit over a byte string, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::uint64_t fnv1a64(std::string_view bytes);

/// splitmix64 mix step; used wherever derived seeds are needed.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace crossexam
