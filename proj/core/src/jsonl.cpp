#include "crossexam/jsonl.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

namespace crossexam {

using nlohmann::json;

JsonlReadResult read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(errkind::io_error, "cannot open " + path);
    }
    JsonlReadResult result;
    std::string line;
    std::size_t line_number = 0;
    std::optional<std::pair<std::size_t, std::string>> pending_bad;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        // A previously seen bad line was not the last one: real corruption.
        if (pending_bad) {
            result.bad_lines.push_back(*pending_bad);
            pending_bad.reset();
        }
        json value = json::parse(line, nullptr, false);
        if (value.is_discarded()) {
            pending_bad = {line_number, line};
            continue;
        }
        result.lines.push_back({line_number, std::move(value)});
    }
    if (pending_bad) {
        // Torn tail from an interrupted append; ignore the fragment.
        result.torn_tail = true;
    }
    return result;
}

void append_jsonl_line(const std::string& path, const json& value) {
    std::ofstream out(path, std::ios::app);
    if (!out) {
        throw Error(errkind::io_error, "cannot append to " + path);
    }
    out << value.dump() << '\n';
    out.flush();
    if (!out) {
        throw Error(errkind::io_error, "write failed for " + path);
    }
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw Error(errkind::io_error, "cannot write " + path);
    }
    out << content;
    if (!out) {
        throw Error(errkind::io_error, "write failed for " + path);
    }
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(errkind::io_error, "cannot open " + path);
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string utc_timestamp() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t hash = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        hash ^= static_cast<std::uint64_t>(c);
        hash *= 1099511628211ULL;
    }
    return hash;
}

std::string fnv1a_hex(std::string_view bytes) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t hash = fnv1a64(bytes);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[hash & 0xF];
        hash >>= 4;
    }
    return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace crossexam
