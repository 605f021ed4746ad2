#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "crossexam/detectors.hpp"
#include "crossexam/exam.hpp"

namespace crossexam {

inline constexpr int kStoreSchemaVersion = 1;

/// One verdict line in records.jsonl.
struct StoredRecord {
    std::string item_id;
    std::string detector;
    Verdict verdict = Verdict::reject;
    std::optional<double> score;
    bool aborted = false;
    std::map<std::string, std::string> metadata;
};

nlohmann::json record_to_json(const StoredRecord& r);
StoredRecord record_from_json(const nlohmann::json& j);

struct RunCounts {
    std::size_t completed = 0;
    std::size_t aborted = 0;
    std::size_t cached = 0;
};

struct RunManifest {
    std::string run_id;
    std::string detector;
    std::string dataset_path;
    std::string claims_path;
    std::string examiner_id;
    std::string examinee_id;
    std::optional<std::uint64_t> seed;
    nlohmann::json config_snapshot;  // immutable once written
    std::string started_at;
    std::string finished_at;
    RunCounts counts;
};

nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

/// Append-only run store: a directory holding transcripts.jsonl,
/// records.jsonl and manifest.json. Appends are line-atomic and serialized
/// through a single writer; readers may scan concurrently at line
/// granularity. A torn final line (crash mid-append) is ignored on load.
class TranscriptStore {
public:
    explicit TranscriptStore(std::string directory);

    const std::string& directory() const { return directory_; }

    void append_transcript(const std::string& item_id, const Transcript& transcript,
                           int majority_run = -1);
    void append_record(const StoredRecord& record);

    std::vector<std::pair<std::string, Transcript>> load_transcripts() const;
    std::vector<StoredRecord> load_records() const;

    /// All transcripts recorded for one item (several under majority).
    std::vector<Transcript> find_transcripts(const std::string& item_id) const;

    bool has_manifest() const;
    RunManifest load_manifest() const;
    void write_manifest(const RunManifest& manifest);

    std::string transcripts_path() const;
    std::string records_path() const;
    std::string manifest_path() const;

private:
    std::string directory_;
    std::mutex write_mutex_;
};

/// Renders one transcript in the two-speaker layout used for human review:
/// "Examinee:" / "Examiner:" blocks in turn order.
std::string render_transcript(const Transcript& transcript);

}  // namespace crossexam
