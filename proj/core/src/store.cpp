#include "crossexam/store.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "crossexam/jsonl.hpp"

namespace crossexam {

using nlohmann::json;
namespace fs = std::filesystem;

json record_to_json(const StoredRecord& r) {
    json j{{"item_id", r.item_id},
           {"detector", r.detector},
           {"verdict", to_string(r.verdict)},
           {"aborted", r.aborted}};
    if (r.score) {
        j["score"] = *r.score;
    }
    if (!r.metadata.empty()) {
        j["metadata"] = r.metadata;
    }
    return j;
}

StoredRecord record_from_json(const json& j) {
    StoredRecord r;
    r.item_id = j.at("item_id").get<std::string>();
    r.detector = j.value("detector", "");
    r.verdict = verdict_from_string(j.at("verdict").get<std::string>());
    r.aborted = j.value("aborted", false);
    if (j.contains("score")) {
        r.score = j.at("score").get<double>();
    }
    if (j.contains("metadata")) {
        r.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
    }
    return r;
}

json manifest_to_json(const RunManifest& m) {
    json j{{"schema_version", kStoreSchemaVersion},
           {"run_id", m.run_id},
           {"detector", m.detector},
           {"dataset_path", m.dataset_path},
           {"claims_path", m.claims_path},
           {"examiner_id", m.examiner_id},
           {"examinee_id", m.examinee_id},
           {"config_snapshot", m.config_snapshot},
           {"started_at", m.started_at},
           {"finished_at", m.finished_at},
           {"counts",
            {{"completed", m.counts.completed},
             {"aborted", m.counts.aborted},
             {"cached", m.counts.cached}}}};
    if (m.seed) {
        j["seed"] = *m.seed;
    }
    return j;
}

RunManifest manifest_from_json(const json& j) {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.detector = j.value("detector", "");
    m.dataset_path = j.value("dataset_path", "");
    m.claims_path = j.value("claims_path", "");
    m.examiner_id = j.value("examiner_id", "");
    m.examinee_id = j.value("examinee_id", "");
    m.config_snapshot = j.value("config_snapshot", json::object());
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    if (j.contains("counts")) {
        m.counts.completed = j.at("counts").value("completed", 0u);
        m.counts.aborted = j.at("counts").value("aborted", 0u);
        m.counts.cached = j.at("counts").value("cached", 0u);
    }
    if (j.contains("seed")) {
        m.seed = j.at("seed").get<std::uint64_t>();
    }
    return m;
}

TranscriptStore::TranscriptStore(std::string directory) : directory_(std::move(directory)) {
    std::error_code ec;
    fs::create_directories(directory_, ec);
    if (ec) {
        throw Error(errkind::io_error, "cannot create store directory " + directory_);
    }
}

std::string TranscriptStore::transcripts_path() const {
    return (fs::path(directory_) / "transcripts.jsonl").string();
}

std::string TranscriptStore::records_path() const {
    return (fs::path(directory_) / "records.jsonl").string();
}

std::string TranscriptStore::manifest_path() const {
    return (fs::path(directory_) / "manifest.json").string();
}

void TranscriptStore::append_transcript(const std::string& item_id, const Transcript& transcript,
                                        int majority_run) {
    json line = transcript_to_json(transcript);
    line["item_id"] = item_id;
    if (majority_run >= 0) {
        line["majority_run"] = majority_run;
    }
    std::lock_guard<std::mutex> lock(write_mutex_);
    append_jsonl_line(transcripts_path(), line);
}

void TranscriptStore::append_record(const StoredRecord& record) {
    std::lock_guard<std::mutex> lock(write_mutex_);
    append_jsonl_line(records_path(), record_to_json(record));
}

std::vector<std::pair<std::string, Transcript>> TranscriptStore::load_transcripts() const {
    std::vector<std::pair<std::string, Transcript>> out;
    std::ifstream probe(transcripts_path());
    if (!probe.good()) {
        return out;
    }
    JsonlReadResult raw = read_jsonl(transcripts_path());
    for (const auto& line : raw.lines) {
        out.emplace_back(line.value.value("item_id", ""), transcript_from_json(line.value));
    }
    return out;
}

std::vector<StoredRecord> TranscriptStore::load_records() const {
    std::vector<StoredRecord> out;
    std::ifstream probe(records_path());
    if (!probe.good()) {
        return out;
    }
    JsonlReadResult raw = read_jsonl(records_path());
    for (const auto& line : raw.lines) {
        out.push_back(record_from_json(line.value));
    }
    return out;
}

std::vector<Transcript> TranscriptStore::find_transcripts(const std::string& item_id) const {
    std::vector<Transcript> out;
    for (auto& [id, transcript] : load_transcripts()) {
        if (id == item_id) {
            out.push_back(std::move(transcript));
        }
    }
    return out;
}

bool TranscriptStore::has_manifest() const {
    std::ifstream probe(manifest_path());
    return probe.good();
}

RunManifest TranscriptStore::load_manifest() const {
    json j = json::parse(read_text_file(manifest_path()), nullptr, false);
    if (j.is_discarded()) {
        throw Error(errkind::io_error, "manifest is not valid JSON: " + manifest_path());
    }
    return manifest_from_json(j);
}

void TranscriptStore::write_manifest(const RunManifest& manifest) {
    std::lock_guard<std::mutex> lock(write_mutex_);
    write_text_file(manifest_path(), manifest_to_json(manifest).dump(2) + "\n");
}

std::string render_transcript(const Transcript& transcript) {
    std::ostringstream out;
    out << "Examinee: " << transcript.claim << "\n\n";
    for (const auto& turn : transcript.turns) {
        switch (turn.kind) {
            case TurnKind::setup:
            case TurnKind::followup_probe:
            case TurnKind::followup_reply:
                continue;  // orchestration exchanges, not printed speech
            case TurnKind::question_batch:
                continue;  // raw batch; individual questions are printed below
            case TurnKind::question:
            case TurnKind::decision:
                out << "Examiner: " << turn.text << "\n\n";
                break;
            case TurnKind::answer:
                out << "Examinee: " << turn.text << "\n\n";
                break;
        }
    }
    out << "Verdict: " << (transcript.decision.verdict == Verdict::accept ? "Accept" : "Reject");
    if (transcript.decision.inconclusive) {
        out << " (inconclusive)";
    }
    out << "\n";
    return out.str();
}

}  // namespace crossexam
