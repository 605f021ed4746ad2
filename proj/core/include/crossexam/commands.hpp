#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crossexam/config.hpp"
#include "crossexam/dataset.hpp"
#include "crossexam/evaluation.hpp"
#include "crossexam/store.hpp"

namespace crossexam {

/// generate-claims / falsehoods. Resumable: items already present in the
/// output file are skipped; a resume under a different seed is a run-error.
struct GenerateOptions {
    std::string dataset_path;
    std::string backend_id;
    std::string out_path;
    std::optional<std::size_t> n;
    std::uint64_t seed = 0;
    ClaimMode mode = ClaimMode::truthful;
    bool want_logprobs = false;
};

struct GenerateReport {
    std::size_t written = 0;
    std::size_t cached = 0;
    std::size_t discarded = 0;  // falsehoods failing verification
    std::size_t failed = 0;
};

GenerateReport cmd_generate_claims(RunConfig& config, const GenerateOptions& options);

struct ExamineOptions {
    std::string claims_path;
    std::string dataset_path;
    std::string examiner_id;
    std::string examinee_id;
    std::string detector;  // registry name
    std::string store_dir;
    std::size_t jobs = 1;
    std::optional<std::uint64_t> seed;
    bool no_followups = false;
    bool majority = false;  // upgrades lmvlm to lmvlm-majority
    std::optional<std::uint64_t> max_backend_calls;
};

struct ExamineReport {
    RunCounts counts;
    bool budget_exhausted = false;
};

/// Judges every claim with the selected detector under a bounded worker
/// pool; appends one record (and the transcripts, when the detector
/// produces them) per claim. Per-claim failures are recorded as aborted and
/// the run continues; an exceeded call budget aborts the run cleanly.
ExamineReport cmd_examine(RunConfig& config, const ExamineOptions& options);

enum class ReportFormat { json, markdown };

struct EvaluateOptions {
    std::string store_dir;
    std::string dataset_path;
    std::string claims_path;
    std::optional<std::string> overrides_path;
    std::string out_path;
    ReportFormat format = ReportFormat::json;
};

struct EvaluateReport {
    std::vector<ReportEntry> entries;
    std::optional<ExamStats> stats;
    std::string rendered;
};

/// Joins stored records with auto labels (+ manual overrides), drops
/// Excluded items, and emits the metrics report. Records without a label
/// source -> evaluation-error listing the ids. Falsehood claim files
/// additionally get rejection accuracy.
EvaluateReport cmd_evaluate(const EvaluateOptions& options);

ExamStats cmd_stats(const TranscriptStore& store);

/// Pretty-prints the transcript(s) recorded for one item. Unknown id ->
/// not-found.
std::string cmd_replay(const TranscriptStore& store, const std::string& item_id);

}  // namespace crossexam
