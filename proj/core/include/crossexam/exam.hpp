#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crossexam/backend.hpp"
#include "crossexam/prompts.hpp"

namespace crossexam {

enum class Verdict { accept, reject };

const char* to_string(Verdict v);
Verdict verdict_from_string(const std::string& s);

/// Final examiner decision. Inconclusive outputs (neither "correct" nor
/// "incorrect") count as rejection, so inconclusive=true implies reject.
struct RawDecision {
    Verdict verdict = Verdict::reject;
    bool inconclusive = false;
    std::string source_text;
};

enum class Speaker { examiner, examinee, system };
enum class TurnKind { setup, question_batch, question, answer, followup_probe, followup_reply, decision };

const char* to_string(Speaker s);
const char* to_string(TurnKind k);
Speaker speaker_from_string(const std::string& s);
TurnKind turn_kind_from_string(const std::string& s);

struct Turn {
    int index = 0;
    Speaker speaker = Speaker::system;
    TurnKind kind = TurnKind::setup;
    std::string text;
};

struct TranscriptCounters {
    int questions_total = 0;
    int followup_iterations = 0;
    std::vector<int> questions_per_iteration;  // index 0 = setup batch
};

struct Transcript {
    std::string claim;
    std::vector<Turn> turns;
    RawDecision decision;
    TranscriptCounters counters;
    bool cap_hit = false;
    std::optional<std::uint64_t> run_seed;
    bool aborted = false;
    std::string abort_reason;
};

nlohmann::json transcript_to_json(const Transcript& t);
Transcript transcript_from_json(const nlohmann::json& j);

/// Recomputes counters from the turn list. Examiner question-batch turns
/// open an iteration; system-speaker question-batch turns are annotations
/// (e.g. the zero-questions note) and do not. followup_iterations counts
/// followup-reply turns whose text parses to yes.
TranscriptCounters recompute_counters(const Transcript& t);

struct ExamConfig {
    int max_followup_iterations = 5;
    int max_questions_per_batch = 10;
    bool followups_enabled = true;
    double examiner_temperature = 0.0;
    double examinee_temperature = 0.0;
    int majority_runs = 3;
    double majority_temperature = 1.0;
    std::optional<std::uint64_t> seed;
};

/// Thrown when a backend fails mid-examination; carries the partial
/// transcript (aborted=true, decision reject+inconclusive).
class ExamAborted : public Error {
public:
    ExamAborted(const std::string& message, Transcript partial)
        : Error(errkind::exam_aborted, message), partial_(std::move(partial)) {}

    const Transcript& partial() const { return partial_; }

private:
    Transcript partial_;
};

/// Pulls individual questions out of an examiner output. Numbered items
/// ("1." / "1)") are preferred; otherwise lines ending in "?"; otherwise the
/// whole text when it ends in "?". Result is truncated to max_questions.
/// An empty list is a valid outcome.
std::vector<std::string> extract_questions(const std::string& text, int max_questions = 10);

/// Trim + lowercase; true iff the text starts with "yes". Everything else,
/// including empty text, is false (the conservative default ends the
/// follow-up loop).
bool parse_yes_no(std::string_view text);

/// Case-insensitive scan: "incorrect" (checked first, since "incorrect"
/// contains "correct") -> reject; else "correct" -> accept; anything else ->
/// reject with inconclusive=true. Total: every string yields a decision.
/// Known coarse edge: "not incorrect" parses as reject under the scan order.
RawDecision parse_decision(const std::string& text);

/// Runs one three-stage cross-examination of `claim`:
///   1. setup prompt -> examiner question batch; each extracted question is
///      sent to the examinee one at a time with the full prior context;
///   2. follow-up loop: probe -> (if yes) fetch new questions, answer them;
///      ends when the probe parses to no or the iteration cap is reached;
///   3. decision prompt -> parse_decision.
/// With followups_enabled=false stage 2 is skipped entirely (the transcript
/// contains zero followup-probe turns).
Transcript run_examination(const std::string& claim, const BackendPtr& examiner,
                           const BackendPtr& examinee, const PromptCatalog& catalog,
                           const ExamConfig& config);

/// Majority rule over single-run verdicts: reject iff rejections >=
/// ceil(n/2). Vote list must be non-empty.
Verdict majority_verdict(const std::vector<Verdict>& votes);

struct MajorityResult {
    Verdict verdict = Verdict::reject;
    std::vector<Transcript> transcripts;
};

/// Runs config.majority_runs (odd) independent examinations at sampling
/// temperature config.majority_temperature with distinct derived seeds. An
/// aborted run counts as a reject vote (inconclusive, flagged on its
/// transcript).
MajorityResult run_majority(const std::string& claim, const BackendPtr& examiner,
                            const BackendPtr& examinee, const PromptCatalog& catalog,
                            const ExamConfig& config);

/// Derives the per-run seed for majority run `run_index` (splitmix64 over
/// the base seed). Exposed so cassette-backed reruns stay cache-hit stable.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t run_index);

}  // namespace crossexam
