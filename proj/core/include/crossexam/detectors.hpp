#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "crossexam/dataset.hpp"
#include "crossexam/exam.hpp"

namespace crossexam {

/// Everything a detector may need to judge one claim.
struct ClaimContext {
    std::string item_id;
    std::string question;
    QueryFormat query_format = QueryFormat::question;
    std::string claim;
    std::optional<std::vector<double>> claim_logprobs;
    std::optional<std::string> train_split_ref;
};

struct DetectorOutcome {
    Verdict verdict = Verdict::reject;
    std::optional<double> score;
    std::map<std::string, std::string> metadata;  // raw replies, thresholds, flags
};

/// Outcome plus any transcripts produced along the way (empty for the
/// non-examination baselines).
struct DetectionResult {
    DetectorOutcome outcome;
    std::vector<Transcript> transcripts;
};

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

/// "Are you sure?" appended right after the claim; yes -> accept, no ->
/// reject, anything else -> reject with an unparseable-reply flag.
DetectorOutcome detect_ays(const ClaimContext& ctx, Backend& backend, const PromptCatalog& catalog);

/// Re-asks the original query with the I-don't-know suffix; a reply
/// containing "i don't know" (normalized) rejects the claim.
DetectorOutcome detect_idk(const ClaimContext& ctx, Backend& backend, const PromptCatalog& catalog);

struct HeldoutExample {
    QAItem item;
    std::string model_answer;
    GoldLabel label = GoldLabel::correct;  // correct / incorrect only
};

std::vector<HeldoutExample> load_heldout(const std::string& path);

struct IcIdkDemo {
    std::string query;
    std::string target;  // gold answer or "Don't know"
};

/// Samples d failure demos (labeled "Don't know") and k-d success demos
/// (labeled with their gold answers) from the held-out pool, then shuffles;
/// fully determined by the seed. Insufficient pools -> demo-error stating
/// the counts.
std::vector<IcIdkDemo> build_icidk_demos(const std::vector<HeldoutExample>& heldout, int k, int d,
                                         std::uint64_t seed);

/// In-context variant: demos + query; a reply containing "don't know"
/// (normalized) rejects, an empty reply rejects with a flag.
DetectorOutcome detect_icidk(const ClaimContext& ctx, const std::vector<IcIdkDemo>& demos,
                             Backend& backend);

/// Product of token probabilities, computed in log space: exp(sum(logprobs)).
/// Empty list -> value-error.
double claim_confidence(const std::vector<double>& logprobs);

struct ConfidenceModel {
    double threshold = 0.0;
    double fit_f1 = 0.0;  // max rejection-side F1 achievable on the train split
};

/// Scans thresholds at midpoints between consecutive sorted unique
/// confidences (plus +-infinity sentinels) and keeps the one maximizing
/// rejection-side F1; ties break toward the smaller threshold. Train data
/// must contain both classes, else fit-error.
ConfidenceModel fit_confidence_threshold(
    const std::vector<std::pair<double, GoldLabel>>& train);

/// Threshold rule: reject iff confidence < threshold. Missing logprobs ->
/// detector-error.
DetectorOutcome detect_confidence(const ClaimContext& ctx, const ConfidenceModel& model);

/// Single or majority cross-examination of the claim.
DetectionResult detect_lmvlm(const ClaimContext& ctx, const BackendPtr& examiner,
                             const BackendPtr& examinee, const PromptCatalog& catalog,
                             const ExamConfig& config, bool majority);

/// Two-stage ensemble: AYS first; an AYS accept is final (zero examination
/// calls), an AYS reject is re-decided by majority cross-examination.
DetectionResult detect_ensemble(const ClaimContext& ctx, const BackendPtr& examiner,
                                const BackendPtr& examinee, const PromptCatalog& catalog,
                                const ExamConfig& config);

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// Uniform interface every factuality method implements. Detectors are
/// stateless given their construction inputs and safe to run concurrently
/// across claims.
class Detector {
public:
    virtual ~Detector() = default;
    virtual std::string name() const = 0;
    virtual DetectionResult run(const ClaimContext& ctx) = 0;
};

struct DetectorDeps {
    BackendPtr examiner;
    BackendPtr examinee;
    const PromptCatalog* catalog = nullptr;
    ExamConfig exam_config;
    std::optional<ConfidenceModel> confidence_model;
    std::vector<IcIdkDemo> icidk_demos;
};

/// CLI-facing registry names.
std::vector<std::string> detector_names();

/// Builds a detector by registry name (lmvlm, lmvlm-majority, ays, idk,
/// ic-idk, confidence, ays+lmvlm). Unknown name -> value-error; a detector
/// whose requirements are not met (e.g. confidence without a logprobs
/// capable pipeline) -> detector-error marking it unsupported.
std::unique_ptr<Detector> make_detector(const std::string& name, const DetectorDeps& deps);

}  // namespace crossexam
