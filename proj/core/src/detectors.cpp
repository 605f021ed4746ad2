#include "crossexam/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "crossexam/jsonl.hpp"

namespace crossexam {

using nlohmann::json;

namespace {

std::string trim_copy(std::string_view s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) {
        return "";
    }
    auto end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

std::string single_reply(Backend& backend, std::vector<ChatMessage> messages,
                         double temperature = 0.0) {
    CompletionRequest request;
    request.messages = std::move(messages);
    request.temperature = temperature;
    try {
        return backend.complete(request).text;
    } catch (const Error& e) {
        if (e.kind() == errkind::script_miss || e.kind() == errkind::value_error ||
            e.kind() == errkind::budget_exhausted) {
            throw;
        }
        throw Error(errkind::detector_error, e.what());
    }
}

bool starts_with_no(std::string_view text) {
    std::string t = trim_copy(text);
    std::transform(t.begin(), t.end(), t.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return t.rfind("no", 0) == 0;
}

/// Rejection-side F1 of "reject iff confidence < threshold" over the train
/// points. Positive class is Incorrect.
double rejection_f1_at(const std::vector<std::pair<double, GoldLabel>>& train, double threshold) {
    std::size_t tp = 0, rejected = 0, incorrect = 0;
    for (const auto& [confidence, gold] : train) {
        bool reject = confidence < threshold;
        if (gold == GoldLabel::incorrect) {
            ++incorrect;
        }
        if (reject) {
            ++rejected;
            if (gold == GoldLabel::incorrect) {
                ++tp;
            }
        }
    }
    if (rejected == 0 || incorrect == 0 || tp == 0) {
        return 0.0;
    }
    double precision = static_cast<double>(tp) / static_cast<double>(rejected);
    double recall = static_cast<double>(tp) / static_cast<double>(incorrect);
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

DetectorOutcome detect_ays(const ClaimContext& ctx, Backend& backend,
                           const PromptCatalog& catalog) {
    if (trim_copy(ctx.claim).empty()) {
        throw Error(errkind::value_error, "AYS needs a claim");
    }
    std::string prompt = render(catalog.at(prompt_key::ays), {});
    // The probe lands right after the claim in the model's own context.
    std::string reply =
        single_reply(backend, {{Role::assistant, ctx.claim}, {Role::user, prompt}});

    DetectorOutcome outcome;
    outcome.metadata["raw_reply"] = reply;
    if (parse_yes_no(reply)) {
        outcome.verdict = Verdict::accept;
    } else {
        outcome.verdict = Verdict::reject;
        if (!starts_with_no(reply)) {
            outcome.metadata["flag"] = "unparseable-reply";
        }
    }
    return outcome;
}

DetectorOutcome detect_idk(const ClaimContext& ctx, Backend& backend,
                           const PromptCatalog& catalog) {
    if (trim_copy(ctx.question).empty()) {
        throw Error(errkind::value_error, "IDK needs the original question");
    }
    std::string suffix = render(catalog.at(prompt_key::idk_suffix), {});
    std::string reply = single_reply(backend, {{Role::user, ctx.question + "\n" + suffix}});

    DetectorOutcome outcome;
    outcome.metadata["raw_reply"] = reply;
    outcome.verdict = normalized_contains(reply, "i don't know") ? Verdict::reject
                                                                 : Verdict::accept;
    return outcome;
}

std::vector<HeldoutExample> load_heldout(const std::string& path) {
    JsonlReadResult raw = read_jsonl(path);
    std::vector<HeldoutExample> heldout;
    for (const auto& line : raw.lines) {
        HeldoutExample example;
        example.item = qa_item_from_json(line.value.at("item"));
        example.model_answer = line.value.value("model_answer", "");
        example.label = gold_label_from_string(line.value.at("label").get<std::string>());
        heldout.push_back(std::move(example));
    }
    return heldout;
}

std::vector<IcIdkDemo> build_icidk_demos(const std::vector<HeldoutExample>& heldout, int k, int d,
                                         std::uint64_t seed) {
    if (k <= 0 || d < 0 || d > k) {
        throw Error(errkind::value_error, "demo counts must satisfy 0 <= d <= k, k > 0");
    }
    std::vector<const HeldoutExample*> failures;
    std::vector<const HeldoutExample*> successes;
    for (const auto& example : heldout) {
        (example.label == GoldLabel::incorrect ? failures : successes).push_back(&example);
    }
    if (failures.size() < static_cast<std::size_t>(d) ||
        successes.size() < static_cast<std::size_t>(k - d)) {
        std::ostringstream msg;
        msg << "need " << d << " failures and " << (k - d) << " successes, have "
            << failures.size() << " and " << successes.size();
        throw Error(errkind::demo_error, msg.str());
    }

    std::mt19937_64 rng(seed);
    auto take = [&rng](std::vector<const HeldoutExample*>& pool, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        pool.resize(n);
    };
    take(failures, static_cast<std::size_t>(d));
    take(successes, static_cast<std::size_t>(k - d));

    std::vector<IcIdkDemo> demos;
    demos.reserve(static_cast<std::size_t>(k));
    for (const auto* example : failures) {
        demos.push_back({example->item.query, "Don't know"});
    }
    for (const auto* example : successes) {
        demos.push_back({example->item.query, example->item.gold_answer});
    }
    std::shuffle(demos.begin(), demos.end(), rng);
    return demos;
}

DetectorOutcome detect_icidk(const ClaimContext& ctx, const std::vector<IcIdkDemo>& demos,
                             Backend& backend) {
    if (demos.empty()) {
        throw Error(errkind::value_error, "IC-IDK needs at least one demo");
    }
    std::ostringstream prompt;
    for (const auto& demo : demos) {
        prompt << "Q: " << demo.query << "\nA: " << demo.target << "\n\n";
    }
    prompt << "Q: " << ctx.question << "\nA:";
    std::string reply = single_reply(backend, {{Role::user, prompt.str()}});

    DetectorOutcome outcome;
    outcome.metadata["raw_reply"] = reply;
    if (trim_copy(reply).empty()) {
        outcome.verdict = Verdict::reject;
        outcome.metadata["flag"] = "empty-reply";
    } else {
        outcome.verdict =
            normalized_contains(reply, "don't know") ? Verdict::reject : Verdict::accept;
    }
    return outcome;
}

double claim_confidence(const std::vector<double>& logprobs) {
    if (logprobs.empty()) {
        throw Error(errkind::value_error, "claim_confidence needs at least one logprob");
    }
    double sum = 0.0;
    for (double lp : logprobs) {
        sum += lp;
    }
    return std::exp(sum);
}

ConfidenceModel fit_confidence_threshold(const std::vector<std::pair<double, GoldLabel>>& train) {
    bool has_correct = false;
    bool has_incorrect = false;
    for (const auto& [confidence, gold] : train) {
        (void)confidence;
        has_correct |= gold == GoldLabel::correct;
        has_incorrect |= gold == GoldLabel::incorrect;
    }
    if (!has_correct || !has_incorrect) {
        throw Error(errkind::fit_error, "train split must contain both classes");
    }

    std::vector<double> values;
    values.reserve(train.size());
    for (const auto& [confidence, gold] : train) {
        (void)gold;
        values.push_back(confidence);
    }
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());

    std::vector<double> candidates;
    candidates.push_back(-std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        candidates.push_back(values[i] + (values[i + 1] - values[i]) / 2.0);
    }
    candidates.push_back(std::numeric_limits<double>::infinity());

    ConfidenceModel model;
    model.threshold = candidates.front();
    model.fit_f1 = -1.0;
    for (double candidate : candidates) {  // ascending: ties keep the smaller
        double f1 = rejection_f1_at(train, candidate);
        if (f1 > model.fit_f1) {
            model.fit_f1 = f1;
            model.threshold = candidate;
        }
    }
    return model;
}

DetectorOutcome detect_confidence(const ClaimContext& ctx, const ConfidenceModel& model) {
    if (!ctx.claim_logprobs || ctx.claim_logprobs->empty()) {
        throw Error(errkind::detector_error,
                    "claim " + ctx.item_id + " carries no answer logprobs");
    }
    DetectorOutcome outcome;
    double confidence = claim_confidence(*ctx.claim_logprobs);
    outcome.score = confidence;
    outcome.verdict = confidence < model.threshold ? Verdict::reject : Verdict::accept;
    outcome.metadata["threshold"] = std::to_string(model.threshold);
    return outcome;
}

DetectionResult detect_lmvlm(const ClaimContext& ctx, const BackendPtr& examiner,
                             const BackendPtr& examinee, const PromptCatalog& catalog,
                             const ExamConfig& config, bool majority) {
    DetectionResult result;
    if (majority) {
        MajorityResult majority_result = run_majority(ctx.claim, examiner, examinee, catalog, config);
        result.outcome.verdict = majority_result.verdict;
        result.transcripts = std::move(majority_result.transcripts);
        result.outcome.metadata["runs"] = std::to_string(result.transcripts.size());
    } else {
        try {
            Transcript t = run_examination(ctx.claim, examiner, examinee, catalog, config);
            result.outcome.verdict = t.decision.verdict;
            if (t.decision.inconclusive) {
                result.outcome.metadata["inconclusive"] = "true";
            }
            result.transcripts.push_back(std::move(t));
        } catch (const ExamAborted& e) {
            throw Error(errkind::detector_error, e.what());
        }
    }
    result.outcome.metadata["transcript_ref"] = ctx.item_id;
    return result;
}

DetectionResult detect_ensemble(const ClaimContext& ctx, const BackendPtr& examiner,
                                const BackendPtr& examinee, const PromptCatalog& catalog,
                                const ExamConfig& config) {
    DetectorOutcome ays = detect_ays(ctx, *examinee, catalog);
    if (ays.verdict == Verdict::accept) {
        DetectionResult result;
        result.outcome = std::move(ays);
        result.outcome.metadata["stage"] = "ays";
        return result;
    }
    DetectionResult result = detect_lmvlm(ctx, examiner, examinee, catalog, config, true);
    result.outcome.metadata["stage"] = "lmvlm-majority";
    result.outcome.metadata["ays_reply"] = ays.metadata["raw_reply"];
    return result;
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

namespace {

class FunctionDetector : public Detector {
public:
    using Fn = std::function<DetectionResult(const ClaimContext&)>;

    FunctionDetector(std::string name, Fn fn) : name_(std::move(name)), fn_(std::move(fn)) {}

    std::string name() const override { return name_; }
    DetectionResult run(const ClaimContext& ctx) override { return fn_(ctx); }

private:
    std::string name_;
    Fn fn_;
};

void require_backends(const DetectorDeps& deps, const std::string& name, bool need_examiner) {
    if (!deps.examinee) {
        throw Error(errkind::detector_error, name + " requires an examinee backend");
    }
    if (need_examiner && !deps.examiner) {
        throw Error(errkind::detector_error, name + " requires an examiner backend");
    }
    if (!deps.catalog) {
        throw Error(errkind::detector_error, name + " requires a prompt catalog");
    }
}

}  // namespace

std::vector<std::string> detector_names() {
    return {"lmvlm", "lmvlm-majority", "ays", "idk", "ic-idk", "confidence", "ays+lmvlm"};
}

std::unique_ptr<Detector> make_detector(const std::string& name, const DetectorDeps& deps) {
    if (name == "lmvlm" || name == "lmvlm-majority") {
        require_backends(deps, name, true);
        bool majority = name == "lmvlm-majority";
        return std::make_unique<FunctionDetector>(name, [deps, majority](const ClaimContext& ctx) {
            return detect_lmvlm(ctx, deps.examiner, deps.examinee, *deps.catalog,
                                deps.exam_config, majority);
        });
    }
    if (name == "ays") {
        require_backends(deps, name, false);
        return std::make_unique<FunctionDetector>(name, [deps](const ClaimContext& ctx) {
            return DetectionResult{detect_ays(ctx, *deps.examinee, *deps.catalog), {}};
        });
    }
    if (name == "idk") {
        require_backends(deps, name, false);
        return std::make_unique<FunctionDetector>(name, [deps](const ClaimContext& ctx) {
            return DetectionResult{detect_idk(ctx, *deps.examinee, *deps.catalog), {}};
        });
    }
    if (name == "ic-idk") {
        require_backends(deps, name, false);
        if (deps.icidk_demos.empty()) {
            throw Error(errkind::detector_error,
                        "ic-idk unsupported without in-context demos (configure a held-out set)");
        }
        return std::make_unique<FunctionDetector>(name, [deps](const ClaimContext& ctx) {
            return DetectionResult{detect_icidk(ctx, deps.icidk_demos, *deps.examinee), {}};
        });
    }
    if (name == "confidence") {
        if (!deps.confidence_model) {
            throw Error(errkind::detector_error,
                        "confidence unsupported without a fitted threshold (configure a train "
                        "split; the backend must expose logprobs)");
        }
        ConfidenceModel model = *deps.confidence_model;
        return std::make_unique<FunctionDetector>(name, [model](const ClaimContext& ctx) {
            return DetectionResult{detect_confidence(ctx, model), {}};
        });
    }
    if (name == "ays+lmvlm") {
        require_backends(deps, name, true);
        return std::make_unique<FunctionDetector>(name, [deps](const ClaimContext& ctx) {
            return detect_ensemble(ctx, deps.examiner, deps.examinee, *deps.catalog,
                                   deps.exam_config);
        });
    }
    throw Error(errkind::value_error, "unknown detector '" + name + "'");
}

}  // namespace crossexam
