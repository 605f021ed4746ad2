#include "crossexam/exam.hpp"

#include <algorithm>
#include <cctype>
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

std::string lower_ascii(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

struct NumberMarker {
    long value = 0;
    std::size_t start = 0;          // index of the first digit
    std::size_t content_begin = 0;  // index just past "N." / "N)"
};

/// Candidate "N." / "N)" markers: digits at text start or after whitespace,
/// followed by '.' or ')' and then a space, letter, quote or end.
std::vector<NumberMarker> find_number_markers(const std::string& text) {
    std::vector<NumberMarker> markers;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
            continue;
        }
        if (i > 0 && !std::isspace(static_cast<unsigned char>(text[i - 1]))) {
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) {
            ++j;
        }
        if (j >= text.size() || (text[j] != '.' && text[j] != ')')) {
            i = j;
            continue;
        }
        std::size_t after = j + 1;
        bool boundary_ok = after >= text.size() ||
                           std::isspace(static_cast<unsigned char>(text[after])) ||
                           std::isalpha(static_cast<unsigned char>(text[after])) ||
                           text[after] == '"' || text[after] == '\'';
        if (boundary_ok && j - i <= 3) {
            markers.push_back({std::stol(text.substr(i, j - i)), i, after});
        }
        i = j;
    }
    return markers;
}

}  // namespace

const char* to_string(Verdict v) {
    return v == Verdict::accept ? "accept" : "reject";
}

Verdict verdict_from_string(const std::string& s) {
    if (s == "accept") return Verdict::accept;
    if (s == "reject") return Verdict::reject;
    throw Error(errkind::value_error, "unknown verdict: " + s);
}

const char* to_string(Speaker s) {
    switch (s) {
        case Speaker::examiner: return "examiner";
        case Speaker::examinee: return "examinee";
        case Speaker::system: return "system";
    }
    return "system";
}

Speaker speaker_from_string(const std::string& s) {
    if (s == "examiner") return Speaker::examiner;
    if (s == "examinee") return Speaker::examinee;
    if (s == "system") return Speaker::system;
    throw Error(errkind::value_error, "unknown speaker: " + s);
}

const char* to_string(TurnKind k) {
    switch (k) {
        case TurnKind::setup: return "setup";
        case TurnKind::question_batch: return "question-batch";
        case TurnKind::question: return "question";
        case TurnKind::answer: return "answer";
        case TurnKind::followup_probe: return "followup-probe";
        case TurnKind::followup_reply: return "followup-reply";
        case TurnKind::decision: return "decision";
    }
    return "setup";
}

TurnKind turn_kind_from_string(const std::string& s) {
    if (s == "setup") return TurnKind::setup;
    if (s == "question-batch") return TurnKind::question_batch;
    if (s == "question") return TurnKind::question;
    if (s == "answer") return TurnKind::answer;
    if (s == "followup-probe") return TurnKind::followup_probe;
    if (s == "followup-reply") return TurnKind::followup_reply;
    if (s == "decision") return TurnKind::decision;
    throw Error(errkind::value_error, "unknown turn kind: " + s);
}

// ---------------------------------------------------------------------------
// Parsers
// ---------------------------------------------------------------------------

std::vector<std::string> extract_questions(const std::string& text, int max_questions) {
    std::vector<std::string> questions;
    if (max_questions <= 0) {
        return questions;
    }
    const std::string trimmed = trim_copy(text);
    if (trimmed.empty()) {
        return questions;
    }

    // Numbered items first. The chain must start at an item numbered 1 and
    // advance by one; stray numbers inside sentences ("in 1979.") cannot
    // start or extend it.
    auto markers = find_number_markers(text);
    std::vector<NumberMarker> chain;
    for (std::size_t i = 0; i < markers.size(); ++i) {
        if (markers[i].value != 1) {
            continue;
        }
        chain.push_back(markers[i]);
        long expected = 2;
        for (std::size_t j = i + 1; j < markers.size(); ++j) {
            if (markers[j].value == expected) {
                chain.push_back(markers[j]);
                ++expected;
            }
        }
        break;
    }
    if (!chain.empty()) {
        for (std::size_t k = 0; k < chain.size(); ++k) {
            std::size_t begin = chain[k].content_begin;
            std::size_t end = (k + 1 < chain.size()) ? chain[k + 1].start : text.size();
            // The next marker's digits are preceded by whitespace we trim anyway.
            std::string item = trim_copy(std::string_view(text).substr(begin, end - begin));
            if (!item.empty()) {
                questions.push_back(std::move(item));
            }
            if (questions.size() == static_cast<std::size_t>(max_questions)) {
                return questions;
            }
        }
        return questions;
    }

    // Lines ending in '?'. A leading list marker (e.g. a batch numbered
    // "6." onward, which the chain above cannot anchor) is stripped.
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        std::string t = trim_copy(line);
        if (t.empty() || t.back() != '?') {
            continue;
        }
        std::size_t digits = 0;
        while (digits < t.size() && std::isdigit(static_cast<unsigned char>(t[digits]))) {
            ++digits;
        }
        if (digits > 0 && digits <= 3 && digits < t.size() &&
            (t[digits] == '.' || t[digits] == ')')) {
            t = trim_copy(std::string_view(t).substr(digits + 1));
        }
        if (!t.empty()) {
            questions.push_back(std::move(t));
        }
        if (questions.size() == static_cast<std::size_t>(max_questions)) {
            return questions;
        }
    }
    if (!questions.empty()) {
        return questions;
    }

    // Whole text as a single question.
    if (trimmed.back() == '?') {
        questions.push_back(trimmed);
    }
    return questions;
}

bool parse_yes_no(std::string_view text) {
    std::string t = lower_ascii(trim_copy(text));
    return t.rfind("yes", 0) == 0;
}

RawDecision parse_decision(const std::string& text) {
    RawDecision decision;
    decision.source_text = text;
    std::string lowered = lower_ascii(text);
    // "incorrect" must be checked first: every occurrence of it also
    // contains "correct". Known coarse edge: "not incorrect" rejects.
    if (lowered.find("incorrect") != std::string::npos) {
        decision.verdict = Verdict::reject;
        decision.inconclusive = false;
    } else if (lowered.find("correct") != std::string::npos) {
        decision.verdict = Verdict::accept;
        decision.inconclusive = false;
    } else {
        decision.verdict = Verdict::reject;
        decision.inconclusive = true;
    }
    return decision;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

json transcript_to_json(const Transcript& t) {
    json turns = json::array();
    for (const auto& turn : t.turns) {
        turns.push_back({{"index", turn.index},
                         {"speaker", to_string(turn.speaker)},
                         {"kind", to_string(turn.kind)},
                         {"text", turn.text}});
    }
    json j{{"claim", t.claim},
           {"turns", std::move(turns)},
           {"decision",
            {{"verdict", to_string(t.decision.verdict)},
             {"inconclusive", t.decision.inconclusive},
             {"source_text", t.decision.source_text}}},
           {"counters",
            {{"questions_total", t.counters.questions_total},
             {"followup_iterations", t.counters.followup_iterations},
             {"questions_per_iteration", t.counters.questions_per_iteration}}},
           {"cap_hit", t.cap_hit},
           {"aborted", t.aborted}};
    if (t.run_seed) {
        j["run_seed"] = *t.run_seed;
    }
    if (!t.abort_reason.empty()) {
        j["abort_reason"] = t.abort_reason;
    }
    return j;
}

Transcript transcript_from_json(const json& j) {
    Transcript t;
    t.claim = j.at("claim").get<std::string>();
    for (const auto& e : j.at("turns")) {
        Turn turn;
        turn.index = e.at("index").get<int>();
        turn.speaker = speaker_from_string(e.at("speaker").get<std::string>());
        turn.kind = turn_kind_from_string(e.at("kind").get<std::string>());
        turn.text = e.at("text").get<std::string>();
        t.turns.push_back(std::move(turn));
    }
    const json& d = j.at("decision");
    t.decision.verdict = verdict_from_string(d.at("verdict").get<std::string>());
    t.decision.inconclusive = d.at("inconclusive").get<bool>();
    t.decision.source_text = d.value("source_text", "");
    const json& c = j.at("counters");
    t.counters.questions_total = c.at("questions_total").get<int>();
    t.counters.followup_iterations = c.at("followup_iterations").get<int>();
    t.counters.questions_per_iteration = c.at("questions_per_iteration").get<std::vector<int>>();
    t.cap_hit = j.value("cap_hit", false);
    t.aborted = j.value("aborted", false);
    t.abort_reason = j.value("abort_reason", "");
    if (j.contains("run_seed")) {
        t.run_seed = j.at("run_seed").get<std::uint64_t>();
    }
    return t;
}

TranscriptCounters recompute_counters(const Transcript& t) {
    TranscriptCounters counters;
    for (const auto& turn : t.turns) {
        if (turn.kind == TurnKind::question_batch && turn.speaker == Speaker::examiner) {
            counters.questions_per_iteration.push_back(0);
        } else if (turn.kind == TurnKind::question) {
            if (counters.questions_per_iteration.empty()) {
                counters.questions_per_iteration.push_back(0);
            }
            ++counters.questions_per_iteration.back();
        } else if (turn.kind == TurnKind::followup_reply && parse_yes_no(turn.text)) {
            ++counters.followup_iterations;
        }
    }
    for (int n : counters.questions_per_iteration) {
        counters.questions_total += n;
    }
    return counters;
}

// ---------------------------------------------------------------------------
// Examination engine
// ---------------------------------------------------------------------------

namespace {

/// Per-exam state: the two conversation contexts plus the transcript being
/// built. A single examination is strictly sequential.
class ExamSession {
public:
    ExamSession(std::string claim, BackendPtr examiner, BackendPtr examinee,
                const PromptCatalog& catalog, const ExamConfig& config)
        : claim_(std::move(claim)),
          examiner_(std::move(examiner)),
          examinee_(std::move(examinee)),
          catalog_(catalog),
          config_(config) {
        transcript_.claim = claim_;
        transcript_.run_seed = config_.seed;
        // The examinee's own claim opens its context as an assistant turn.
        examinee_context_.push_back({Role::assistant, claim_});
    }

    Transcript run() {
        try {
            setup_stage();
            if (config_.followups_enabled) {
                followup_stage();
            }
            decision_stage();
        } catch (const Error& e) {
            if (e.kind() == errkind::exam_aborted || e.kind() == errkind::budget_exhausted) {
                throw;  // budget stops are run-level events, not exam failures
            }
            transcript_.aborted = true;
            transcript_.abort_reason = e.what();
            transcript_.decision = {Verdict::reject, true, ""};
            throw ExamAborted(e.what(), transcript_);
        }
        return std::move(transcript_);
    }

private:
    void add_turn(Speaker speaker, TurnKind kind, std::string text) {
        Turn turn;
        turn.index = static_cast<int>(transcript_.turns.size());
        turn.speaker = speaker;
        turn.kind = kind;
        turn.text = std::move(text);
        transcript_.turns.push_back(std::move(turn));
    }

    std::string call_examiner() {
        CompletionRequest request;
        request.messages = examiner_context_;
        request.temperature = config_.examiner_temperature;
        request.seed = config_.seed;
        CompletionResponse response = examiner_->complete(request);
        examiner_context_.push_back({Role::assistant, response.text});
        return response.text;
    }

    void examiner_user(std::string text) {
        examiner_context_.push_back({Role::user, std::move(text)});
    }

    std::string ask_examinee(const std::string& question) {
        const std::string preamble =
            render(catalog_.get(prompt_key::examinee_answer, examinee_->descriptor().style), {});
        examinee_context_.push_back({Role::user, preamble + "\n" + question});
        CompletionRequest request;
        request.messages = examinee_context_;
        request.temperature = config_.examinee_temperature;
        request.seed = config_.seed;
        CompletionResponse response = examinee_->complete(request);
        examinee_context_.push_back({Role::assistant, response.text});
        return response.text;
    }

    /// Sends one question batch to the examinee, one question at a time, and
    /// feeds the collected answers back into the examiner context as a
    /// single block.
    void answer_batch(const std::vector<std::string>& questions) {
        std::vector<std::string> answers;
        for (const auto& question : questions) {
            add_turn(Speaker::examiner, TurnKind::question, question);
            std::string answer = ask_examinee(question);
            add_turn(Speaker::examinee, TurnKind::answer, answer);
            answers.push_back(std::move(answer));
        }
        if (answers.empty()) {
            return;
        }
        if (answers.size() == 1) {
            examiner_user(answers.front());
            return;
        }
        std::ostringstream block;
        for (std::size_t i = 0; i < answers.size(); ++i) {
            if (i) {
                block << "\n";
            }
            block << (i + 1) << ". " << answers[i];
        }
        examiner_user(block.str());
    }

    void setup_stage() {
        const PromptTemplate& setup = catalog_.get("setup", examiner_->descriptor().style);
        std::string rendered = render(setup, {{"claim", claim_}});
        if (examiner_->descriptor().style == BackendStyle::chat) {
            auto [system_part, user_part] = split_first_sentence(setup.body);
            examiner_context_.push_back(
                {Role::system, render({setup.name, setup.style, system_part}, {{"claim", claim_}})});
            if (!user_part.empty()) {
                examiner_context_.push_back(
                    {Role::user, render({setup.name, setup.style, user_part}, {{"claim", claim_}})});
            }
        } else {
            examiner_context_.push_back({Role::user, rendered});
        }
        add_turn(Speaker::system, TurnKind::setup, rendered);

        std::string batch = call_examiner();
        add_turn(Speaker::examiner, TurnKind::question_batch, batch);
        auto questions = extract_questions(batch, config_.max_questions_per_batch);
        record_batch_size(questions.size());
        if (questions.empty()) {
            add_turn(Speaker::system, TurnKind::question_batch,
                     "[no questions extracted; proceeding to decision]");
            return;
        }
        answer_batch(questions);
    }

    void record_batch_size(std::size_t n) {
        transcript_.counters.questions_per_iteration.push_back(static_cast<int>(n));
        transcript_.counters.questions_total += static_cast<int>(n);
    }

    void followup_stage() {
        const std::string probe =
            render(catalog_.get(prompt_key::followup_ask, examiner_->descriptor().style), {});
        const std::string get =
            render(catalog_.get(prompt_key::followup_get, examiner_->descriptor().style), {});
        while (true) {
            if (transcript_.counters.followup_iterations >= config_.max_followup_iterations) {
                transcript_.cap_hit = true;
                break;
            }
            examiner_user(probe);
            add_turn(Speaker::system, TurnKind::followup_probe, probe);
            std::string reply = call_examiner();
            add_turn(Speaker::examiner, TurnKind::followup_reply, reply);
            if (!parse_yes_no(reply)) {
                break;
            }
            examiner_user(get);
            std::string batch = call_examiner();
            add_turn(Speaker::examiner, TurnKind::question_batch, batch);
            auto questions = extract_questions(batch, config_.max_questions_per_batch);
            record_batch_size(questions.size());
            if (questions.empty()) {
                add_turn(Speaker::system, TurnKind::question_batch,
                         "[no questions extracted this iteration]");
            } else {
                answer_batch(questions);
            }
            ++transcript_.counters.followup_iterations;
        }
    }

    void decision_stage() {
        const std::string prompt =
            render(catalog_.get(prompt_key::decision, examiner_->descriptor().style), {});
        examiner_user(prompt);
        std::string reply = call_examiner();
        add_turn(Speaker::examiner, TurnKind::decision, reply);
        transcript_.decision = parse_decision(reply);
    }

    std::string claim_;
    BackendPtr examiner_;
    BackendPtr examinee_;
    const PromptCatalog& catalog_;
    const ExamConfig& config_;
    std::vector<ChatMessage> examiner_context_;
    std::vector<ChatMessage> examinee_context_;
    Transcript transcript_;
};

}  // namespace

Transcript run_examination(const std::string& claim, const BackendPtr& examiner,
                           const BackendPtr& examinee, const PromptCatalog& catalog,
                           const ExamConfig& config) {
    if (trim_copy(claim).empty()) {
        throw Error(errkind::value_error, "claim must be non-empty");
    }
    if (config.max_followup_iterations < 0) {
        throw Error(errkind::value_error, "max_followup_iterations must be >= 0");
    }
    if (config.max_questions_per_batch <= 0) {
        throw Error(errkind::value_error, "max_questions_per_batch must be positive");
    }
    ExamSession session(claim, examiner, examinee, catalog, config);
    return session.run();
}

Verdict majority_verdict(const std::vector<Verdict>& votes) {
    if (votes.empty()) {
        throw Error(errkind::value_error, "majority_verdict needs at least one vote");
    }
    std::size_t rejections = 0;
    for (Verdict v : votes) {
        if (v == Verdict::reject) {
            ++rejections;
        }
    }
    // Reject iff rejections >= ceil(n / 2).
    return 2 * rejections >= votes.size() + (votes.size() % 2) ? Verdict::reject : Verdict::accept;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t run_index) {
    return splitmix64(base ^ splitmix64(run_index + 1));
}

MajorityResult run_majority(const std::string& claim, const BackendPtr& examiner,
                            const BackendPtr& examinee, const PromptCatalog& catalog,
                            const ExamConfig& config) {
    if (config.majority_runs <= 0 || config.majority_runs % 2 == 0) {
        throw Error(errkind::value_error, "majority_runs must be a positive odd integer");
    }
    MajorityResult result;
    std::vector<Verdict> votes;
    for (int run = 0; run < config.majority_runs; ++run) {
        ExamConfig run_config = config;
        run_config.examiner_temperature = config.majority_temperature;
        run_config.examinee_temperature = config.majority_temperature;
        if (config.seed) {
            run_config.seed = derive_seed(*config.seed, static_cast<std::uint64_t>(run));
        }
        try {
            Transcript t = run_examination(claim, examiner, examinee, catalog, run_config);
            votes.push_back(t.decision.verdict);
            result.transcripts.push_back(std::move(t));
        } catch (const ExamAborted& e) {
            // An aborted run counts as a rejection vote; the partial
            // transcript keeps the abort flag and reason.
            votes.push_back(Verdict::reject);
            result.transcripts.push_back(e.partial());
        }
    }
    result.verdict = majority_verdict(votes);
    return result;
}

}  // namespace crossexam
