// Acceptance suite: one check per release criterion, one PASS/FAIL line
// each, nonzero exit when anything fails. Run via ctest or directly:
//   ./crossexam_acceptance

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include <crossexam/commands.hpp>
#include <crossexam/config.hpp>
#include <crossexam/detectors.hpp>
#include <crossexam/evaluation.hpp>
#include <crossexam/exam.hpp>

#include "test_support.hpp"

#ifndef CROSSEXAM_CLI_PATH
#define CROSSEXAM_CLI_PATH "crossexam"
#endif

using namespace crossexam;
using crossexam::testing::TempDir;

namespace {

int g_failures = 0;

void report(const std::string& criterion, bool passed, const std::string& detail = "") {
    std::cout << (passed ? "[PASS] " : "[FAIL] ") << criterion;
    if (!detail.empty()) {
        std::cout << " — " << detail;
    }
    std::cout << "\n";
    if (!passed) {
        ++g_failures;
    }
}

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void expect(bool condition, const std::string& message) {
        if (!condition) {
            ok = false;
            if (!detail.str().empty()) {
                detail << "; ";
            }
            detail << message;
        }
    }
};

// ---------------------------------------------------------------------------
// 1. Appendix replay: 8/8 exact verdicts, < 1s total.
// ---------------------------------------------------------------------------
void criterion_appendix_replay() {
    Check check;
    auto start = std::chrono::steady_clock::now();
    auto fixtures = crossexam::testing::load_replay_fixtures();
    check.expect(fixtures.size() == 8, "expected 8 fixtures");
    int matches = 0;
    for (const auto& fixture : fixtures) {
        auto examiner = crossexam::testing::seq_backend(fixture.examiner, fixture.style, "examiner");
        auto examinee = crossexam::testing::seq_backend(fixture.examinee, fixture.style, "examinee");
        Transcript t = run_examination(fixture.claim, examiner, examinee,
                                       PromptCatalog::builtin(), ExamConfig{});
        bool match = t.decision.verdict == fixture.expected_verdict &&
                     t.decision.inconclusive == fixture.expected_inconclusive &&
                     t.counters.questions_total == fixture.expected_questions_total &&
                     t.counters.followup_iterations == fixture.expected_followup_iterations;
        if (!match) {
            check.expect(false, fixture.name + " diverged");
        } else {
            ++matches;
        }
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    check.expect(seconds < 1.0, "took " + std::to_string(seconds) + "s");
    report("appendix-replay: 8/8 recorded examinations reproduce their verdicts", check.ok,
           check.ok ? std::to_string(matches) + "/8 in " + std::to_string(seconds) + "s"
                    : check.detail.str());
}

// ---------------------------------------------------------------------------
// 2. Metrics oracle: 1,000 records x 100 seeds vs brute force, < 5s.
// ---------------------------------------------------------------------------
void criterion_metrics_oracle() {
    Check check;
    auto start = std::chrono::steady_clock::now();
    for (std::uint64_t seed = 0; seed < 100 && check.ok; ++seed) {
        std::mt19937_64 rng(seed);
        std::vector<EvalRecord> records;
        records.reserve(1000);
        for (int i = 0; i < 1000; ++i) {
            records.push_back({"r" + std::to_string(i),
                               rng() % 2 ? GoldLabel::correct : GoldLabel::incorrect,
                               rng() % 2 ? Verdict::accept : Verdict::reject, "acc"});
        }
        // Brute-force counter, independent of the implementation path.
        std::size_t rejected = 0, incorrect = 0, rejected_incorrect = 0;
        std::size_t accepted = 0, correct = 0, accepted_correct = 0;
        for (const auto& r : records) {
            if (r.verdict == Verdict::reject) {
                ++rejected;
                if (r.gold == GoldLabel::incorrect) ++rejected_incorrect;
            } else {
                ++accepted;
                if (r.gold == GoldLabel::correct) ++accepted_correct;
            }
            if (r.gold == GoldLabel::incorrect) ++incorrect;
            else ++correct;
        }
        auto close = [](double a, double b) { return std::fabs(a - b) <= 1e-12; };
        MetricsResult rej = rejection_metrics(records);
        MetricsResult acc = acceptance_metrics(records);
        double rp = rejected ? double(rejected_incorrect) / rejected : 0.0;
        double rr = incorrect ? double(rejected_incorrect) / incorrect : 0.0;
        double rf = rp + rr > 0 ? 2 * rp * rr / (rp + rr) : 0.0;
        double ap = accepted ? double(accepted_correct) / accepted : 0.0;
        double ar = correct ? double(accepted_correct) / correct : 0.0;
        double af = ap + ar > 0 ? 2 * ap * ar / (ap + ar) : 0.0;
        check.expect(close(rej.metrics.precision, rp) && close(rej.metrics.recall, rr) &&
                         close(rej.metrics.f1, rf),
                     "rejection side diverged at seed " + std::to_string(seed));
        check.expect(close(acc.metrics.precision, ap) && close(acc.metrics.recall, ar) &&
                         close(acc.metrics.f1, af),
                     "acceptance side diverged at seed " + std::to_string(seed));
    }
    double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    check.expect(seconds < 5.0, "took " + std::to_string(seconds) + "s");
    report("metrics-oracle: 100x1000 random records match the brute-force counter (1e-12)",
           check.ok, check.ok ? std::to_string(seconds) + "s" : check.detail.str());
}

// ---------------------------------------------------------------------------
// 3. Turn cap: always-"Yes" examiner stops at exactly the cap with cap_hit.
// ---------------------------------------------------------------------------
BackendPtr always_yes_examiner(const PromptCatalog& catalog) {
    auto [system_part, user_part] = split_first_sentence(catalog.at(prompt_key::setup_chat).body);
    (void)system_part;
    return crossexam::testing::map_backend(
        {
            {render({"u", PromptStyle::chat, user_part}, {{"claim", "C"}}), "1. Is it so?"},
            {catalog.at(prompt_key::followup_ask).body, "Yes."},
            {catalog.at(prompt_key::followup_get).body, "Is it really so?"},
            {catalog.at(prompt_key::decision).body, "it is correct"},
        },
        BackendStyle::chat, "always-yes");
}

void criterion_turn_cap() {
    Check check;
    PromptCatalog catalog = PromptCatalog::builtin();
    auto examinee = [&] {
        return crossexam::testing::seq_backend(std::vector<std::string>(64, "It is so."),
                                               BackendStyle::chat, "examinee");
    };

    Transcript default_run = run_examination("C", always_yes_examiner(catalog), examinee(),
                                             catalog, ExamConfig{});
    check.expect(default_run.counters.followup_iterations == 5,
                 "default cap gave " +
                     std::to_string(default_run.counters.followup_iterations) + " iterations");
    check.expect(default_run.cap_hit, "default cap did not set cap_hit");

    for (int k = 0; k <= 7; ++k) {
        ExamConfig config;
        config.max_followup_iterations = k;
        Transcript t = run_examination("C", always_yes_examiner(catalog), examinee(), catalog,
                                       config);
        check.expect(t.counters.followup_iterations == k,
                     "cap " + std::to_string(k) + " gave " +
                         std::to_string(t.counters.followup_iterations));
    }
    report("turn-cap: always-yes examiner stops at followup_iterations == cap (0..7), "
           "cap_hit set at the default of 5",
           check.ok, check.detail.str());
}

// ---------------------------------------------------------------------------
// 4. Majority truth table + monotonicity.
// ---------------------------------------------------------------------------
void criterion_majority() {
    Check check;
    PromptCatalog catalog = PromptCatalog::builtin();
    for (int mask = 0; mask < 8; ++mask) {
        std::vector<std::string> examiner;
        std::vector<std::string> examinee;
        int rejects = 0;
        for (int bit = 0; bit < 3; ++bit) {
            bool reject = (mask >> bit) & 1;
            rejects += reject;
            examiner.insert(examiner.end(),
                            {"1. Is it so?", "No.", reject ? "it is incorrect" : "it is correct"});
            examinee.push_back("It is.");
        }
        MajorityResult result = run_majority(
            "C", crossexam::testing::seq_backend(examiner, BackendStyle::chat, "ex"),
            crossexam::testing::seq_backend(examinee, BackendStyle::chat, "ee"), catalog,
            ExamConfig{});
        Verdict expected = rejects >= 2 ? Verdict::reject : Verdict::accept;
        check.expect(result.verdict == expected,
                     "combination mask " + std::to_string(mask) + " diverged");
    }

    std::mt19937_64 rng(271828);
    for (int trial = 0; trial < 1000; ++trial) {
        std::size_t n = 1 + 2 * (rng() % 4);
        std::vector<Verdict> votes;
        for (std::size_t i = 0; i < n; ++i) {
            votes.push_back(rng() % 2 ? Verdict::reject : Verdict::accept);
        }
        Verdict before = majority_verdict(votes);
        std::size_t flip = rng() % n;
        if (votes[flip] == Verdict::accept) {
            votes[flip] = Verdict::reject;
            if (before == Verdict::reject && majority_verdict(votes) != Verdict::reject) {
                check.expect(false, "monotonicity violated at trial " + std::to_string(trial));
                break;
            }
        }
    }
    report("majority: all 2^3 vote combinations reject iff >=2 rejects; monotone under "
           "1000 random accept->reject flips",
           check.ok, check.detail.str());
}

// ---------------------------------------------------------------------------
// 5. Decision-parser suite (>= 20 strings).
// ---------------------------------------------------------------------------
void criterion_decision_parser() {
    struct Case {
        const char* text;
        Verdict verdict;
        bool inconclusive;
    };
    const std::vector<Case> cases = {
        {"Based on the available information, the claim that \"...\" is incorrect. It appears "
         "that Ben Findon is only one of the co-writers.",
         Verdict::reject, false},
        {"Based on the provided answers, the claim that the producer of \"Precious\" was Lee "
         "Daniels is correct.",
         Verdict::accept, false},
        {"The claim is CORRECT.", Verdict::accept, false},
        {"THE CLAIM IS INCORRECT.", Verdict::reject, false},
        {"I believe it to be Incorrect, sadly.", Verdict::reject, false},
        {"correct", Verdict::accept, false},
        {"incorrect", Verdict::reject, false},
        {"The claim is not incorrect.", Verdict::reject, false},  // scan-order edge
        {"Incorrectly phrased, but fine.", Verdict::reject, false},
        {"Your statement is correct, without a doubt.", Verdict::accept, false},
        {"It is clear that the claim is false.", Verdict::reject, true},
        {"I cannot reach a conclusion.", Verdict::reject, true},
        {"", Verdict::reject, true},
        {"   \t\n ", Verdict::reject, true},
        {"42", Verdict::reject, true},
        {"The octopus ate my homework.", Verdict::reject, true},
        {"véridique", Verdict::reject, true},
        {"correcto-mundo", Verdict::accept, false},
        {"in-correct is a strange spelling", Verdict::accept, false},  // hyphen breaks the token
        {"Do you think it is correct or incorrect?", Verdict::reject, false},
        {"the claim that Cristiano Ronaldo joined Manchester United in 2003 is false. He "
         "actually joined Sporting CP in 2003.",
         Verdict::reject, true},
        {"After much deliberation: inconclusive.", Verdict::reject, true},
    };
    Check check;
    check.expect(cases.size() >= 20, "need at least 20 strings");
    for (const auto& c : cases) {
        RawDecision d = parse_decision(c.text);
        bool match = d.verdict == c.verdict && d.inconclusive == c.inconclusive;
        if (d.inconclusive && d.verdict != Verdict::reject) {
            match = false;
        }
        check.expect(match, std::string("'") + c.text + "' parsed to " + to_string(d.verdict));
    }
    report("decision-parser: " + std::to_string(cases.size()) +
               " phrasings incl. traps and garbage map to the expected verdicts",
           check.ok, check.detail.str());
}

// ---------------------------------------------------------------------------
// 6. Threshold-fit optimality on 200 random sets.
// ---------------------------------------------------------------------------
void criterion_threshold_fit() {
    Check check;
    std::mt19937_64 rng(314159);
    std::uniform_real_distribution<double> conf(0.0, 1.0);
    for (int trial = 0; trial < 200 && check.ok; ++trial) {
        std::vector<std::pair<double, GoldLabel>> train;
        bool correct = false, incorrect = false;
        while (!(correct && incorrect)) {
            train.clear();
            correct = incorrect = false;
            int n = 5 + static_cast<int>(rng() % 60);
            for (int i = 0; i < n; ++i) {
                GoldLabel gold = rng() % 2 ? GoldLabel::correct : GoldLabel::incorrect;
                correct |= gold == GoldLabel::correct;
                incorrect |= gold == GoldLabel::incorrect;
                train.emplace_back(conf(rng), gold);
            }
        }

        // Exhaustive sweep oracle.
        std::vector<double> values;
        for (const auto& [c, g] : train) {
            (void)g;
            values.push_back(c);
        }
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        std::vector<double> candidates{-std::numeric_limits<double>::infinity()};
        for (std::size_t i = 0; i + 1 < values.size(); ++i) {
            candidates.push_back((values[i] + values[i + 1]) / 2.0);
        }
        candidates.push_back(std::numeric_limits<double>::infinity());
        double best = -1.0;
        for (double threshold : candidates) {
            std::size_t tp = 0, fp = 0, fn = 0;
            for (const auto& [c, g] : train) {
                bool reject = c < threshold;
                if (reject && g == GoldLabel::incorrect) ++tp;
                if (reject && g == GoldLabel::correct) ++fp;
                if (!reject && g == GoldLabel::incorrect) ++fn;
            }
            double f1 = 0.0;
            if (tp > 0) {
                double p = double(tp) / double(tp + fp);
                double r = double(tp) / double(tp + fn);
                f1 = 2 * p * r / (p + r);
            }
            if (f1 > best) {
                best = f1;
            }
        }

        ConfidenceModel model = fit_confidence_threshold(train);
        check.expect(model.fit_f1 == best,
                     "trial " + std::to_string(trial) + ": fit " + std::to_string(model.fit_f1) +
                         " vs oracle " + std::to_string(best));
    }
    report("threshold-fit: fitted F1 equals the exhaustive-sweep maximum on 200 random sets",
           check.ok, check.detail.str());
}

// ---------------------------------------------------------------------------
// 7. Falsehood pipeline property.
// ---------------------------------------------------------------------------
void criterion_falsehood_pipeline() {
    Check check;
    PromptCatalog catalog = PromptCatalog::builtin();
    std::vector<QAItem> items;
    for (int i = 0; i < 6; ++i) {
        QAItem item;
        item.id = "f" + std::to_string(i);
        item.dataset = "unitqa";
        item.query = "Question " + std::to_string(i) + "?";
        item.gold_answer = "Gold" + std::to_string(i);
        item.aliases = {"Alias" + std::to_string(i)};
        items.push_back(item);
    }
    auto prompt_for = [&](const QAItem& item) {
        return "Please answer the following question with a wrong answer: " + item.query +
               " Please also phrase your answer as an argument.";
    };

    // Wrong-answer backend: every kept claim must auto-label Incorrect.
    {
        std::map<std::string, ScriptedReply> script;
        for (const auto& item : items) {
            script[prompt_for(item)] = {"It was Wrong" + item.id + ", for obvious reasons.",
                                        std::nullopt};
        }
        ScriptedMapBackend backend("wrong", std::move(script));
        int kept = 0;
        for (const auto& item : items) {
            FalsehoodResult result = generate_falsehood(item, backend, catalog);
            if (result.claim) {
                ++kept;
                check.expect(auto_label(*result.claim, item) == GoldLabel::incorrect,
                             item.id + " kept a claim that labels Correct");
            }
        }
        check.expect(kept == 6, "wrong-answer backend kept " + std::to_string(kept) + "/6");
    }

    // Gold-echoing backend: 100% discard.
    {
        std::map<std::string, ScriptedReply> script;
        for (const auto& item : items) {
            script[prompt_for(item)] = {"Obviously it was " + item.gold_answer + ".",
                                        std::nullopt};
        }
        ScriptedMapBackend backend("echo", std::move(script));
        int discarded = 0;
        for (const auto& item : items) {
            if (!generate_falsehood(item, backend, catalog).claim) {
                ++discarded;
            }
        }
        check.expect(discarded == 6,
                     "gold-echo backend discarded " + std::to_string(discarded) + "/6");
    }
    report("falsehood-pipeline: wrong-answer backend keeps only auto-Incorrect claims; "
           "gold-echo backend discards 100%",
           check.ok, check.detail.str());
}

// ---------------------------------------------------------------------------
// 8. Stats fixture: hand-computed mean/std/inconclusive-rate, ± formatting.
// ---------------------------------------------------------------------------
Transcript stats_fixture_transcript(std::vector<int> batches, bool inconclusive) {
    Transcript t;
    t.claim = "claim";
    t.counters.questions_per_iteration = batches;
    for (int b : batches) {
        t.counters.questions_total += b;
    }
    t.counters.followup_iterations = static_cast<int>(batches.size()) - 1;
    t.decision.verdict = inconclusive ? Verdict::reject : Verdict::accept;
    t.decision.inconclusive = inconclusive;
    return t;
}

void criterion_stats_fixture() {
    Check check;
    // Five transcripts with batch lists [5,1], [4,2,2], [4], [3,2], [4,3];
    // the third decision is inconclusive.
    std::vector<Transcript> transcripts = {
        stats_fixture_transcript({5, 1}, false), stats_fixture_transcript({4, 2, 2}, false),
        stats_fixture_transcript({4}, true),     stats_fixture_transcript({3, 2}, false),
        stats_fixture_transcript({4, 3}, false),
    };
    ExamStats stats = compute_exam_stats(transcripts);

    // Hand arithmetic:
    //   questions_total        [6,8,4,5,7]   mean 6, Σd²=10 -> std sqrt(10/5)
    //   followup_iterations    [1,2,0,1,1]   mean 1, Σd²=2  -> std sqrt(2/5)
    //   follow-up batches pool [1,2,2,2,3]   mean 2, Σd²=2  -> std sqrt(2/5)
    //   all batches pool       [5,1,4,2,2,4,3,2,4,3] mean 3, Σd²=14 -> std sqrt(14/10)
    //   inconclusive rate      1/5
    check.expect(stats.questions_total.mean == 6.0, "questions_total mean");
    check.expect(stats.questions_total.stddev == std::sqrt(10.0 / 5.0), "questions_total std");
    check.expect(stats.followup_iterations.mean == 1.0, "followup_iterations mean");
    check.expect(stats.followup_iterations.stddev == std::sqrt(2.0 / 5.0),
                 "followup_iterations std");
    check.expect(stats.followup_questions_per_iteration.mean == 2.0, "followup batch mean");
    check.expect(stats.followup_questions_per_iteration.stddev == std::sqrt(2.0 / 5.0),
                 "followup batch std");
    check.expect(stats.questions_per_iteration.mean == 3.0, "all-batch mean");
    check.expect(stats.questions_per_iteration.stddev == std::sqrt(14.0 / 10.0), "all-batch std");
    check.expect(stats.inconclusive_rate == 1.0 / 5.0, "inconclusive rate");
    check.expect(format_mean_std(stats.questions_total) == "6.0 ± 1.4",
                 "mean ± std formatting");
    report("stats-fixture: 5-transcript fixture matches hand-computed mean/std/inconclusive "
           "exactly, formatted as 'mean ± std'",
           check.ok, check.detail.str());
}

// ---------------------------------------------------------------------------
// 9. Ablation wiring through the real CLI: --no-followups.
// ---------------------------------------------------------------------------
void criterion_ablation_cli() {
    Check check;
    TempDir dir("ablation");
    PromptCatalog catalog = PromptCatalog::builtin();
    auto [system_part, user_part] = split_first_sentence(catalog.at(prompt_key::setup_chat).body);
    (void)system_part;

    std::string dataset_path = dir.file("dataset.jsonl");
    std::string claims_path = dir.file("claims.jsonl");
    nlohmann::json examiner_script = nlohmann::json::object();
    nlohmann::json examinee_script = nlohmann::json::object();
    for (int i = 0; i < 2; ++i) {
        QAItem item;
        item.id = "a" + std::to_string(i);
        item.dataset = "unitqa";
        item.query = "Question " + std::to_string(i) + "?";
        item.gold_answer = "Answer" + std::to_string(i);
        append_jsonl_line(dataset_path, qa_item_to_json(item));
        GeneratedClaim claim;
        claim.item_id = item.id;
        claim.text = "Claim " + std::to_string(i) + " holds.";
        append_jsonl_line(claims_path, claim_to_json(claim));
        examiner_script[render({"u", PromptStyle::chat, user_part},
                               {{"claim", claim.text}})] = "1. Is it so?";
    }
    // An always-yes probe script: with follow-ups disabled it must never fire.
    examiner_script[catalog.at(prompt_key::followup_ask).body] = "Yes.";
    examiner_script[catalog.at(prompt_key::followup_get).body] = "Again?";
    examiner_script[catalog.at(prompt_key::decision).body] = "it is incorrect";
    examinee_script["Please answer the following questions regarding your claim\nIs it so?"] =
        "It is.";
    examinee_script["Please answer the following questions regarding your claim\nAgain?"] =
        "Still.";

    nlohmann::json config{{"backends",
                           {{{"id", "examiner"},
                             {"type", "scripted-map"},
                             {"style", "chat"},
                             {"script", examiner_script}},
                            {{"id", "examinee"},
                             {"type", "scripted-map"},
                             {"style", "chat"},
                             {"script", examinee_script}}}}};
    std::string config_path = dir.file("config.json");
    write_text_file(config_path, config.dump(2));
    std::string store_dir = dir.file("run");

    std::string command = std::string(CROSSEXAM_CLI_PATH) + " examine --config " + config_path +
                          " --claims " + claims_path + " --dataset " + dataset_path +
                          " --examiner examiner --examinee examinee --detector lmvlm --store " +
                          store_dir + " --no-followups > /dev/null 2>&1";
    int status = std::system(command.c_str());
    check.expect(WEXITSTATUS(status) == 0, "CLI exited nonzero");

    TranscriptStore store(store_dir);
    auto transcripts = store.load_transcripts();
    check.expect(transcripts.size() == 2, "expected 2 transcripts");
    for (const auto& [id, transcript] : transcripts) {
        for (const auto& turn : transcript.turns) {
            check.expect(turn.kind != TurnKind::followup_probe,
                         id + " contains a followup-probe turn");
        }
        check.expect(transcript.counters.followup_iterations == 0, id + " iterated");
    }
    report("ablation-wiring: --no-followups produces transcripts with zero followup-probe turns",
           check.ok, check.detail.str());
}

}  // namespace

int main() {
    criterion_appendix_replay();
    criterion_metrics_oracle();
    criterion_turn_cap();
    criterion_majority();
    criterion_decision_parser();
    criterion_threshold_fit();
    criterion_falsehood_pipeline();
    criterion_stats_fixture();
    criterion_ablation_cli();

    if (g_failures == 0) {
        std::cout << "all acceptance criteria passed\n";
        return 0;
    }
    std::cout << g_failures << " acceptance criteria failed\n";
    return 1;
}
