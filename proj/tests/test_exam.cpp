#include <crossexam/exam.hpp>

#include <random>

#include "doctest.h"
#include "test_support.hpp"

using namespace crossexam;
using crossexam::testing::map_backend;
using crossexam::testing::seq_backend;

namespace {

/// Turn-order invariant: every question turn is followed by an answer turn
/// before the next question.
void check_question_answer_pairing(const Transcript& t) {
    for (std::size_t i = 0; i < t.turns.size(); ++i) {
        CHECK(t.turns[i].index == static_cast<int>(i));
    }
    bool awaiting_answer = false;
    for (const auto& turn : t.turns) {
        if (turn.kind == TurnKind::question) {
            CHECK_FALSE(awaiting_answer);
            awaiting_answer = true;
        } else if (turn.kind == TurnKind::answer) {
            CHECK(awaiting_answer);
            awaiting_answer = false;
        }
    }
    CHECK_FALSE(awaiting_answer);
}

int count_turns(const Transcript& t, TurnKind kind) {
    int n = 0;
    for (const auto& turn : t.turns) {
        if (turn.kind == kind) {
            ++n;
        }
    }
    return n;
}

}  // namespace

TEST_CASE("extract_questions handles the observed examiner formats") {
    SUBCASE("multi-line numbered batch") {
        auto qs = extract_questions("1. Who is A?\n2. When was B?\n3. Who are C?");
        REQUIRE(qs.size() == 3);
        CHECK(qs[0] == "Who is A?");
        CHECK(qs[2] == "Who are C?");
    }

    SUBCASE("inline numbered batch") {
        auto qs = extract_questions("1. Who is A? 2. When was B? 3. Who are C?");
        REQUIRE(qs.size() == 3);
        CHECK(qs[1] == "When was B?");
    }

    SUBCASE("missing space after the marker (1.Who)") {
        auto qs = extract_questions("1.Who was Augustus?\n2. What is a Roman Emperor?");
        REQUIRE(qs.size() == 2);
        CHECK(qs[0] == "Who was Augustus?");
    }

    SUBCASE("parenthesis markers") {
        auto qs = extract_questions("1) First? 2) Second?");
        REQUIRE(qs.size() == 2);
    }

    SUBCASE("numbers inside sentences do not break the chain") {
        auto qs = extract_questions(
            "1. When was the song released? It charted in 1979. 2. Who wrote it?");
        REQUIRE(qs.size() == 2);
        CHECK(qs[0] == "When was the song released? It charted in 1979.");
        CHECK(qs[1] == "Who wrote it?");
    }

    SUBCASE("no numbering, lines ending in question marks") {
        auto qs = extract_questions("Here goes:\nIs water wet?\nIs fire hot?");
        REQUIRE(qs.size() == 2);
        CHECK(qs[0] == "Is water wet?");
    }

    SUBCASE("numbering continued from an earlier batch is stripped") {
        auto qs = extract_questions("6. What about the producer?\n7. And the year?");
        REQUIRE(qs.size() == 2);
        CHECK(qs[0] == "What about the producer?");
        CHECK(qs[1] == "And the year?");
    }

    SUBCASE("single question fallback") {
        auto qs = extract_questions("Is water wet?");
        REQUIRE(qs.size() == 1);
        CHECK(qs[0] == "Is water wet?");
    }

    SUBCASE("non-question text yields nothing") {
        CHECK(extract_questions("I have no questions.").empty());
        CHECK(extract_questions("").empty());
    }

    SUBCASE("truncation to the batch cap") {
        std::string text;
        for (int i = 1; i <= 12; ++i) {
            text += std::to_string(i) + ". Question number " + std::to_string(i) + "?\n";
        }
        auto qs = extract_questions(text, 10);
        REQUIRE(qs.size() == 10);
        CHECK(qs[0] == "Question number 1?");
        CHECK(qs[9] == "Question number 10?");
    }
}

TEST_CASE("parse_yes_no prefix rule") {
    CHECK(parse_yes_no("Yes, I have one more question."));
    CHECK(parse_yes_no("  yes."));
    CHECK(parse_yes_no("YES"));
    CHECK_FALSE(parse_yes_no("No."));
    CHECK_FALSE(parse_yes_no("I think that covers it."));
    CHECK_FALSE(parse_yes_no(""));
    CHECK_FALSE(parse_yes_no("maybe yes"));
}

TEST_CASE("parse_decision scan order and totality") {
    SUBCASE("incorrect before correct") {
        RawDecision d = parse_decision("... the claim ... is incorrect. It appears that ...");
        CHECK(d.verdict == Verdict::reject);
        CHECK_FALSE(d.inconclusive);
    }

    SUBCASE("correct accepts") {
        RawDecision d =
            parse_decision("the producer of \"Precious\" was Lee Daniels is correct.");
        CHECK(d.verdict == Verdict::accept);
        CHECK_FALSE(d.inconclusive);
    }

    SUBCASE("neither word rejects inconclusively") {
        RawDecision d = parse_decision("I cannot reach a conclusion.");
        CHECK(d.verdict == Verdict::reject);
        CHECK(d.inconclusive);
    }

    SUBCASE("known coarse edge: 'not incorrect' rejects") {
        CHECK(parse_decision("The claim is not incorrect.").verdict == Verdict::reject);
    }

    SUBCASE("total over arbitrary strings, inconclusive implies reject") {
        std::mt19937_64 rng(7);
        for (int i = 0; i < 500; ++i) {
            std::string s;
            int length = static_cast<int>(rng() % 40);
            for (int k = 0; k < length; ++k) {
                s.push_back(static_cast<char>('a' + rng() % 26));
            }
            RawDecision d = parse_decision(s);
            if (d.inconclusive) {
                CHECK(d.verdict == Verdict::reject);
            }
        }
    }
}

TEST_CASE("appendix replay fixtures reproduce the printed verdicts") {
    for (const auto& fixture : crossexam::testing::load_replay_fixtures()) {
        CAPTURE(fixture.name);
        auto examiner = seq_backend(fixture.examiner, fixture.style, "examiner");
        auto examinee = seq_backend(fixture.examinee, fixture.style, "examinee");
        Transcript t = run_examination(fixture.claim, examiner, examinee,
                                       PromptCatalog::builtin(), ExamConfig{});
        CHECK(t.decision.verdict == fixture.expected_verdict);
        CHECK(t.decision.inconclusive == fixture.expected_inconclusive);
        CHECK(t.counters.questions_total == fixture.expected_questions_total);
        CHECK(t.counters.followup_iterations == fixture.expected_followup_iterations);
        CHECK_FALSE(t.cap_hit);
        check_question_answer_pairing(t);

        // Counters must be recomputable from the turns.
        TranscriptCounters recomputed = recompute_counters(t);
        CHECK(recomputed.questions_total == t.counters.questions_total);
        CHECK(recomputed.followup_iterations == t.counters.followup_iterations);
        CHECK(recomputed.questions_per_iteration == t.counters.questions_per_iteration);
    }
}

TEST_CASE("a recorded examination replays to an identical transcript") {
    crossexam::testing::TempDir dir("exam-cassette");
    std::string cassette = dir.file("exam.jsonl");
    auto fixtures = crossexam::testing::load_replay_fixtures();
    const auto& fixture = fixtures[0];

    auto examiner = record_wrap(seq_backend(fixture.examiner, fixture.style, "examiner"),
                                cassette);
    auto examinee = record_wrap(seq_backend(fixture.examinee, fixture.style, "examinee"),
                                cassette);
    Transcript live = run_examination(fixture.claim, examiner, examinee,
                                      PromptCatalog::builtin(), ExamConfig{});

    auto entries = load_cassette(cassette);
    BackendDescriptor examiner_desc{"examiner", fixture.style, false, true};
    BackendDescriptor examinee_desc{"examinee", fixture.style, false, true};
    auto replay_examiner = std::make_shared<ReplayBackend>(examiner_desc, entries);
    auto replay_examinee = std::make_shared<ReplayBackend>(examinee_desc, entries);
    Transcript replayed = run_examination(fixture.claim, replay_examiner, replay_examinee,
                                          PromptCatalog::builtin(), ExamConfig{});

    CHECK(transcript_to_json(replayed) == transcript_to_json(live));
}

TEST_CASE("transcript json round-trip") {
    auto fixtures = crossexam::testing::load_replay_fixtures();
    auto examiner = seq_backend(fixtures[0].examiner, fixtures[0].style, "examiner");
    auto examinee = seq_backend(fixtures[0].examinee, fixtures[0].style, "examinee");
    Transcript t = run_examination(fixtures[0].claim, examiner, examinee,
                                   PromptCatalog::builtin(), ExamConfig{});
    Transcript back = transcript_from_json(transcript_to_json(t));
    CHECK(back.claim == t.claim);
    CHECK(back.turns.size() == t.turns.size());
    CHECK(back.decision.verdict == t.decision.verdict);
    CHECK(back.counters.questions_per_iteration == t.counters.questions_per_iteration);
}

namespace {

/// Examiner that always wants more questions; keyed on the last user
/// message so it works for any iteration count.
BackendPtr always_yes_examiner(const PromptCatalog& catalog) {
    auto [system_part, user_part] = split_first_sentence(catalog.at(prompt_key::setup_chat).body);
    (void)system_part;
    return map_backend(
        {
            {render({"u", PromptStyle::chat, user_part}, {{"claim", "C"}}), "1. Is it so?"},
            {catalog.at(prompt_key::followup_ask).body, "Yes."},
            {catalog.at(prompt_key::followup_get).body, "Is it really so?"},
            {catalog.at(prompt_key::decision).body, "My conclusion is that it is correct."},
        },
        BackendStyle::chat, "always-yes");
}

BackendPtr echo_examinee() {
    // Sequence long enough for the deepest cap in the tests.
    std::vector<std::string> replies(64, "It is so.");
    return seq_backend(std::move(replies), BackendStyle::chat, "examinee");
}

}  // namespace

TEST_CASE("always-yes examiner hits the follow-up cap") {
    PromptCatalog catalog = PromptCatalog::builtin();

    SUBCASE("default cap of five") {
        Transcript t =
            run_examination("C", always_yes_examiner(catalog), echo_examinee(), catalog, {});
        CHECK(t.counters.followup_iterations == 5);
        CHECK(t.cap_hit);
        CHECK(t.decision.verdict == Verdict::accept);
    }

    SUBCASE("cap k in 0..7 terminates at exactly k") {
        for (int k = 0; k <= 7; ++k) {
            CAPTURE(k);
            ExamConfig config;
            config.max_followup_iterations = k;
            Transcript t = run_examination("C", always_yes_examiner(catalog), echo_examinee(),
                                           catalog, config);
            CHECK(t.counters.followup_iterations == k);
            CHECK(t.cap_hit);
        }
    }
}

TEST_CASE("call counts stay within the termination budget") {
    PromptCatalog catalog = PromptCatalog::builtin();
    ExamConfig config;
    auto examiner =
        std::make_shared<crossexam::testing::CountingBackend>(always_yes_examiner(catalog));
    auto examinee = std::make_shared<crossexam::testing::CountingBackend>(echo_examinee());
    run_examination("C", examiner, examinee, catalog, config);
    // 1 setup + (cap+1) probes + cap get-questions + 1 decision.
    int examiner_budget = 1 + (config.max_followup_iterations + 1) +
                          config.max_followup_iterations + 1;
    CHECK(examiner->calls() <= examiner_budget);
    int examinee_budget =
        (config.max_followup_iterations + 1) * config.max_questions_per_batch;
    CHECK(examinee->calls() <= examinee_budget);
}

TEST_CASE("ablation: followups disabled leaves zero probe turns") {
    PromptCatalog catalog = PromptCatalog::builtin();
    ExamConfig config;
    config.followups_enabled = false;
    Transcript t =
        run_examination("C", always_yes_examiner(catalog), echo_examinee(), catalog, config);
    CHECK(count_turns(t, TurnKind::followup_probe) == 0);
    CHECK(count_turns(t, TurnKind::followup_reply) == 0);
    CHECK(t.counters.followup_iterations == 0);
    CHECK_FALSE(t.cap_hit);
    CHECK(t.decision.verdict == Verdict::accept);
}

TEST_CASE("empty question batch proceeds to the decision with a note") {
    PromptCatalog catalog = PromptCatalog::builtin();
    auto examiner = seq_backend({"I have nothing to ask.", "No.", "The claim is correct."});
    auto examinee = seq_backend({"unused"});
    Transcript t = run_examination("C", examiner, examinee, catalog, {});
    CHECK(t.decision.verdict == Verdict::accept);
    CHECK(t.counters.questions_total == 0);
    REQUIRE(t.counters.questions_per_iteration.size() == 1);
    CHECK(t.counters.questions_per_iteration[0] == 0);
    bool has_note = false;
    for (const auto& turn : t.turns) {
        if (turn.speaker == Speaker::system && turn.kind == TurnKind::question_batch) {
            has_note = true;
        }
    }
    CHECK(has_note);
}

TEST_CASE("backend failure mid-exam aborts with a partial transcript") {
    PromptCatalog catalog = PromptCatalog::builtin();
    // Examiner sequence runs dry after the batch: the probe call fails.
    auto examiner = seq_backend({"1. Is it so?"});
    auto examinee = seq_backend({"It is."});
    try {
        run_examination("C", examiner, examinee, catalog, {});
        FAIL("expected exam-aborted");
    } catch (const ExamAborted& e) {
        CHECK(e.partial().aborted);
        CHECK(e.partial().decision.verdict == Verdict::reject);
        CHECK(e.partial().decision.inconclusive);
        CHECK(e.partial().counters.questions_total == 1);
        CHECK_FALSE(e.partial().turns.empty());
    }
}

TEST_CASE("claim must be non-empty") {
    PromptCatalog catalog = PromptCatalog::builtin();
    auto examiner = seq_backend({"x"});
    auto examinee = seq_backend({"x"});
    CHECK_THROWS_AS(run_examination("  ", examiner, examinee, catalog, {}), Error);
}

TEST_CASE("majority verdict rule") {
    SUBCASE("all 8 vote combinations for 3 runs (enumeration oracle)") {
        for (int mask = 0; mask < 8; ++mask) {
            std::vector<Verdict> votes;
            int rejects = 0;
            for (int bit = 0; bit < 3; ++bit) {
                bool reject = (mask >> bit) & 1;
                votes.push_back(reject ? Verdict::reject : Verdict::accept);
                rejects += reject;
            }
            Verdict expected = rejects >= 2 ? Verdict::reject : Verdict::accept;
            CHECK(majority_verdict(votes) == expected);
        }
    }

    SUBCASE("monotonicity: flipping accept->reject never un-rejects") {
        std::mt19937_64 rng(11);
        for (int trial = 0; trial < 1000; ++trial) {
            std::size_t n = 1 + 2 * (rng() % 4);  // odd sizes 1..7
            std::vector<Verdict> votes;
            for (std::size_t i = 0; i < n; ++i) {
                votes.push_back(rng() % 2 ? Verdict::reject : Verdict::accept);
            }
            Verdict before = majority_verdict(votes);
            std::size_t flip = rng() % n;
            if (votes[flip] == Verdict::accept) {
                votes[flip] = Verdict::reject;
                Verdict after = majority_verdict(votes);
                if (before == Verdict::reject) {
                    CHECK(after == Verdict::reject);
                }
            }
        }
    }

    SUBCASE("empty votes are rejected") {
        CHECK_THROWS_AS(majority_verdict({}), Error);
    }
}

TEST_CASE("run_majority aggregates scripted runs") {
    PromptCatalog catalog = PromptCatalog::builtin();
    auto scripted_runs = [](std::vector<std::string> decisions) {
        std::vector<std::string> examiner;
        std::vector<std::string> examinee;
        for (const auto& decision : decisions) {
            examiner.push_back("1. Is it so?");
            examiner.push_back("No.");
            examiner.push_back(decision);
            examinee.push_back("It is.");
        }
        return std::pair{seq_backend(examiner, BackendStyle::chat, "examiner"),
                         seq_backend(examinee, BackendStyle::chat, "examinee")};
    };

    SUBCASE("votes R,A,R reject") {
        auto [examiner, examinee] =
            scripted_runs({"it is incorrect", "it is correct", "it is incorrect"});
        MajorityResult result = run_majority("C", examiner, examinee, catalog, {});
        CHECK(result.verdict == Verdict::reject);
        CHECK(result.transcripts.size() == 3);
    }

    SUBCASE("unanimous accept") {
        auto [examiner, examinee] =
            scripted_runs({"it is correct", "it is correct", "it is correct"});
        CHECK(run_majority("C", examiner, examinee, catalog, {}).verdict == Verdict::accept);
    }

    SUBCASE("aborted run counts as a reject vote") {
        // Third run's examiner dries up at its probe.
        std::vector<std::string> examiner = {"1. Q?", "No.", "it is correct",
                                             "1. Q?", "No.", "it is incorrect",
                                             "1. Q?"};
        std::vector<std::string> examinee = {"A.", "A.", "A."};
        MajorityResult result =
            run_majority("C", seq_backend(examiner, BackendStyle::chat, "examiner"),
                         seq_backend(examinee, BackendStyle::chat, "examinee"), catalog, {});
        CHECK(result.verdict == Verdict::reject);
        REQUIRE(result.transcripts.size() == 3);
        CHECK(result.transcripts[2].aborted);
    }

    SUBCASE("even run counts are rejected") {
        ExamConfig config;
        config.majority_runs = 4;
        auto [examiner, examinee] = scripted_runs({"x", "x", "x", "x"});
        CHECK_THROWS_AS(run_majority("C", examiner, examinee, catalog, config), Error);
    }

    SUBCASE("derived seeds are distinct per run") {
        CHECK(derive_seed(42, 0) != derive_seed(42, 1));
        CHECK(derive_seed(42, 1) != derive_seed(42, 2));
    }
}
