// crossexam CLI: generate-claims, examine, evaluate, falsehoods, stats, replay.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <crossexam/commands.hpp>
#include <crossexam/config.hpp>
#include <crossexam/errors.hpp>

#include "CLI11.hpp"

namespace {

using namespace crossexam;

RunConfig load_config(const std::string& path) {
    if (path.empty()) {
        return RunConfig::from_json(nlohmann::json::object());
    }
    return RunConfig::load(path);
}

void print_generate_report(const GenerateReport& report) {
    std::cout << "written=" << report.written << " cached=" << report.cached
              << " discarded=" << report.discarded << " failed=" << report.failed << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-examination engine for factual-error detection"};
    app.require_subcommand(1);

    std::string config_path;
    auto add_config_option = [&config_path](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Run configuration JSON file")
            ->envname("CROSSEXAM_CONFIG");
    };

    // generate-claims / falsehoods share their options.
    std::string dataset_path, claims_path, out_path, store_dir;
    std::string examiner_id, examinee_id, detector = "lmvlm";
    std::string overrides_path, format = "json", item_id;
    std::optional<std::size_t> n;
    std::optional<std::uint64_t> seed, max_backend_calls;
    std::size_t jobs = 1;
    bool no_followups = false, majority = false, logprobs = false;

    auto add_generate_options = [&](CLI::App* cmd) {
        add_config_option(cmd);
        cmd->add_option("--dataset", dataset_path, "QA dataset (JSONL)")->required();
        cmd->add_option("--examinee", examinee_id, "Backend id generating the claims")->required();
        cmd->add_option("--out", out_path, "Output claims file (JSONL)")->required();
        cmd->add_option("--n", n, "Sample size (default: all items)");
        cmd->add_option("--seed", seed, "Sampling / generation seed");
        cmd->add_flag("--logprobs", logprobs, "Capture answer token logprobs when supported");
    };

    CLI::App* generate = app.add_subcommand("generate-claims", "Turn QA items into examinee claims");
    add_generate_options(generate);

    CLI::App* falsehoods =
        app.add_subcommand("falsehoods", "Generate verified wrong claims for each item");
    add_generate_options(falsehoods);

    CLI::App* examine = app.add_subcommand("examine", "Judge claims with a detector");
    add_config_option(examine);
    examine->add_option("--claims", claims_path, "Claims file (JSONL)")->required();
    examine->add_option("--dataset", dataset_path, "QA dataset (for question context)");
    examine->add_option("--examiner", examiner_id, "Examiner backend id");
    examine->add_option("--examinee", examinee_id, "Examinee backend id")->required();
    examine->add_option("--detector", detector,
                        "Detector: lmvlm, lmvlm-majority, ays, idk, ic-idk, confidence, ays+lmvlm");
    examine->add_option("--store", store_dir, "Run store directory")->required();
    examine->add_option("--jobs", jobs, "Worker pool size");
    examine->add_option("--seed", seed, "Base examination seed");
    examine->add_flag("--no-followups", no_followups, "Disable the follow-up stage (ablation)");
    examine->add_flag("--majority", majority, "Use the majority variant of lmvlm");
    examine->add_option("--max-backend-calls", max_backend_calls,
                        "Abort cleanly after this many backend calls");

    CLI::App* evaluate = app.add_subcommand("evaluate", "Join records with labels, emit metrics");
    add_config_option(evaluate);
    evaluate->add_option("--store", store_dir, "Run store directory")->required();
    evaluate->add_option("--dataset", dataset_path, "QA dataset (JSONL)")->required();
    evaluate->add_option("--claims", claims_path, "Claims file (JSONL)")->required();
    evaluate->add_option("--overrides", overrides_path, "Manual label overrides (JSONL)");
    evaluate->add_option("--out", out_path, "Report output path");
    evaluate->add_option("--format", format, "json or markdown")
        ->check(CLI::IsMember({"json", "markdown"}));

    CLI::App* stats = app.add_subcommand("stats", "Print examination statistics for a store");
    stats->add_option("--store", store_dir, "Run store directory")->required();

    CLI::App* replay = app.add_subcommand("replay", "Pretty-print one stored examination");
    replay->add_option("--store", store_dir, "Run store directory")->required();
    replay->add_option("item_id", item_id, "Item id to replay")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed() || falsehoods->parsed()) {
            RunConfig config = load_config(config_path);
            GenerateOptions options;
            options.dataset_path = dataset_path;
            options.backend_id = examinee_id;
            options.out_path = out_path;
            options.n = n;
            options.seed = seed.value_or(0);
            options.mode = generate->parsed() ? ClaimMode::truthful : ClaimMode::falsehood;
            options.want_logprobs = logprobs;
            print_generate_report(cmd_generate_claims(config, options));
        } else if (examine->parsed()) {
            RunConfig config = load_config(config_path);
            ExamineOptions options;
            options.claims_path = claims_path;
            options.dataset_path = dataset_path;
            options.examiner_id = examiner_id;
            options.examinee_id = examinee_id;
            options.detector = detector;
            options.store_dir = store_dir;
            options.jobs = jobs;
            options.seed = seed;
            options.no_followups = no_followups;
            options.majority = majority;
            options.max_backend_calls = max_backend_calls;
            ExamineReport report = cmd_examine(config, options);
            std::cout << "completed=" << report.counts.completed
                      << " aborted=" << report.counts.aborted
                      << " cached=" << report.counts.cached << "\n";
            if (report.budget_exhausted) {
                std::cerr << "run aborted: backend call budget exhausted (resume to continue)\n";
                return 2;
            }
        } else if (evaluate->parsed()) {
            EvaluateOptions options;
            options.store_dir = store_dir;
            options.dataset_path = dataset_path;
            options.claims_path = claims_path;
            if (!overrides_path.empty()) {
                options.overrides_path = overrides_path;
            }
            options.out_path = out_path;
            options.format = format == "markdown" ? ReportFormat::markdown : ReportFormat::json;
            EvaluateReport report = cmd_evaluate(options);
            std::cout << report.rendered;
        } else if (stats->parsed()) {
            TranscriptStore store(store_dir);
            std::cout << format_exam_stats(cmd_stats(store));
        } else if (replay->parsed()) {
            TranscriptStore store(store_dir);
            std::cout << cmd_replay(store, item_id);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
