#include "crossexam/commands.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <thread>

#include "crossexam/jsonl.hpp"

namespace crossexam {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::map<std::string, QAItem> index_dataset(const std::string& path) {
    DatasetLoadResult loaded = load_dataset(path);
    std::map<std::string, QAItem> index;
    for (auto& item : loaded.items) {
        index[item.id] = std::move(item);
    }
    return index;
}

/// Runs tasks under a bounded pool. Task exceptions propagate after all
/// workers drain (first one wins).
void run_pool(std::size_t jobs, const std::vector<std::function<void()>>& tasks) {
    if (jobs <= 1) {
        for (const auto& task : tasks) {
            task();
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) {
                return;
            }
            try {
                tasks[i]();
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < std::min(jobs, tasks.size()); ++i) {
        threads.emplace_back(worker);
    }
    for (auto& thread : threads) {
        thread.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

std::string generate_sidecar_path(const std::string& out_path) {
    return out_path + ".manifest.json";
}

std::string make_run_id() {
    return fnv1a_hex(utc_timestamp() + std::to_string(std::random_device{}()));
}

}  // namespace

GenerateReport cmd_generate_claims(RunConfig& config, const GenerateOptions& options) {
    DatasetLoadResult loaded = load_dataset(options.dataset_path);
    std::vector<QAItem> items = std::move(loaded.items);
    if (options.n) {
        items = sample_subset(items, *options.n, options.seed);
    }

    // Resume bookkeeping: the sidecar pins the sampling seed.
    const std::string sidecar = generate_sidecar_path(options.out_path);
    std::ifstream sidecar_probe(sidecar);
    if (sidecar_probe.good()) {
        json prev = json::parse(read_text_file(sidecar), nullptr, false);
        if (prev.is_discarded() || prev.value("seed", options.seed) != options.seed) {
            throw Error(errkind::run_error,
                        "resume seed mismatch for " + options.out_path +
                            " (previous run used a different seed)");
        }
    } else {
        json meta{{"schema_version", kStoreSchemaVersion},
                  {"seed", options.seed},
                  {"dataset", options.dataset_path},
                  {"mode", to_string(options.mode)}};
        write_text_file(sidecar, meta.dump(2) + "\n");
    }

    std::set<std::string> done;
    {
        std::ifstream out_probe(options.out_path);
        if (out_probe.good()) {
            for (const auto& claim : load_claims(options.out_path)) {
                done.insert(claim.item_id);
            }
        }
    }

    BackendPtr backend = config.backend(options.backend_id);
    GenerateReport report;
    for (const auto& item : items) {
        if (done.count(item.id)) {
            ++report.cached;
            continue;
        }
        GenOptions gen;
        gen.seed = splitmix64(options.seed ^ fnv1a64(item.id));
        gen.want_logprobs = options.want_logprobs;
        try {
            if (options.mode == ClaimMode::truthful) {
                GeneratedClaim claim = generate_claim(item, *backend, config.catalog(), gen);
                append_jsonl_line(options.out_path, claim_to_json(claim));
                ++report.written;
            } else {
                FalsehoodResult result =
                    generate_falsehood(item, *backend, config.catalog(), gen);
                if (result.claim) {
                    append_jsonl_line(options.out_path, claim_to_json(*result.claim));
                    ++report.written;
                } else {
                    ++report.discarded;
                }
            }
        } catch (const Error& e) {
            if (std::string(e.kind()) == errkind::generation_error) {
                ++report.failed;
                continue;
            }
            throw;
        }
    }
    return report;
}

ExamineReport cmd_examine(RunConfig& config, const ExamineOptions& options) {
    std::vector<GeneratedClaim> claims = load_claims(options.claims_path);
    std::map<std::string, QAItem> dataset = options.dataset_path.empty()
                                                ? std::map<std::string, QAItem>{}
                                                : index_dataset(options.dataset_path);

    std::string detector_name = options.detector;
    if (options.majority && detector_name == "lmvlm") {
        detector_name = "lmvlm-majority";
    }

    ExamConfig exam_config = config.exam_config();
    if (options.no_followups) {
        exam_config.followups_enabled = false;
    }
    if (options.seed) {
        exam_config.seed = options.seed;
    }

    // Budget wrapper applies to both roles through one shared counter.
    std::shared_ptr<CallBudget> budget;
    auto wrap = [&budget](BackendPtr backend) -> BackendPtr {
        if (!budget || !backend) {
            return backend;
        }
        return std::make_shared<BudgetedBackend>(std::move(backend), budget);
    };
    if (options.max_backend_calls) {
        budget = std::make_shared<CallBudget>(*options.max_backend_calls);
    }

    BackendPtr examinee_raw = config.backend(options.examinee_id);
    BackendPtr examiner_raw =
        options.examiner_id.empty() ? nullptr : config.backend(options.examiner_id);
    if (options.jobs > 1) {
        auto is_sequence = [](const BackendPtr& backend) {
            return backend && dynamic_cast<ScriptedSequenceBackend*>(backend.get()) != nullptr;
        };
        if (is_sequence(examinee_raw) || is_sequence(examiner_raw)) {
            throw Error(errkind::run_error,
                        "sequence-scripted backends hold a cursor and cannot be shared "
                        "across workers; use --jobs 1");
        }
    }

    DetectorDeps deps;
    deps.examinee = wrap(std::move(examinee_raw));
    if (examiner_raw) {
        deps.examiner = wrap(std::move(examiner_raw));
    }
    deps.catalog = &config.catalog();
    deps.exam_config = exam_config;
    if (auto train_path = config.confidence_train_path()) {
        std::vector<std::pair<double, GoldLabel>> train;
        for (const auto& line : read_jsonl(*train_path).lines) {
            train.emplace_back(line.value.at("confidence").get<double>(),
                               gold_label_from_string(line.value.at("gold").get<std::string>()));
        }
        deps.confidence_model = fit_confidence_threshold(train);
    }
    if (auto heldout_path = config.icidk_heldout_path()) {
        deps.icidk_demos = build_icidk_demos(load_heldout(*heldout_path), config.icidk_k(),
                                             config.icidk_d(), config.icidk_seed());
    }
    std::unique_ptr<Detector> detector = make_detector(detector_name, deps);

    TranscriptStore store(options.store_dir);
    json snapshot{{"detector", detector_name},
                  {"claims_path", options.claims_path},
                  {"examiner_id", options.examiner_id},
                  {"examinee_id", options.examinee_id},
                  {"exam", exam_config_to_json(exam_config)}};
    if (store.has_manifest()) {
        RunManifest previous = store.load_manifest();
        if (previous.config_snapshot != snapshot) {
            throw Error(errkind::run_error,
                        "resume mismatch: store " + options.store_dir +
                            " was produced with a different configuration");
        }
    }

    RunManifest manifest;
    manifest.run_id = make_run_id();
    manifest.detector = detector_name;
    manifest.dataset_path = options.dataset_path;
    manifest.claims_path = options.claims_path;
    manifest.examiner_id = options.examiner_id;
    manifest.examinee_id = options.examinee_id;
    manifest.seed = exam_config.seed;
    manifest.config_snapshot = snapshot;
    manifest.started_at = utc_timestamp();
    if (store.has_manifest()) {
        manifest.run_id = store.load_manifest().run_id;
    }

    std::set<std::string> done;
    for (const auto& record : store.load_records()) {
        done.insert(record.item_id);
    }

    ExamineReport report;
    std::mutex report_mutex;
    std::atomic<bool> budget_hit{false};

    std::vector<std::function<void()>> tasks;
    for (const auto& claim : claims) {
        if (done.count(claim.item_id)) {
            ++report.counts.cached;
            continue;
        }
        tasks.push_back([&, claim] {
            if (budget_hit.load()) {
                return;
            }
            ClaimContext ctx;
            ctx.item_id = claim.item_id;
            ctx.claim = claim.text;
            ctx.claim_logprobs = claim.answer_logprobs;
            auto item = dataset.find(claim.item_id);
            if (item != dataset.end()) {
                ctx.question = item->second.query;
                ctx.query_format = item->second.query_format;
            }
            // Per-item derived seed keeps results independent of scheduling.
            ExamConfig item_config = exam_config;
            if (exam_config.seed) {
                item_config.seed = splitmix64(*exam_config.seed ^ fnv1a64(claim.item_id));
            }
            DetectorDeps item_deps = deps;
            item_deps.exam_config = item_config;

            StoredRecord record;
            record.item_id = claim.item_id;
            record.detector = detector_name;
            try {
                std::unique_ptr<Detector> item_detector = make_detector(detector_name, item_deps);
                DetectionResult result = item_detector->run(ctx);
                record.verdict = result.outcome.verdict;
                record.score = result.outcome.score;
                record.metadata = result.outcome.metadata;
                int run_index = 0;
                for (const auto& transcript : result.transcripts) {
                    store.append_transcript(claim.item_id, transcript,
                                            result.transcripts.size() > 1 ? run_index : -1);
                    ++run_index;
                }
                store.append_record(record);
                std::lock_guard<std::mutex> lock(report_mutex);
                ++report.counts.completed;
            } catch (const Error& e) {
                if (std::string(e.kind()) == errkind::budget_exhausted) {
                    budget_hit.store(true);
                    return;  // clean abort: stop scheduling, keep the store intact
                }
                record.verdict = Verdict::reject;
                record.aborted = true;
                record.metadata["error"] = e.what();
                store.append_record(record);
                std::lock_guard<std::mutex> lock(report_mutex);
                ++report.counts.aborted;
            }
        });
    }
    run_pool(options.jobs, tasks);

    report.budget_exhausted = budget_hit.load();
    manifest.finished_at = utc_timestamp();
    manifest.counts = report.counts;
    store.write_manifest(manifest);
    return report;
}

EvaluateReport cmd_evaluate(const EvaluateOptions& options) {
    TranscriptStore store(options.store_dir);
    std::vector<StoredRecord> records = store.load_records();
    std::vector<GeneratedClaim> claims = load_claims(options.claims_path);
    std::map<std::string, QAItem> dataset = index_dataset(options.dataset_path);

    std::map<std::string, GeneratedClaim> claim_index;
    for (auto& claim : claims) {
        claim_index[claim.item_id] = std::move(claim);
    }

    // Auto labels for every claim we can join, then manual overrides.
    std::map<std::string, GoldLabel> labels;
    bool all_falsehoods = !claims.empty();
    for (const auto& [id, claim] : claim_index) {
        auto item = dataset.find(id);
        if (item == dataset.end()) {
            continue;
        }
        labels[id] = auto_label(claim, item->second);
        all_falsehoods = all_falsehoods && claim.mode == ClaimMode::falsehood;
    }
    if (options.overrides_path) {
        labels = apply_overrides(std::move(labels), load_overrides(*options.overrides_path));
    }

    std::vector<std::string> unlabeled;
    std::vector<EvalRecord> eval_records;
    std::string detector_name;
    for (const auto& record : records) {
        auto label = labels.find(record.item_id);
        if (label == labels.end()) {
            unlabeled.push_back(record.item_id);
            continue;
        }
        if (label->second == GoldLabel::excluded) {
            continue;
        }
        detector_name = record.detector;
        eval_records.push_back({record.item_id, label->second, record.verdict, record.detector});
    }
    if (!unlabeled.empty()) {
        std::string ids;
        for (const auto& id : unlabeled) {
            ids += (ids.empty() ? "" : ", ") + id;
        }
        throw Error(errkind::evaluation_error, "records without labels: " + ids);
    }
    if (eval_records.empty()) {
        throw Error(errkind::evaluation_error, "no labeled records to evaluate");
    }

    std::string dataset_name = "dataset";
    if (!dataset.empty()) {
        dataset_name = dataset.begin()->second.dataset.empty() ? "dataset"
                                                               : dataset.begin()->second.dataset;
    }

    EvaluateReport report;
    report.entries.push_back(
        build_report_entry(dataset_name, detector_name, eval_records, all_falsehoods));

    std::vector<Transcript> transcripts;
    for (auto& [id, transcript] : store.load_transcripts()) {
        (void)id;
        transcripts.push_back(std::move(transcript));
    }
    if (!transcripts.empty()) {
        report.stats = compute_exam_stats(transcripts);
    }

    report.rendered = options.format == ReportFormat::json
                          ? emit_report_json(report.entries, report.stats).dump(2) + "\n"
                          : emit_report_markdown(report.entries, report.stats);
    if (!options.out_path.empty()) {
        write_text_file(options.out_path, report.rendered);
    }
    return report;
}

ExamStats cmd_stats(const TranscriptStore& store) {
    std::vector<Transcript> transcripts;
    for (auto& [id, transcript] : store.load_transcripts()) {
        (void)id;
        transcripts.push_back(std::move(transcript));
    }
    return compute_exam_stats(transcripts);
}

std::string cmd_replay(const TranscriptStore& store, const std::string& item_id) {
    std::vector<Transcript> transcripts = store.find_transcripts(item_id);
    if (transcripts.empty()) {
        throw Error(errkind::not_found, "no transcript for item '" + item_id + "'");
    }
    std::string out;
    for (std::size_t i = 0; i < transcripts.size(); ++i) {
        if (transcripts.size() > 1) {
            out += "=== run " + std::to_string(i) + " ===\n";
        }
        out += render_transcript(transcripts[i]);
        if (i + 1 < transcripts.size()) {
            out += "\n";
        }
    }
    return out;
}

}  // namespace crossexam
