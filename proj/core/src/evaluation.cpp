#include "crossexam/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace crossexam {

using nlohmann::json;

namespace {

SideMetrics side_metrics(std::size_t tp, std::size_t predicted_positive,
                         std::size_t actual_positive) {
    SideMetrics m;
    if (predicted_positive == 0) {
        m.precision = 0.0;
        m.precision_defined = false;
    } else {
        m.precision = static_cast<double>(tp) / static_cast<double>(predicted_positive);
    }
    if (actual_positive == 0) {
        m.recall = 0.0;
        m.recall_defined = false;
    } else {
        m.recall = static_cast<double>(tp) / static_cast<double>(actual_positive);
    }
    if (!m.precision_defined || !m.recall_defined || m.precision + m.recall == 0.0) {
        m.f1 = 0.0;
        m.f1_defined = false;
    } else {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    }
    return m;
}

ConfusionCounts count_rejection_side(const std::vector<EvalRecord>& records) {
    ConfusionCounts counts;
    for (const auto& record : records) {
        if (record.gold == GoldLabel::excluded) {
            throw Error(errkind::value_error,
                        "excluded item reached evaluation: " + record.item_id);
        }
        bool incorrect = record.gold == GoldLabel::incorrect;
        bool rejected = record.verdict == Verdict::reject;
        if (incorrect && rejected) {
            ++counts.tp;
        } else if (!incorrect && rejected) {
            ++counts.fp;
        } else if (incorrect && !rejected) {
            ++counts.fn;
        } else {
            ++counts.tn;
        }
    }
    return counts;
}

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd ms;
    if (values.empty()) {
        return ms;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    ms.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) {
        double d = v - ms.mean;
        sq += d * d;
    }
    // Population standard deviation.
    ms.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    return ms;
}

json mean_std_to_json(const MeanStd& ms) {
    return {{"mean", ms.mean}, {"std", ms.stddev}, {"formatted", format_mean_std(ms)}};
}

json side_to_json(const SideMetrics& m) {
    json j{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
    if (!m.precision_defined || !m.recall_defined || !m.f1_defined) {
        json flags = json::array();
        if (!m.precision_defined) flags.push_back("precision-undefined");
        if (!m.recall_defined) flags.push_back("recall-undefined");
        if (!m.f1_defined) flags.push_back("f1-undefined");
        j["flags"] = std::move(flags);
    }
    return j;
}

std::string pct(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", value * 100.0);
    return buf;
}

}  // namespace

MetricsResult rejection_metrics(const std::vector<EvalRecord>& records) {
    if (records.empty()) {
        throw Error(errkind::value_error, "rejection_metrics needs at least one record");
    }
    ConfusionCounts counts = count_rejection_side(records);
    MetricsResult result;
    result.counts = counts;
    result.metrics = side_metrics(counts.tp, counts.tp + counts.fp, counts.tp + counts.fn);
    return result;
}

MetricsResult acceptance_metrics(const std::vector<EvalRecord>& records) {
    if (records.empty()) {
        throw Error(errkind::value_error, "acceptance_metrics needs at least one record");
    }
    ConfusionCounts counts = count_rejection_side(records);
    MetricsResult result;
    result.counts = counts;
    // Positive class flips to Correct/Accept: hits are rejection-side TNs.
    result.metrics = side_metrics(counts.tn, counts.tn + counts.fn, counts.tn + counts.fp);
    return result;
}

double falsehood_accuracy(const std::vector<EvalRecord>& records) {
    if (records.empty()) {
        throw Error(errkind::value_error, "falsehood_accuracy needs at least one record");
    }
    std::size_t rejected = 0;
    for (const auto& record : records) {
        if (record.gold != GoldLabel::incorrect) {
            throw Error(errkind::value_error,
                        "falsehood set contains a non-incorrect gold label: " + record.item_id);
        }
        if (record.verdict == Verdict::reject) {
            ++rejected;
        }
    }
    return static_cast<double>(rejected) / static_cast<double>(records.size());
}

ExamStats compute_exam_stats(const std::vector<Transcript>& transcripts) {
    if (transcripts.empty()) {
        throw Error(errkind::value_error, "compute_exam_stats needs at least one transcript");
    }
    std::vector<double> questions_total;
    std::vector<double> followup_iterations;
    std::vector<double> followup_batches;  // pooled across transcripts
    std::vector<double> all_batches;
    std::size_t inconclusive = 0;
    for (const auto& t : transcripts) {
        questions_total.push_back(t.counters.questions_total);
        followup_iterations.push_back(t.counters.followup_iterations);
        for (std::size_t i = 0; i < t.counters.questions_per_iteration.size(); ++i) {
            all_batches.push_back(t.counters.questions_per_iteration[i]);
            if (i > 0) {
                followup_batches.push_back(t.counters.questions_per_iteration[i]);
            }
        }
        if (t.decision.inconclusive) {
            ++inconclusive;
        }
    }
    ExamStats stats;
    stats.n = transcripts.size();
    stats.questions_total = mean_std(questions_total);
    stats.followup_iterations = mean_std(followup_iterations);
    stats.followup_questions_per_iteration = mean_std(followup_batches);
    stats.questions_per_iteration = mean_std(all_batches);
    stats.inconclusive_rate =
        static_cast<double>(inconclusive) / static_cast<double>(transcripts.size());
    return stats;
}

std::string format_mean_std(const MeanStd& ms) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f ± %.1f", ms.mean, ms.stddev);
    return buf;
}

std::string format_exam_stats(const ExamStats& stats) {
    std::ostringstream out;
    out << "# of questions: " << format_mean_std(stats.questions_total) << "\n";
    out << "# of follow-up questions per iteration: "
        << format_mean_std(stats.followup_questions_per_iteration) << "\n";
    out << "# of follow-up iterations: " << format_mean_std(stats.followup_iterations) << "\n";
    out << "# of questions per iteration: " << format_mean_std(stats.questions_per_iteration)
        << "\n";
    out << "% of inconclusive examiner decisions: " << pct(stats.inconclusive_rate) << "%\n";
    out << "transcripts: " << stats.n << "\n";
    return out.str();
}

ReportEntry build_report_entry(const std::string& dataset, const std::string& detector,
                               const std::vector<EvalRecord>& records, bool falsehood_set) {
    ReportEntry entry;
    entry.dataset = dataset;
    entry.detector = detector;
    entry.n = records.size();
    MetricsResult rejection = rejection_metrics(records);
    MetricsResult acceptance = acceptance_metrics(records);
    entry.rejection = rejection.metrics;
    entry.acceptance = acceptance.metrics;
    entry.counts = rejection.counts;
    if (falsehood_set) {
        entry.falsehood_accuracy = falsehood_accuracy(records);
    }
    return entry;
}

json emit_report_json(const std::vector<ReportEntry>& entries,
                      const std::optional<ExamStats>& stats) {
    json j;
    j["schema_version"] = kReportSchemaVersion;
    json list = json::array();
    for (const auto& entry : entries) {
        json e{{"dataset", entry.dataset},
               {"detector", entry.detector},
               {"n", entry.n},
               {"rejection", side_to_json(entry.rejection)},
               {"acceptance", side_to_json(entry.acceptance)},
               {"counts",
                {{"tp", entry.counts.tp},
                 {"fp", entry.counts.fp},
                 {"tn", entry.counts.tn},
                 {"fn", entry.counts.fn}}}};
        if (entry.falsehood_accuracy) {
            e["falsehood_accuracy"] = *entry.falsehood_accuracy;
        }
        list.push_back(std::move(e));
    }
    j["entries"] = std::move(list);
    if (stats) {
        j["exam_stats"] = {{"n", stats->n},
                           {"questions_total", mean_std_to_json(stats->questions_total)},
                           {"followup_questions_per_iteration",
                            mean_std_to_json(stats->followup_questions_per_iteration)},
                           {"followup_iterations", mean_std_to_json(stats->followup_iterations)},
                           {"questions_per_iteration",
                            mean_std_to_json(stats->questions_per_iteration)},
                           {"inconclusive_rate", stats->inconclusive_rate}};
    }
    return j;
}

std::string emit_report_markdown(const std::vector<ReportEntry>& entries,
                                 const std::optional<ExamStats>& stats) {
    // Datasets become column groups, detectors rows, mirroring the P/R/F1
    // table layout.
    std::vector<std::string> datasets;
    std::vector<std::string> detectors;
    for (const auto& entry : entries) {
        if (std::find(datasets.begin(), datasets.end(), entry.dataset) == datasets.end()) {
            datasets.push_back(entry.dataset);
        }
        if (std::find(detectors.begin(), detectors.end(), entry.detector) == detectors.end()) {
            detectors.push_back(entry.detector);
        }
    }
    auto find_entry = [&](const std::string& detector,
                          const std::string& dataset) -> const ReportEntry* {
        for (const auto& entry : entries) {
            if (entry.detector == detector && entry.dataset == dataset) {
                return &entry;
            }
        }
        return nullptr;
    };

    std::ostringstream out;
    out << "| Detector |";
    for (const auto& dataset : datasets) {
        out << " " << dataset << " P | " << dataset << " R | " << dataset << " F1 |";
    }
    out << "\n|---|";
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        out << "---|---|---|";
    }
    out << "\n";
    for (const auto& detector : detectors) {
        out << "| " << detector << " |";
        for (const auto& dataset : datasets) {
            const ReportEntry* entry = find_entry(detector, dataset);
            if (!entry) {
                out << " - | - | - |";
                continue;
            }
            out << " " << pct(entry->rejection.precision) << " | "
                << pct(entry->rejection.recall) << " | " << pct(entry->rejection.f1) << " |";
        }
        out << "\n";
    }

    bool any_falsehood = false;
    for (const auto& entry : entries) {
        if (entry.falsehood_accuracy) {
            any_falsehood = true;
        }
    }
    if (any_falsehood) {
        out << "\n| Detector |";
        for (const auto& dataset : datasets) {
            out << " " << dataset << " falsehood acc. |";
        }
        out << "\n|---|";
        for (std::size_t i = 0; i < datasets.size(); ++i) {
            out << "---|";
        }
        out << "\n";
        for (const auto& detector : detectors) {
            out << "| " << detector << " |";
            for (const auto& dataset : datasets) {
                const ReportEntry* entry = find_entry(detector, dataset);
                if (entry && entry->falsehood_accuracy) {
                    out << " " << pct(*entry->falsehood_accuracy) << " |";
                } else {
                    out << " - |";
                }
            }
            out << "\n";
        }
    }

    if (stats) {
        out << "\n## Examination statistics\n\n";
        out << "| Statistic | Value |\n|---|---|\n";
        out << "| # of questions | " << format_mean_std(stats->questions_total) << " |\n";
        out << "| # of follow-up questions per iteration | "
            << format_mean_std(stats->followup_questions_per_iteration) << " |\n";
        out << "| # of follow-up iterations | " << format_mean_std(stats->followup_iterations)
            << " |\n";
        out << "| # of questions per iteration | "
            << format_mean_std(stats->questions_per_iteration) << " |\n";
        out << "| % of inconclusive examiner decisions | " << pct(stats->inconclusive_rate)
            << "% |\n";
    }
    return out.str();
}

}  // namespace crossexam
