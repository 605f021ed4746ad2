#pragma once

#include <optional>
#include <string>
#include <vector>

#include "crossexam/exam.hpp"
#include "crossexam/labeling.hpp"

namespace crossexam {

/// One judged claim joined with its gold label (Correct/Incorrect only;
/// Excluded items never reach evaluation).
struct EvalRecord {
    std::string item_id;
    GoldLabel gold = GoldLabel::correct;
    Verdict verdict = Verdict::accept;
    std::string detector;
};

/// Precision/recall/F1 for one side. A zero denominator yields 0 with the
/// corresponding *_defined flag cleared, so an empty rejection set cannot be
/// misread as a perfect score.
struct SideMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool precision_defined = true;
    bool recall_defined = true;
    bool f1_defined = true;
};

/// Rejection-side confusion counts (positive class = Incorrect/Reject).
struct ConfusionCounts {
    std::size_t tp = 0;  // incorrect and rejected
    std::size_t fp = 0;  // correct but rejected
    std::size_t tn = 0;  // correct and accepted
    std::size_t fn = 0;  // incorrect but accepted

    std::size_t total() const { return tp + fp + tn + fn; }
};

struct MetricsResult {
    SideMetrics metrics;
    ConfusionCounts counts;  // always rejection-side counts
};

/// Precision = |incorrect ∧ rejected| / |rejected|, recall = |incorrect ∧
/// rejected| / |incorrect|, F1 their harmonic mean. Empty input ->
/// value-error.
MetricsResult rejection_metrics(const std::vector<EvalRecord>& records);

/// Mirror image with respect to acceptance of correct claims.
MetricsResult acceptance_metrics(const std::vector<EvalRecord>& records);

/// Fraction of rejected verdicts over a falsehoods-only record set. Any
/// Correct gold present -> value-error.
double falsehood_accuracy(const std::vector<EvalRecord>& records);

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
};

struct ExamStats {
    std::size_t n = 0;
    MeanStd questions_total;
    MeanStd followup_questions_per_iteration;  // pooled over follow-up batches
    MeanStd followup_iterations;
    MeanStd questions_per_iteration;  // pooled over all batches incl. setup
    double inconclusive_rate = 0.0;
};

/// Aggregates examination counters. Per-iteration figures are pooled across
/// transcripts; an empty pool reports 0 +- 0. Empty transcript list ->
/// value-error.
ExamStats compute_exam_stats(const std::vector<Transcript>& transcripts);

/// "mean ± std" with one decimal, e.g. "7.0 ± 2.8".
std::string format_mean_std(const MeanStd& ms);

std::string format_exam_stats(const ExamStats& stats);

/// One detector's metrics over one dataset.
struct ReportEntry {
    std::string dataset;
    std::string detector;
    std::size_t n = 0;
    SideMetrics rejection;
    SideMetrics acceptance;
    ConfusionCounts counts;
    std::optional<double> falsehood_accuracy;
};

ReportEntry build_report_entry(const std::string& dataset, const std::string& detector,
                               const std::vector<EvalRecord>& records, bool falsehood_set);

inline constexpr int kReportSchemaVersion = 1;

/// Canonical machine form: {"schema_version", "entries", "exam_stats"?}.
nlohmann::json emit_report_json(const std::vector<ReportEntry>& entries,
                                const std::optional<ExamStats>& stats);

/// Markdown table with P/R/F1 columns per dataset, one row per detector.
std::string emit_report_markdown(const std::vector<ReportEntry>& entries,
                                 const std::optional<ExamStats>& stats);

}  // namespace crossexam
