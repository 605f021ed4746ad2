#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace crossexam {

/// Stable error-kind strings. Every failure surfaced by the library carries
/// one of these so callers (and the CLI) can branch without string-matching
/// free-form messages.
namespace errkind {
inline constexpr const char* backend_unavailable = "backend-unavailable";
inline constexpr const char* capability_error = "capability-error";
inline constexpr const char* io_error = "io-error";
inline constexpr const char* script_miss = "script-miss";
inline constexpr const char* template_error = "template-error";
inline constexpr const char* exam_aborted = "exam-aborted";
inline constexpr const char* detector_error = "detector-error";
inline constexpr const char* demo_error = "demo-error";
inline constexpr const char* value_error = "value-error";
inline constexpr const char* fit_error = "fit-error";
inline constexpr const char* generation_error = "generation-error";
inline constexpr const char* dataset_error = "dataset-error";
inline constexpr const char* override_error = "override-error";
inline constexpr const char* evaluation_error = "evaluation-error";
inline constexpr const char* run_error = "run-error";
inline constexpr const char* not_found = "not-found";
inline constexpr const char* budget_exhausted = "budget-exhausted";
inline constexpr const char* config_error = "config-error";
}  // namespace errkind

class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

}  // namespace crossexam
