#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "crossexam/backend.hpp"
#include "crossexam/detectors.hpp"
#include "crossexam/exam.hpp"
#include "crossexam/prompts.hpp"

namespace crossexam {

enum class CassetteMode { off, record, replay, cache };

/// Run configuration loaded from a JSON config file:
///   {
///     "backends": [ {"id", "type": "http"|"scripted-map"|"scripted-seq", ...} ],
///     "exam": { ExamConfig overrides },
///     "prompt_catalog_path": "...",            (optional)
///     "cassette": {"mode": "record"|"replay"|"cache", "path": "..."},
///     "detectors": {
///       "confidence": {"train_path": "..."},
///       "ic-idk": {"heldout_path": "...", "k": 8, "d": 2, "seed": 0}
///     }
///   }
/// CLI flags override config values.
class RunConfig {
public:
    static RunConfig load(const std::string& path);
    static RunConfig from_json(const nlohmann::json& j, const std::string& base_dir = "");

    /// Builds (and caches) the backend handle for a configured id, applying
    /// the cassette wrapper when enabled. Unknown id -> config-error.
    BackendPtr backend(const std::string& id);

    bool has_backend(const std::string& id) const;

    const PromptCatalog& catalog() const { return catalog_; }
    const ExamConfig& exam_config() const { return exam_config_; }
    ExamConfig& exam_config() { return exam_config_; }

    CassetteMode cassette_mode() const { return cassette_mode_; }
    const std::string& cassette_path() const { return cassette_path_; }

    std::optional<std::string> confidence_train_path() const { return confidence_train_path_; }
    std::optional<std::string> icidk_heldout_path() const { return icidk_heldout_path_; }
    int icidk_k() const { return icidk_k_; }
    int icidk_d() const { return icidk_d_; }
    std::uint64_t icidk_seed() const { return icidk_seed_; }

    nlohmann::json raw() const { return raw_; }

private:
    nlohmann::json raw_;
    std::map<std::string, nlohmann::json> backend_specs_;
    std::map<std::string, BackendPtr> backend_cache_;
    PromptCatalog catalog_;
    ExamConfig exam_config_;
    CassetteMode cassette_mode_ = CassetteMode::off;
    std::string cassette_path_;
    std::optional<std::string> confidence_train_path_;
    std::optional<std::string> icidk_heldout_path_;
    int icidk_k_ = 8;
    int icidk_d_ = 2;
    std::uint64_t icidk_seed_ = 0;
};

/// Parses an ExamConfig fragment (all fields optional, defaults preserved).
ExamConfig exam_config_from_json(const nlohmann::json& j, ExamConfig base = {});
nlohmann::json exam_config_to_json(const ExamConfig& config);

/// Constructs a backend from one config entry (no cassette wrapping).
BackendPtr make_backend_from_spec(const nlohmann::json& spec);

}  // namespace crossexam
