#include "crossexam/config.hpp"

#include <filesystem>

#include "crossexam/jsonl.hpp"

namespace crossexam {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string resolve_path(const std::string& path, const std::string& base_dir) {
    if (path.empty() || base_dir.empty() || fs::path(path).is_absolute()) {
        return path;
    }
    return (fs::path(base_dir) / path).string();
}

ScriptedReply scripted_reply_from_json(const json& j) {
    ScriptedReply reply;
    if (j.is_string()) {
        reply.text = j.get<std::string>();
        return reply;
    }
    reply.text = j.at("text").get<std::string>();
    if (j.contains("logprobs")) {
        std::vector<TokenLogprob> logprobs;
        const json& lp = j.at("logprobs");
        if (!lp.empty() && lp.front().is_array()) {
            for (const auto& pair : lp) {
                logprobs.push_back({pair.at(0).get<std::string>(), pair.at(1).get<double>()});
            }
        } else {
            // Plain numbers: tokens come from whitespace-splitting the text.
            std::vector<std::string> tokens;
            std::string token;
            std::istringstream words(reply.text);
            while (words >> token) {
                tokens.push_back(token);
            }
            if (tokens.size() != lp.size()) {
                throw Error(errkind::config_error,
                            "scripted logprobs count does not match token count for '" +
                                reply.text + "'");
            }
            for (std::size_t i = 0; i < tokens.size(); ++i) {
                logprobs.push_back({tokens[i], lp[i].get<double>()});
            }
        }
        reply.token_logprobs = std::move(logprobs);
    }
    return reply;
}

}  // namespace

ExamConfig exam_config_from_json(const json& j, ExamConfig base) {
    ExamConfig config = base;
    config.max_followup_iterations = j.value("max_followup_iterations", config.max_followup_iterations);
    config.max_questions_per_batch = j.value("max_questions_per_batch", config.max_questions_per_batch);
    config.followups_enabled = j.value("followups_enabled", config.followups_enabled);
    config.examiner_temperature = j.value("examiner_temperature", config.examiner_temperature);
    config.examinee_temperature = j.value("examinee_temperature", config.examinee_temperature);
    config.majority_runs = j.value("majority_runs", config.majority_runs);
    config.majority_temperature = j.value("majority_temperature", config.majority_temperature);
    if (j.contains("seed")) {
        config.seed = j.at("seed").get<std::uint64_t>();
    }
    if (config.majority_runs <= 0 || config.majority_runs % 2 == 0) {
        throw Error(errkind::config_error, "majority_runs must be a positive odd integer");
    }
    if (config.max_followup_iterations < 0) {
        throw Error(errkind::config_error, "max_followup_iterations must be >= 0");
    }
    return config;
}

json exam_config_to_json(const ExamConfig& config) {
    json j{{"max_followup_iterations", config.max_followup_iterations},
           {"max_questions_per_batch", config.max_questions_per_batch},
           {"followups_enabled", config.followups_enabled},
           {"examiner_temperature", config.examiner_temperature},
           {"examinee_temperature", config.examinee_temperature},
           {"majority_runs", config.majority_runs},
           {"majority_temperature", config.majority_temperature}};
    if (config.seed) {
        j["seed"] = *config.seed;
    }
    return j;
}

BackendPtr make_backend_from_spec(const json& spec) {
    std::string type = spec.value("type", "http");
    std::string id = spec.at("id").get<std::string>();
    BackendStyle style = backend_style_from_string(spec.value("style", "chat"));

    if (type == "scripted-map") {
        std::map<std::string, ScriptedReply> script;
        for (const auto& [key, value] : spec.at("script").items()) {
            script[key] = scripted_reply_from_json(value);
        }
        return std::make_shared<ScriptedMapBackend>(id, std::move(script), style);
    }
    if (type == "scripted-seq") {
        std::vector<ScriptedReply> script;
        for (const auto& value : spec.at("script")) {
            script.push_back(scripted_reply_from_json(value));
        }
        return std::make_shared<ScriptedSequenceBackend>(id, std::move(script), style);
    }
    if (type == "http") {
        HttpBackendConfig config;
        config.descriptor.id = id;
        config.descriptor.style = style;
        if (spec.contains("capabilities")) {
            for (const auto& capability : spec.at("capabilities")) {
                std::string name = capability.get<std::string>();
                if (name == "logprobs") {
                    config.descriptor.supports_logprobs = true;
                } else if (name == "sampling-seed") {
                    config.descriptor.supports_seed = true;
                } else {
                    throw Error(errkind::config_error, "unknown capability '" + name + "'");
                }
            }
        }
        config.base_url = spec.at("base_url").get<std::string>();
        config.path = spec.at("path").get<std::string>();
        config.model = spec.value("model", "");
        config.api_key_env = spec.value("api_key_env", "");
        if (spec.contains("retry")) {
            config.retry.attempts = spec.at("retry").value("attempts", config.retry.attempts);
            config.retry.initial_backoff_ms =
                spec.at("retry").value("initial_backoff_ms", config.retry.initial_backoff_ms);
        }
        config.timeout_seconds = spec.value("timeout_seconds", config.timeout_seconds);
        return std::make_shared<HttpBackend>(std::move(config));
    }
    throw Error(errkind::config_error, "unknown backend type '" + type + "'");
}

RunConfig RunConfig::load(const std::string& path) {
    json j = json::parse(read_text_file(path), nullptr, false);
    if (j.is_discarded()) {
        throw Error(errkind::config_error, "config file is not valid JSON: " + path);
    }
    return from_json(j, fs::path(path).parent_path().string());
}

RunConfig RunConfig::from_json(const json& j, const std::string& base_dir) {
    RunConfig config;
    config.raw_ = j;
    if (j.contains("backends")) {
        for (const auto& spec : j.at("backends")) {
            std::string id = spec.at("id").get<std::string>();
            if (config.backend_specs_.count(id)) {
                throw Error(errkind::config_error, "duplicate backend id '" + id + "'");
            }
            config.backend_specs_[id] = spec;
        }
    }
    if (j.contains("prompt_catalog_path")) {
        config.catalog_ = PromptCatalog::from_file(
            resolve_path(j.at("prompt_catalog_path").get<std::string>(), base_dir));
    } else {
        config.catalog_ = PromptCatalog::builtin();
    }
    if (j.contains("exam")) {
        config.exam_config_ = exam_config_from_json(j.at("exam"));
    }
    if (j.contains("cassette")) {
        const json& cassette = j.at("cassette");
        std::string mode = cassette.value("mode", "off");
        if (mode == "record") {
            config.cassette_mode_ = CassetteMode::record;
        } else if (mode == "replay") {
            config.cassette_mode_ = CassetteMode::replay;
        } else if (mode == "cache") {
            config.cassette_mode_ = CassetteMode::cache;
        } else if (mode == "off") {
            config.cassette_mode_ = CassetteMode::off;
        } else {
            throw Error(errkind::config_error, "unknown cassette mode '" + mode + "'");
        }
        if (config.cassette_mode_ != CassetteMode::off) {
            config.cassette_path_ = resolve_path(cassette.at("path").get<std::string>(), base_dir);
        }
    }
    if (j.contains("detectors")) {
        const json& detectors = j.at("detectors");
        if (detectors.contains("confidence")) {
            config.confidence_train_path_ = resolve_path(
                detectors.at("confidence").value("train_path", ""), base_dir);
            if (config.confidence_train_path_->empty()) {
                config.confidence_train_path_.reset();
            }
        }
        if (detectors.contains("ic-idk")) {
            const json& icidk = detectors.at("ic-idk");
            std::string heldout = resolve_path(icidk.value("heldout_path", ""), base_dir);
            if (!heldout.empty()) {
                config.icidk_heldout_path_ = heldout;
            }
            config.icidk_k_ = icidk.value("k", config.icidk_k_);
            config.icidk_d_ = icidk.value("d", config.icidk_d_);
            config.icidk_seed_ = icidk.value("seed", config.icidk_seed_);
        }
    }
    return config;
}

bool RunConfig::has_backend(const std::string& id) const {
    return backend_specs_.count(id) > 0;
}

BackendPtr RunConfig::backend(const std::string& id) {
    auto cached = backend_cache_.find(id);
    if (cached != backend_cache_.end()) {
        return cached->second;
    }
    auto spec = backend_specs_.find(id);
    if (spec == backend_specs_.end()) {
        throw Error(errkind::config_error, "no backend '" + id + "' in config");
    }

    BackendPtr handle;
    if (cassette_mode_ == CassetteMode::replay) {
        BackendDescriptor descriptor;
        descriptor.id = id;
        descriptor.style = backend_style_from_string(spec->second.value("style", "chat"));
        if (spec->second.contains("capabilities")) {
            for (const auto& capability : spec->second.at("capabilities")) {
                std::string name = capability.get<std::string>();
                descriptor.supports_logprobs |= name == "logprobs";
                descriptor.supports_seed |= name == "sampling-seed";
            }
        }
        handle = std::make_shared<ReplayBackend>(descriptor, load_cassette(cassette_path_));
    } else {
        handle = make_backend_from_spec(spec->second);
        if (cassette_mode_ == CassetteMode::record) {
            handle = record_wrap(handle, cassette_path_);
        } else if (cassette_mode_ == CassetteMode::cache) {
            handle = std::make_shared<CachingBackend>(handle, cassette_path_);
        }
    }
    backend_cache_[id] = handle;
    return handle;
}

}  // namespace crossexam
