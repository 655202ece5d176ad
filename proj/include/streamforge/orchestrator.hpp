#pragma once

#include "streamforge/config.hpp"
#include "streamforge/gateway.hpp"
#include "streamforge/retrieval.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace streamforge::orchestrator {

enum class Phase { ingest, personas, blueprint, generate, filter, eval };

std::string_view to_string(Phase p);
Phase parse_phase(std::string_view name);
const std::vector<Phase>& all_phases();

/// Gateway, embedding provider and template registry built from a config.
struct Runtime {
    std::shared_ptr<gateway::ReplayCache> cache;
    std::unique_ptr<gateway::Gateway> gateway;
    std::unique_ptr<retrieval::EmbeddingProvider> provider;

    static Runtime create(const config::RunConfig& cfg);
    /// Persists the replay cache in record mode.
    void finish(const config::RunConfig& cfg) const;
};

/// Throws ConfigError when a requested phase lacks a required input path or
/// the file does not exist. Inputs produced by an earlier requested phase are
/// not required to exist yet.
void check_inputs(const config::RunConfig& cfg, const std::vector<Phase>& phases);

struct RunOutcome {
    json manifest;
    bool ok = true;
};

/// Runs the phases in pipeline order, each reading its inputs from out_dir
/// when not produced in this run. Writes <out_dir>/run_manifest.json. A phase
/// failure marks the manifest failed and skips the remaining phases.
RunOutcome run_pipeline(const config::RunConfig& cfg, std::vector<Phase> phases, const json& config_json);

/// Output file names inside out_dir.
namespace files {
inline constexpr const char* signals = "signals.jsonl";
inline constexpr const char* source_rejections = "source_rejections.jsonl";
inline constexpr const char* user_personas = "user_personas.jsonl";
inline constexpr const char* agent_personas = "agent_personas.jsonl";
inline constexpr const char* persona_rejections = "persona_rejections.jsonl";
inline constexpr const char* blueprints = "blueprints.jsonl";
inline constexpr const char* blueprint_rejections = "blueprint_rejections.jsonl";
inline constexpr const char* raw_dialogues = "raw_dialogues.jsonl";
inline constexpr const char* aborted_sessions = "aborted_sessions.jsonl";
inline constexpr const char* dialogues = "dialogues.jsonl";
inline constexpr const char* filter_report = "filter_report.json";
inline constexpr const char* gold_states = "dst_gold.jsonl";
inline constexpr const char* slot_distribution = "slot_distribution.json";
inline constexpr const char* dataset_stats = "dataset_stats.json";
inline constexpr const char* manifest = "run_manifest.json";
} // namespace files

} // namespace streamforge::orchestrator
