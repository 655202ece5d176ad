#pragma once

#include "streamforge/blueprint.hpp"
#include "streamforge/domain_profile.hpp"
#include "streamforge/filter.hpp"
#include "streamforge/gateway.hpp"
#include "streamforge/generation.hpp"
#include "streamforge/ingest.hpp"
#include "streamforge/persona.hpp"
#include "streamforge/schema.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace streamforge::config {

struct LexiconRef {
    std::filesystem::path path;
    ingest::LexiconScope scope = ingest::LexiconScope::custom;
};

struct Paths {
    std::filesystem::path sources;
    std::filesystem::path seeds;
    std::filesystem::path kb;
    std::vector<LexiconRef> lexicons;
    std::filesystem::path out_dir = "out";
    std::filesystem::path templates; // optional overrides directory
    std::filesystem::path cache;     // defaults to <out_dir>/gateway_cache.jsonl
};

struct EvalSettings {
    std::vector<std::string> slot_domains; // empty: every domain in the data
};

/// Fully parsed run configuration. Relative paths are resolved against the
/// directory of the config file.
struct RunConfig {
    std::uint64_t seed = 42;
    Paths paths;
    ingest::IngestConfig ingest;
    json embedding = {{"provider", "offline"}, {"dim", 256}};
    gateway::GatewayConfig gateway;
    persona::PersonaConfig persona;
    blueprint::BlueprintConfig blueprint;
    std::vector<std::string> stage_order;
    generation::GenerationConfig generation;
    profile::Ontology ontology = profile::Ontology::defaults();
    filter::FilterConfig filter;
    EvalSettings eval;

    [[nodiscard]] std::filesystem::path cache_path() const;
};

/// Template ids the pipeline issues requests for.
const std::vector<std::string>& required_templates();

/// Report-based check. Codes: "unknown key", "threshold out of range",
/// "invalid value", "unknown template".
ValidationReport validate_config(const json& j, const std::filesystem::path& base_dir = {});
ValidationReport validate_config_file(const std::filesystem::path& path);

/// Parses and validates; throws ConfigError carrying the report summary.
RunConfig parse_config(const json& j, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// The canonical example configuration (every key with its default).
json default_config_json();

} // namespace streamforge::config
