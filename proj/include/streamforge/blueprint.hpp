#pragma once

#include "streamforge/domain_profile.hpp"
#include "streamforge/gateway.hpp"
#include "streamforge/ingest.hpp"
#include "streamforge/schema.hpp"

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace streamforge::blueprint {

/// Working state of one dialogue while it is being generated.
struct DialogueState {
    std::vector<Turn> history;
    SlotMap cumulative_inform;
    std::vector<std::string> pending_requests;
    std::string current_stage;
    std::size_t turn_budget_remaining = 0;
    std::set<std::string> declined;       // requested slots the user had no value for
    std::set<std::size_t> voiced_inquiries; // indices into the user persona's inquiries

    /// Applies a user inform delta; returns the slots whose value changed.
    std::vector<std::string> apply_inform(const SlotMap& delta);
    /// Text and inform delta of the latest user turn, if any.
    [[nodiscard]] const Turn* last_user_turn() const;
};

struct BlueprintRequest {
    std::string blueprint_id;
    Domain domain;
    std::vector<ingest::StrategyTag> tags;
    AgentPersona agent;
    std::vector<SeedDialogue> seeds;
    /// Stage ordering for tag labels; labels not listed follow in first-seen order.
    std::vector<std::string> stage_order;
    std::uint64_t seed = 0;
};

struct BuildOutcome {
    std::optional<Blueprint> blueprint;
    std::optional<json> rejection; // {blueprint_id, raw_output, report}
    int attempts = 0;
};

/// Turns a strategy-tag sample into a blueprint through the `blueprint`
/// template, validating the result and regenerating once on failure.
/// Throws PreconditionError when tags are empty.
BuildOutcome build_blueprint(const BlueprintRequest& request, const profile::Ontology& ontology,
                             gateway::Gateway& gw);

/// Deterministic blueprint structure for a tag sample; the mock fill of the
/// blueprint template and the reference structure shown to live models.
json scaffold_blueprint(const BlueprintRequest& request, const profile::Ontology& ontology);

/// Structural checks. Codes: "empty stages", "duplicate stage", "duplicate key node",
/// "missing stage node", "unknown node", "unknown label", "unknown stage",
/// "orphan key node", "unreachable node", "terminal successor", "no reachable terminal".
ValidationReport validate_blueprint(const Blueprint& b);

struct Guidance {
    std::size_t stage_index = 0;
    std::string current_stage;
    std::vector<Scenario> strategies; // matched scenarios, highest priority first
    std::vector<std::string> candidates; // flow-atlas successors, edge order
    bool terminal = false;
    std::string terminal_node;
};

/// Pure function of (blueprint, state). The current stage is the furthest
/// stage whose entry condition holds; reaching a terminal node means an edge
/// from the current stage into a terminal node has its trigger satisfied.
Guidance blueprint_guidance(const Blueprint& b, const DialogueState& state);

/// Successor to steer toward: the first candidate whose edge trigger already
/// holds, else the candidate of the highest-priority matched scenario's stage,
/// else the first candidate by edge order.
std::optional<std::string> choose_successor(const Blueprint& b, const Guidance& g, const DialogueState& state);

/// Trigger slots of the edges leaving the current stage, in edge order.
std::vector<std::string> successor_trigger_slots(const Blueprint& b, const Guidance& g);

// ---------------------------------------------------------------------------

struct BlueprintConfig {
    std::map<std::string, std::size_t> per_domain = {{"automotive", 127}, {"restaurant", 150}, {"hotel", 148}};
    std::size_t default_count = 20;
    std::size_t tags_per_blueprint = 24;
    std::size_t workers = 4;
};

struct BlueprintPhaseResult {
    std::vector<Blueprint> blueprints;
    std::vector<json> rejections;
};

/// Builds blueprints per domain from pooled strategy tags, round-robin over the
/// domain's agent personas.
BlueprintPhaseResult build_blueprints(std::span<const ingest::AtomicSignals> signals,
                                      std::span<const AgentPersona> agents, std::span<const SeedDialogue> seeds,
                                      const BlueprintConfig& cfg, const std::vector<std::string>& stage_order,
                                      const profile::Ontology& ontology, gateway::Gateway& gw, std::uint64_t seed);

} // namespace streamforge::blueprint
