#pragma once

#include "streamforge/domain_profile.hpp"
#include "streamforge/gateway.hpp"
#include "streamforge/ingest.hpp"
#include "streamforge/retrieval.hpp"
#include "streamforge/schema.hpp"

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace streamforge::persona {

/// A synthesis that failed validation twice. The raw model output is kept for
/// audit and the persona never enters a store.
struct Rejection {
    std::string persona_id;
    std::string kind; // "user" | "agent"
    std::string raw_output;
    ValidationReport report;
};

void to_json(json& j, const Rejection& r);

template <typename P>
struct Synthesis {
    std::optional<P> persona;
    std::optional<Rejection> rejection;
    int attempts = 0;
};

struct UserPersonaRequest {
    std::string persona_id;
    Domain domain;
    std::vector<std::string> questions; // sampled user questions
    std::vector<SeedDialogue> seeds;    // sampled seed dialogues of the same domain
    std::uint64_t seed = 0;
};

/// Builds a user persona from real questions and seed dialogues through the
/// `persona_user` template. Throws PreconditionError without questions.
Synthesis<UserPersona> synthesize_user_persona(const UserPersonaRequest& request,
                                               const profile::Ontology& ontology, gateway::Gateway& gw);

struct AgentPersonaRequest {
    std::string persona_id;
    Domain domain;
    ingest::AccountMetadata account;
    std::vector<ingest::StrategyTag> tags;
    std::string kb_ref;
    std::uint64_t seed = 0;
};

/// Builds an agent persona from account metadata and the strategy-tag
/// distribution through the `persona_agent` template. Throws
/// PreconditionError when kb_ref is not among known_kbs.
Synthesis<AgentPersona> synthesize_agent_persona(const AgentPersonaRequest& request,
                                                 const std::set<std::string>& known_kbs, gateway::Gateway& gw);

/// Extra user-persona rule on top of the schema invariants.
ValidationReport check_user_persona(const UserPersona& p);

struct MatchResult {
    std::size_t index = 0; // into the agent list
    double score = 0.0;
};

/// Text describing what the user needs: core requirements and inquiries.
std::string concern_text(const UserPersona& u);
/// Text describing what the agent covers: service boundaries and identity.
std::string scope_text(const AgentPersona& a);

/// Argmax of cosine(concern, scope) over same-domain agents when any exist,
/// otherwise over all agents; ties go to the smaller persona_id.
MatchResult match_personas(const UserPersona& user, std::span<const AgentPersona> agents,
                           const retrieval::EmbeddingProvider& provider);

// ---------------------------------------------------------------------------

struct PersonaConfig {
    std::map<std::string, std::size_t> user_per_domain = {
        {"automotive", 619}, {"restaurant", 4420}, {"hotel", 4446}};
    std::map<std::string, std::size_t> agent_per_domain = {
        {"automotive", 443}, {"restaurant", 229}, {"hotel", 227}};
    std::size_t default_user_count = 100;
    std::size_t default_agent_count = 20;
    std::size_t questions_per_persona = 5;
    std::size_t seeds_per_persona = 2;
    std::size_t workers = 4;
};

struct PersonaPhaseResult {
    std::vector<UserPersona> users;
    std::vector<AgentPersona> agents;
    std::vector<Rejection> rejections;
};

/// Synthesizes user and agent personas for every domain present in the
/// signals. Seed dialogues are sampled uniformly per domain with a seeded RNG.
PersonaPhaseResult build_personas(std::span<const ingest::AtomicSignals> signals,
                                  std::span<const SeedDialogue> seeds, const PersonaConfig& cfg,
                                  const profile::Ontology& ontology, const std::string& kb_ref,
                                  gateway::Gateway& gw, std::uint64_t seed);

} // namespace streamforge::persona
