#pragma once

#include "streamforge/blueprint.hpp"
#include "streamforge/domain_profile.hpp"
#include "streamforge/gateway.hpp"
#include "streamforge/ingest.hpp"
#include "streamforge/retrieval.hpp"
#include "streamforge/schema.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace streamforge::generation {

using blueprint::DialogueState;

struct EvidenceItem {
    std::string entry_id;
    std::string text;
    double score = 0.0;
};

/// Retrieved references: real user replies (user_reference) grounding the
/// simulated user, or expert answers (agent_reference) grounding the agent.
struct EvidenceSet {
    enum class Kind { user_reference, agent_reference };
    Kind kind = Kind::user_reference;
    std::vector<EvidenceItem> entries; // descending score

    [[nodiscard]] std::vector<std::string> ids() const;
};

/// Memoizing wrapper so repeated persona and turn texts embed once.
class CachedProvider final : public retrieval::EmbeddingProvider {
public:
    explicit CachedProvider(const retrieval::EmbeddingProvider& inner) : inner_(inner) {}
    [[nodiscard]] retrieval::Embedding embed(std::string_view text) const override;
    [[nodiscard]] std::size_t dim() const override { return inner_.dim(); }
    [[nodiscard]] std::string identity() const override { return inner_.identity(); }

private:
    const retrieval::EmbeddingProvider& inner_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, retrieval::Embedding, std::less<>> memo_;
};

/// The three retrieval pools the loop draws from.
struct GenerationPools {
    retrieval::RetrievalPool seed_openings;  // first user turns of seed dialogues
    retrieval::RetrievalPool agent_messages; // payload "reply": the user turn that followed
    retrieval::RetrievalPool user_queries;   // payload "response": the expert answer

    explicit GenerationPools(std::size_t dim) : seed_openings(dim), agent_messages(dim), user_queries(dim) {}

    static GenerationPools build(std::span<const ingest::AtomicSignals> signals,
                                 std::span<const SeedDialogue> seeds, const retrieval::EmbeddingProvider& provider);
};

struct ConfigurationChoice {
    std::size_t user = 0;
    std::size_t agent = 0;
    std::size_t blueprint = 0;
    double match_score = 0.0;
};

/// User persona uniformly at random, agent by persona matching, blueprint
/// uniformly among those of the agent's domain. Throws PreconditionError on
/// empty pools or when the agent's domain has no blueprint.
ConfigurationChoice select_configuration(std::span<const UserPersona> users, std::span<const AgentPersona> agents,
                                         std::span<const Blueprint> blueprints,
                                         const retrieval::EmbeddingProvider& provider, std::uint64_t seed);

struct GenerationLimits {
    std::size_t max_turns = 40; // utterances
    std::size_t retrieval_k = 3;
};

/// Raised when a session cannot complete; nothing of it is persisted.
class SessionAborted : public Error {
public:
    SessionAborted(std::string stage, const std::string& reason, std::vector<std::string> fingerprints);
    [[nodiscard]] const std::string& stage() const noexcept { return stage_; }
    [[nodiscard]] const std::vector<std::string>& fingerprints() const noexcept { return fingerprints_; }

private:
    std::string stage_;
    std::vector<std::string> fingerprints_;
};

struct SessionContext {
    const UserPersona& user;
    const AgentPersona& agent;
    const Blueprint& blueprint;
    const GenerationPools& pools;
    const retrieval::KnowledgeBase& kb;
    const profile::Ontology& ontology;
    const retrieval::EmbeddingProvider& provider;
    gateway::Gateway& gw;
    GenerationLimits limits;
    ingest::EntityConfig entities;
};

struct UserTurnResult {
    Turn turn;
    SlotMap delta;
    std::vector<std::string> declined; // requested slots the user could not supply
    std::optional<std::size_t> voiced_inquiry;
    EvidenceSet evidence;
};

struct AgentTurnResult {
    Turn turn;
    std::vector<std::string> request;
    EvidenceSet evidence;
    blueprint::Guidance guidance;
    bool closing = false;
};

/// Fingerprints of every gateway request issued for the current session.
using FingerprintLog = std::vector<std::string>;

UserTurnResult synthesize_opening(const SessionContext& ctx, std::uint64_t seed, FingerprintLog& log);
UserTurnResult simulate_user_turn(const SessionContext& ctx, const DialogueState& state, std::uint64_t seed,
                                  FingerprintLog& log);
AgentTurnResult generate_agent_turn(const SessionContext& ctx, const DialogueState& state, std::uint64_t seed,
                                    FingerprintLog& log);

/// Every basic-information slot informed and every primary inquiry voiced.
bool goal_satisfied(const UserPersona& user, const DialogueState& state, const profile::Ontology& ontology);

/// Sentence stating a knowledge-base fact relevant to the user's text, or
/// empty when the text names no known entity and attribute.
std::string kb_grounded_claim(const retrieval::KnowledgeBase& kb, std::string_view user_text, const SlotMap& state);

/// Alternating user/agent loop from the opening until a terminal blueprint
/// node, goal satisfaction, or the turn cap.
SessionQuadruplet run_session(const SessionContext& ctx, std::string dialogue_id, std::uint64_t seed);

// ---------------------------------------------------------------------------

struct GenerationConfig {
    std::size_t sessions = 1000;
    GenerationLimits limits;
    std::size_t workers = 4;
};

struct SessionAbort {
    std::size_t index = 0;
    std::string dialogue_id;
    std::string stage;
    std::string reason;
    std::vector<std::string> fingerprints;
};

void to_json(json& j, const SessionAbort& a);

struct GenerationResult {
    std::vector<SessionQuadruplet> sessions; // in index order, aborted ones skipped
    std::vector<SessionAbort> aborted;
};

std::string dialogue_id_for(std::uint64_t seed, std::size_t index);

GenerationResult run_generation(std::span<const UserPersona> users, std::span<const AgentPersona> agents,
                                std::span<const Blueprint> blueprints, const GenerationPools& pools,
                                const retrieval::KnowledgeBase& kb, const profile::Ontology& ontology,
                                const retrieval::EmbeddingProvider& provider, gateway::Gateway& gw,
                                const GenerationConfig& cfg, std::uint64_t seed);

} // namespace streamforge::generation
