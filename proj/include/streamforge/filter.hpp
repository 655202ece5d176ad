#pragma once

#include "streamforge/retrieval.hpp"
#include "streamforge/schema.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace streamforge::filter {

/// Per-dialogue side vectors: normalized means of the user-turn and
/// agent-turn embeddings.
struct DialogueRepresentation {
    std::string dialogue_id;
    retrieval::Embedding user_vec;
    retrieval::Embedding agent_vec;
};

/// Throws PreconditionError when either side has no turns.
DialogueRepresentation aggregate_representations(const SessionQuadruplet& d,
                                                 const retrieval::EmbeddingProvider& provider);

struct SimilarityGraph {
    std::vector<std::string> nodes;
    std::vector<std::pair<std::size_t, std::size_t>> edges; // i < j, sorted
    double tau_user = 0.85;
    double tau_agent = 0.85;

    /// Adjacency lists, neighbours ascending.
    [[nodiscard]] std::vector<std::vector<std::size_t>> adjacency() const;
};

/// Edge (i, j) iff cos(u_i, u_j) > tau_user and cos(a_i, a_j) > tau_agent.
/// Thresholds must lie in (-1, 1).
SimilarityGraph build_similarity_graph(std::span<const DialogueRepresentation> reps, double tau_user,
                                       double tau_agent, std::size_t workers = 1);

enum class CommunityMethod { connected_components, label_propagation };

CommunityMethod parse_method(std::string_view name);
std::string_view to_string(CommunityMethod m);

/// Communities as sorted node-index lists, ordered by smallest member.
using Partition = std::vector<std::vector<std::size_t>>;

Partition detect_communities(const SimilarityGraph& g, CommunityMethod method, std::uint64_t seed);

/// ceil(rho * |C|) members per community, uniformly without replacement.
/// Returns retained node indices ascending. rho must lie in (0, 1].
std::vector<std::size_t> proportional_sample(const Partition& communities, double rho, std::uint64_t seed);

/// Number of members proportional_sample keeps from a community of `size`.
std::size_t retained_count(std::size_t size, double rho);

// ---------------------------------------------------------------------------

struct FilterConfig {
    double tau_user = 0.85;
    double tau_agent = 0.85;
    double rho = 0.6;
    CommunityMethod method = CommunityMethod::connected_components;
    std::size_t workers = 4;
};

struct FilterResult {
    std::vector<SessionQuadruplet> retained; // input order
    json report;
};

FilterResult filter_dialogues(std::span<const SessionQuadruplet> dialogues, const retrieval::EmbeddingProvider& provider,
                              const FilterConfig& cfg, std::uint64_t seed);

} // namespace streamforge::filter
