#include "streamforge/filter.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace streamforge::filter {

namespace {

retrieval::Embedding mean_of(const std::vector<retrieval::Embedding>& vs, std::size_t dim) {
    retrieval::Embedding acc(dim, 0.0);
    for (const auto& v : vs) {
        for (std::size_t k = 0; k < dim; ++k) {
            acc[k] += v[k];
        }
    }
    for (auto& x : acc) {
        x /= static_cast<double>(vs.size());
    }
    retrieval::l2_normalize(acc);
    return acc;
}

void check_threshold(double tau, const char* name) {
    if (!(tau > -1.0 && tau < 1.0)) {
        throw PreconditionError(std::string(name) + " must lie in (-1, 1)");
    }
}

} // namespace

DialogueRepresentation aggregate_representations(const SessionQuadruplet& d,
                                                 const retrieval::EmbeddingProvider& provider) {
    std::vector<retrieval::Embedding> user;
    std::vector<retrieval::Embedding> agent;
    for (const auto& t : d.history) {
        (t.role == Role::user ? user : agent).push_back(provider.embed(t.text));
    }
    if (user.empty() || agent.empty()) {
        throw PreconditionError("dialogue " + d.dialogue_id + " lacks user or agent turns");
    }
    return {d.dialogue_id, mean_of(user, provider.dim()), mean_of(agent, provider.dim())};
}

std::vector<std::vector<std::size_t>> SimilarityGraph::adjacency() const {
    std::vector<std::vector<std::size_t>> adj(nodes.size());
    for (const auto& [i, j] : edges) {
        adj[i].push_back(j);
        adj[j].push_back(i);
    }
    for (auto& a : adj) {
        std::sort(a.begin(), a.end());
    }
    return adj;
}

SimilarityGraph build_similarity_graph(std::span<const DialogueRepresentation> reps, double tau_user,
                                       double tau_agent, std::size_t workers) {
    check_threshold(tau_user, "tau_user");
    check_threshold(tau_agent, "tau_agent");
    SimilarityGraph g;
    g.tau_user = tau_user;
    g.tau_agent = tau_agent;
    const std::size_t n = reps.size();
    for (const auto& r : reps) {
        g.nodes.push_back(r.dialogue_id);
    }
    // Row i holds the partners j > i.
    std::vector<std::vector<std::size_t>> rows(n);
    parallel_for(n, workers, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (retrieval::cosine(reps[i].user_vec, reps[j].user_vec) > tau_user &&
                retrieval::cosine(reps[i].agent_vec, reps[j].agent_vec) > tau_agent) {
                rows[i].push_back(j);
            }
        }
    });
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto j : rows[i]) {
            g.edges.emplace_back(i, j);
        }
    }
    return g;
}

CommunityMethod parse_method(std::string_view name) {
    if (name == "components" || name == "connected_components") {
        return CommunityMethod::connected_components;
    }
    if (name == "label_propagation" || name == "lpa") {
        return CommunityMethod::label_propagation;
    }
    throw ConfigError("unknown community method '" + std::string(name) + "'");
}

std::string_view to_string(CommunityMethod m) {
    return m == CommunityMethod::connected_components ? "components" : "label_propagation";
}

namespace {

Partition group_by_label(const std::vector<std::size_t>& label) {
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < label.size(); ++i) {
        groups[label[i]].push_back(i);
    }
    Partition out;
    for (auto& [_, members] : groups) {
        out.push_back(std::move(members));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return out;
}

std::vector<std::size_t> component_labels(const std::vector<std::vector<std::size_t>>& adj) {
    const std::size_t n = adj.size();
    std::vector<std::size_t> label(n, n);
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < n; ++s) {
        if (label[s] != n) {
            continue;
        }
        label[s] = s;
        stack.push_back(s);
        while (!stack.empty()) {
            const auto v = stack.back();
            stack.pop_back();
            for (const auto w : adj[v]) {
                if (label[w] == n) {
                    label[w] = s;
                    stack.push_back(w);
                }
            }
        }
    }
    return label;
}

// Asynchronous label propagation in a seeded visiting order. A node adopts the
// most frequent neighbour label, ties to the smallest label, keeping its own
// label when that is among the most frequent. Labels never cross components.
std::vector<std::size_t> propagated_labels(const std::vector<std::vector<std::size_t>>& adj, std::uint64_t seed) {
    const std::size_t n = adj.size();
    std::vector<std::size_t> label(n);
    std::iota(label.begin(), label.end(), 0);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    constexpr int max_rounds = 100;
    for (int round = 0; round < max_rounds; ++round) {
        rng.shuffle(order);
        bool changed = false;
        for (const auto v : order) {
            if (adj[v].empty()) {
                continue;
            }
            std::map<std::size_t, std::size_t> freq;
            for (const auto w : adj[v]) {
                ++freq[label[w]];
            }
            std::size_t best_count = 0;
            for (const auto& [_, c] : freq) {
                best_count = std::max(best_count, c);
            }
            const auto own = freq.find(label[v]);
            if (own != freq.end() && own->second == best_count) {
                continue;
            }
            for (const auto& [l, c] : freq) {
                if (c == best_count) {
                    label[v] = l;
                    changed = true;
                    break;
                }
            }
        }
        if (!changed) {
            break;
        }
    }
    return label;
}

} // namespace

Partition detect_communities(const SimilarityGraph& g, CommunityMethod method, std::uint64_t seed) {
    const auto adj = g.adjacency();
    if (method == CommunityMethod::connected_components) {
        return group_by_label(component_labels(adj));
    }
    return group_by_label(propagated_labels(adj, seed));
}

std::size_t retained_count(std::size_t size, double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) {
        throw PreconditionError("rho must lie in (0, 1]");
    }
    // The epsilon keeps products such as 0.6 * 5 = 3.0000000000000004 at 3.
    const auto k = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(size) - 1e-9));
    return std::min(size, k);
}

std::vector<std::size_t> proportional_sample(const Partition& communities, double rho, std::uint64_t seed) {
    std::vector<std::size_t> kept;
    for (std::size_t c = 0; c < communities.size(); ++c) {
        const auto& members = communities[c];
        Rng rng(derive_seed(seed, "community", c));
        for (const auto idx : rng.sample_indices(members.size(), retained_count(members.size(), rho))) {
            kept.push_back(members[idx]);
        }
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

FilterResult filter_dialogues(std::span<const SessionQuadruplet> dialogues, const retrieval::EmbeddingProvider& provider,
                              const FilterConfig& cfg, std::uint64_t seed) {
    std::vector<DialogueRepresentation> reps(dialogues.size());
    parallel_for(dialogues.size(), cfg.workers,
                 [&](std::size_t i) { reps[i] = aggregate_representations(dialogues[i], provider); });
    const auto graph = build_similarity_graph(reps, cfg.tau_user, cfg.tau_agent, cfg.workers);
    const auto partition = detect_communities(graph, cfg.method, derive_seed(seed, "communities"));
    const auto kept = proportional_sample(partition, cfg.rho, derive_seed(seed, "sample"));

    FilterResult out;
    for (const auto i : kept) {
        out.retained.push_back(dialogues[i]);
    }
    json communities = json::array();
    std::size_t largest = 0;
    for (const auto& c : partition) {
        largest = std::max(largest, c.size());
        if (c.size() < 2) {
            continue;
        }
        json ids = json::array();
        for (const auto i : c) {
            ids.push_back(graph.nodes[i]);
        }
        communities.push_back(ids);
    }
    out.report = {{"input", dialogues.size()},
                  {"retained", out.retained.size()},
                  {"edges", graph.edges.size()},
                  {"communities", partition.size()},
                  {"largest_community", largest},
                  {"multi_member_communities", communities},
                  {"tau_user", cfg.tau_user},
                  {"tau_agent", cfg.tau_agent},
                  {"rho", cfg.rho},
                  {"method", std::string(to_string(cfg.method))},
                  {"embedding", provider.identity()},
                  {"seed", seed}};
    return out;
}

} // namespace streamforge::filter
