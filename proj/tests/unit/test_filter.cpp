#include "streamforge/filter.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

using namespace streamforge;
using namespace streamforge::filter;

namespace {

DialogueRepresentation rep(std::string id, std::vector<double> u, std::vector<double> a) {
    retrieval::l2_normalize(u);
    retrieval::l2_normalize(a);
    return {std::move(id), std::move(u), std::move(a)};
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Union-find oracle for connected components.
Partition union_find(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<std::size_t(std::size_t)> root = [&](std::size_t x) {
        return parent[x] == x ? x : parent[x] = root(parent[x]);
    };
    for (auto [a, b] : edges) {
        parent[root(a)] = root(b);
    }
    std::map<std::size_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) {
        groups[root(i)].push_back(i);
    }
    Partition p;
    for (auto& [r, g] : groups) {
        p.push_back(g);
    }
    std::sort(p.begin(), p.end());
    return p;
}

} // namespace

TEST_CASE("hand example: communities of 4 and 2 at rho 0.5 keep 3") {
    // Four near-identical dialogues and two others sharing a different topic.
    std::vector<DialogueRepresentation> reps{
        rep("a", {1, 0, 0}, {1, 0, 0}),       rep("b", {1, 0.01, 0}, {1, 0, 0.01}),
        rep("c", {1, 0.02, 0}, {1, 0.02, 0}), rep("d", {1, 0, 0.02}, {1, 0.01, 0.01}),
        rep("e", {0, 1, 0}, {0, 0, 1}),       rep("f", {0, 1, 0.01}, {0, 0.01, 1}),
    };
    const auto g = build_similarity_graph(reps, 0.9, 0.9);
    CHECK(g.edges.size() == 6 + 1);
    const auto parts = detect_communities(g, CommunityMethod::connected_components, 1);
    REQUIRE(parts.size() == 2);
    CHECK(parts[0] == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(parts[1] == std::vector<std::size_t>{4, 5});
    const auto kept = proportional_sample(parts, 0.5, 7);
    CHECK(kept.size() == 3);
    CHECK(std::is_sorted(kept.begin(), kept.end()));
    std::size_t from_first = 0;
    for (auto k : kept) {
        from_first += k < 4 ? 1 : 0;
    }
    CHECK(from_first == 2);
}

TEST_CASE("an edge needs both sides above threshold") {
    std::vector<DialogueRepresentation> reps{rep("a", {1, 0}, {1, 0}), rep("b", {1, 0}, {0, 1})};
    CHECK(build_similarity_graph(reps, 0.5, 0.5).edges.empty());
    // Equal to the threshold is not above it.
    std::vector<DialogueRepresentation> same{rep("a", {1, 0}, {1, 0}), rep("b", {1, 0}, {1, 0})};
    CHECK(build_similarity_graph(same, 0.5, 0.5).edges.size() == 1);
    CHECK_THROWS_AS(build_similarity_graph(same, 1.0, 0.5), PreconditionError);
    CHECK_THROWS_AS(build_similarity_graph(same, 0.5, -1.0), PreconditionError);
}

TEST_CASE("retained counts use the ceiling") {
    CHECK(retained_count(4, 0.5) == 2);
    CHECK(retained_count(5, 0.5) == 3);
    CHECK(retained_count(1, 0.01) == 1);
    CHECK(retained_count(10, 0.3) == 3); // 0.3 * 10 is 3.0000000000000004 in binary
    CHECK(retained_count(7, 1.0) == 7);
    CHECK_THROWS_AS(retained_count(3, 0.0), PreconditionError);
    CHECK_THROWS_AS(retained_count(3, 1.5), PreconditionError);
}

TEST_CASE("random graphs agree with pairwise and union-find oracles") {
    std::mt19937_64 gen(21);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 2 + trial % 11;
        std::vector<DialogueRepresentation> reps;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> u(3), a(3);
            for (auto& x : u) {
                x = nd(gen);
            }
            for (auto& x : a) {
                x = nd(gen);
            }
            reps.push_back(rep("d" + std::to_string(i), u, a));
        }
        const double tu = 0.2;
        const double ta = 0.1;
        std::vector<std::pair<std::size_t, std::size_t>> expect;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                if (dot(reps[i].user_vec, reps[j].user_vec) > tu && dot(reps[i].agent_vec, reps[j].agent_vec) > ta) {
                    expect.emplace_back(i, j);
                }
            }
        }
        const auto g = build_similarity_graph(reps, tu, ta, 2);
        CHECK(g.edges == expect);
        const auto comps = detect_communities(g, CommunityMethod::connected_components, 0);
        CHECK(comps == union_find(n, expect));
        std::size_t want = 0;
        for (const auto& c : comps) {
            want += static_cast<std::size_t>(std::ceil(0.6 * static_cast<double>(c.size()) - 1e-9));
        }
        CHECK(proportional_sample(comps, 0.6, trial).size() == want);
    }
}

TEST_CASE("label propagation partitions nodes within components") {
    SimilarityGraph g;
    g.nodes = {"0", "1", "2", "3", "4", "5", "6"};
    // Two triangles joined by a bridge, plus an isolated node.
    g.edges = {{0, 1}, {0, 2}, {1, 2}, {2, 3}, {3, 4}, {3, 5}, {4, 5}};
    const auto a = detect_communities(g, CommunityMethod::label_propagation, 3);
    const auto b = detect_communities(g, CommunityMethod::label_propagation, 3);
    CHECK(a == b);
    std::set<std::size_t> seen;
    for (const auto& c : a) {
        for (auto v : c) {
            CHECK(seen.insert(v).second);
        }
    }
    CHECK(seen.size() == 7);
    CHECK(std::find(a.begin(), a.end(), std::vector<std::size_t>{6}) != a.end());
    CHECK(parse_method("lpa") == CommunityMethod::label_propagation);
    CHECK(parse_method("components") == CommunityMethod::connected_components);
    CHECK_THROWS(parse_method("louvain"));
}

TEST_CASE("representation requires both sides") {
    retrieval::OfflineHashProvider p(32);
    SessionQuadruplet s;
    s.dialogue_id = "x";
    Turn u;
    u.role = Role::user;
    u.text = "hello";
    s.history = {u};
    CHECK_THROWS_AS(aggregate_representations(s, p), PreconditionError);
    Turn a;
    a.index = 1;
    a.role = Role::agent;
    a.text = "hi";
    s.history.push_back(a);
    const auto r = aggregate_representations(s, p);
    CHECK(r.user_vec == p.embed("hello"));
}

TEST_CASE("filter_dialogues keeps input order and reports") {
    retrieval::OfflineHashProvider p(32);
    std::vector<SessionQuadruplet> ds;
    for (int i = 0; i < 6; ++i) {
        SessionQuadruplet s;
        s.dialogue_id = "d" + std::to_string(i);
        Turn u{0, Role::user, i < 4 ? "price of the suv" : "table for two tonight", {}, {}, {}, {}};
        Turn a{1, Role::agent, i < 4 ? "the suv costs 300k" : "we have a table at seven", {}, {}, {}, {}};
        s.history = {u, a};
        ds.push_back(s);
    }
    FilterConfig cfg;
    cfg.rho = 0.5;
    const auto r = filter_dialogues(ds, p, cfg, 1);
    CHECK(r.retained.size() == 3);
    CHECK(r.report["input"] == 6);
    CHECK(r.report["communities"] == 2);
    CHECK(r.report["largest_community"] == 4);
    for (std::size_t i = 1; i < r.retained.size(); ++i) {
        CHECK(r.retained[i - 1].dialogue_id < r.retained[i].dialogue_id);
    }
}
