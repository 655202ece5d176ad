#include "fixture_world.hpp"
#include "streamforge/schema.hpp"

#include <doctest.h>

#include <set>

using namespace streamforge;
using namespace streamforge::generation;

namespace {

sftest::World& world() {
    static sftest::World w;
    return w;
}

GenerationConfig small_config(std::size_t sessions, std::size_t max_turns) {
    GenerationConfig cfg;
    cfg.sessions = sessions;
    cfg.limits.max_turns = max_turns;
    cfg.limits.retrieval_k = 3;
    cfg.workers = 2;
    return cfg;
}

GenerationResult generate(std::size_t sessions, std::size_t max_turns, std::uint64_t seed) {
    auto& w = world();
    return run_generation(w.users, w.agents, w.blueprints, w.pools, w.kb, w.ontology, w.provider, w.gw,
                          small_config(sessions, max_turns), seed);
}

} // namespace

TEST_CASE("fixture world is populated") {
    auto& w = world();
    CHECK(w.users.size() == 12);
    CHECK(w.agents.size() == 4);
    CHECK(w.blueprints.size() == 4);
    CHECK(w.pools.seed_openings.size() == 6);
    CHECK(w.pools.user_queries.size() > 0);
}

TEST_CASE("generated sessions satisfy the record invariants") {
    auto& w = world();
    const auto r = generate(20, 12, 5);
    CHECK(r.aborted.empty());
    REQUIRE(r.sessions.size() == 20);
    PersonaStore ps;
    for (const auto& u : w.users) {
        ps.users[u.persona_id] = u;
    }
    for (const auto& a : w.agents) {
        ps.agents[a.persona_id] = a;
    }
    BlueprintStore bs;
    for (const auto& b : w.blueprints) {
        bs.blueprints[b.blueprint_id] = b;
    }
    std::set<std::string> ids;
    for (const auto& s : r.sessions) {
        const auto report = validate_quadruplet(s, ps, bs);
        CHECK_MESSAGE(report.ok(), report.summary());
        CHECK(s.history.size() <= 12);
        CHECK(s.history.size() >= 2);
        CHECK(s.history.front().role == Role::user);
        CHECK(s.domain == ps.agents.at(s.agent_persona_id).domain);
        CHECK(s.domain == bs.blueprints.at(s.blueprint_id).domain);
        for (const auto& t : s.history) {
            if (t.inform_block) {
                for (const auto& [slot, v] : *t.inform_block) {
                    CHECK(w.ontology.allows(s.domain, slot));
                }
            }
        }
        ids.insert(s.dialogue_id);
    }
    CHECK(ids.size() == 20);
}

TEST_CASE("generation is reproducible for a seed and varies across seeds") {
    const auto a = generate(8, 16, 9);
    const auto b = generate(8, 16, 9);
    CHECK(json(a.sessions).dump() == json(b.sessions).dump());
    const auto c = generate(8, 16, 10);
    CHECK(json(a.sessions).dump() != json(c.sessions).dump());
}

TEST_CASE("turn cap is respected for tiny budgets") {
    const auto r = generate(6, 4, 2);
    for (const auto& s : r.sessions) {
        CHECK(s.history.size() <= 4);
    }
}

TEST_CASE("dialogue ids are stable and distinct") {
    CHECK(dialogue_id_for(1, 0) == dialogue_id_for(1, 0));
    CHECK(dialogue_id_for(1, 0) != dialogue_id_for(1, 1));
    CHECK(dialogue_id_for(1, 0).rfind("dlg-", 0) == 0);
}

TEST_CASE("goal satisfaction needs every slot and inquiry") {
    UserPersona u;
    u.domain = Domain::parse("automotive");
    u.basic_information = {{"price_range", "300k"}};
    u.primary_inquiries = {"q0", "q1"};
    const auto ontology = profile::Ontology::defaults();
    DialogueState s;
    CHECK_FALSE(goal_satisfied(u, s, ontology));
    s.apply_inform({{"price_range", "300k"}});
    s.voiced_inquiries = {0};
    CHECK_FALSE(goal_satisfied(u, s, ontology));
    s.voiced_inquiries = {0, 1};
    CHECK(goal_satisfied(u, s, ontology));
}

TEST_CASE("knowledge claims come from the knowledge base") {
    const auto& kb = world().kb;
    const auto claim = kb_grounded_claim(kb, "What is the price of the Q5L?", {});
    CHECK(claim.find("389800") != std::string::npos);
    CHECK(kb_grounded_claim(kb, "hello there", {}).empty());
    CHECK(kb_grounded_claim(kb, "and the price?", {{"series", "X3"}}).find("409900") != std::string::npos);
    // Attribute words are matched against the named entity's own facts.
    CHECK(kb_grounded_claim(kb, "Average price per person at Golden Dragon?", {}).find("120") != std::string::npos);
    CHECK(kb_grounded_claim(kb, "My area is downtown. What is the Harbor View Hotel price per night?", {})
              .find("880") != std::string::npos);
}

TEST_CASE("configuration selection") {
    auto& w = world();
    const auto c = select_configuration(w.users, w.agents, w.blueprints, w.provider, 4);
    CHECK(w.blueprints[c.blueprint].domain == w.agents[c.agent].domain);
    const auto d = select_configuration(w.users, w.agents, w.blueprints, w.provider, 4);
    CHECK(c.user == d.user);
    CHECK(c.agent == d.agent);
    CHECK(c.blueprint == d.blueprint);
    CHECK_THROWS_AS(select_configuration({}, w.agents, w.blueprints, w.provider, 4), PreconditionError);
}

TEST_CASE("a failing gateway aborts the session without output") {
    auto& w = world();
    gateway::GatewayConfig cfg;
    cfg.mode = gateway::Mode::replay;
    gateway::Gateway empty(cfg, gateway::TemplateRegistry::builtin());
    const auto r = run_generation(w.users, w.agents, w.blueprints, w.pools, w.kb, w.ontology, w.provider, empty,
                                  small_config(3, 10), 1);
    CHECK(r.sessions.empty());
    REQUIRE(r.aborted.size() == 3);
    CHECK_FALSE(r.aborted[0].fingerprints.empty());
}
