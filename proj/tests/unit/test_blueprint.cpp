#include "streamforge/blueprint.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace streamforge;
using namespace streamforge::blueprint;

namespace {

SlotCondition informed(std::string slot) { return {std::move(slot), SlotCondition::Op::informed, ""}; }

// intro --budget_known--> offer --series_known--> booked (terminal)
//                         offer --walkaway--> lost (terminal, equals "no")
Blueprint hand_blueprint() {
    Blueprint b;
    b.blueprint_id = "b";
    b.domain = Domain::parse("automotive");
    b.rhythm = {{"intro", "learn needs", {}}, {"offer", "present options", {informed("price_range")}}};
    b.key_nodes = {{"budget_known", "", informed("price_range")},
                   {"series_known", "", informed("series")},
                   {"walkaway", "", {"decision", SlotCondition::Op::equals, "No"}}};
    b.scenarios = {{"asks price", "quote", "Here are the prices.", "offer", {"price"}, {}, 1},
                   {"asks range", "explain", "Range is good.", "offer", {"range"}, {}, 5},
                   {"greets", "welcome", "Hello!", "intro", {}, {}, 0}};
    b.flow_atlas.nodes = {{"intro", false}, {"offer", false}, {"booked", true}, {"lost", true}};
    b.flow_atlas.edges = {{"intro", "offer", "budget_known"},
                          {"offer", "booked", "series_known"},
                          {"offer", "lost", "walkaway"}};
    return b;
}

DialogueState state_with(SlotMap inform, std::string last_text = "") {
    DialogueState s;
    s.apply_inform(inform);
    if (!last_text.empty()) {
        Turn t;
        t.role = Role::user;
        t.text = std::move(last_text);
        t.inform_block = inform;
        s.history.push_back(t);
    }
    return s;
}

BlueprintRequest auto_request() {
    BlueprintRequest r;
    r.blueprint_id = "b-auto";
    r.domain = Domain::parse("automotive");
    r.tags = {{"product_introduction", 0.9, "s#r0"}, {"price_negotiation", 0.8, "s#r1"},
              {"conversion/appointment", 0.7, "s#r2"}, {"other", 0.0, "s#r3"}};
    r.agent.persona_id = "a";
    r.agent.domain = r.domain;
    r.seeds = read_jsonl<SeedDialogue>(sftest::fixtures() / "seeds.jsonl");
    r.stage_order = {"greeting", "requirement_mining", "product_introduction", "price_negotiation",
                     "objection_handling", "conversion/appointment"};
    r.seed = 3;
    return r;
}

} // namespace

TEST_CASE("hand blueprint validates") { CHECK(validate_blueprint(hand_blueprint()).ok()); }

TEST_CASE("structural defects are reported") {
    auto b = hand_blueprint();
    b.rhythm.clear();
    CHECK(validate_blueprint(b).has("empty stages"));

    b = hand_blueprint();
    b.rhythm.push_back(b.rhythm[0]);
    CHECK(validate_blueprint(b).has("duplicate stage"));

    b = hand_blueprint();
    b.flow_atlas.edges.push_back({"offer", "ghost", "budget_known"});
    CHECK(validate_blueprint(b).has("unknown node"));

    b = hand_blueprint();
    b.flow_atlas.edges.push_back({"booked", "offer", "budget_known"});
    CHECK(validate_blueprint(b).has("terminal successor"));

    b = hand_blueprint();
    b.flow_atlas.edges[0].label = "nope";
    CHECK(validate_blueprint(b).has("unknown label"));

    b = hand_blueprint();
    b.flow_atlas.nodes.push_back({"island", true});
    CHECK(validate_blueprint(b).has("unreachable node"));

    b = hand_blueprint();
    b.flow_atlas.edges.resize(1);
    b.flow_atlas.nodes.resize(2);
    CHECK(validate_blueprint(b).has("no reachable terminal"));
}

TEST_CASE("guidance follows entry conditions and triggers") {
    const auto b = hand_blueprint();
    auto g = blueprint_guidance(b, state_with({}));
    CHECK(g.current_stage == "intro");
    CHECK(g.candidates == std::vector<std::string>{"offer"});
    CHECK_FALSE(g.terminal);

    g = blueprint_guidance(b, state_with({{"price_range", "300k"}}, "what about the price and range?"));
    CHECK(g.current_stage == "offer");
    REQUIRE(g.strategies.size() == 2);
    CHECK(g.strategies[0].situation == "asks range"); // higher priority first
    CHECK(g.candidates == std::vector<std::string>{"booked", "lost"});
    CHECK(successor_trigger_slots(b, g) == std::vector<std::string>{"series", "decision"});

    g = blueprint_guidance(b, state_with({{"price_range", "300k"}, {"decision", "  no "}}));
    CHECK(g.terminal);
    CHECK(g.terminal_node == "lost");

    const auto s = state_with({{"price_range", "300k"}, {"series", "Q5L"}});
    g = blueprint_guidance(b, s);
    CHECK(g.terminal_node == "booked");
}

TEST_CASE("guidance is a pure function of the state") {
    const auto b = hand_blueprint();
    const auto s = state_with({{"price_range", "300k"}}, "price?");
    const auto a = blueprint_guidance(b, s);
    const auto c = blueprint_guidance(b, s);
    CHECK(a.current_stage == c.current_stage);
    CHECK(a.candidates == c.candidates);
    CHECK(a.strategies == c.strategies);
}

TEST_CASE("successor choice prefers a satisfied trigger") {
    const auto b = hand_blueprint();
    auto s = state_with({{"price_range", "300k"}});
    auto g = blueprint_guidance(b, s);
    CHECK(choose_successor(b, g, s).value() == "booked");
}

TEST_CASE("apply_inform reports overwritten slots only") {
    DialogueState s;
    CHECK(s.apply_inform({{"a", "1"}, {"b", "2"}}).empty());
    CHECK(s.apply_inform({{"a", "1"}, {"b", "3"}}) == std::vector<std::string>{"b"});
    CHECK(s.cumulative_inform.at("b") == "3");
}

TEST_CASE("built blueprint from tags is valid and reproducible") {
    gateway::Gateway gw(gateway::GatewayConfig{}, gateway::TemplateRegistry::builtin());
    const auto ontology = profile::Ontology::defaults();
    const auto a = build_blueprint(auto_request(), ontology, gw);
    REQUIRE(a.blueprint.has_value());
    CHECK(validate_blueprint(*a.blueprint).ok());
    std::vector<std::string> names;
    for (const auto& st : a.blueprint->rhythm) {
        names.push_back(st.name);
    }
    CHECK(names == std::vector<std::string>{"product_introduction", "price_negotiation", "conversion/appointment"});
    bool has_terminal = false;
    for (const auto& n : a.blueprint->flow_atlas.nodes) {
        has_terminal = has_terminal || n.terminal;
    }
    CHECK(has_terminal);
    const auto b = build_blueprint(auto_request(), ontology, gw);
    CHECK(*a.blueprint == *b.blueprint);

    auto empty = auto_request();
    empty.tags.clear();
    CHECK_THROWS_AS(build_blueprint(empty, ontology, gw), PreconditionError);
}
