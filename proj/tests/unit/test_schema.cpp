#include "streamforge/schema.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>

using namespace streamforge;

namespace {

SessionQuadruplet sample_session() {
    SessionQuadruplet s;
    s.dialogue_id = "d1";
    s.user_persona_id = "u1";
    s.agent_persona_id = "a1";
    s.blueprint_id = "b1";
    s.domain = Domain::parse("automotive");
    Turn t0{0, Role::user, "I want an SUV.", SlotMap{{"body_type", "suv"}}, std::nullopt, std::nullopt, {}};
    Turn t1{1, Role::agent, "What budget?", std::nullopt, std::vector<std::string>{"price_range"}, std::nullopt, {}};
    s.history = {t0, t1};
    return s;
}

PersonaStore sample_personas() {
    PersonaStore p;
    UserPersona u;
    u.persona_id = "u1";
    AgentPersona a;
    a.persona_id = "a1";
    p.users["u1"] = u;
    p.agents["a1"] = a;
    return p;
}

BlueprintStore sample_blueprints() {
    BlueprintStore b;
    Blueprint bp;
    bp.blueprint_id = "b1";
    b.blueprints["b1"] = bp;
    return b;
}

std::string oracle_2dp(double turns, double dialogues) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", turns / dialogues);
    return buf;
}

} // namespace

TEST_CASE("domain parsing") {
    CHECK(Domain::parse("hotel").kind() == Domain::Kind::hotel);
    CHECK(Domain::parse("Automotive").kind() == Domain::Kind::automotive);
    const auto other = Domain::parse("florist");
    CHECK(other.kind() == Domain::Kind::other);
    CHECK(other.name() == "florist");
}

TEST_CASE("quadruplet json round trip") {
    const auto s = sample_session();
    const json j = s;
    CHECK(j.get<SessionQuadruplet>() == s);
    CHECK(j["history"][0]["inform_block"]["body_type"] == "suv");
    CHECK_FALSE(j["history"][1].contains("inform_block"));
}

TEST_CASE("valid quadruplet passes") {
    CHECK(validate_quadruplet(sample_session(), sample_personas(), sample_blueprints()).ok());
}

TEST_CASE("quadruplet violations are reported by code") {
    auto personas = sample_personas();
    auto blueprints = sample_blueprints();

    auto s = sample_session();
    std::swap(s.history[0].role, s.history[1].role);
    CHECK(validate_quadruplet(s, personas, blueprints).has("turn order"));

    s = sample_session();
    s.history[1].index = 5;
    CHECK(validate_quadruplet(s, personas, blueprints).has("turn index"));

    s = sample_session();
    s.history[1].inform_block = SlotMap{{"x", "y"}};
    CHECK(validate_quadruplet(s, personas, blueprints).has("block placement"));

    s = sample_session();
    s.blueprint_id = "nope";
    CHECK(validate_quadruplet(s, personas, blueprints).has("dangling reference"));

    s = sample_session();
    s.history.clear();
    CHECK(validate_quadruplet(s, personas, blueprints).has("empty history"));

    s = sample_session();
    s.history[0].text = "   ";
    CHECK(validate_quadruplet(s, personas, blueprints).has("empty turn"));

    CHECK(validate_quadruplet(json{{"dialogue_id", 3}}, personas, blueprints).has("parse"));
}

TEST_CASE("persona validation") {
    UserPersona u;
    u.persona_id = "u";
    CHECK(validate_user_persona(u).has("persona incomplete"));
    u.core_requirements = {"r"};
    u.primary_inquiries = {"q"};
    u.potential_utterances = {"p"};
    CHECK(validate_user_persona(u).ok());

    AgentPersona a;
    a.persona_id = "a";
    a.identity_positioning = "sales consultant";
    a.linguistic_style = "warm";
    a.service_boundaries = {"pricing"};
    a.knowledge_base_ref = "kb";
    CHECK(validate_agent_persona(a, {"kb"}).ok());
    CHECK_FALSE(validate_agent_persona(a, {"other"}).ok());
    CHECK(validate_agent_persona(a, {}).ok());
}

TEST_CASE("dataset averages use two decimals") {
    struct Row {
        const char* domain;
        std::uint64_t dialogues;
        std::uint64_t turns;
    };
    const Row rows[] = {{"automotive", 29486, 566095}, {"restaurant", 27389, 450703}, {"hotel", 30623, 480522}};
    DatasetStats stats;
    double total_d = 0;
    double total_t = 0;
    for (const auto& r : rows) {
        stats.add_counts(r.domain, {r.dialogues, r.turns});
        total_d += static_cast<double>(r.dialogues);
        total_t += static_cast<double>(r.turns);
        CHECK(stats.per_domain.at(r.domain).avg_turns_2dp() ==
              oracle_2dp(static_cast<double>(r.turns), static_cast<double>(r.dialogues)));
    }
    CHECK(stats.total.avg_turns_2dp() == oracle_2dp(total_t, total_d));
    CHECK(DomainCounts{}.avg_turns_per_dialogue() == 0.0);
    CHECK(stats.table().find("19.20") != std::string::npos);
}

TEST_CASE("dataset stats from sessions count turns") {
    std::vector<SessionQuadruplet> v{sample_session(), sample_session()};
    const auto stats = compute_dataset_stats(v);
    CHECK(stats.total.dialogue_count == 2);
    CHECK(stats.total.turn_count == 4);
    CHECK(stats.per_domain.at("automotive").avg_turns_2dp() == "2.00");
}

TEST_CASE("jsonl round trip and strict parsing") {
    sftest::TempDir dir;
    std::vector<SessionQuadruplet> v{sample_session()};
    write_jsonl(dir / "a.jsonl", v);
    CHECK(read_jsonl<SessionQuadruplet>(dir / "a.jsonl") == v);

    write_text_file(dir / "bad.jsonl", "{\"a\":1}\n{oops}\n");
    try {
        read_jsonl_raw(dir / "bad.jsonl");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    write_text_file(dir / "blank.jsonl", "{\"a\":1}\n\n");
    CHECK_THROWS_AS(read_jsonl_raw(dir / "blank.jsonl"), ParseError);
    write_text_file(dir / "trunc.jsonl", "{\"a\":1}");
    CHECK_THROWS_AS(read_jsonl_raw(dir / "trunc.jsonl"), ParseError);
}

TEST_CASE("jsonl output has sorted keys") {
    sftest::TempDir dir;
    std::vector<json> rows{json{{"zeta", 1}, {"alpha", 2}}};
    write_jsonl_raw(dir / "k.jsonl", rows);
    const auto text = read_text_file(dir / "k.jsonl");
    CHECK(text.find("alpha") < text.find("zeta"));
}
