#include "streamforge/persona.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace streamforge;
using namespace streamforge::persona;

namespace {

gateway::Gateway mock_gateway() { return gateway::Gateway(gateway::GatewayConfig{}, gateway::TemplateRegistry::builtin()); }

UserPersonaRequest auto_request() {
    UserPersonaRequest r;
    r.persona_id = "u-auto-0";
    r.domain = Domain::parse("automotive");
    r.questions = {"What is the fuel consumption of the Q5L?", "Is there a discount on the X3?",
                   "How many seats does the iX3 have?"};
    r.seeds = read_jsonl<SeedDialogue>(sftest::fixtures() / "seeds.jsonl");
    r.seed = 17;
    return r;
}

AgentPersona agent(std::string id, std::string domain, std::vector<std::string> scope) {
    AgentPersona a;
    a.persona_id = std::move(id);
    a.domain = Domain::parse(domain);
    a.identity_positioning = "consultant";
    a.linguistic_style = "friendly";
    a.service_boundaries = std::move(scope);
    a.knowledge_base_ref = "kb";
    return a;
}

} // namespace

TEST_CASE("mock user persona is valid, ontology-bound and reproducible") {
    auto gw = mock_gateway();
    const auto ontology = profile::Ontology::defaults();
    const auto a = synthesize_user_persona(auto_request(), ontology, gw);
    REQUIRE(a.persona.has_value());
    CHECK_FALSE(a.rejection.has_value());
    CHECK(check_user_persona(*a.persona).ok());
    CHECK(a.persona->domain.kind() == Domain::Kind::automotive);
    for (const auto& [slot, value] : a.persona->basic_information) {
        CHECK(ontology.allows(a.persona->domain, slot));
    }
    const auto b = synthesize_user_persona(auto_request(), ontology, gw);
    CHECK(*a.persona == *b.persona);
}

TEST_CASE("user persona needs questions") {
    auto gw = mock_gateway();
    auto r = auto_request();
    r.questions.clear();
    CHECK_THROWS_AS(synthesize_user_persona(r, profile::Ontology::defaults(), gw), PreconditionError);
}

TEST_CASE("invalid model output is retried once then rejected") {
    auto reg = gateway::TemplateRegistry::builtin();
    auto tpl = reg.get("persona_user");
    tpl.mock = R"({"persona_id": "x", "mindset": "", "core_requirements": []})";
    reg.add(tpl);
    gateway::Gateway gw(gateway::GatewayConfig{}, reg);
    const auto s = synthesize_user_persona(auto_request(), profile::Ontology::defaults(), gw);
    CHECK_FALSE(s.persona.has_value());
    REQUIRE(s.rejection.has_value());
    CHECK(s.attempts == 2);
    CHECK(s.rejection->raw_output == tpl.mock);
    CHECK_FALSE(s.rejection->report.ok());
}

TEST_CASE("agent persona kb reference must be known") {
    auto gw = mock_gateway();
    AgentPersonaRequest r;
    r.persona_id = "a-auto-0";
    r.domain = Domain::parse("automotive");
    r.account.profile_summary = "Authorized dealer for SUVs";
    r.account.certifications = {"authorized dealer"};
    r.tags = {{"price_negotiation", 1.0, "s#r0"}, {"conversion/appointment", 1.0, "s#r1"}};
    r.kb_ref = "kb";
    const auto ok = synthesize_agent_persona(r, {"kb"}, gw);
    REQUIRE(ok.persona.has_value());
    CHECK(ok.persona->knowledge_base_ref == "kb");
    CHECK(validate_agent_persona(*ok.persona, {"kb"}).ok());
    CHECK_THROWS_AS(synthesize_agent_persona(r, {"other"}, gw), PreconditionError);
}

TEST_CASE("matching prefers same-domain agents and breaks ties by id") {
    retrieval::OfflineHashProvider p;
    UserPersona u;
    u.persona_id = "u";
    u.domain = Domain::parse("hotel");
    u.core_requirements = {"quiet room near the waterfront"};
    u.primary_inquiries = {"Is breakfast included?"};
    std::vector<AgentPersona> agents{agent("a2", "hotel", {"room booking"}), agent("a1", "hotel", {"room booking"}),
                                     agent("a0", "automotive", {"quiet room near the waterfront"})};
    const auto m = match_personas(u, agents, p);
    CHECK(agents[m.index].persona_id == "a1");

    std::vector<AgentPersona> other_only{agent("b1", "automotive", {"test drives"}),
                                         agent("b0", "restaurant", {"quiet room near the waterfront breakfast"})};
    CHECK(other_only[match_personas(u, other_only, p).index].persona_id == "b0");
    CHECK_THROWS_AS(match_personas(u, std::vector<AgentPersona>{}, p), PreconditionError);
}
