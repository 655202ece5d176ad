#pragma once

#include "streamforge/blueprint.hpp"
#include "streamforge/generation.hpp"
#include "streamforge/ingest.hpp"
#include "streamforge/persona.hpp"
#include "test_support.hpp"

namespace sftest {

/// Personas, blueprints and pools built from the fixture corpus in mock mode.
struct World {
    streamforge::retrieval::OfflineHashProvider provider;
    streamforge::retrieval::KnowledgeBase kb;
    streamforge::profile::Ontology ontology = streamforge::profile::Ontology::defaults();
    streamforge::gateway::Gateway gw{streamforge::gateway::GatewayConfig{},
                                     streamforge::gateway::TemplateRegistry::builtin()};
    std::vector<streamforge::SeedDialogue> seeds;
    std::vector<streamforge::ingest::AtomicSignals> signals;
    std::vector<streamforge::UserPersona> users;
    std::vector<streamforge::AgentPersona> agents;
    std::vector<streamforge::Blueprint> blueprints;
    streamforge::generation::GenerationPools pools{256};

    World() {
        using namespace streamforge;
        kb = retrieval::KnowledgeBase::load(fixtures() / "kb.jsonl");
        seeds = read_jsonl<SeedDialogue>(fixtures() / "seeds.jsonl");
        ingest::IngestConfig icfg;
        icfg.align.theta_sem = 0.2;
        icfg.workers = 1;
        signals = ingest_sources(fixtures() / "sources", icfg, provider, kb, nullptr).signals;

        persona::PersonaConfig pcfg;
        pcfg.user_per_domain = {{"automotive", 6}, {"restaurant", 3}, {"hotel", 3}};
        pcfg.agent_per_domain = {{"automotive", 2}, {"restaurant", 1}, {"hotel", 1}};
        pcfg.questions_per_persona = 4;
        pcfg.workers = 1;
        auto personas = persona::build_personas(signals, seeds, pcfg, ontology, kb.id(), gw, 11);
        users = std::move(personas.users);
        agents = std::move(personas.agents);

        blueprint::BlueprintConfig bcfg;
        bcfg.per_domain = {{"automotive", 2}, {"restaurant", 1}, {"hotel", 1}};
        bcfg.tags_per_blueprint = 8;
        bcfg.workers = 1;
        const std::vector<std::string> order{"greeting", "requirement_mining", "product_introduction",
                                             "price_negotiation", "objection_handling", "conversion/appointment"};
        blueprints = blueprint::build_blueprints(signals, agents, seeds, bcfg, order, ontology, gw, 12).blueprints;
        pools = generation::GenerationPools::build(signals, seeds, provider);
    }
};

} // namespace sftest
