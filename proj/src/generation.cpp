#include "streamforge/generation.hpp"

#include "streamforge/persona.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>

namespace streamforge::generation {

namespace {

std::string persona_brief(const UserPersona& u) {
    std::string out = "Mindset: " + u.mindset + "\nKnown facts:\n";
    for (const auto& [k, v] : u.basic_information) {
        out += "- " + k + ": " + v + "\n";
    }
    out += "Requirements:\n";
    for (const auto& r : u.core_requirements) {
        out += "- " + r + "\n";
    }
    out += "Questions to raise:\n";
    for (const auto& q : u.primary_inquiries) {
        out += "- " + q + "\n";
    }
    return out;
}

std::string transcript(const std::vector<Turn>& history) {
    std::string out;
    for (const auto& t : history) {
        out += std::string(to_string(t.role)) + ": " + t.text + "\n";
    }
    return out;
}

std::string evidence_text(const EvidenceSet& ev) {
    std::string out;
    for (const auto& e : ev.entries) {
        out += "- " + e.text + "\n";
    }
    return out;
}

EvidenceSet retrieve(const retrieval::RetrievalPool& pool, const retrieval::EmbeddingProvider& provider,
                     std::string_view query, std::size_t k, EvidenceSet::Kind kind, const char* payload_key) {
    EvidenceSet ev;
    ev.kind = kind;
    if (pool.empty() || k == 0) {
        return ev;
    }
    const auto q = provider.embed(query);
    for (const auto& hit : pool.top_k(q, k)) {
        const auto& entry = pool.at(hit.index);
        std::string text = entry.text;
        if (payload_key != nullptr) {
            text = entry.payload.value(payload_key, std::string());
        }
        ev.entries.push_back({hit.entry_id, std::move(text), hit.score});
    }
    return ev;
}

/// Issues one gateway request, logging its fingerprint and converting any
/// gateway failure into a session abort at `stage`.
std::string call(const SessionContext& ctx, const gateway::GenerationRequest& req, const std::string& stage,
                 FingerprintLog& log) {
    log.push_back(ctx.gw.fingerprint(req));
    try {
        return ctx.gw.generate(req);
    } catch (const Error& e) {
        throw SessionAborted(stage, e.what(), log);
    }
}

struct ParsedTurn {
    std::string text;
    json body;
};

std::optional<ParsedTurn> parse_turn(const std::string& raw) {
    try {
        json j = gateway::parse_model_json(raw);
        std::string text = trim(j.value("text", std::string()));
        if (text.empty()) {
            return std::nullopt;
        }
        return ParsedTurn{std::move(text), std::move(j)};
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::vector<std::string> ordered_slots(const UserPersona& u, const profile::Ontology& ontology) {
    std::vector<std::string> order = profile::progression_slots(u.domain, ontology);
    const auto add = [&](const std::string& s) {
        if (std::find(order.begin(), order.end(), s) == order.end()) {
            order.push_back(s);
        }
    };
    add(profile::terminal_slot(u.domain));
    for (const auto& s : ontology.slots(u.domain)) {
        add(s);
    }
    for (const auto& [s, _] : u.basic_information) {
        add(s);
    }
    return order;
}

std::string inform_sentence(const std::string& slot, const std::string& value) {
    return "My " + profile::slot_words(slot) + " is " + value + ".";
}

/// Inform-delta slots a user turn may carry: in the ontology when one is
/// defined, and agreeing with the persona's own facts.
SlotMap screen_user_delta(const SessionContext& ctx, const json& inform, bool strict) {
    SlotMap delta;
    if (!inform.is_object()) {
        return delta;
    }
    const bool restrict = ctx.ontology.defined_for(ctx.user.domain);
    for (const auto& [slot, value] : inform.items()) {
        if (!value.is_string()) {
            spdlog::warn("dropping non-string inform value for slot {}", slot);
            continue;
        }
        if (restrict && !ctx.ontology.allows(ctx.user.domain, slot)) {
            spdlog::warn("stripping slot '{}' outside the {} ontology", slot, ctx.user.domain.name());
            continue;
        }
        const auto known = ctx.user.basic_information.find(slot);
        const std::string v = value.get<std::string>();
        if (known != ctx.user.basic_information.end() && normalize_value(known->second) != normalize_value(v)) {
            if (strict) {
                throw Error("inform value for '" + slot + "' contradicts the persona");
            }
            spdlog::warn("stripping slot '{}' whose value contradicts the persona", slot);
            continue;
        }
        if (strict && known == ctx.user.basic_information.end()) {
            throw Error("inform slot '" + slot + "' is not among the persona's facts");
        }
        delta.emplace(slot, v);
    }
    return delta;
}

} // namespace

std::vector<std::string> EvidenceSet::ids() const {
    std::vector<std::string> out;
    for (const auto& e : entries) {
        out.push_back(e.entry_id);
    }
    return out;
}

retrieval::Embedding CachedProvider::embed(std::string_view text) const {
    {
        std::lock_guard lock(mutex_);
        if (const auto it = memo_.find(text); it != memo_.end()) {
            return it->second;
        }
    }
    auto v = inner_.embed(text);
    std::lock_guard lock(mutex_);
    memo_.emplace(std::string(text), v);
    return v;
}

GenerationPools GenerationPools::build(std::span<const ingest::AtomicSignals> signals,
                                       std::span<const SeedDialogue> seeds,
                                       const retrieval::EmbeddingProvider& provider) {
    GenerationPools pools(provider.dim());
    for (const auto& s : seeds) {
        for (std::size_t i = 0; i < s.turns.size(); ++i) {
            const auto& t = s.turns[i];
            const std::string id = fmt::format("seed:{}#t{}", s.seed_id, i);
            if (i == 0 && t.role == Role::user) {
                pools.seed_openings.add_text(id, t.text, json{{"seed_id", s.seed_id}}, provider);
            }
            if (i + 1 < s.turns.size()) {
                const auto& next = s.turns[i + 1];
                if (t.role == Role::agent && next.role == Role::user) {
                    pools.agent_messages.add_text(id, t.text, json{{"reply", next.text}}, provider);
                } else if (t.role == Role::user && next.role == Role::agent) {
                    pools.user_queries.add_text(id, t.text, json{{"response", next.text}}, provider);
                }
            }
        }
    }
    for (const auto& sig : signals) {
        for (std::size_t k = 0; k < sig.qa_pairs.size(); ++k) {
            const auto& p = sig.qa_pairs[k];
            pools.user_queries.add_text(fmt::format("qa:{}#{}", sig.source_id, k), p.question.text,
                                        json{{"response", p.response.text}}, provider);
        }
    }
    return pools;
}

ConfigurationChoice select_configuration(std::span<const UserPersona> users, std::span<const AgentPersona> agents,
                                         std::span<const Blueprint> blueprints,
                                         const retrieval::EmbeddingProvider& provider, std::uint64_t seed) {
    if (users.empty() || agents.empty() || blueprints.empty()) {
        throw PreconditionError("configuration selection needs non-empty user, agent and blueprint pools");
    }
    Rng rng(seed);
    ConfigurationChoice choice;
    choice.user = static_cast<std::size_t>(rng.below(users.size()));
    const auto match = persona::match_personas(users[choice.user], agents, provider);
    choice.agent = match.index;
    choice.match_score = match.score;
    const Domain& domain = agents[choice.agent].domain;
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < blueprints.size(); ++i) {
        if (blueprints[i].domain == domain) {
            eligible.push_back(i);
        }
    }
    if (eligible.empty()) {
        throw PreconditionError("no blueprint for domain '" + domain.name() + "'");
    }
    choice.blueprint = eligible[static_cast<std::size_t>(rng.below(eligible.size()))];
    return choice;
}

SessionAborted::SessionAborted(std::string stage, const std::string& reason, std::vector<std::string> fingerprints)
    : Error("session aborted at " + stage + ": " + reason), stage_(std::move(stage)),
      fingerprints_(std::move(fingerprints)) {}

// ---------------------------------------------------------------------------

UserTurnResult synthesize_opening(const SessionContext& ctx, std::uint64_t seed, FingerprintLog& log) {
    if (ctx.pools.seed_openings.empty()) {
        throw PreconditionError("seed opening pool is empty");
    }
    if (ctx.user.primary_inquiries.empty()) {
        throw PreconditionError("user persona " + ctx.user.persona_id + " has no primary inquiry");
    }
    UserTurnResult out;
    out.evidence = retrieve(ctx.pools.seed_openings, ctx.provider, join(ctx.user.primary_inquiries, " "),
                            ctx.limits.retrieval_k, EvidenceSet::Kind::user_reference, nullptr);

    std::string text = "Hi! " + ctx.user.primary_inquiries.front();
    json inform = json::object();
    for (const auto& slot : ordered_slots(ctx.user, ctx.ontology)) {
        if (const auto it = ctx.user.basic_information.find(slot); it != ctx.user.basic_information.end()) {
            inform[slot] = it->second;
            text = "Hi! " + inform_sentence(slot, it->second) + " " + ctx.user.primary_inquiries.front();
            break;
        }
    }

    gateway::GenerationRequest req;
    req.template_id = "opening";
    req.purpose = gateway::Purpose::opening;
    req.variables = {{"persona", persona_brief(ctx.user)},
                     {"references", evidence_text(out.evidence)},
                     {"inquiry", ctx.user.primary_inquiries.front()},
                     {"scaffold", json{{"text", text}, {"inform", inform}}.dump()}};

    std::string problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
        req.decoding.seed = seed + static_cast<std::uint64_t>(attempt);
        const auto parsed = parse_turn(call(ctx, req, "opening", log));
        if (!parsed) {
            problem = "empty or unparseable opening";
            continue;
        }
        try {
            out.delta = screen_user_delta(ctx, parsed->body.value("inform", json::object()), true);
        } catch (const Error& e) {
            problem = e.what();
            spdlog::warn("opening rejected: {}", problem);
            continue;
        }
        out.turn.role = Role::user;
        out.turn.text = parsed->text;
        if (!out.delta.empty()) {
            out.turn.inform_block = out.delta;
        }
        if (!out.evidence.entries.empty()) {
            out.turn.evidence_ids = out.evidence.ids();
        }
        out.voiced_inquiry = 0;
        return out;
    }
    throw SessionAborted("opening", problem, log);
}

UserTurnResult simulate_user_turn(const SessionContext& ctx, const DialogueState& state, std::uint64_t seed,
                                  FingerprintLog& log) {
    if (state.history.empty() || state.history.back().role != Role::agent) {
        throw PreconditionError("a user turn must follow an agent turn");
    }
    const Turn& last_agent = state.history.back();
    UserTurnResult out;
    out.evidence = retrieve(ctx.pools.agent_messages, ctx.provider, last_agent.text, ctx.limits.retrieval_k,
                            EvidenceSet::Kind::user_reference, "reply");

    json inform = json::object();
    std::vector<std::string> sentences;
    if (last_agent.request_block) {
        for (const auto& slot : *last_agent.request_block) {
            if (const auto it = ctx.user.basic_information.find(slot); it != ctx.user.basic_information.end()) {
                inform[slot] = it->second;
                sentences.push_back(inform_sentence(slot, it->second));
            } else {
                out.declined.push_back(slot);
                sentences.push_back("No strong preference on the " + profile::slot_words(slot) + ".");
            }
        }
    }
    if (inform.empty()) {
        for (const auto& slot : ordered_slots(ctx.user, ctx.ontology)) {
            const auto it = ctx.user.basic_information.find(slot);
            if (it != ctx.user.basic_information.end() && !state.cumulative_inform.contains(slot)) {
                inform[slot] = it->second;
                sentences.push_back(inform_sentence(slot, it->second));
                break;
            }
        }
    }
    for (std::size_t i = 0; i < ctx.user.primary_inquiries.size(); ++i) {
        if (!state.voiced_inquiries.contains(i)) {
            out.voiced_inquiry = i;
            sentences.push_back(ctx.user.primary_inquiries[i]);
            break;
        }
    }
    if (sentences.empty()) {
        sentences.emplace_back("That covers everything I wanted to ask.");
    }

    gateway::GenerationRequest req;
    req.template_id = "user_turn";
    req.purpose = gateway::Purpose::user_turn;
    req.variables = {{"persona", persona_brief(ctx.user)},
                     {"history", transcript(state.history)},
                     {"references", evidence_text(out.evidence)},
                     {"scaffold", json{{"text", join(sentences, " ")}, {"inform", inform}}.dump()}};

    for (int attempt = 0; attempt < 2; ++attempt) {
        req.decoding.seed = seed + static_cast<std::uint64_t>(attempt);
        const auto parsed = parse_turn(call(ctx, req, "user_turn", log));
        if (!parsed) {
            continue;
        }
        out.delta = screen_user_delta(ctx, parsed->body.value("inform", json::object()), false);
        out.turn.role = Role::user;
        out.turn.text = parsed->text;
        if (!out.delta.empty()) {
            out.turn.inform_block = out.delta;
        }
        if (!out.evidence.entries.empty()) {
            out.turn.evidence_ids = out.evidence.ids();
        }
        std::erase_if(out.declined, [&](const std::string& s) { return out.delta.contains(s); });
        return out;
    }
    throw SessionAborted("user_turn", "empty generation after retry", log);
}

std::string kb_grounded_claim(const retrieval::KnowledgeBase& kb, std::string_view user_text, const SlotMap& state) {
    // Entity: earliest mention in the text, else one already named in the state.
    std::optional<std::string> entity;
    std::size_t best_pos = std::string::npos;
    const std::string lower = to_lower_ascii(user_text);
    for (const auto& name : kb.entities()) {
        const auto pos = lower.find(to_lower_ascii(name));
        if (pos != std::string::npos && pos < best_pos) {
            best_pos = pos;
            entity = name;
        }
    }
    if (!entity) {
        for (const auto& [slot, value] : state) {
            for (const auto& name : kb.entities()) {
                if (normalize_value(name) == normalize_value(value)) {
                    entity = name;
                    break;
                }
                for (const auto& part : split(name, ' ')) {
                    if (!part.empty() && normalize_value(part) == normalize_value(value)) {
                        entity = name;
                    }
                }
            }
            if (entity) {
                break;
            }
        }
    }
    if (!entity) {
        return {};
    }
    // Attribute: the one of this entity's facts mentioned closest to the entity.
    const std::size_t anchor = best_pos == std::string::npos ? lower.size() : best_pos;
    const retrieval::KbEntry* chosen = nullptr;
    std::size_t best_dist = std::string::npos;
    const auto facts = kb.lookup(*entity);
    for (const auto& fact : facts) {
        for (const auto& word : split(fact.attribute, '_')) {
            if (utf8_length(word) < 4) {
                continue;
            }
            const std::string w = to_lower_ascii(word);
            for (auto pos = lower.find(w); pos != std::string::npos; pos = lower.find(w, pos + 1)) {
                const std::size_t dist = pos > anchor ? pos - anchor : anchor - pos;
                if (dist < best_dist) {
                    best_dist = dist;
                    chosen = &fact;
                }
            }
        }
    }
    if (chosen == nullptr) {
        return {};
    }
    return "The " + *entity + " " + profile::slot_words(chosen->attribute) + " is " + chosen->value + ".";
}

bool goal_satisfied(const UserPersona& user, const DialogueState& state, const profile::Ontology& ontology) {
    const bool restrict = ontology.defined_for(user.domain);
    for (const auto& [slot, _] : user.basic_information) {
        if ((!restrict || ontology.allows(user.domain, slot)) && !state.cumulative_inform.contains(slot)) {
            return false;
        }
    }
    for (std::size_t i = 0; i < user.primary_inquiries.size(); ++i) {
        if (!state.voiced_inquiries.contains(i)) {
            return false;
        }
    }
    return true;
}

AgentTurnResult generate_agent_turn(const SessionContext& ctx, const DialogueState& state, std::uint64_t seed,
                                    FingerprintLog& log) {
    if (state.history.empty() || state.history.back().role != Role::user) {
        throw PreconditionError("an agent turn must follow a user turn");
    }
    const Turn& user_turn = state.history.back();
    AgentTurnResult out;
    out.guidance = blueprint::blueprint_guidance(ctx.blueprint, state);
    out.evidence = retrieve(ctx.pools.user_queries, ctx.provider, user_turn.text, ctx.limits.retrieval_k,
                            EvidenceSet::Kind::agent_reference, "response");

    const bool out_of_room = state.history.size() + 3 > ctx.limits.max_turns;
    out.closing = out.guidance.terminal || goal_satisfied(ctx.user, state, ctx.ontology) || out_of_room;

    std::vector<std::string> request;
    if (!out.closing) {
        const auto open = [&](const std::string& s) {
            return !state.cumulative_inform.contains(s) && !state.declined.contains(s);
        };
        // The terminal slot closes the session, so it is asked for only once
        // nothing else the agent could still learn remains open.
        const std::string closer = profile::terminal_slot(ctx.user.domain);
        std::vector<std::string> wanted;
        for (const auto& s : blueprint::successor_trigger_slots(ctx.blueprint, out.guidance)) {
            if (s != closer) {
                wanted.push_back(s);
            }
        }
        for (const auto& s : ordered_slots(ctx.user, ctx.ontology)) {
            if (s != closer) {
                wanted.push_back(s);
            }
        }
        wanted.push_back(closer);
        for (const auto& s : wanted) {
            const bool allowed = !ctx.ontology.defined_for(ctx.user.domain) || ctx.ontology.allows(ctx.user.domain, s);
            if (allowed && open(s)) {
                request.push_back(s);
                break;
            }
        }
    }

    std::string phrasing =
        out.guidance.strategies.empty() ? std::string("Happy to help.") : out.guidance.strategies.front().example_phrasing;
    // Repeating the stage line every turn reads badly; acknowledge the answer instead.
    const bool repeated = std::any_of(state.history.begin(), state.history.end(), [&](const Turn& t) {
        return t.role == Role::agent && t.text.rfind(phrasing, 0) == 0;
    });
    if (repeated) {
        if (user_turn.inform_block && !user_turn.inform_block->empty()) {
            const auto& [slot, value] = *user_turn.inform_block->begin();
            phrasing = "Got it, " + value + " for the " + profile::slot_words(slot) + ".";
        } else {
            phrasing = "Understood.";
        }
    }
    const std::string claim = kb_grounded_claim(ctx.kb, user_turn.text, state.cumulative_inform);
    std::string ask;
    if (!request.empty()) {
        ask = "Could you tell me your preferred " + profile::slot_words(request.front()) + "?";
    }
    std::string text;
    if (out.closing) {
        text = out.guidance.terminal
                   ? "Great, that's settled: " + profile::slot_words(out.guidance.terminal_node) + ". Thank you!"
                   : "Thank you for your time, feel free to reach out whenever you are ready.";
        if (!claim.empty()) {
            text = claim + " " + text;
        }
    } else {
        std::vector<std::string> parts{phrasing};
        if (!claim.empty()) {
            parts.push_back(claim);
        }
        if (!ask.empty()) {
            parts.push_back(ask);
        }
        text = join(parts, " ");
    }

    std::vector<std::string> strategy_names;
    for (const auto& s : out.guidance.strategies) {
        strategy_names.push_back(s.coping_strategy);
    }
    gateway::GenerationRequest req;
    req.template_id = "agent_turn";
    req.purpose = gateway::Purpose::agent_turn;
    req.variables = {{"agent", ctx.agent.identity_positioning + " | style: " + ctx.agent.linguistic_style},
                     {"history", transcript(state.history)},
                     {"stage", out.guidance.current_stage},
                     {"strategies", join(strategy_names, "; ")},
                     {"references", evidence_text(out.evidence)},
                     {"facts", claim},
                     {"closing", out.closing ? "yes" : "no"},
                     {"scaffold", json{{"text", text}, {"request", request}}.dump()}};

    std::optional<ParsedTurn> parsed;
    bool grounded = false;
    for (int attempt = 0; attempt < 2 && !grounded; ++attempt) {
        req.decoding.seed = seed + static_cast<std::uint64_t>(attempt);
        parsed = parse_turn(call(ctx, req, "agent_turn", log));
        if (!parsed) {
            continue;
        }
        const auto check = ingest::check_entity_consistency(user_turn.text, parsed->text, ctx.kb, ctx.entities);
        grounded = check.consistent;
        if (!grounded) {
            spdlog::warn("agent turn inconsistent with knowledge base: {}", join(check.mismatches, "; "));
        }
    }
    if (!parsed) {
        throw SessionAborted("agent_turn", "empty generation after retry", log);
    }
    std::string final_text = parsed->text;
    if (!grounded) {
        std::vector<std::string> parts{phrasing};
        if (!claim.empty() &&
            ingest::check_entity_consistency(user_turn.text, claim, ctx.kb, ctx.entities).consistent) {
            parts.push_back(claim);
        }
        if (!ask.empty()) {
            parts.push_back(ask);
        }
        final_text = join(parts, " ");
    }

    out.request.clear();
    for (const auto& s : parsed->body.value("request", std::vector<std::string>{})) {
        const bool allowed = !ctx.ontology.defined_for(ctx.user.domain) || ctx.ontology.allows(ctx.user.domain, s);
        if (allowed && !state.cumulative_inform.contains(s) &&
            std::find(out.request.begin(), out.request.end(), s) == out.request.end()) {
            out.request.push_back(s);
        }
    }
    if (out.closing) {
        out.request.clear();
    }
    out.turn.role = Role::agent;
    out.turn.text = final_text;
    if (!out.request.empty()) {
        out.turn.request_block = out.request;
    }
    if (!out.evidence.entries.empty()) {
        out.turn.evidence_ids = out.evidence.ids();
    }
    return out;
}

SessionQuadruplet run_session(const SessionContext& ctx, std::string dialogue_id, std::uint64_t seed) {
    if (ctx.limits.max_turns < 2) {
        throw ConfigError("max_turns must allow at least one user/agent pair");
    }
    if (ctx.user.domain != ctx.blueprint.domain) {
        spdlog::debug("session {}: user domain {} differs from blueprint domain {}", dialogue_id,
                      ctx.user.domain.name(), ctx.blueprint.domain.name());
    }
    FingerprintLog log;
    DialogueState state;
    state.turn_budget_remaining = ctx.limits.max_turns;

    const auto push = [&](Turn t) {
        t.index = state.history.size();
        state.history.push_back(std::move(t));
        --state.turn_budget_remaining;
    };

    auto opening = synthesize_opening(ctx, derive_seed(seed, "opening"), log);
    state.apply_inform(opening.delta);
    state.voiced_inquiries.insert(0);
    push(std::move(opening.turn));

    for (std::size_t pair = 0;; ++pair) {
        auto agent = generate_agent_turn(ctx, state, derive_seed(seed, "agent", pair), log);
        state.current_stage = agent.guidance.current_stage;
        state.pending_requests = agent.request;
        push(std::move(agent.turn));
        if (agent.closing) {
            break;
        }
        auto user = simulate_user_turn(ctx, state, derive_seed(seed, "user", pair), log);
        user.turn.revised_slots = state.apply_inform(user.delta);
        for (const auto& s : user.declined) {
            state.declined.insert(s);
        }
        if (user.voiced_inquiry) {
            state.voiced_inquiries.insert(*user.voiced_inquiry);
        }
        push(std::move(user.turn));
    }

    SessionQuadruplet q;
    q.dialogue_id = std::move(dialogue_id);
    q.user_persona_id = ctx.user.persona_id;
    q.agent_persona_id = ctx.agent.persona_id;
    q.blueprint_id = ctx.blueprint.blueprint_id;
    q.domain = ctx.blueprint.domain;
    q.history = std::move(state.history);
    return q;
}

// ---------------------------------------------------------------------------

void to_json(json& j, const SessionAbort& a) {
    j = json{{"index", a.index},
             {"dialogue_id", a.dialogue_id},
             {"stage", a.stage},
             {"reason", a.reason},
             {"fingerprints", a.fingerprints}};
}

std::string dialogue_id_for(std::uint64_t seed, std::size_t index) {
    return fmt::format("dlg-{:016x}", derive_seed(seed, "dialogue", index));
}

GenerationResult run_generation(std::span<const UserPersona> users, std::span<const AgentPersona> agents,
                                std::span<const Blueprint> blueprints, const GenerationPools& pools,
                                const retrieval::KnowledgeBase& kb, const profile::Ontology& ontology,
                                const retrieval::EmbeddingProvider& provider, gateway::Gateway& gw,
                                const GenerationConfig& cfg, std::uint64_t seed) {
    if (pools.seed_openings.empty()) {
        throw PreconditionError("seed opening pool is empty");
    }
    const CachedProvider cached(provider);
    std::vector<std::optional<SessionQuadruplet>> slots(cfg.sessions);
    std::vector<std::optional<SessionAbort>> aborts(cfg.sessions);

    parallel_for(cfg.sessions, cfg.workers, [&](std::size_t i) {
        const auto choice = select_configuration(users, agents, blueprints, cached, derive_seed(seed, "select", i));
        const SessionContext ctx{users[choice.user], agents[choice.agent], blueprints[choice.blueprint], pools, kb,
                                 ontology, cached, gw, cfg.limits, {}};
        const std::string id = dialogue_id_for(seed, i);
        try {
            slots[i] = run_session(ctx, id, derive_seed(seed, "session", i));
        } catch (const SessionAborted& e) {
            spdlog::warn("{} ({}): {}", id, e.stage(), e.what());
            aborts[i] = SessionAbort{i, id, e.stage(), e.what(), e.fingerprints()};
        }
    });

    GenerationResult result;
    for (std::size_t i = 0; i < cfg.sessions; ++i) {
        if (slots[i]) {
            result.sessions.push_back(std::move(*slots[i]));
        } else if (aborts[i]) {
            result.aborted.push_back(std::move(*aborts[i]));
        }
    }
    return result;
}

} // namespace streamforge::generation
