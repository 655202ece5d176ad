#include "streamforge/blueprint.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <deque>
#include <map>

namespace streamforge::blueprint {

namespace {

struct StageText {
    std::string_view label;
    std::string_view goal;
    std::string_view situation;
    std::string_view coping;
    std::string_view phrasing;
    std::vector<std::string> keywords;
};

const std::vector<StageText>& stage_texts() {
    static const std::vector<StageText> texts = {
        {"greeting", "open warmly and learn why the customer reached out", "customer opens the conversation",
         "welcome the customer and invite them to describe what they need",
         "Welcome, happy to help you today.", {"hello", "hi", "hey", "你好"}},
        {"requirement_mining", "collect the customer's key constraints", "customer states a need or a budget",
         "ask focused questions that pin down one constraint at a time",
         "To narrow things down, let me ask a couple of questions.",
         {"need", "looking for", "want", "budget", "prefer", "想要"}},
        {"product_introduction", "present options that fit the stated constraints",
         "customer asks about features or specifications",
         "answer with concrete facts from the catalogue and relate them to the customer's needs",
         "Here is what fits what you described.",
         {"fuel", "consumption", "feature", "configuration", "space", "seat", "power", "range", "spec", "menu",
          "room", "breakfast", "配置", "油耗"}},
        {"price_negotiation", "agree on a price the customer accepts", "customer pushes on price or discounts",
         "explain current offers and value without inventing discounts",
         "Let me walk you through the current offers.",
         {"price", "discount", "cheaper", "cost", "expensive", "deal", "优惠", "多少钱"}},
        {"objection_handling", "address hesitation and keep the conversation moving",
         "customer voices a concern or compares alternatives",
         "acknowledge the concern, then offer a fitting alternative or clarification",
         "I understand the concern, here is another way to look at it.",
         {"but", "worried", "concern", "not sure", "compare", "担心"}},
        {"conversion/appointment", "secure a concrete next step", "customer is ready to commit",
         "propose a specific appointment or booking and confirm the details",
         "Shall I reserve a slot for you?", {"book", "reserve", "test drive", "appointment", "visit", "when", "预约"}},
        {"consultation", "understand the request and answer it", "customer asks a general question",
         "answer from the catalogue and ask for the next missing detail", "Sure, let me help you with that.",
         {}},
    };
    return texts;
}

const StageText* stage_text(std::string_view label) {
    for (const auto& t : stage_texts()) {
        if (t.label == label) {
            return &t;
        }
    }
    return nullptr;
}

std::string stage_signal(const std::string& slot) { return slot + "_known"; }

std::vector<std::string> graph_reachable(const FlowAtlas& atlas, const std::string& start) {
    std::set<std::string> seen{start};
    std::deque<std::string> queue{start};
    std::vector<std::string> order;
    while (!queue.empty()) {
        auto cur = queue.front();
        queue.pop_front();
        order.push_back(cur);
        for (const auto& e : atlas.edges) {
            if (e.from == cur && seen.insert(e.to).second) {
                queue.push_back(e.to);
            }
        }
    }
    return order;
}

bool stage_holds(const Stage& s, const SlotMap& state) {
    return std::all_of(s.entry_condition.begin(), s.entry_condition.end(),
                       [&](const SlotCondition& c) { return c.holds(state); });
}

} // namespace

std::vector<std::string> DialogueState::apply_inform(const SlotMap& delta) {
    std::vector<std::string> revised;
    for (const auto& [slot, value] : delta) {
        const auto it = cumulative_inform.find(slot);
        if (it != cumulative_inform.end() && normalize_value(it->second) != normalize_value(value)) {
            revised.push_back(slot);
        }
        cumulative_inform[slot] = value;
        declined.erase(slot);
        pending_requests.erase(std::remove(pending_requests.begin(), pending_requests.end(), slot),
                               pending_requests.end());
    }
    return revised;
}

const Turn* DialogueState::last_user_turn() const {
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
        if (it->role == Role::user) {
            return &*it;
        }
    }
    return nullptr;
}

json scaffold_blueprint(const BlueprintRequest& request, const profile::Ontology& ontology) {
    std::map<std::string, int> counts;
    std::vector<std::string> first_seen;
    for (const auto& t : request.tags) {
        if (counts[t.label]++ == 0) {
            first_seen.push_back(t.label);
        }
    }
    std::vector<std::string> labels;
    for (const auto& l : request.stage_order) {
        if (l != "other" && counts.contains(l)) {
            labels.push_back(l);
        }
    }
    for (const auto& l : first_seen) {
        if (l != "other" && std::find(labels.begin(), labels.end(), l) == labels.end()) {
            labels.push_back(l);
        }
    }
    if (labels.empty()) {
        labels.emplace_back("consultation");
    }

    const auto progression = profile::progression_slots(request.domain, ontology);
    const std::string terminal_slot = profile::terminal_slot(request.domain);
    const std::string outcome = profile::terminal_outcome(request.domain);
    const std::string terminal_signal = terminal_slot + "_confirmed";

    json rhythm = json::array();
    json key_nodes = json::array();
    json scenarios = json::array();
    json nodes = json::array();
    json edges = json::array();
    std::set<std::string> signals;

    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& label = labels[i];
        const StageText* text = stage_text(label);
        const std::size_t required = std::min(i, progression.size());
        json conditions = json::array();
        for (std::size_t k = 0; k < required; ++k) {
            conditions.push_back({{"slot", progression[k]}, {"op", "informed"}});
        }
        rhythm.push_back({{"name", label},
                          {"goal", text ? std::string(text->goal) : "move the consultation forward"},
                          {"entry_condition", conditions}});
        nodes.push_back({{"id", label}, {"terminal", false}});

        json scenario_slots = json::array();
        if (i > 0) {
            std::string signal = terminal_signal;
            if (required > 0) {
                const auto& slot = progression[required - 1];
                signal = stage_signal(slot);
                scenario_slots.push_back(slot);
                if (signals.insert(signal).second) {
                    key_nodes.push_back({{"signal_name", signal},
                                         {"business_meaning", "customer has stated their " + profile::slot_words(slot)},
                                         {"trigger", {{"slot", slot}, {"op", "informed"}}}});
                }
            }
            edges.push_back({{"from", labels[i - 1]}, {"to", label}, {"label", signal}});
        }
        scenarios.push_back({{"situation", text ? std::string(text->situation) : "customer continues the consultation"},
                             {"coping_strategy", text ? std::string(text->coping) : "answer and ask one question"},
                             {"example_phrasing", text ? std::string(text->phrasing) : "Happy to help with that."},
                             {"stage", label},
                             {"keywords", text ? text->keywords : std::vector<std::string>{}},
                             {"slots", scenario_slots},
                             {"priority", counts.contains(label) ? counts[label] : 0}});
    }
    key_nodes.push_back({{"signal_name", terminal_signal},
                         {"business_meaning", "customer commits: " + profile::slot_words(outcome)},
                         {"trigger", {{"slot", terminal_slot}, {"op", "informed"}}}});
    nodes.push_back({{"id", outcome}, {"terminal", true}});
    edges.push_back({{"from", labels.back()}, {"to", outcome}, {"label", terminal_signal}});

    return json{{"rhythm", rhythm},
                {"key_nodes", key_nodes},
                {"scenarios", scenarios},
                {"flow_atlas", {{"nodes", nodes}, {"edges", edges}}}};
}

BuildOutcome build_blueprint(const BlueprintRequest& request, const profile::Ontology& ontology,
                             gateway::Gateway& gw) {
    if (request.tags.empty()) {
        throw PreconditionError("blueprint " + request.blueprint_id + " needs at least one strategy tag");
    }
    std::map<std::string, int> distribution;
    std::vector<std::string> labels;
    for (const auto& t : request.tags) {
        if (distribution[t.label]++ == 0) {
            labels.push_back(t.label);
        }
    }
    std::vector<std::string> seed_ids;
    std::string seed_text;
    for (const auto& s : request.seeds) {
        seed_ids.push_back(s.seed_id);
        for (std::size_t i = 0; i < s.turns.size() && i < 4; ++i) {
            seed_text += std::string(to_string(s.turns[i].role)) + ": " + s.turns[i].text + "\n";
        }
    }

    gateway::GenerationRequest req;
    req.template_id = "blueprint";
    req.purpose = gateway::Purpose::blueprint;
    req.variables = {{"domain", request.domain.name()},
                     {"tag_distribution", json(distribution).dump()},
                     {"agent_identity", request.agent.identity_positioning},
                     {"agent_scope", join(request.agent.service_boundaries, "; ")},
                     {"seed_excerpts", seed_text},
                     {"slots", join(ontology.slots(request.domain), ", ")},
                     {"scaffold", scaffold_blueprint(request, ontology).dump()}};

    BuildOutcome out;
    std::string raw;
    ValidationReport report;
    for (int attempt = 0; attempt < 2; ++attempt) {
        out.attempts = attempt + 1;
        req.decoding.seed = request.seed + static_cast<std::uint64_t>(attempt);
        raw = gw.generate(req);
        report = {};
        try {
            json j = gateway::parse_model_json(raw);
            j["blueprint_id"] = request.blueprint_id;
            j["domain"] = request.domain;
            j["provenance"] = {{"tag_distribution", distribution},
                               {"agent_persona_id", request.agent.persona_id},
                               {"seed_ids", seed_ids},
                               {"template", req.template_id},
                               {"template_version", gw.templates().get(req.template_id).version}};
            Blueprint b = j.get<Blueprint>();
            report = validate_blueprint(b);
            if (report.ok()) {
                out.blueprint = std::move(b);
                return out;
            }
        } catch (const json::exception& e) {
            report.add("parse", e.what());
        } catch (const Error& e) {
            report.add("parse", e.what());
        }
    }
    spdlog::warn("blueprint {} rejected: {}", request.blueprint_id, report.summary());
    out.rejection = json{{"blueprint_id", request.blueprint_id}, {"raw_output", raw}, {"report", report}};
    return out;
}

ValidationReport validate_blueprint(const Blueprint& b) {
    ValidationReport report;
    if (b.rhythm.empty()) {
        report.add("empty stages", "rhythm has no stages");
        return report;
    }
    std::set<std::string> stage_names;
    for (const auto& s : b.rhythm) {
        if (!stage_names.insert(s.name).second) {
            report.add("duplicate stage", s.name);
        }
    }
    std::set<std::string> signals;
    for (const auto& k : b.key_nodes) {
        if (!signals.insert(k.signal_name).second) {
            report.add("duplicate key node", k.signal_name);
        }
    }
    std::set<std::string> node_ids;
    for (const auto& n : b.flow_atlas.nodes) {
        node_ids.insert(n.id);
    }
    for (const auto& s : b.rhythm) {
        const FlowNode* n = b.flow_atlas.find(s.name);
        if (n == nullptr) {
            report.add("missing stage node", s.name);
        } else if (n->terminal) {
            report.add("missing stage node", s.name + " is marked terminal");
        }
    }
    std::set<std::string> used_labels;
    for (const auto& e : b.flow_atlas.edges) {
        for (const auto* end : {&e.from, &e.to}) {
            if (!node_ids.contains(*end)) {
                report.add("unknown node", fmt::format("edge {} -> {} references '{}'", e.from, e.to, *end));
            }
        }
        if (!signals.contains(e.label)) {
            report.add("unknown label", fmt::format("edge {} -> {} has label '{}'", e.from, e.to, e.label));
        }
        used_labels.insert(e.label);
        if (const FlowNode* from = b.flow_atlas.find(e.from); from != nullptr && from->terminal) {
            report.add("terminal successor", fmt::format("terminal node {} has an outgoing edge", e.from));
        }
    }
    for (const auto& k : b.key_nodes) {
        if (!used_labels.contains(k.signal_name)) {
            report.add("orphan key node", k.signal_name);
        }
    }
    for (const auto& sc : b.scenarios) {
        if (!sc.stage.empty() && !stage_names.contains(sc.stage)) {
            report.add("unknown stage", fmt::format("scenario '{}' names stage '{}'", sc.situation, sc.stage));
        }
    }
    const auto reachable = graph_reachable(b.flow_atlas, b.rhythm.front().name);
    const std::set<std::string> reach(reachable.begin(), reachable.end());
    bool terminal_reachable = false;
    for (const auto& n : b.flow_atlas.nodes) {
        if (!reach.contains(n.id)) {
            report.add("unreachable node", n.id);
        } else if (n.terminal) {
            terminal_reachable = true;
        }
    }
    if (!terminal_reachable) {
        report.add("no reachable terminal", "no terminal outcome is reachable from " + b.rhythm.front().name);
    }
    return report;
}

Guidance blueprint_guidance(const Blueprint& b, const DialogueState& state) {
    Guidance g;
    if (b.rhythm.empty()) {
        return g;
    }
    for (std::size_t i = 0; i < b.rhythm.size(); ++i) {
        if (stage_holds(b.rhythm[i], state.cumulative_inform)) {
            g.stage_index = i;
        }
    }
    g.current_stage = b.rhythm[g.stage_index].name;

    const Turn* last = state.last_user_turn();
    std::vector<Scenario> all;
    std::vector<Scenario> matched;
    for (const auto& sc : b.scenarios) {
        if (sc.stage != g.current_stage) {
            continue;
        }
        all.push_back(sc);
        if (last == nullptr) {
            continue;
        }
        const bool by_keyword = std::any_of(sc.keywords.begin(), sc.keywords.end(),
                                            [&](const std::string& k) { return contains_ci(last->text, k); });
        const bool by_slot =
            last->inform_block && std::any_of(sc.slots.begin(), sc.slots.end(), [&](const std::string& s) {
                return last->inform_block->contains(s);
            });
        if (by_keyword || by_slot) {
            matched.push_back(sc);
        }
    }
    g.strategies = matched.empty() ? all : matched;
    std::stable_sort(g.strategies.begin(), g.strategies.end(),
                     [](const Scenario& a, const Scenario& c) { return a.priority > c.priority; });

    for (const auto& e : b.flow_atlas.edges) {
        if (e.from != g.current_stage) {
            continue;
        }
        const FlowNode* to = b.flow_atlas.find(e.to);
        const KeyNode* k = b.key_node(e.label);
        if (to != nullptr && to->terminal && k != nullptr && k->trigger.holds(state.cumulative_inform)) {
            g.terminal = true;
            g.terminal_node = e.to;
            g.candidates.clear();
            return g;
        }
        g.candidates.push_back(e.to);
    }
    return g;
}

std::optional<std::string> choose_successor(const Blueprint& b, const Guidance& g, const DialogueState& state) {
    if (g.candidates.empty()) {
        return std::nullopt;
    }
    for (const auto& e : b.flow_atlas.edges) {
        if (e.from != g.current_stage) {
            continue;
        }
        if (const KeyNode* k = b.key_node(e.label); k != nullptr && k->trigger.holds(state.cumulative_inform)) {
            return e.to;
        }
    }
    for (const auto& sc : g.strategies) {
        if (std::find(g.candidates.begin(), g.candidates.end(), sc.stage) != g.candidates.end()) {
            return sc.stage;
        }
    }
    return g.candidates.front();
}

std::vector<std::string> successor_trigger_slots(const Blueprint& b, const Guidance& g) {
    std::vector<std::string> out;
    for (const auto& e : b.flow_atlas.edges) {
        if (e.from != g.current_stage) {
            continue;
        }
        if (const KeyNode* k = b.key_node(e.label);
            k != nullptr && std::find(out.begin(), out.end(), k->trigger.slot) == out.end()) {
            out.push_back(k->trigger.slot);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

BlueprintPhaseResult build_blueprints(std::span<const ingest::AtomicSignals> signals,
                                      std::span<const AgentPersona> agents, std::span<const SeedDialogue> seeds,
                                      const BlueprintConfig& cfg, const std::vector<std::string>& stage_order,
                                      const profile::Ontology& ontology, gateway::Gateway& gw, std::uint64_t seed) {
    std::map<std::string, std::vector<ingest::StrategyTag>> tags_by_domain;
    for (const auto& s : signals) {
        auto& pool = tags_by_domain[s.domain.name()];
        pool.insert(pool.end(), s.strategy_tags.begin(), s.strategy_tags.end());
    }
    std::map<std::string, std::vector<std::size_t>> agents_by_domain;
    for (std::size_t i = 0; i < agents.size(); ++i) {
        agents_by_domain[agents[i].domain.name()].push_back(i);
    }
    std::map<std::string, std::vector<std::size_t>> seeds_by_domain;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        seeds_by_domain[seeds[i].domain.name()].push_back(i);
    }

    std::vector<BlueprintRequest> jobs;
    for (const auto& [domain_name, agent_idx] : agents_by_domain) {
        const auto& pool = tags_by_domain[domain_name];
        if (pool.empty()) {
            spdlog::warn("domain {}: no strategy tags, skipping blueprints", domain_name);
            continue;
        }
        const auto it = cfg.per_domain.find(domain_name);
        const std::size_t n = it == cfg.per_domain.end() ? cfg.default_count : it->second;
        const auto& seed_pool = seeds_by_domain[domain_name];
        for (std::size_t k = 0; k < n; ++k) {
            const auto job_seed = derive_seed(seed, "blueprint:" + domain_name, k);
            Rng rng(job_seed);
            BlueprintRequest job;
            job.blueprint_id = fmt::format("b-{}-{:04d}", domain_name, k);
            job.agent = agents[agent_idx[k % agent_idx.size()]];
            job.domain = job.agent.domain;
            job.stage_order = stage_order;
            job.seed = job_seed;
            for (const auto ti : rng.sample_indices(pool.size(), std::min(cfg.tags_per_blueprint, pool.size()))) {
                job.tags.push_back(pool[ti]);
            }
            for (const auto si : rng.sample_indices(seed_pool.size(), std::min<std::size_t>(2, seed_pool.size()))) {
                job.seeds.push_back(seeds[seed_pool[si]]);
            }
            jobs.push_back(std::move(job));
        }
    }

    std::vector<BuildOutcome> outcomes(jobs.size());
    parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) { outcomes[i] = build_blueprint(jobs[i], ontology, gw); });

    BlueprintPhaseResult result;
    for (auto& o : outcomes) {
        if (o.blueprint) {
            result.blueprints.push_back(std::move(*o.blueprint));
        } else if (o.rejection) {
            result.rejections.push_back(std::move(*o.rejection));
        }
    }
    return result;
}

} // namespace streamforge::blueprint
