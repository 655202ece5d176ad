#include "streamforge/persona.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>

namespace streamforge::persona {

namespace {

std::string bullet_list(std::span<const std::string> items) {
    std::string out;
    for (const auto& i : items) {
        out += "- " + i + "\n";
    }
    return out;
}

std::string seed_excerpts(std::span<const SeedDialogue> seeds) {
    std::string out;
    for (const auto& s : seeds) {
        out += "[" + s.seed_id + "]\n";
        for (std::size_t i = 0; i < s.turns.size() && i < 6; ++i) {
            out += std::string(to_string(s.turns[i].role)) + ": " + s.turns[i].text + "\n";
        }
    }
    return out;
}

json user_scaffold(const UserPersonaRequest& req, const profile::Ontology& ontology) {
    SlotMap basic;
    const bool restrict = ontology.defined_for(req.domain);
    for (const auto& seed : req.seeds) {
        for (const auto& turn : seed.turns) {
            if (!turn.inform_block) {
                continue;
            }
            for (const auto& [slot, value] : *turn.inform_block) {
                if ((!restrict || ontology.allows(req.domain, slot)) && !value.empty()) {
                    basic.emplace(slot, value);
                }
            }
        }
    }

    const auto topic = profile::dominant_topic(req.questions, req.domain.kind());
    std::vector<std::string> inquiries;
    if (topic) {
        for (const auto& q : req.questions) {
            if (inquiries.size() < 3 && profile::topic_hits(q, *topic) > 0) {
                inquiries.push_back(q);
            }
        }
    }
    for (const auto& q : req.questions) {
        if (inquiries.size() >= 3) {
            break;
        }
        if (std::find(inquiries.begin(), inquiries.end(), q) == inquiries.end()) {
            inquiries.push_back(q);
        }
    }

    std::vector<std::string> requirements;
    if (topic) {
        requirements.push_back(topic->requirement);
    }
    for (const auto& slot : profile::progression_slots(req.domain, ontology)) {
        if (requirements.size() >= 3) {
            break;
        }
        if (const auto it = basic.find(slot); it != basic.end()) {
            requirements.push_back(profile::slot_words(slot) + ": " + it->second);
        }
    }
    if (requirements.empty()) {
        requirements.push_back("get a clear answer to: " + inquiries.front());
    }

    const std::string& lead = inquiries.front();
    std::vector<std::string> utterances = {lead, "I'd like to know: " + lead, "Quick question: " + lead};
    if (!basic.empty()) {
        utterances.push_back("My " + profile::slot_words(basic.begin()->first) + " is " + basic.begin()->second +
                             ".");
    }

    return json{{"mindset", topic ? topic->mindset : std::string("practical customer comparing options")},
                {"basic_information", basic},
                {"core_requirements", requirements},
                {"primary_inquiries", inquiries},
                {"potential_utterances", utterances}};
}

json agent_scaffold(const AgentPersonaRequest& req) {
    std::vector<std::string> scope = req.account.service_scope_hints;
    if (scope.empty()) {
        spdlog::warn("agent persona {}: account has no scope hints, using the default consultant scope",
                     req.persona_id);
        scope.emplace_back("general product consultation");
    }
    const bool dealer = std::any_of(req.account.certifications.begin(), req.account.certifications.end(),
                                    [](const std::string& c) { return contains_ci(c, "dealer"); }) ||
                        std::any_of(scope.begin(), scope.end(),
                                    [](const std::string& c) { return contains_ci(c, "dealer"); });
    if (dealer && std::find(scope.begin(), scope.end(), "sales consultation") == scope.end()) {
        scope.emplace_back("sales consultation");
    }

    std::map<std::string, std::size_t> counts;
    std::size_t counted = 0;
    for (const auto& t : req.tags) {
        if (t.label != "other") {
            ++counts[t.label];
            ++counted;
        }
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    std::string style = "neutral and informative";
    if (!ranked.empty()) {
        std::vector<std::string> parts;
        for (std::size_t i = 0; i < ranked.size() && i < 3; ++i) {
            parts.push_back(fmt::format("{} ({}%)", profile::slot_words(ranked[i].first),
                                        ranked[i].second * 100 / counted));
        }
        style = "leans on " + join(parts, ", ");
    }
    const std::string identity = req.account.profile_summary.empty()
                                     ? req.domain.name() + " consultant"
                                     : req.account.profile_summary;
    return json{{"identity_positioning", identity},
                {"linguistic_style", style},
                {"service_boundaries", scope},
                {"knowledge_base_ref", req.kb_ref}};
}

template <typename P, typename Build, typename Check>
Synthesis<P> synthesize(const std::string& persona_id, const std::string& kind, gateway::GenerationRequest req,
                        gateway::Gateway& gw, Build&& build, Check&& check) {
    Synthesis<P> out;
    std::string raw;
    ValidationReport report;
    const auto base_seed = req.decoding.seed;
    for (int attempt = 0; attempt < 2; ++attempt) {
        out.attempts = attempt + 1;
        req.decoding.seed = base_seed + static_cast<std::uint64_t>(attempt);
        raw = gw.generate(req);
        report = {};
        try {
            P persona = build(gateway::parse_model_json(raw));
            report = check(persona);
            if (report.ok()) {
                out.persona = std::move(persona);
                return out;
            }
        } catch (const json::exception& e) {
            report.add("parse", e.what());
        } catch (const Error& e) {
            report.add("parse", e.what());
        }
    }
    spdlog::warn("{} persona {} rejected: {}", kind, persona_id, report.summary());
    out.rejection = Rejection{persona_id, kind, raw, report};
    return out;
}

} // namespace

void to_json(json& j, const Rejection& r) {
    j = json{{"persona_id", r.persona_id}, {"kind", r.kind}, {"raw_output", r.raw_output}, {"report", r.report}};
}

ValidationReport check_user_persona(const UserPersona& p) {
    ValidationReport report = validate_user_persona(p);
    if (!p.potential_utterances.empty() && p.potential_utterances.size() < 3) {
        report.add("persona incomplete", "fewer than 3 potential utterances");
    }
    return report;
}

Synthesis<UserPersona> synthesize_user_persona(const UserPersonaRequest& request,
                                               const profile::Ontology& ontology, gateway::Gateway& gw) {
    if (request.questions.empty()) {
        throw PreconditionError("user persona synthesis needs at least one question");
    }
    gateway::GenerationRequest req;
    req.template_id = "persona_user";
    req.purpose = gateway::Purpose::persona;
    req.decoding.seed = request.seed;
    req.variables = {{"domain", request.domain.name()},
                     {"questions", bullet_list(request.questions)},
                     {"seed_excerpts", seed_excerpts(request.seeds)},
                     {"slots", join(ontology.slots(request.domain), ", ")},
                     {"scaffold", user_scaffold(request, ontology).dump()}};
    const bool restrict = ontology.defined_for(request.domain);
    return synthesize<UserPersona>(
        request.persona_id, "user", req, gw,
        [&](const json& j) {
            UserPersona p;
            p.persona_id = request.persona_id;
            p.domain = request.domain;
            p.mindset = j.value("mindset", std::string());
            for (const auto& [slot, value] : j.value("basic_information", SlotMap{})) {
                if (!restrict || ontology.allows(request.domain, slot)) {
                    p.basic_information.emplace(slot, value);
                }
            }
            p.core_requirements = j.value("core_requirements", std::vector<std::string>{});
            p.primary_inquiries = j.value("primary_inquiries", std::vector<std::string>{});
            p.potential_utterances = j.value("potential_utterances", std::vector<std::string>{});
            return p;
        },
        check_user_persona);
}

Synthesis<AgentPersona> synthesize_agent_persona(const AgentPersonaRequest& request,
                                                 const std::set<std::string>& known_kbs, gateway::Gateway& gw) {
    if (request.kb_ref.empty() || (!known_kbs.empty() && !known_kbs.contains(request.kb_ref))) {
        throw PreconditionError("knowledge base '" + request.kb_ref + "' is not loaded");
    }
    std::vector<std::string> labels;
    for (const auto& t : request.tags) {
        labels.push_back(t.label);
    }
    gateway::GenerationRequest req;
    req.template_id = "persona_agent";
    req.purpose = gateway::Purpose::persona;
    req.decoding.seed = request.seed;
    req.variables = {{"domain", request.domain.name()},
                     {"profile_summary", request.account.profile_summary},
                     {"certifications", join(request.account.certifications, "; ")},
                     {"scope_hints", join(request.account.service_scope_hints, "; ")},
                     {"strategy_tags", join(labels, ", ")},
                     {"scaffold", agent_scaffold(request).dump()}};
    return synthesize<AgentPersona>(
        request.persona_id, "agent", req, gw,
        [&](const json& j) {
            AgentPersona p;
            p.persona_id = request.persona_id;
            p.domain = request.domain;
            p.identity_positioning = j.value("identity_positioning", std::string());
            p.linguistic_style = j.value("linguistic_style", std::string());
            p.service_boundaries = j.value("service_boundaries", std::vector<std::string>{});
            p.knowledge_base_ref = j.value("knowledge_base_ref", request.kb_ref);
            return p;
        },
        [&](const AgentPersona& p) { return validate_agent_persona(p, known_kbs); });
}

std::string concern_text(const UserPersona& u) {
    std::vector<std::string> parts = u.core_requirements;
    parts.insert(parts.end(), u.primary_inquiries.begin(), u.primary_inquiries.end());
    return join(parts, " ");
}

std::string scope_text(const AgentPersona& a) {
    std::vector<std::string> parts = a.service_boundaries;
    parts.push_back(a.identity_positioning);
    return join(parts, " ");
}

MatchResult match_personas(const UserPersona& user, std::span<const AgentPersona> agents,
                           const retrieval::EmbeddingProvider& provider) {
    if (agents.empty()) {
        throw PreconditionError("agent persona pool is empty");
    }
    const bool any_same_domain =
        std::any_of(agents.begin(), agents.end(), [&](const AgentPersona& a) { return a.domain == user.domain; });
    const auto concern = provider.embed(concern_text(user));
    std::optional<MatchResult> best;
    for (std::size_t i = 0; i < agents.size(); ++i) {
        if (any_same_domain && agents[i].domain != user.domain) {
            continue;
        }
        const double score = retrieval::cosine(concern, provider.embed(scope_text(agents[i])));
        if (!best || score > best->score ||
            (score == best->score && agents[i].persona_id < agents[best->index].persona_id)) {
            best = MatchResult{i, score};
        }
    }
    return *best;
}

// ---------------------------------------------------------------------------

PersonaPhaseResult build_personas(std::span<const ingest::AtomicSignals> signals,
                                  std::span<const SeedDialogue> seeds, const PersonaConfig& cfg,
                                  const profile::Ontology& ontology, const std::string& kb_ref,
                                  gateway::Gateway& gw, std::uint64_t seed) {
    std::map<std::string, std::vector<std::size_t>> by_domain;
    for (std::size_t i = 0; i < signals.size(); ++i) {
        by_domain[signals[i].domain.name()].push_back(i);
    }
    std::map<std::string, std::vector<std::size_t>> seeds_by_domain;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        seeds_by_domain[seeds[i].domain.name()].push_back(i);
    }

    std::vector<UserPersonaRequest> user_jobs;
    std::vector<AgentPersonaRequest> agent_jobs;
    for (const auto& [domain_name, indices] : by_domain) {
        const Domain domain = signals[indices.front()].domain;
        std::vector<std::string> pool;
        for (const auto i : indices) {
            for (const auto& q : signals[i].questions) {
                pool.push_back(q.text);
            }
        }
        const auto count_for = [](const std::map<std::string, std::size_t>& m, const std::string& d,
                                  std::size_t fallback) {
            const auto it = m.find(d);
            return it == m.end() ? fallback : it->second;
        };
        const std::size_t n_users = count_for(cfg.user_per_domain, domain_name, cfg.default_user_count);
        if (pool.empty()) {
            spdlog::warn("domain {}: no user questions, skipping user personas", domain_name);
        } else {
            const auto& seed_pool = seeds_by_domain[domain_name];
            for (std::size_t k = 0; k < n_users; ++k) {
                const auto job_seed = derive_seed(seed, "user:" + domain_name, k);
                Rng rng(job_seed);
                UserPersonaRequest job;
                job.persona_id = fmt::format("u-{}-{:05d}", domain_name, k);
                job.domain = domain;
                job.seed = job_seed;
                for (const auto qi : rng.sample_indices(pool.size(), std::min(cfg.questions_per_persona, pool.size()))) {
                    job.questions.push_back(pool[qi]);
                }
                for (const auto si :
                     rng.sample_indices(seed_pool.size(), std::min(cfg.seeds_per_persona, seed_pool.size()))) {
                    job.seeds.push_back(seeds[seed_pool[si]]);
                }
                user_jobs.push_back(std::move(job));
            }
        }

        const std::size_t n_agents =
            std::min(count_for(cfg.agent_per_domain, domain_name, cfg.default_agent_count), indices.size());
        for (std::size_t k = 0; k < n_agents; ++k) {
            const auto& sig = signals[indices[k]];
            AgentPersonaRequest job;
            job.persona_id = fmt::format("a-{}-{:04d}", domain_name, k);
            job.domain = domain;
            job.account = sig.account.value_or(ingest::AccountMetadata{anonymize(sig.source_id), "", {}, {}});
            job.tags = sig.strategy_tags;
            job.kb_ref = kb_ref;
            job.seed = derive_seed(seed, "agent:" + domain_name, k);
            agent_jobs.push_back(std::move(job));
        }
    }

    std::vector<Synthesis<UserPersona>> user_out(user_jobs.size());
    std::vector<Synthesis<AgentPersona>> agent_out(agent_jobs.size());
    parallel_for(user_jobs.size(), cfg.workers,
                 [&](std::size_t i) { user_out[i] = synthesize_user_persona(user_jobs[i], ontology, gw); });
    const std::set<std::string> known{kb_ref};
    parallel_for(agent_jobs.size(), cfg.workers,
                 [&](std::size_t i) { agent_out[i] = synthesize_agent_persona(agent_jobs[i], known, gw); });

    PersonaPhaseResult result;
    std::set<std::string> ids;
    const auto claim = [&](const std::string& id) {
        if (!ids.insert(id).second) {
            throw Error("persona id collision: " + id);
        }
    };
    for (auto& s : user_out) {
        if (s.persona) {
            claim(s.persona->persona_id);
            result.users.push_back(std::move(*s.persona));
        } else if (s.rejection) {
            result.rejections.push_back(std::move(*s.rejection));
        }
    }
    for (auto& s : agent_out) {
        if (s.persona) {
            claim(s.persona->persona_id);
            result.agents.push_back(std::move(*s.persona));
        } else if (s.rejection) {
            result.rejections.push_back(std::move(*s.rejection));
        }
    }
    return result;
}

} // namespace streamforge::persona
