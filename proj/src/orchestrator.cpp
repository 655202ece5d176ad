#include "streamforge/orchestrator.hpp"

#include "streamforge/blueprint.hpp"
#include "streamforge/evaluation.hpp"
#include "streamforge/filter.hpp"
#include "streamforge/generation.hpp"
#include "streamforge/ingest.hpp"
#include "streamforge/persona.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <set>

namespace streamforge::orchestrator {

namespace fs = std::filesystem;

std::string_view to_string(Phase p) {
    switch (p) {
    case Phase::ingest:
        return "ingest";
    case Phase::personas:
        return "personas";
    case Phase::blueprint:
        return "blueprint";
    case Phase::generate:
        return "generate";
    case Phase::filter:
        return "filter";
    case Phase::eval:
        return "eval";
    }
    return "?";
}

const std::vector<Phase>& all_phases() {
    static const std::vector<Phase> phases = {Phase::ingest,   Phase::personas, Phase::blueprint,
                                              Phase::generate, Phase::filter,   Phase::eval};
    return phases;
}

Phase parse_phase(std::string_view name) {
    for (const auto p : all_phases()) {
        if (to_string(p) == name) {
            return p;
        }
    }
    if (name == "blueprints") {
        return Phase::blueprint;
    }
    throw ConfigError("unknown phase '" + std::string(name) + "'");
}

Runtime Runtime::create(const config::RunConfig& cfg) {
    Runtime rt;
    rt.provider = retrieval::make_provider(cfg.embedding);
    auto templates = cfg.paths.templates.empty() ? gateway::TemplateRegistry::builtin()
                                                 : gateway::TemplateRegistry::with_overrides(cfg.paths.templates);
    gateway::GatewayConfig gcfg = cfg.gateway;
    std::shared_ptr<gateway::Backend> backend;
    if (gcfg.mode == gateway::Mode::live || gcfg.mode == gateway::Mode::record) {
        backend = gateway::ChatCompletionsBackend::from_environment();
    }
    if (gcfg.mode == gateway::Mode::replay && gcfg.backend_id == "mock") {
        // Recordings carry the live backend's identity in their fingerprints.
        if (const char* model = std::getenv("STREAMFORGE_MODEL"); model != nullptr && *model != '\0') {
            gcfg.backend_id = std::string("chat-completions:") + model;
        }
    }
    if (gcfg.mode == gateway::Mode::replay || gcfg.mode == gateway::Mode::record) {
        rt.cache = gateway::ReplayCache::load(cfg.cache_path());
    } else {
        rt.cache = std::make_shared<gateway::ReplayCache>();
    }
    rt.gateway = std::make_unique<gateway::Gateway>(gcfg, std::move(templates), backend, rt.cache);
    return rt;
}

void Runtime::finish(const config::RunConfig& cfg) const {
    if (gateway && gateway->config().mode == gateway::Mode::record) {
        const auto path = cfg.cache_path();
        if (path.has_parent_path()) {
            fs::create_directories(path.parent_path());
        }
        cache->save(path);
    }
}

namespace {

fs::path out(const config::RunConfig& cfg, const char* name) { return cfg.paths.out_dir / name; }

void require_file(const fs::path& p, const std::string& what, std::vector<std::string>& problems) {
    if (p.empty()) {
        problems.push_back(what + " path is not configured");
    } else if (!fs::exists(p)) {
        problems.push_back(what + " not found: " + p.string());
    }
}

} // namespace

void check_inputs(const config::RunConfig& cfg, const std::vector<Phase>& phases) {
    const std::set<Phase> run(phases.begin(), phases.end());
    std::vector<std::string> problems;
    const auto produced_or_present = [&](Phase producer, const char* file) {
        if (!run.contains(producer)) {
            require_file(out(cfg, file), std::string(file) + " (from the " + std::string(to_string(producer)) + " phase)",
                         problems);
        }
    };
    if (run.contains(Phase::ingest)) {
        if (cfg.paths.sources.empty()) {
            problems.emplace_back("sources path is not configured");
        } else if (!fs::is_directory(cfg.paths.sources)) {
            problems.push_back("sources directory not found: " + cfg.paths.sources.string());
        }
        for (const auto& lx : cfg.paths.lexicons) {
            require_file(lx.path, "lexicon", problems);
        }
        if (!cfg.paths.kb.empty()) {
            require_file(cfg.paths.kb, "knowledge base", problems);
        }
    }
    if (run.contains(Phase::personas)) {
        require_file(cfg.paths.seeds, "seed dialogues", problems);
        require_file(cfg.paths.kb, "knowledge base", problems);
        produced_or_present(Phase::ingest, files::signals);
    }
    if (run.contains(Phase::blueprint)) {
        require_file(cfg.paths.seeds, "seed dialogues", problems);
        produced_or_present(Phase::ingest, files::signals);
        produced_or_present(Phase::personas, files::agent_personas);
    }
    if (run.contains(Phase::generate)) {
        require_file(cfg.paths.seeds, "seed dialogues", problems);
        require_file(cfg.paths.kb, "knowledge base", problems);
        produced_or_present(Phase::ingest, files::signals);
        produced_or_present(Phase::personas, files::user_personas);
        produced_or_present(Phase::personas, files::agent_personas);
        produced_or_present(Phase::blueprint, files::blueprints);
    }
    if (run.contains(Phase::filter)) {
        produced_or_present(Phase::generate, files::raw_dialogues);
    }
    if (run.contains(Phase::eval)) {
        produced_or_present(Phase::filter, files::dialogues);
    }
    if (!problems.empty()) {
        std::sort(problems.begin(), problems.end());
        problems.erase(std::unique(problems.begin(), problems.end()), problems.end());
        throw ConfigError("missing inputs: " + join(problems, "; "));
    }
}

namespace {

struct PhaseRecord {
    json inputs = json::object();
    json outputs = json::object();
    json details = json::object();
};

std::size_t count_lines(const fs::path& p) {
    const std::string text = read_text_file(p);
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

void note_output(PhaseRecord& rec, const config::RunConfig& cfg, const char* name) {
    const fs::path p = out(cfg, name);
    json entry{{"sha256", file_sha256(p)}};
    if (p.extension() == ".jsonl") {
        entry["records"] = count_lines(p);
    }
    rec.outputs[name] = entry;
}

template <typename T>
void write_records(const config::RunConfig& cfg, PhaseRecord& rec, const char* name, const std::vector<T>& rows) {
    write_jsonl(out(cfg, name), rows);
    note_output(rec, cfg, name);
}

void write_json(const config::RunConfig& cfg, PhaseRecord& rec, const char* name, const json& j) {
    write_text_file(out(cfg, name), j.dump(2) + "\n");
    note_output(rec, cfg, name);
}

/// Pipeline state shared by phases within one run; anything not produced in
/// this run is loaded lazily from out_dir.
class Workspace {
public:
    explicit Workspace(const config::RunConfig& cfg) : cfg_(cfg) {}

    const retrieval::KnowledgeBase& kb() {
        if (!kb_) {
            kb_ = cfg_.paths.kb.empty() ? retrieval::KnowledgeBase("kb") : retrieval::KnowledgeBase::load(cfg_.paths.kb);
        }
        return *kb_;
    }
    const std::vector<SeedDialogue>& seeds() {
        if (!seeds_) {
            seeds_ = read_jsonl<SeedDialogue>(cfg_.paths.seeds);
        }
        return *seeds_;
    }
    std::vector<ingest::AtomicSignals>& signals() { return lazy(signals_, files::signals); }
    std::vector<UserPersona>& users() { return lazy(users_, files::user_personas); }
    std::vector<AgentPersona>& agents() { return lazy(agents_, files::agent_personas); }
    std::vector<Blueprint>& blueprints() { return lazy(blueprints_, files::blueprints); }
    std::vector<SessionQuadruplet>& raw() { return lazy(raw_, files::raw_dialogues); }
    std::vector<SessionQuadruplet>& dialogues() { return lazy(dialogues_, files::dialogues); }

    std::optional<std::vector<ingest::AtomicSignals>> signals_;
    std::optional<std::vector<UserPersona>> users_;
    std::optional<std::vector<AgentPersona>> agents_;
    std::optional<std::vector<Blueprint>> blueprints_;
    std::optional<std::vector<SessionQuadruplet>> raw_;
    std::optional<std::vector<SessionQuadruplet>> dialogues_;

private:
    template <typename T>
    std::vector<T>& lazy(std::optional<std::vector<T>>& slot, const char* name) {
        if (!slot) {
            slot = read_jsonl<T>(out(cfg_, name));
        }
        return *slot;
    }

    const config::RunConfig& cfg_;
    std::optional<retrieval::KnowledgeBase> kb_;
    std::optional<std::vector<SeedDialogue>> seeds_;
};

void run_ingest(const config::RunConfig& cfg, Runtime& rt, Workspace& ws, PhaseRecord& rec) {
    ingest::IngestConfig icfg = cfg.ingest;
    for (const auto& lx : cfg.paths.lexicons) {
        icfg.lexicons.push_back(ingest::DomainLexicon::load_tsv(lx.path, lx.scope));
    }
    const auto result = ingest::ingest_sources(cfg.paths.sources, icfg, *rt.provider, ws.kb(), rt.gateway.get());
    std::vector<json> rejected;
    for (const auto& r : result.rejected) {
        rejected.push_back({{"source_id", r.source_id}, {"reason", r.reason}});
    }
    std::size_t questions = 0;
    std::size_t responses = 0;
    std::size_t pairs = 0;
    std::size_t tags = 0;
    for (const auto& s : result.signals) {
        questions += s.questions.size();
        responses += s.responses.size();
        pairs += s.qa_pairs.size();
        tags += s.strategy_tags.size();
    }
    rec.inputs["sources"] = result.sources_seen;
    rec.details = {{"rejected_sources", result.rejected.size()},
                   {"questions", questions},
                   {"responses", responses},
                   {"qa_pairs", pairs},
                   {"strategy_tags", tags},
                   {"transcript_edits", result.transcript_edits}};
    ws.signals_ = result.signals;
    write_records(cfg, rec, files::signals, result.signals);
    write_records(cfg, rec, files::source_rejections, rejected);
}

void run_personas(const config::RunConfig& cfg, Runtime& rt, Workspace& ws, PhaseRecord& rec, std::uint64_t seed) {
    auto result = persona::build_personas(ws.signals(), ws.seeds(), cfg.persona, cfg.ontology, ws.kb().id(),
                                          *rt.gateway, seed);
    rec.inputs = {{"signals", ws.signals().size()}, {"seeds", ws.seeds().size()}};
    rec.details = {{"users", result.users.size()},
                   {"agents", result.agents.size()},
                   {"rejected", result.rejections.size()}};
    ws.users_ = result.users;
    ws.agents_ = result.agents;
    write_records(cfg, rec, files::user_personas, result.users);
    write_records(cfg, rec, files::agent_personas, result.agents);
    write_records(cfg, rec, files::persona_rejections, result.rejections);
}

void run_blueprints(const config::RunConfig& cfg, Runtime& rt, Workspace& ws, PhaseRecord& rec, std::uint64_t seed) {
    auto result = blueprint::build_blueprints(ws.signals(), ws.agents(), ws.seeds(), cfg.blueprint, cfg.stage_order,
                                              cfg.ontology, *rt.gateway, seed);
    rec.inputs = {{"signals", ws.signals().size()}, {"agents", ws.agents().size()}, {"seeds", ws.seeds().size()}};
    rec.details = {{"blueprints", result.blueprints.size()}, {"rejected", result.rejections.size()}};
    ws.blueprints_ = result.blueprints;
    write_records(cfg, rec, files::blueprints, result.blueprints);
    write_records(cfg, rec, files::blueprint_rejections, result.rejections);
}

void run_generate(const config::RunConfig& cfg, Runtime& rt, Workspace& ws, PhaseRecord& rec, std::uint64_t seed) {
    const generation::CachedProvider cached(*rt.provider);
    const auto pools = generation::GenerationPools::build(ws.signals(), ws.seeds(), cached);
    auto result = generation::run_generation(ws.users(), ws.agents(), ws.blueprints(), pools, ws.kb(), cfg.ontology,
                                             cached, *rt.gateway, cfg.generation, seed);

    PersonaStore personas;
    for (const auto& u : ws.users()) {
        personas.users.emplace(u.persona_id, u);
    }
    for (const auto& a : ws.agents()) {
        personas.agents.emplace(a.persona_id, a);
    }
    BlueprintStore blueprints;
    for (const auto& b : ws.blueprints()) {
        blueprints.blueprints.emplace(b.blueprint_id, b);
    }
    std::vector<SessionQuadruplet> valid;
    std::vector<json> aborted;
    for (const auto& a : result.aborted) {
        aborted.emplace_back(a);
    }
    for (auto& s : result.sessions) {
        const auto report = validate_quadruplet(s, personas, blueprints);
        if (report.ok()) {
            valid.push_back(std::move(s));
        } else {
            spdlog::warn("dropping invalid session {}: {}", s.dialogue_id, report.summary());
            aborted.push_back({{"dialogue_id", s.dialogue_id}, {"stage", "validation"}, {"reason", report.summary()}});
        }
    }
    rec.inputs = {{"users", ws.users().size()},
                  {"agents", ws.agents().size()},
                  {"blueprints", ws.blueprints().size()},
                  {"requested_sessions", cfg.generation.sessions}};
    rec.details = {{"sessions", valid.size()}, {"rejected", aborted.size()}};
    ws.raw_ = valid;
    write_records(cfg, rec, files::raw_dialogues, valid);
    write_records(cfg, rec, files::aborted_sessions, aborted);
}

void run_filter(const config::RunConfig& cfg, Runtime& rt, Workspace& ws, PhaseRecord& rec, std::uint64_t seed) {
    auto result = filter::filter_dialogues(ws.raw(), *rt.provider, cfg.filter, seed);
    rec.inputs = {{"dialogues", ws.raw().size()}};
    rec.details = {{"retained", result.retained.size()}};
    ws.dialogues_ = result.retained;
    write_records(cfg, rec, files::dialogues, result.retained);
    write_json(cfg, rec, files::filter_report, result.report);
}

void run_eval(const config::RunConfig& cfg, Workspace& ws, PhaseRecord& rec) {
    const auto& dialogues = ws.dialogues();
    write_records(cfg, rec, files::gold_states, evaluation::gold_states(dialogues));

    std::set<std::string> domains(cfg.eval.slot_domains.begin(), cfg.eval.slot_domains.end());
    if (domains.empty()) {
        for (const auto& d : dialogues) {
            domains.insert(d.domain.name());
        }
    }
    json slots = json::object();
    for (const auto& name : domains) {
        const Domain domain = Domain::parse(name);
        std::vector<SessionQuadruplet> subset;
        std::copy_if(dialogues.begin(), dialogues.end(), std::back_inserter(subset),
                     [&](const SessionQuadruplet& d) { return d.domain == domain; });
        const auto& ontology_slots = cfg.ontology.slots(domain);
        if (ontology_slots.empty()) {
            continue;
        }
        slots[name] = evaluation::slot_distribution(subset, ontology_slots);
    }
    write_json(cfg, rec, files::slot_distribution, slots);
    write_json(cfg, rec, files::dataset_stats, compute_dataset_stats(dialogues));
    rec.inputs = {{"dialogues", dialogues.size()}};
}

} // namespace

RunOutcome run_pipeline(const config::RunConfig& cfg, std::vector<Phase> phases, const json& config_json) {
    std::sort(phases.begin(), phases.end());
    phases.erase(std::unique(phases.begin(), phases.end()), phases.end());
    check_inputs(cfg, phases);
    fs::create_directories(cfg.paths.out_dir);

    Runtime rt = Runtime::create(cfg);
    Workspace ws(cfg);

    RunOutcome outcome;
    json& m = outcome.manifest;
    m["config_sha256"] = sha256_hex(config_json.dump());
    m["seed"] = cfg.seed;
    m["embedding"] = rt.provider->identity();
    m["gateway"] = {{"mode", std::string(gateway::to_string(rt.gateway->config().mode))},
                    {"backend", rt.gateway->config().backend_id}};
    m["phases"] = json::array();
    m["status"] = "completed";

    for (const auto phase : phases) {
        const std::string name(to_string(phase));
        const std::uint64_t seed = derive_seed(cfg.seed, name);
        if (!outcome.ok) {
            m["phases"].push_back({{"phase", name}, {"seed", seed}, {"status", "skipped"}});
            continue;
        }
        PhaseRecord rec;
        spdlog::info("phase {} starting", name);
        try {
            switch (phase) {
            case Phase::ingest:
                run_ingest(cfg, rt, ws, rec);
                break;
            case Phase::personas:
                run_personas(cfg, rt, ws, rec, seed);
                break;
            case Phase::blueprint:
                run_blueprints(cfg, rt, ws, rec, seed);
                break;
            case Phase::generate:
                run_generate(cfg, rt, ws, rec, seed);
                break;
            case Phase::filter:
                run_filter(cfg, rt, ws, rec, seed);
                break;
            case Phase::eval:
                run_eval(cfg, ws, rec);
                break;
            }
        } catch (const std::exception& e) {
            spdlog::error("phase {} failed: {}", name, e.what());
            m["phases"].push_back({{"phase", name}, {"seed", seed}, {"status", "failed"}, {"error", e.what()}});
            m["status"] = "failed";
            m["failed_phase"] = name;
            outcome.ok = false;
            continue;
        }
        m["phases"].push_back({{"phase", name},
                               {"seed", seed},
                               {"status", "completed"},
                               {"inputs", rec.inputs},
                               {"outputs", rec.outputs},
                               {"counts", rec.details}});
    }
    m["gateway"]["stats"] = rt.gateway->stats();
    rt.finish(cfg);
    if (rt.gateway->config().mode == gateway::Mode::record) {
        m["gateway"]["cache"] = {{"file", cfg.cache_path().filename().string()},
                                 {"sha256", file_sha256(cfg.cache_path())}};
    }
    write_text_file(cfg.paths.out_dir / files::manifest, m.dump(2) + "\n");
    return outcome;
}

} // namespace streamforge::orchestrator
