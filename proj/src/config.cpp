#include "streamforge/config.hpp"

#include <fmt/format.h>

#include <set>

namespace streamforge::config {

namespace {

// Sections whose object keys are free-form (domain names).
const std::set<std::string> kOpenMaps = {"persona.user_per_domain", "persona.agent_per_domain",
                                         "blueprint.per_domain", "generation.ontology"};

json taxonomy_json(const ingest::Taxonomy& t) {
    json out = json::array();
    for (const auto& r : t.rules()) {
        out.push_back({{"label", r.label}, {"keywords", r.keywords}});
    }
    return out;
}

bool same_kind(const json& def, const json& v) {
    if (def.is_number()) {
        return v.is_number();
    }
    if (def.is_string()) {
        return v.is_string();
    }
    if (def.is_boolean()) {
        return v.is_boolean();
    }
    if (def.is_array()) {
        return v.is_array();
    }
    if (def.is_object()) {
        return v.is_object();
    }
    return true;
}

void walk(const json& def, const json& v, const std::string& prefix, ValidationReport& report) {
    for (const auto& [key, value] : v.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!def.contains(key)) {
            report.add("unknown key", path);
            continue;
        }
        const auto& d = def.at(key);
        if (!same_kind(d, value)) {
            report.add("invalid value", fmt::format("{} should be {}", path, d.type_name()));
            continue;
        }
        if (d.is_object() && !kOpenMaps.contains(path)) {
            walk(d, value, path, report);
        }
    }
}

double number_at(const json& j, const char* section, const char* key, double fallback) {
    if (j.contains(section) && j.at(section).is_object() && j.at(section).contains(key) &&
        j.at(section).at(key).is_number()) {
        return j.at(section).at(key).get<double>();
    }
    return fallback;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) {
        return {};
    }
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

ingest::LexiconScope parse_scope(const std::string& s) {
    if (s == "automotive_vocabulary") {
        return ingest::LexiconScope::automotive_vocabulary;
    }
    if (s == "address_entries") {
        return ingest::LexiconScope::address_entries;
    }
    if (s == "custom") {
        return ingest::LexiconScope::custom;
    }
    throw ConfigError("unknown lexicon scope '" + s + "'");
}

} // namespace

std::filesystem::path RunConfig::cache_path() const {
    return paths.cache.empty() ? paths.out_dir / "gateway_cache.jsonl" : paths.cache;
}

const std::vector<std::string>& required_templates() {
    static const std::vector<std::string> ids = {"persona_user", "persona_agent", "blueprint",    "opening",
                                                 "user_turn",    "agent_turn",    "strategy_tag", "transcript_correction",
                                                 "judge"};
    return ids;
}

json default_config_json() {
    const ingest::IngestConfig ic;
    const persona::PersonaConfig pc;
    const blueprint::BlueprintConfig bc;
    const generation::GenerationConfig gc;
    const filter::FilterConfig fc;
    const gateway::GatewayConfig gw;
    return json{
        {"seed", 42},
        {"paths",
         {{"sources", ""},
          {"seeds", ""},
          {"kb", ""},
          {"lexicons", json::array()},
          {"out_dir", "out"},
          {"templates", ""},
          {"cache", ""}}},
        {"ingest",
         {{"keywords", ic.filter.keywords},
          {"category_tags", ic.filter.category_tags},
          {"certifications", ic.filter.certifications},
          {"min_viewers", ic.filter.min_viewers},
          {"min_comment_length", ic.denoise.min_length},
          {"spam_patterns", ic.denoise.spam_patterns},
          {"dedup_threshold", ic.denoise.dedup_threshold},
          {"window_seconds", ic.align.window_seconds},
          {"theta_sem", ic.align.theta_sem},
          {"model_pattern", ic.entities.model_pattern},
          {"taxonomy", taxonomy_json(ic.taxonomy)},
          {"strategy_via_gateway", ic.strategy_via_gateway},
          {"llm_correction", ic.llm_correction},
          {"workers", ic.workers}}},
        {"embedding", {{"provider", "offline"}, {"dim", 256}, {"seed", 0x5eed}, {"model", ""}}},
        {"gateway",
         {{"mode", "mock"},
          {"max_retries", gw.retry.max_retries},
          {"retry_base_ms", gw.retry.base_delay.count()},
          {"token_budget", gw.token_budget},
          {"max_concurrency", gw.max_concurrency},
          {"replay_fallback_mock", gw.replay_fallback_mock},
          {"backend_id", gw.backend_id}}},
        {"persona",
         {{"user_per_domain", pc.user_per_domain},
          {"agent_per_domain", pc.agent_per_domain},
          {"default_user_count", pc.default_user_count},
          {"default_agent_count", pc.default_agent_count},
          {"questions_per_persona", pc.questions_per_persona},
          {"seeds_per_persona", pc.seeds_per_persona},
          {"workers", pc.workers}}},
        {"blueprint",
         {{"per_domain", bc.per_domain},
          {"default_count", bc.default_count},
          {"tags_per_blueprint", bc.tags_per_blueprint},
          {"stage_order", ingest::Taxonomy::defaults().labels()},
          {"workers", bc.workers}}},
        {"generation",
         {{"sessions", gc.sessions},
          {"max_turns", gc.limits.max_turns},
          {"retrieval_k", gc.limits.retrieval_k},
          {"workers", gc.workers},
          {"ontology", profile::Ontology::defaults().to_json()}}},
        {"filter",
         {{"tau_u", fc.tau_user},
          {"tau_a", fc.tau_agent},
          {"rho", fc.rho},
          {"method", std::string(filter::to_string(fc.method))},
          {"workers", fc.workers}}},
        {"eval", {{"slot_domains", json::array()}}},
    };
}

ValidationReport validate_config(const json& j, const std::filesystem::path& base_dir) {
    ValidationReport report;
    if (!j.is_object()) {
        report.add("invalid value", "config must be a JSON object");
        return report;
    }
    walk(default_config_json(), j, "", report);

    const auto open_interval = [&](const char* section, const char* key, double lo, double hi, bool hi_closed) {
        const double v = number_at(j, section, key, (lo + hi) / 2.0);
        const bool ok = v > lo && (hi_closed ? v <= hi : v < hi);
        if (!ok) {
            report.add("threshold out of range", fmt::format("{}.{} = {}", section, key, v));
        }
    };
    const auto closed_interval = [&](const char* section, const char* key, double lo, double hi) {
        const double v = number_at(j, section, key, lo);
        if (!(v >= lo && v <= hi)) {
            report.add("threshold out of range", fmt::format("{}.{} = {}", section, key, v));
        }
    };
    open_interval("filter", "tau_u", -1.0, 1.0, false);
    open_interval("filter", "tau_a", -1.0, 1.0, false);
    open_interval("filter", "rho", 0.0, 1.0, true);
    closed_interval("ingest", "theta_sem", 0.0, 1.0);
    closed_interval("ingest", "dedup_threshold", 0.0, 1.0);
    if (number_at(j, "generation", "max_turns", 40) < 2) {
        report.add("threshold out of range", "generation.max_turns must be at least 2");
    }
    if (number_at(j, "generation", "retrieval_k", 3) < 1) {
        report.add("threshold out of range", "generation.retrieval_k must be at least 1");
    }
    if (number_at(j, "ingest", "window_seconds", 1) < 0) {
        report.add("threshold out of range", "ingest.window_seconds must be non-negative");
    }

    const auto check = [&](const char* what, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            report.add("invalid value", fmt::format("{}: {}", what, e.what()));
        }
    };
    if (j.contains("gateway") && j["gateway"].is_object() && j["gateway"].contains("mode")) {
        check("gateway.mode", [&] { (void)gateway::parse_mode(j["gateway"]["mode"].get<std::string>()); });
    }
    if (j.contains("filter") && j["filter"].is_object() && j["filter"].contains("method")) {
        check("filter.method", [&] { (void)filter::parse_method(j["filter"]["method"].get<std::string>()); });
    }
    if (j.contains("generation") && j["generation"].is_object() && j["generation"].contains("ontology")) {
        check("generation.ontology", [&] { (void)profile::Ontology::from_json(j["generation"]["ontology"]); });
    }
    if (j.contains("ingest") && j["ingest"].is_object() && j["ingest"].contains("taxonomy")) {
        check("ingest.taxonomy", [&] { (void)ingest::Taxonomy::from_json(j["ingest"]["taxonomy"]); });
    }

    std::string tpl_dir;
    if (j.contains("paths") && j["paths"].is_object() && j["paths"].value("templates", json()).is_string()) {
        tpl_dir = j["paths"]["templates"].get<std::string>();
    }
    try {
        const auto reg = tpl_dir.empty() ? gateway::TemplateRegistry::builtin()
                                         : gateway::TemplateRegistry::with_overrides(resolve(base_dir, tpl_dir));
        for (const auto& id : required_templates()) {
            if (!reg.has(id)) {
                report.add("unknown template", id);
            }
        }
    } catch (const std::exception& e) {
        report.add("unknown template", e.what());
    }
    return report;
}

ValidationReport validate_config_file(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        ValidationReport r;
        r.add("invalid value", path.string() + ": " + e.what());
        return r;
    }
    return validate_config(j, path.parent_path());
}

RunConfig parse_config(const json& input, const std::filesystem::path& base_dir) {
    const auto report = validate_config(input, base_dir);
    if (!report.ok()) {
        throw ConfigError("invalid configuration: " + report.summary());
    }
    json j = default_config_json();
    j.merge_patch(input);
    // Ontology::from_json layers the given domains over the defaults itself.
    if (input.contains("generation") && input["generation"].contains("ontology")) {
        j["generation"]["ontology"] = input["generation"]["ontology"];
    }

    RunConfig c;
    try {
        c.seed = j.at("seed").get<std::uint64_t>();

        const auto& p = j.at("paths");
        c.paths.sources = resolve(base_dir, p.at("sources").get<std::string>());
        c.paths.seeds = resolve(base_dir, p.at("seeds").get<std::string>());
        c.paths.kb = resolve(base_dir, p.at("kb").get<std::string>());
        c.paths.out_dir = resolve(base_dir, p.at("out_dir").get<std::string>());
        c.paths.templates = resolve(base_dir, p.at("templates").get<std::string>());
        c.paths.cache = resolve(base_dir, p.at("cache").get<std::string>());
        for (const auto& lx : p.at("lexicons")) {
            if (lx.is_string()) {
                c.paths.lexicons.push_back({resolve(base_dir, lx.get<std::string>()), ingest::LexiconScope::custom});
            } else {
                c.paths.lexicons.push_back({resolve(base_dir, lx.at("path").get<std::string>()),
                                            parse_scope(lx.value("scope", std::string("custom")))});
            }
        }

        const auto& in = j.at("ingest");
        c.ingest.filter.keywords = in.at("keywords").get<std::vector<std::string>>();
        c.ingest.filter.category_tags = in.at("category_tags").get<std::vector<std::string>>();
        c.ingest.filter.certifications = in.at("certifications").get<std::vector<std::string>>();
        c.ingest.filter.min_viewers = in.at("min_viewers").get<std::int64_t>();
        c.ingest.denoise.min_length = in.at("min_comment_length").get<std::size_t>();
        c.ingest.denoise.spam_patterns = in.at("spam_patterns").get<std::vector<std::string>>();
        c.ingest.denoise.dedup_threshold = in.at("dedup_threshold").get<double>();
        c.ingest.align.window_seconds = in.at("window_seconds").get<double>();
        c.ingest.align.theta_sem = in.at("theta_sem").get<double>();
        c.ingest.entities.model_pattern = in.at("model_pattern").get<std::string>();
        c.ingest.taxonomy = ingest::Taxonomy::from_json(in.at("taxonomy"));
        c.ingest.strategy_via_gateway = in.at("strategy_via_gateway").get<bool>();
        c.ingest.llm_correction = in.at("llm_correction").get<bool>();
        c.ingest.workers = in.at("workers").get<std::size_t>();

        c.embedding = j.at("embedding");

        const auto& g = j.at("gateway");
        c.gateway.mode = gateway::parse_mode(g.at("mode").get<std::string>());
        c.gateway.retry.max_retries = g.at("max_retries").get<int>();
        c.gateway.retry.base_delay = std::chrono::milliseconds(g.at("retry_base_ms").get<std::int64_t>());
        c.gateway.token_budget = g.at("token_budget").get<std::uint64_t>();
        c.gateway.max_concurrency = g.at("max_concurrency").get<int>();
        c.gateway.replay_fallback_mock = g.at("replay_fallback_mock").get<bool>();
        c.gateway.backend_id = g.at("backend_id").get<std::string>();

        const auto& pe = j.at("persona");
        c.persona.user_per_domain = pe.at("user_per_domain").get<std::map<std::string, std::size_t>>();
        c.persona.agent_per_domain = pe.at("agent_per_domain").get<std::map<std::string, std::size_t>>();
        c.persona.default_user_count = pe.at("default_user_count").get<std::size_t>();
        c.persona.default_agent_count = pe.at("default_agent_count").get<std::size_t>();
        c.persona.questions_per_persona = pe.at("questions_per_persona").get<std::size_t>();
        c.persona.seeds_per_persona = pe.at("seeds_per_persona").get<std::size_t>();
        c.persona.workers = pe.at("workers").get<std::size_t>();

        const auto& b = j.at("blueprint");
        c.blueprint.per_domain = b.at("per_domain").get<std::map<std::string, std::size_t>>();
        c.blueprint.default_count = b.at("default_count").get<std::size_t>();
        c.blueprint.tags_per_blueprint = b.at("tags_per_blueprint").get<std::size_t>();
        c.blueprint.workers = b.at("workers").get<std::size_t>();
        c.stage_order = b.at("stage_order").get<std::vector<std::string>>();

        const auto& ge = j.at("generation");
        c.generation.sessions = ge.at("sessions").get<std::size_t>();
        c.generation.limits.max_turns = ge.at("max_turns").get<std::size_t>();
        c.generation.limits.retrieval_k = ge.at("retrieval_k").get<std::size_t>();
        c.generation.workers = ge.at("workers").get<std::size_t>();
        c.ontology = profile::Ontology::from_json(ge.at("ontology"));

        const auto& f = j.at("filter");
        c.filter.tau_user = f.at("tau_u").get<double>();
        c.filter.tau_agent = f.at("tau_a").get<double>();
        c.filter.rho = f.at("rho").get<double>();
        c.filter.method = filter::parse_method(f.at("method").get<std::string>());
        c.filter.workers = f.at("workers").get<std::size_t>();

        c.eval.slot_domains = j.at("eval").at("slot_domains").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(j, path.parent_path());
}

} // namespace streamforge::config
