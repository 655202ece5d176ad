#include "streamforge/schema.hpp"

#include <fmt/format.h>

#include <cmath>
#include <sstream>

namespace streamforge {

namespace {

template <typename T>
void get_optional(const json& j, const char* key, std::optional<T>& out) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) {
        out = it->get<T>();
    } else {
        out.reset();
    }
}

template <typename T>
void get_or(const json& j, const char* key, T& out, T fallback = T{}) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) {
        out = it->get<T>();
    } else {
        out = std::move(fallback);
    }
}

} // namespace

// ---------------------------------------------------------------------------

Domain Domain::parse(std::string_view name) {
    const std::string n = trim(name);
    if (n.empty()) {
        throw Error("empty domain name");
    }
    Domain d;
    const std::string lower = to_lower_ascii(n);
    d.name_ = n;
    if (lower == "automotive" || lower == "restaurant" || lower == "hotel") {
        d.name_ = lower;
    }
    if (d.name_ == "automotive") {
        d.kind_ = Kind::automotive;
    } else if (d.name_ == "restaurant") {
        d.kind_ = Kind::restaurant;
    } else if (d.name_ == "hotel") {
        d.kind_ = Kind::hotel;
    } else {
        d.kind_ = Kind::other;
    }
    return d;
}

void to_json(json& j, const Domain& d) { j = d.name(); }
void from_json(const json& j, Domain& d) { d = Domain::parse(j.get<std::string>()); }

std::string_view to_string(Role r) { return r == Role::user ? "user" : "agent"; }

Role parse_role(std::string_view text) {
    if (text == "user") {
        return Role::user;
    }
    if (text == "agent") {
        return Role::agent;
    }
    throw Error("unknown role '" + std::string(text) + "'");
}

void to_json(json& j, const Turn& t) {
    j = json{{"index", t.index}, {"role", to_string(t.role)}, {"text", t.text}};
    if (t.inform_block) {
        j["inform_block"] = *t.inform_block;
    }
    if (t.request_block) {
        j["request_block"] = *t.request_block;
    }
    if (t.evidence_ids) {
        j["evidence_ids"] = *t.evidence_ids;
    }
    if (!t.revised_slots.empty()) {
        j["revised_slots"] = t.revised_slots;
    }
}

void from_json(const json& j, Turn& t) {
    t.index = j.at("index").get<std::size_t>();
    t.role = parse_role(j.at("role").get<std::string>());
    t.text = j.at("text").get<std::string>();
    get_optional(j, "inform_block", t.inform_block);
    get_optional(j, "request_block", t.request_block);
    get_optional(j, "evidence_ids", t.evidence_ids);
    get_or(j, "revised_slots", t.revised_slots);
}

void to_json(json& j, const SessionQuadruplet& s) {
    j = json{{"dialogue_id", s.dialogue_id},
             {"user_persona_id", s.user_persona_id},
             {"agent_persona_id", s.agent_persona_id},
             {"blueprint_id", s.blueprint_id},
             {"domain", s.domain},
             {"history", s.history}};
}

void from_json(const json& j, SessionQuadruplet& s) {
    s.dialogue_id = j.at("dialogue_id").get<std::string>();
    s.user_persona_id = j.at("user_persona_id").get<std::string>();
    s.agent_persona_id = j.at("agent_persona_id").get<std::string>();
    s.blueprint_id = j.at("blueprint_id").get<std::string>();
    s.domain = j.at("domain").get<Domain>();
    s.history = j.at("history").get<std::vector<Turn>>();
}

void to_json(json& j, const SeedDialogue& s) {
    j = json{{"seed_id", s.seed_id}, {"domain", s.domain}, {"turns", s.turns}};
}

void from_json(const json& j, SeedDialogue& s) {
    s.seed_id = j.at("seed_id").get<std::string>();
    s.domain = j.at("domain").get<Domain>();
    s.turns = j.at("turns").get<std::vector<Turn>>();
}

void to_json(json& j, const UserPersona& p) {
    j = json{{"persona_id", p.persona_id},
             {"mindset", p.mindset},
             {"basic_information", p.basic_information},
             {"core_requirements", p.core_requirements},
             {"primary_inquiries", p.primary_inquiries},
             {"potential_utterances", p.potential_utterances},
             {"domain", p.domain}};
}

void from_json(const json& j, UserPersona& p) {
    p.persona_id = j.at("persona_id").get<std::string>();
    get_or(j, "mindset", p.mindset);
    get_or(j, "basic_information", p.basic_information);
    get_or(j, "core_requirements", p.core_requirements);
    get_or(j, "primary_inquiries", p.primary_inquiries);
    get_or(j, "potential_utterances", p.potential_utterances);
    p.domain = j.at("domain").get<Domain>();
}

void to_json(json& j, const AgentPersona& p) {
    j = json{{"persona_id", p.persona_id},
             {"identity_positioning", p.identity_positioning},
             {"linguistic_style", p.linguistic_style},
             {"service_boundaries", p.service_boundaries},
             {"knowledge_base_ref", p.knowledge_base_ref},
             {"domain", p.domain}};
}

void from_json(const json& j, AgentPersona& p) {
    p.persona_id = j.at("persona_id").get<std::string>();
    get_or(j, "identity_positioning", p.identity_positioning);
    get_or(j, "linguistic_style", p.linguistic_style);
    get_or(j, "service_boundaries", p.service_boundaries);
    get_or(j, "knowledge_base_ref", p.knowledge_base_ref);
    p.domain = j.at("domain").get<Domain>();
}

// ---------------------------------------------------------------------------

bool SlotCondition::holds(const SlotMap& state) const {
    const auto it = state.find(slot);
    if (it == state.end()) {
        return false;
    }
    return op == Op::informed || normalize_value(it->second) == normalize_value(value);
}

const FlowNode* FlowAtlas::find(std::string_view id) const {
    for (const auto& n : nodes) {
        if (n.id == id) {
            return &n;
        }
    }
    return nullptr;
}

const KeyNode* Blueprint::key_node(std::string_view signal) const {
    for (const auto& k : key_nodes) {
        if (k.signal_name == signal) {
            return &k;
        }
    }
    return nullptr;
}

void to_json(json& j, const SlotCondition& c) {
    j = json{{"slot", c.slot}, {"op", c.op == SlotCondition::Op::informed ? "informed" : "equals"}};
    if (c.op == SlotCondition::Op::equals) {
        j["value"] = c.value;
    }
}

void from_json(const json& j, SlotCondition& c) {
    c.slot = j.at("slot").get<std::string>();
    const auto op = j.value("op", std::string("informed"));
    if (op == "informed") {
        c.op = SlotCondition::Op::informed;
    } else if (op == "equals") {
        c.op = SlotCondition::Op::equals;
    } else {
        throw Error("unknown slot condition op '" + op + "'");
    }
    get_or(j, "value", c.value);
}

void to_json(json& j, const Stage& s) {
    j = json{{"name", s.name}, {"goal", s.goal}, {"entry_condition", s.entry_condition}};
}

void from_json(const json& j, Stage& s) {
    s.name = j.at("name").get<std::string>();
    get_or(j, "goal", s.goal);
    get_or(j, "entry_condition", s.entry_condition);
}

void to_json(json& j, const KeyNode& k) {
    j = json{{"signal_name", k.signal_name}, {"business_meaning", k.business_meaning}, {"trigger", k.trigger}};
}

void from_json(const json& j, KeyNode& k) {
    k.signal_name = j.at("signal_name").get<std::string>();
    get_or(j, "business_meaning", k.business_meaning);
    k.trigger = j.at("trigger").get<SlotCondition>();
}

void to_json(json& j, const Scenario& s) {
    j = json{{"situation", s.situation},
             {"coping_strategy", s.coping_strategy},
             {"example_phrasing", s.example_phrasing},
             {"stage", s.stage},
             {"keywords", s.keywords},
             {"slots", s.slots},
             {"priority", s.priority}};
}

void from_json(const json& j, Scenario& s) {
    s.situation = j.at("situation").get<std::string>();
    get_or(j, "coping_strategy", s.coping_strategy);
    get_or(j, "example_phrasing", s.example_phrasing);
    get_or(j, "stage", s.stage);
    get_or(j, "keywords", s.keywords);
    get_or(j, "slots", s.slots);
    get_or(j, "priority", s.priority);
}

void to_json(json& j, const FlowNode& n) { j = json{{"id", n.id}, {"terminal", n.terminal}}; }

void from_json(const json& j, FlowNode& n) {
    n.id = j.at("id").get<std::string>();
    get_or(j, "terminal", n.terminal);
}

void to_json(json& j, const FlowEdge& e) { j = json{{"from", e.from}, {"to", e.to}, {"label", e.label}}; }

void from_json(const json& j, FlowEdge& e) {
    e.from = j.at("from").get<std::string>();
    e.to = j.at("to").get<std::string>();
    e.label = j.at("label").get<std::string>();
}

void to_json(json& j, const FlowAtlas& a) { j = json{{"nodes", a.nodes}, {"edges", a.edges}}; }

void from_json(const json& j, FlowAtlas& a) {
    a.nodes = j.at("nodes").get<std::vector<FlowNode>>();
    a.edges = j.at("edges").get<std::vector<FlowEdge>>();
}

void to_json(json& j, const Blueprint& b) {
    j = json{{"blueprint_id", b.blueprint_id},
             {"domain", b.domain},
             {"rhythm", b.rhythm},
             {"key_nodes", b.key_nodes},
             {"scenarios", b.scenarios},
             {"flow_atlas", b.flow_atlas},
             {"provenance", b.provenance}};
}

void from_json(const json& j, Blueprint& b) {
    b.blueprint_id = j.at("blueprint_id").get<std::string>();
    b.domain = j.at("domain").get<Domain>();
    b.rhythm = j.at("rhythm").get<std::vector<Stage>>();
    get_or(j, "key_nodes", b.key_nodes);
    get_or(j, "scenarios", b.scenarios);
    b.flow_atlas = j.at("flow_atlas").get<FlowAtlas>();
    b.provenance = j.value("provenance", json::object());
}

// ---------------------------------------------------------------------------

bool ValidationReport::has(std::string_view code) const {
    for (const auto& v : violations) {
        if (v.code == code) {
            return true;
        }
    }
    return false;
}

void ValidationReport::add(std::string code, std::string detail) {
    violations.push_back({std::move(code), std::move(detail)});
}

void ValidationReport::merge(const ValidationReport& other) {
    violations.insert(violations.end(), other.violations.begin(), other.violations.end());
}

std::string ValidationReport::summary() const {
    std::string out;
    for (const auto& v : violations) {
        if (!out.empty()) {
            out += "; ";
        }
        out += v.code + ": " + v.detail;
    }
    return out;
}

void to_json(json& j, const ValidationReport& r) {
    j = json::array();
    for (const auto& v : r.violations) {
        j.push_back({{"code", v.code}, {"detail", v.detail}});
    }
}

PersonaStore PersonaStore::load(const std::filesystem::path& user_file,
                                const std::filesystem::path& agent_file) {
    PersonaStore store;
    for (auto& p : read_jsonl<UserPersona>(user_file)) {
        const auto id = p.persona_id;
        if (!store.users.emplace(id, std::move(p)).second) {
            throw Error("duplicate user persona id " + id);
        }
    }
    for (auto& p : read_jsonl<AgentPersona>(agent_file)) {
        const auto id = p.persona_id;
        if (!store.agents.emplace(id, std::move(p)).second) {
            throw Error("duplicate agent persona id " + id);
        }
    }
    return store;
}

BlueprintStore BlueprintStore::load(const std::filesystem::path& file) {
    BlueprintStore store;
    for (auto& b : read_jsonl<Blueprint>(file)) {
        const auto id = b.blueprint_id;
        if (!store.blueprints.emplace(id, std::move(b)).second) {
            throw Error("duplicate blueprint id " + id);
        }
    }
    return store;
}

ValidationReport validate_quadruplet(const SessionQuadruplet& record, const PersonaStore& personas,
                                     const BlueprintStore& blueprints) {
    ValidationReport report;
    if (record.dialogue_id.empty()) {
        report.add("missing id", "dialogue_id is empty");
    }
    if (record.history.empty()) {
        report.add("empty history", "history has no turns");
    }
    for (std::size_t i = 0; i < record.history.size(); ++i) {
        const Turn& t = record.history[i];
        const Role expected = (i % 2 == 0) ? Role::user : Role::agent;
        if (t.role != expected) {
            report.add("turn order",
                       fmt::format("turn {} has role {}, expected {}", i, to_string(t.role), to_string(expected)));
        }
        if (t.index != i) {
            report.add("turn index", fmt::format("turn at position {} carries index {}", i, t.index));
        }
        if (t.inform_block && t.role != Role::user) {
            report.add("block placement", fmt::format("turn {}: inform_block on an agent turn", i));
        }
        if (t.request_block && t.role != Role::agent) {
            report.add("block placement", fmt::format("turn {}: request_block on a user turn", i));
        }
        if (trim(t.text).empty()) {
            report.add("empty turn", fmt::format("turn {} has empty text", i));
        }
    }
    if (!personas.users.contains(record.user_persona_id)) {
        report.add("dangling reference", "user_persona_id '" + record.user_persona_id + "' not found");
    }
    if (!personas.agents.contains(record.agent_persona_id)) {
        report.add("dangling reference", "agent_persona_id '" + record.agent_persona_id + "' not found");
    }
    if (!blueprints.blueprints.contains(record.blueprint_id)) {
        report.add("dangling reference", "blueprint_id '" + record.blueprint_id + "' not found");
    }
    return report;
}

ValidationReport validate_quadruplet(const json& record, const PersonaStore& personas,
                                     const BlueprintStore& blueprints) {
    SessionQuadruplet parsed;
    try {
        parsed = record.get<SessionQuadruplet>();
    } catch (const std::exception& e) {
        ValidationReport report;
        report.add("parse", e.what());
        return report;
    }
    return validate_quadruplet(parsed, personas, blueprints);
}

ValidationReport validate_user_persona(const UserPersona& p) {
    ValidationReport report;
    if (p.persona_id.empty()) {
        report.add("missing id", "persona_id is empty");
    }
    if (p.core_requirements.empty()) {
        report.add("persona incomplete", "no core requirement");
    }
    if (p.primary_inquiries.empty()) {
        report.add("persona incomplete", "no primary inquiry");
    }
    if (p.potential_utterances.empty()) {
        report.add("persona incomplete", "no potential utterance");
    }
    return report;
}

ValidationReport validate_agent_persona(const AgentPersona& p, const std::set<std::string>& known_kbs) {
    ValidationReport report;
    if (p.persona_id.empty()) {
        report.add("missing id", "persona_id is empty");
    }
    if (p.service_boundaries.empty()) {
        report.add("persona incomplete", "no service boundary");
    }
    if (p.knowledge_base_ref.empty()) {
        report.add("dangling reference", "knowledge_base_ref is empty");
    } else if (!known_kbs.empty() && !known_kbs.contains(p.knowledge_base_ref)) {
        report.add("dangling reference", "knowledge base '" + p.knowledge_base_ref + "' not loaded");
    }
    return report;
}

// ---------------------------------------------------------------------------

double DomainCounts::avg_turns_per_dialogue() const {
    if (dialogue_count == 0) {
        return 0.0;
    }
    return static_cast<double>(turn_count) / static_cast<double>(dialogue_count);
}

std::string DomainCounts::avg_turns_2dp() const {
    return fmt::format("{:.2f}", avg_turns_per_dialogue());
}

DomainCounts& DomainCounts::operator+=(const DomainCounts& o) {
    dialogue_count += o.dialogue_count;
    turn_count += o.turn_count;
    return *this;
}

void DatasetStats::add(const SessionQuadruplet& session) {
    add_counts(session.domain.name(), DomainCounts{1, session.history.size()});
}

void DatasetStats::add_counts(const std::string& domain, DomainCounts counts) {
    per_domain[domain] += counts;
    total += counts;
}

DatasetStats& DatasetStats::merge(const DatasetStats& other) {
    for (const auto& [domain, counts] : other.per_domain) {
        per_domain[domain] += counts;
    }
    total += other.total;
    return *this;
}

std::string DatasetStats::table() const {
    std::ostringstream out;
    out << fmt::format("{:<14}{:>12}{:>14}{:>10}\n", "Domain", "Dialogues", "Turns", "Avg");
    for (const auto& [domain, c] : per_domain) {
        out << fmt::format("{:<14}{:>12}{:>14}{:>10}\n", domain, c.dialogue_count, c.turn_count, c.avg_turns_2dp());
    }
    out << fmt::format("{:<14}{:>12}{:>14}{:>10}\n", "Total", total.dialogue_count, total.turn_count,
                       total.avg_turns_2dp());
    return out.str();
}

void to_json(json& j, const DatasetStats& s) {
    const auto row = [](const DomainCounts& c) {
        return json{{"dialogue_count", c.dialogue_count},
                    {"turn_count", c.turn_count},
                    {"avg_turns_per_dialogue", c.avg_turns_per_dialogue()},
                    {"avg_turns_per_dialogue_2dp", c.avg_turns_2dp()}};
    };
    j = json::object();
    j["per_domain"] = json::object();
    for (const auto& [domain, c] : s.per_domain) {
        j["per_domain"][domain] = row(c);
    }
    j["total"] = row(s.total);
}

DatasetStats compute_dataset_stats(std::span<const SessionQuadruplet> records) {
    DatasetStats stats;
    for (const auto& r : records) {
        stats.add(r);
    }
    return stats;
}

DatasetStats compute_dataset_stats(const std::filesystem::path& dataset_file) {
    DatasetStats stats;
    for_each_jsonl(dataset_file, [&](const json& j, std::size_t line) {
        try {
            const auto& history = j.at("history");
            stats.add_counts(j.at("domain").get<Domain>().name(), DomainCounts{1, history.size()});
        } catch (const std::exception& e) {
            throw ParseError(dataset_file.string(), line, e.what());
        }
    });
    return stats;
}

// ---------------------------------------------------------------------------

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const json&, std::size_t line)>& visit) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (in.eof()) {
            // getline hit EOF before a newline: the last record is cut off.
            throw ParseError(path.string(), line_no, "truncated record (missing trailing newline)");
        }
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (trim(line).empty()) {
            throw ParseError(path.string(), line_no, "blank line");
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path.string(), line_no, e.what());
        }
        visit(j, line_no);
    }
}

std::vector<json> read_jsonl_raw(const std::filesystem::path& path) {
    std::vector<json> out;
    for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(j); });
    return out;
}

void write_jsonl_raw(const std::filesystem::path& path, std::span<const json> records) {
    std::string buffer;
    for (const auto& r : records) {
        buffer += r.dump(-1, ' ', false, json::error_handler_t::strict);
        buffer.push_back('\n');
    }
    write_text_file(path, buffer);
}

} // namespace streamforge
