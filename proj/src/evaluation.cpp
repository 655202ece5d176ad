#include "streamforge/evaluation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

namespace streamforge::evaluation {

void to_json(json& j, const StateRecord& r) {
    j = json{{"dialogue_id", r.dialogue_id}, {"turn_index", r.turn_index}, {"state", r.state}};
}

void from_json(const json& j, StateRecord& r) {
    r.dialogue_id = j.at("dialogue_id").get<std::string>();
    r.turn_index = j.at("turn_index").get<std::size_t>();
    r.state = j.value("state", SlotMap{});
}

AlignmentError::AlignmentError(const std::string& what, std::vector<std::string> offenders)
    : Error(what + ": " + join(std::span<const std::string>(offenders.data(), std::min<std::size_t>(offenders.size(), 10)), ", ") +
            (offenders.size() > 10 ? fmt::format(" (+{} more)", offenders.size() - 10) : std::string())),
      offenders_(std::move(offenders)) {}

void to_json(json& j, const DstScores& s) {
    const auto r2 = [](double x) { return std::round(x * 100.0) / 100.0; };
    j = json{{"jga", r2(s.jga)},
             {"precision", r2(s.precision)},
             {"recall", r2(s.recall)},
             {"f1", r2(s.f1)},
             {"turns", s.turns},
             {"exact_turns", s.exact_turns},
             {"true_positives", s.true_positives},
             {"false_positives", s.false_positives},
             {"false_negatives", s.false_negatives}};
}

namespace {

using Key = std::pair<std::string, std::size_t>;
using NormalState = std::set<std::pair<std::string, std::string>>;

NormalState normalized(const SlotMap& s) {
    NormalState out;
    for (const auto& [k, v] : s) {
        out.emplace(normalize_value(k), normalize_value(v));
    }
    return out;
}

std::string key_text(const Key& k) { return k.first + "#" + std::to_string(k.second); }

std::map<Key, NormalState> index(std::span<const StateRecord> records, const char* side) {
    std::map<Key, NormalState> out;
    std::vector<std::string> dupes;
    for (const auto& r : records) {
        Key k{r.dialogue_id, r.turn_index};
        if (!out.emplace(k, normalized(r.state)).second) {
            dupes.push_back(key_text(k));
        }
    }
    if (!dupes.empty()) {
        throw AlignmentError(std::string("duplicate turns in ") + side, dupes);
    }
    return out;
}

std::vector<std::pair<NormalState, NormalState>> align(std::span<const StateRecord> gold,
                                                       std::span<const StateRecord> pred) {
    const auto g = index(gold, "gold");
    const auto p = index(pred, "prediction");
    std::vector<std::string> offenders;
    for (const auto& [k, _] : g) {
        if (!p.contains(k)) {
            offenders.push_back(key_text(k) + " (no prediction)");
        }
    }
    for (const auto& [k, _] : p) {
        if (!g.contains(k)) {
            offenders.push_back(key_text(k) + " (no gold)");
        }
    }
    if (!offenders.empty()) {
        throw AlignmentError("gold and prediction are not aligned", offenders);
    }
    std::vector<std::pair<NormalState, NormalState>> out;
    for (const auto& [k, gs] : g) {
        out.emplace_back(gs, p.at(k));
    }
    return out;
}

} // namespace

DstScores evaluate_dst(std::span<const StateRecord> gold, std::span<const StateRecord> pred) {
    DstScores s;
    for (const auto& [g, p] : align(gold, pred)) {
        ++s.turns;
        if (g == p) {
            ++s.exact_turns;
        }
        for (const auto& t : p) {
            (g.contains(t) ? s.true_positives : s.false_positives) += 1;
        }
        for (const auto& t : g) {
            if (!p.contains(t)) {
                ++s.false_negatives;
            }
        }
    }
    if (s.turns > 0) {
        s.jga = 100.0 * static_cast<double>(s.exact_turns) / static_cast<double>(s.turns);
    }
    const double tp = static_cast<double>(s.true_positives);
    const double precision = s.true_positives + s.false_positives > 0 ? tp / (tp + static_cast<double>(s.false_positives)) : 0.0;
    const double recall = s.true_positives + s.false_negatives > 0 ? tp / (tp + static_cast<double>(s.false_negatives)) : 0.0;
    s.precision = 100.0 * precision;
    s.recall = 100.0 * recall;
    s.f1 = precision + recall > 0.0 ? 100.0 * 2.0 * precision * recall / (precision + recall) : 0.0;
    return s;
}

double joint_goal_accuracy(std::span<const StateRecord> gold, std::span<const StateRecord> pred) {
    return evaluate_dst(gold, pred).jga;
}

double slot_value_f1(std::span<const StateRecord> gold, std::span<const StateRecord> pred) {
    return evaluate_dst(gold, pred).f1;
}

std::vector<StateRecord> gold_states(std::span<const SessionQuadruplet> sessions) {
    std::vector<StateRecord> out;
    for (const auto& s : sessions) {
        SlotMap state;
        for (const auto& t : s.history) {
            if (t.role != Role::user) {
                continue;
            }
            if (t.inform_block) {
                for (const auto& [k, v] : *t.inform_block) {
                    state[k] = v;
                }
            }
            out.push_back({s.dialogue_id, t.index, state});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

void to_json(json& j, const SlotDistributionTable& t) {
    json slots = json::array();
    for (const auto& c : t.slots) {
        slots.push_back({{"slot", c.slot}, {"coverage_pct", c.coverage_pct}, {"distinct_values", c.distinct_values}});
    }
    j = json{{"slots", slots},
             {"coverage_variance", std::round(t.coverage_variance * 100.0) / 100.0},
             {"avg_values", std::round(t.avg_values * 100.0) / 100.0}};
}

SlotDistributionTable summarize_slots(std::vector<SlotColumn> columns) {
    if (columns.empty()) {
        throw PreconditionError("slot distribution needs at least one slot");
    }
    SlotDistributionTable t;
    double mean = 0.0;
    double values = 0.0;
    for (const auto& c : columns) {
        if (!(c.coverage_pct >= 0.0 && c.coverage_pct <= 100.0)) {
            throw PreconditionError(fmt::format("coverage {} of slot '{}' is outside [0, 100]", c.coverage_pct, c.slot));
        }
        mean += c.coverage_pct / 100.0;
        values += static_cast<double>(c.distinct_values);
    }
    const auto n = static_cast<double>(columns.size());
    mean /= n;
    double var = 0.0;
    for (const auto& c : columns) {
        const double d = c.coverage_pct / 100.0 - mean;
        var += d * d;
    }
    t.coverage_variance = var / n * 100.0;
    t.avg_values = values / n;
    t.slots = std::move(columns);
    return t;
}

SlotDistributionTable slot_distribution(std::span<const SessionQuadruplet> dialogues,
                                        const std::vector<std::string>& slots) {
    std::vector<SlotColumn> columns;
    for (const auto& slot : slots) {
        std::size_t present = 0;
        std::set<std::string> values;
        for (const auto& d : dialogues) {
            bool seen = false;
            for (const auto& t : d.history) {
                if (!t.inform_block) {
                    continue;
                }
                if (const auto it = t.inform_block->find(slot); it != t.inform_block->end()) {
                    seen = true;
                    values.insert(normalize_value(it->second));
                }
            }
            present += seen ? 1 : 0;
        }
        const double pct = dialogues.empty() ? 0.0 : 100.0 * static_cast<double>(present) / static_cast<double>(dialogues.size());
        columns.push_back({slot, pct, values.size()});
    }
    return summarize_slots(std::move(columns));
}

namespace {

SlotDistributionTable table_from(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("coverage_pct") || !j.contains("distinct_values")) {
        throw PreconditionError(where + ": expected coverage_pct and distinct_values arrays");
    }
    const auto cov = j.at("coverage_pct").get<std::vector<double>>();
    const auto vals = j.at("distinct_values").get<std::vector<std::size_t>>();
    std::vector<std::string> names = j.value("slots", std::vector<std::string>{});
    if (cov.size() != vals.size() || (!names.empty() && names.size() != cov.size())) {
        throw PreconditionError(where + ": column lengths differ");
    }
    std::vector<SlotColumn> cols;
    for (std::size_t i = 0; i < cov.size(); ++i) {
        cols.push_back({names.empty() ? fmt::format("slot_{}", i) : names[i], cov[i], vals[i]});
    }
    return summarize_slots(std::move(cols));
}

} // namespace

std::map<std::string, SlotDistributionTable> slot_tables_from_json(const json& j) {
    std::map<std::string, SlotDistributionTable> out;
    if (j.is_object() && j.contains("columns")) {
        const auto shared = j.value("slots", std::vector<std::string>{});
        for (const auto& [name, col] : j.at("columns").items()) {
            json c = col;
            if (!c.contains("slots") && !shared.empty()) {
                c["slots"] = shared;
            }
            out.emplace(name, table_from(c, "column " + name));
        }
        return out;
    }
    out.emplace("", table_from(j, "table"));
    return out;
}

// ---------------------------------------------------------------------------

MixResult mix_training_budget(std::span<const json> public_pool, std::span<const json> synthetic_pool,
                              std::size_t budget, double synth_ratio, std::uint64_t seed) {
    if (!(synth_ratio >= 0.0 && synth_ratio <= 1.0)) {
        throw PreconditionError("synthetic ratio must lie in [0, 1]");
    }
    const auto n_synth = static_cast<std::size_t>(std::llround(synth_ratio * static_cast<double>(budget)));
    const std::size_t n_public = budget - n_synth;
    if (n_synth > synthetic_pool.size()) {
        throw PreconditionError(fmt::format("synthetic pool too small: need {}, have {}", n_synth, synthetic_pool.size()));
    }
    if (n_public > public_pool.size()) {
        throw PreconditionError(fmt::format("public pool too small: need {}, have {}", n_public, public_pool.size()));
    }
    const auto pick = [](std::span<const json> pool, std::size_t k, std::uint64_t s) {
        Rng rng(s);
        auto idx = rng.sample_indices(pool.size(), k);
        std::sort(idx.begin(), idx.end());
        return idx;
    };
    const auto pub_idx = pick(public_pool, n_public, derive_seed(seed, "public"));
    const auto syn_idx = pick(synthetic_pool, n_synth, derive_seed(seed, "synthetic"));

    struct Entry {
        const json* record;
        const char* origin;
        std::size_t source_index;
    };
    std::vector<Entry> entries;
    for (const auto i : pub_idx) {
        entries.push_back({&public_pool[i], "public", i});
    }
    for (const auto i : syn_idx) {
        entries.push_back({&synthetic_pool[i], "synthetic", i});
    }
    Rng(derive_seed(seed, "order")).shuffle(entries);

    MixResult out;
    json order = json::array();
    for (const auto& e : entries) {
        out.items.push_back(*e.record);
        json row{{"origin", e.origin}, {"source_index", e.source_index}};
        if (e.record->is_object() && e.record->contains("dialogue_id")) {
            row["dialogue_id"] = e.record->at("dialogue_id");
        }
        order.push_back(row);
    }
    out.manifest = {{"budget", budget},
                    {"synthetic_ratio", synth_ratio},
                    {"public_count", n_public},
                    {"synthetic_count", n_synth},
                    {"public_available", public_pool.size()},
                    {"synthetic_available", synthetic_pool.size()},
                    {"seed", seed},
                    {"items", order}};
    return out;
}

// ---------------------------------------------------------------------------

JudgeBatch export_judge_batch(std::span<const JudgeSource> sources, std::uint64_t seed) {
    std::set<std::string> labels;
    for (const auto& s : sources) {
        if (trim(s.label).empty()) {
            throw PreconditionError("judge sources need non-empty labels");
        }
        labels.insert(s.label);
    }
    if (labels.size() < 2) {
        throw PreconditionError("judge export needs at least two distinct sources");
    }
    struct Ref {
        const JudgeSource* source;
        const SessionQuadruplet* session;
    };
    std::vector<Ref> refs;
    for (const auto& s : sources) {
        for (const auto& d : s.sessions) {
            refs.push_back({&s, &d});
        }
    }
    Rng(derive_seed(seed, "judge-order")).shuffle(refs);

    JudgeBatch batch;
    json key_items = json::array();
    for (std::size_t i = 0; i < refs.size(); ++i) {
        json dialogue = json::array();
        for (const auto& t : refs[i].session->history) {
            dialogue.push_back({{"role", to_string(t.role)}, {"text", t.text}});
        }
        batch.items.push_back({{"item", i}, {"dialogue", dialogue}});
        key_items.push_back({{"item", i}, {"source", refs[i].source->label}, {"dialogue_id", refs[i].session->dialogue_id}});
    }
    batch.key = {{"seed", seed}, {"items", key_items}};

    const std::string bytes = serialize_batch(batch);
    for (const auto& label : labels) {
        if (bytes.find(label) != std::string::npos) {
            throw Error("source label '" + label + "' occurs in the exported batch; choose a label that cannot appear in dialogue text");
        }
    }
    return batch;
}

std::string serialize_batch(const JudgeBatch& batch) {
    std::string out;
    for (const auto& item : batch.items) {
        out += item.dump();
        out += '\n';
    }
    return out;
}

void write_judge_batch(const JudgeBatch& batch, const std::filesystem::path& out_dir,
                       const std::filesystem::path& key_file) {
    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir / "batch.jsonl", serialize_batch(batch));
    json dims{{"dimensions", judge_dimensions}, {"scale", {judge_scale_min, judge_scale_max}}};
    write_text_file(out_dir / "dimensions.json", dims.dump(2) + "\n");
    if (key_file.has_parent_path()) {
        std::filesystem::create_directories(key_file.parent_path());
    }
    write_text_file(key_file, batch.key.dump(2) + "\n");
}

void to_json(json& j, const JudgeAggregate& a) {
    j = json{{"means", a.means}, {"missing", a.missing}};
}

JudgeAggregate aggregate_judge_scores(std::span<const json> score_lines, const json& key) {
    std::map<std::size_t, std::string> source_of;
    for (const auto& row : key.at("items")) {
        source_of[row.at("item").get<std::size_t>()] = row.at("source").get<std::string>();
    }
    const std::set<std::string> dims(judge_dimensions.begin(), judge_dimensions.end());

    // (source, dim, judge) -> (sum, count); (judge, item, dim) seen
    std::map<std::tuple<std::string, std::string, std::string>, std::pair<double, std::size_t>> acc;
    std::set<std::tuple<std::string, std::size_t, std::string>> seen;
    std::set<std::string> judges;
    for (const auto& line : score_lines) {
        const auto item = line.at("item").get<std::size_t>();
        const auto judge = line.at("judge").get<std::string>();
        const auto src = source_of.find(item);
        if (src == source_of.end()) {
            throw Error(fmt::format("score for unknown item {}", item));
        }
        judges.insert(judge);
        for (const auto& [dim, value] : line.at("scores").items()) {
            if (!dims.contains(dim)) {
                throw Error("unknown judge dimension '" + dim + "'");
            }
            if (value.is_null()) {
                continue;
            }
            const double v = value.get<double>();
            if (!(v >= judge_scale_min && v <= judge_scale_max)) {
                throw Error(fmt::format("score {} for item {} is off the {}-{} scale", v, item, judge_scale_min, judge_scale_max));
            }
            if (!seen.emplace(judge, item, dim).second) {
                throw Error(fmt::format("duplicate {} score for item {} by {}", dim, item, judge));
            }
            auto& cell = acc[{src->second, dim, judge}];
            cell.first += v;
            cell.second += 1;
        }
    }
    JudgeAggregate out;
    for (const auto& [k, cell] : acc) {
        const auto& [source, dim, judge] = k;
        out.means[source][dim][judge] = std::round(cell.first / static_cast<double>(cell.second) * 100.0) / 100.0;
    }
    for (const auto& judge : judges) {
        for (const auto& [item, _] : source_of) {
            for (const auto* dim : judge_dimensions) {
                if (!seen.contains({judge, item, dim})) {
                    out.missing.push_back(fmt::format("item {} / judge {} / dimension {}", item, judge, dim));
                }
            }
        }
    }
    return out;
}

} // namespace streamforge::evaluation
