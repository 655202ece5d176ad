// One PASS/FAIL line per acceptance criterion. Exit status is non-zero when
// any criterion fails.

#include "streamforge/config.hpp"
#include "streamforge/evaluation.hpp"
#include "streamforge/filter.hpp"
#include "streamforge/orchestrator.hpp"
#include "streamforge/retrieval.hpp"
#include "streamforge/schema.hpp"
#include "test_support.hpp"

#include <fmt/core.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace streamforge;
namespace fs = std::filesystem;

namespace {

#ifdef STREAMFORGE_CLI
const char* cli_path = STREAMFORGE_CLI;
#else
const char* cli_path = nullptr;
#endif

struct Outcome {
    bool ok = true;
    std::string detail;
    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

int run_cli(const std::string& args) {
    if (cli_path == nullptr) {
        throw Error("CLI binary not built");
    }
    const std::string cmd = fmt::format("\"{}\" {} >/dev/null 2>&1", cli_path, args);
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// ---------------------------------------------------------------------------

Outcome slot_table(const fs::path& tmp) {
    Outcome o;
    const std::map<std::string, std::pair<double, double>> want{{"train", {8.43, 5.2}},
                                                                {"llm", {7.91, 6.8}},
                                                                {"seed", {7.38, 18.4}},
                                                                {"stream", {9.67, 21.1}},
                                                                {"hybrid", {7.96, 24.2}}};
    const auto out = tmp / "slots.json";
    const int rc = run_cli(fmt::format("eval slots --table \"{}\" --out \"{}\"",
                                       (sftest::fixtures() / "slot_columns.json").string(), out.string()));
    o.require(rc == 0, fmt::format("exit code {}", rc));
    if (!o.ok) {
        return o;
    }
    const auto report = json::parse(read_text_file(out));
    for (const auto& [name, expect] : want) {
        if (!report.contains(name)) {
            o.require(false, "missing column " + name);
            continue;
        }
        const double var = report[name]["coverage_variance"].get<double>();
        const double avg = report[name]["avg_values"].get<double>();
        o.require(std::abs(var - expect.first) <= 0.01,
                  fmt::format("{} variance {:.4f} vs {:.2f}", name, var, expect.first));
        o.require(std::abs(avg - expect.second) <= 0.01,
                  fmt::format("{} avg values {:.4f} vs {:.2f}", name, avg, expect.second));
    }
    return o;
}

Outcome dataset_stats(const fs::path& tmp) {
    Outcome o;
    const auto out = tmp / "stats.json";
    const int rc = run_cli(fmt::format(
        "stats --counts automotive:29486:566095 restaurant:27389:450703 hotel:30623:480522 --report \"{}\"",
        out.string()));
    o.require(rc == 0, fmt::format("exit code {}", rc));
    if (!o.ok) {
        return o;
    }
    const auto r = json::parse(read_text_file(out));
    const auto avg = [&](const json& row) { return row.at("avg_turns_per_dialogue_2dp").get<std::string>(); };
    o.require(avg(r["per_domain"]["automotive"]) == "19.20", "automotive " + avg(r["per_domain"]["automotive"]));
    o.require(avg(r["per_domain"]["restaurant"]) == "16.46", "restaurant " + avg(r["per_domain"]["restaurant"]));
    o.require(avg(r["per_domain"]["hotel"]) == "15.69", "hotel " + avg(r["per_domain"]["hotel"]));
    o.require(avg(r["total"]) == "17.11", "total " + avg(r["total"]));
    return o;
}

// Brute force: compare every turn's full state map, and count every triple.
std::pair<double, double> dst_oracle(const std::vector<evaluation::StateRecord>& gold,
                                     const std::vector<evaluation::StateRecord>& pred) {
    double exact = 0;
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        SlotMap g, p;
        for (const auto& [k, v] : gold[i].state) {
            g[normalize_value(k)] = normalize_value(v);
        }
        for (const auto& [k, v] : pred[i].state) {
            p[normalize_value(k)] = normalize_value(v);
        }
        exact += g == p ? 1 : 0;
        for (const auto& [k, v] : p) {
            auto it = g.find(k);
            (it != g.end() && it->second == v ? tp : fp) += 1;
        }
        for (const auto& [k, v] : g) {
            auto it = p.find(k);
            fn += (it == p.end() || it->second != v) ? 1 : 0;
        }
    }
    const double jga = gold.empty() ? 0.0 : 100.0 * exact / static_cast<double>(gold.size());
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 = prec + rec > 0 ? 100.0 * 2 * prec * rec / (prec + rec) : 0.0;
    return {jga, f1};
}

Outcome dst_random() {
    Outcome o;
    std::mt19937_64 gen(2024);
    const std::vector<std::string> values{"a", "b", "c", " A ", "d"};
    for (int instance = 0; instance < 100; ++instance) {
        const std::size_t dialogues = 1 + gen() % 10;
        const std::size_t slot_count = 1 + gen() % 6;
        std::vector<evaluation::StateRecord> gold, pred;
        for (std::size_t d = 0; d < dialogues; ++d) {
            const std::size_t turns = 1 + gen() % 8;
            for (std::size_t t = 0; t < turns; ++t) {
                evaluation::StateRecord g{"d" + std::to_string(d), 2 * t, {}};
                evaluation::StateRecord p = g;
                for (std::size_t s = 0; s < slot_count; ++s) {
                    const auto name = "slot" + std::to_string(s);
                    if (gen() % 2) {
                        g.state[name] = values[gen() % values.size()];
                    }
                    if (gen() % 2) {
                        p.state[name] = values[gen() % values.size()];
                    }
                }
                gold.push_back(g);
                pred.push_back(p);
            }
        }
        const auto [jga, f1] = dst_oracle(gold, pred);
        auto shuffled = pred;
        std::shuffle(shuffled.begin(), shuffled.end(), gen);
        const auto s = evaluation::evaluate_dst(gold, shuffled);
        o.require(std::abs(s.jga - jga) < 1e-9, fmt::format("instance {} jga {} vs {}", instance, s.jga, jga));
        o.require(std::abs(s.f1 - f1) < 1e-9, fmt::format("instance {} f1 {} vs {}", instance, s.f1, f1));
    }
    return o;
}

Outcome graph_trials() {
    Outcome o;
    std::mt19937_64 gen(77);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(-0.5, 0.9);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + gen() % 12;
        const std::size_t dim = 2 + gen() % 4;
        std::vector<filter::DialogueRepresentation> reps;
        for (std::size_t i = 0; i < n; ++i) {
            retrieval::Embedding u(dim), a(dim);
            for (auto& x : u) {
                x = nd(gen);
            }
            for (auto& x : a) {
                x = nd(gen);
            }
            retrieval::l2_normalize(u);
            retrieval::l2_normalize(a);
            reps.push_back({"d" + std::to_string(i), u, a});
        }
        const double tu = ud(gen);
        const double ta = ud(gen);
        const double rho = 0.05 + 0.95 * std::uniform_real_distribution<double>(0, 1)(gen);

        std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
        std::vector<std::pair<std::size_t, std::size_t>> want_edges;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double cu = std::inner_product(reps[i].user_vec.begin(), reps[i].user_vec.end(),
                                                     reps[j].user_vec.begin(), 0.0);
                const double ca = std::inner_product(reps[i].agent_vec.begin(), reps[i].agent_vec.end(),
                                                     reps[j].agent_vec.begin(), 0.0);
                if (cu > tu && ca > ta) {
                    want_edges.emplace_back(i, j);
                    adj[i][j] = adj[j][i] = true;
                }
            }
        }
        const auto g = filter::build_similarity_graph(reps, tu, ta);
        o.require(g.edges == want_edges, fmt::format("trial {}: edge set differs", trial));

        // Reachability oracle: transitive closure by repeated relaxation.
        auto reach = adj;
        for (std::size_t i = 0; i < n; ++i) {
            reach[i][i] = true;
        }
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    reach[i][j] = reach[i][j] || (reach[i][k] && reach[k][j]);
                }
            }
        }
        std::set<std::vector<std::size_t>> want_parts;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<std::size_t> c;
            for (std::size_t j = 0; j < n; ++j) {
                if (reach[i][j]) {
                    c.push_back(j);
                }
            }
            want_parts.insert(c);
        }
        const auto parts = filter::detect_communities(g, filter::CommunityMethod::connected_components, trial);
        o.require(std::set<std::vector<std::size_t>>(parts.begin(), parts.end()) == want_parts &&
                      parts.size() == want_parts.size(),
                  fmt::format("trial {}: components differ", trial));

        std::size_t want_kept = 0;
        for (const auto& c : want_parts) {
            // Smallest integer m with m >= rho * |C|, counted upward.
            std::size_t m = 0;
            while (static_cast<double>(m) < rho * static_cast<double>(c.size()) - 1e-9) {
                ++m;
            }
            want_kept += m;
        }
        const auto kept = filter::proportional_sample(parts, rho, trial);
        o.require(kept.size() == want_kept,
                  fmt::format("trial {}: kept {} expected {}", trial, kept.size(), want_kept));
    }
    return o;
}

std::map<std::string, std::string> digest_tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file()) {
            out[e.path().filename().string()] = file_sha256(e.path());
        }
    }
    return out;
}

Outcome mock_sessions(const fs::path& tmp) {
    Outcome o;
    const auto root = tmp / "fx";
    sftest::copy_fixtures(root);
    const auto raw = json::parse(read_text_file(root / "config.json"));
    const auto cfg = config::parse_config(raw, root);
    const auto out = cfg.paths.out_dir;
    const auto first = orchestrator::run_pipeline(cfg, orchestrator::all_phases(), raw);
    o.require(first.ok, "pipeline failed: " + first.manifest.value("failed_phase", std::string{}));
    if (!o.ok) {
        return o;
    }
    const auto personas = PersonaStore::load(out / orchestrator::files::user_personas,
                                             out / orchestrator::files::agent_personas);
    const auto blueprints = BlueprintStore::load(out / orchestrator::files::blueprints);
    const auto rows = read_jsonl_raw(out / orchestrator::files::raw_dialogues);
    o.require(rows.size() == 50, fmt::format("{} sessions instead of 50", rows.size()));
    const std::size_t cap = cfg.generation.limits.max_turns;
    for (const auto& row : rows) {
        const auto report = validate_quadruplet(row, personas, blueprints);
        o.require(report.ok(), report.summary());
        const auto s = row.get<SessionQuadruplet>();
        o.require(s.history.size() <= cap, fmt::format("{} has {} turns", s.dialogue_id, s.history.size()));
        for (std::size_t i = 0; i < s.history.size(); ++i) {
            o.require(s.history[i].role == (i % 2 == 0 ? Role::user : Role::agent),
                      s.dialogue_id + ": roles do not alternate");
        }
    }
    const auto before = digest_tree(out);
    fs::remove_all(out);
    const auto second = orchestrator::run_pipeline(cfg, orchestrator::all_phases(), raw);
    o.require(second.ok, "rerun failed");
    o.require(digest_tree(out) == before, "rerun produced different bytes");
    return o;
}

Outcome topk_exact() {
    Outcome o;
    const retrieval::OfflineHashProvider provider;
    const std::vector<std::string> words{"price", "seat",  "fuel",   "hybrid", "room",   "table",
                                         "area",  "suv",   "budget", "nights", "drive",  "booking",
                                         "menu",  "range", "view",   "parking", "family", "discount"};
    std::mt19937_64 gen(4242);
    const auto sentence = [&](std::size_t n) {
        std::string s;
        for (std::size_t i = 0; i < 3 + gen() % 6; ++i) {
            s += words[gen() % words.size()] + " ";
        }
        return s + std::to_string(n);
    };
    retrieval::RetrievalPool pool(provider.dim());
    std::vector<retrieval::Embedding> vecs;
    for (std::size_t i = 0; i < 1000; ++i) {
        vecs.push_back(provider.embed(sentence(i)));
        pool.add({fmt::format("v{:04}", i), "", vecs.back(), json::object()});
    }
    for (int q = 0; q < 20; ++q) {
        const auto query = provider.embed(sentence(5000 + q));
        std::vector<std::pair<double, std::size_t>> scan;
        for (std::size_t i = 0; i < vecs.size(); ++i) {
            double d = 0, nv = 0, nq = 0;
            for (std::size_t j = 0; j < query.size(); ++j) {
                d += vecs[i][j] * query[j];
                nv += vecs[i][j] * vecs[i][j];
                nq += query[j] * query[j];
            }
            scan.emplace_back(d / std::sqrt(nv * nq), i);
        }
        std::sort(scan.begin(), scan.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        for (std::size_t k : {1u, 5u, 50u}) {
            const auto got = pool.top_k(query, k);
            o.require(got.size() == k, "wrong result size");
            for (std::size_t i = 0; i < std::min(k, got.size()); ++i) {
                o.require(got[i].index == scan[i].second, fmt::format("query {} k {} rank {} differs", q, k, i));
            }
        }
    }
    return o;
}

SessionQuadruplet judge_session(const std::string& id, const std::string& text) {
    SessionQuadruplet s;
    s.dialogue_id = id;
    s.domain = Domain::parse("restaurant");
    s.history = {{0, Role::user, text, SlotMap{{"cuisine", "cantonese"}}, {}, {}, {}},
                 {1, Role::agent, "We have a table at seven.", {}, {}, {}, {}}};
    return s;
}

Outcome judge_protocol() {
    Outcome o;
    std::vector<evaluation::JudgeSource> sources;
    const std::vector<std::string> labels{"corpus_human", "corpus_single_model", "corpus_pipeline"};
    for (std::size_t l = 0; l < labels.size(); ++l) {
        evaluation::JudgeSource src{labels[l], {}};
        for (int i = 0; i < 10; ++i) {
            src.sessions.push_back(judge_session(fmt::format("{}-{}", l, i), fmt::format("Table for {} please", i + 2)));
        }
        sources.push_back(src);
    }
    const auto batch = evaluation::export_judge_batch(sources, 99);
    const auto text = evaluation::serialize_batch(batch);
    for (const auto& l : labels) {
        o.require(text.find(l) == std::string::npos, "label bytes found: " + l);
    }
    o.require(evaluation::serialize_batch(evaluation::export_judge_batch(sources, 99)) == text,
              "same seed gave a different batch");
    o.require(json(evaluation::export_judge_batch(sources, 100).key) != json(batch.key),
              "different seed gave the same permutation");
    std::vector<std::string> natural_order;
    for (const auto& k : batch.key["items"]) {
        natural_order.push_back(k["dialogue_id"].get<std::string>());
    }
    o.require(!std::is_sorted(natural_order.begin(), natural_order.end()), "batch is not shuffled");

    // Each judge scores every item with a per-source constant; aggregation must
    // recover those constants per source.
    const std::map<std::string, int> truth{{labels[0], 9}, {labels[1], 3}, {labels[2], 6}};
    std::map<std::size_t, std::string> source_of;
    for (const auto& k : batch.key["items"]) {
        source_of[k["item"].get<std::size_t>()] = k["source"].get<std::string>();
    }
    std::vector<json> lines;
    for (const auto& item : batch.items) {
        const auto n = item["item"].get<std::size_t>();
        for (const char* judge : {"judge_a", "judge_b"}) {
            json scores;
            for (const char* d : evaluation::judge_dimensions) {
                scores[d] = truth.at(source_of.at(n)) + (std::string(judge) == "judge_b" ? 1 : 0);
            }
            lines.push_back({{"item", n}, {"judge", judge}, {"scores", scores}});
        }
    }
    const auto agg = evaluation::aggregate_judge_scores(lines, batch.key);
    for (const auto& [label, score] : truth) {
        for (const char* d : evaluation::judge_dimensions) {
            o.require(agg.means.at(label).at(d).at("judge_a") == score, label + " misattributed");
            o.require(agg.means.at(label).at(d).at("judge_b") == score + 1, label + " misattributed");
        }
    }
    o.require(agg.missing.empty(), "unexpected missing cells");
    return o;
}

Outcome budget_mix(const fs::path& tmp) {
    Outcome o;
    {
        std::ostringstream pub, syn;
        for (int i = 0; i < 2500; ++i) {
            pub << json{{"dialogue_id", fmt::format("pub-{}", i)}}.dump() << '\n';
        }
        for (int i = 0; i < 1200; ++i) {
            syn << json{{"dialogue_id", fmt::format("syn-{}", i)}}.dump() << '\n';
        }
        write_text_file(tmp / "public.jsonl", pub.str());
        write_text_file(tmp / "synthetic.jsonl", syn.str());
    }
    const auto check = [&](double ratio, std::size_t want_pub, std::size_t want_syn, const std::string& tag) {
        const auto out = tmp / ("mix_" + tag + ".jsonl");
        const auto manifest = tmp / ("mix_" + tag + ".manifest.json");
        const int rc = run_cli(fmt::format(
            "eval mix --public \"{}\" --synthetic \"{}\" --budget 2000 --ratio {} --out \"{}\" --manifest \"{}\"",
            (tmp / "public.jsonl").string(), (tmp / "synthetic.jsonl").string(), ratio, out.string(),
            manifest.string()));
        o.require(rc == 0, fmt::format("ratio {}: exit code {}", ratio, rc));
        if (rc != 0) {
            return;
        }
        o.require(fs::exists(manifest), "manifest not written");
        std::size_t pub = 0, syn = 0;
        std::set<std::string> ids;
        for (const auto& row : read_jsonl_raw(out)) {
            const auto id = row["dialogue_id"].get<std::string>();
            ids.insert(id);
            (id.rfind("pub-", 0) == 0 ? pub : syn) += 1;
        }
        o.require(pub == want_pub && syn == want_syn,
                  fmt::format("ratio {}: {} public + {} synthetic", ratio, pub, syn));
        o.require(ids.size() == pub + syn, "duplicate records");
        const auto m = json::parse(read_text_file(manifest));
        o.require(m["public_count"] == want_pub && m["synthetic_count"] == want_syn, "manifest counts differ");
    };
    check(0.5, 1000, 1000, "half");
    check(0.0, 2000, 0, "zero");
    return o;
}

} // namespace

int main() {
    spdlog::set_level(spdlog::level::err);
    sftest::TempDir tmp("sf-accept");

    struct Criterion {
        int id;
        const char* name;
        double limit_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "slot coverage variance and average values", 1.0, [&] { return slot_table(tmp.path()); }},
        {2, "average turns per dialogue", 1.0, [&] { return dataset_stats(tmp.path()); }},
        {3, "JGA and slot F1 against brute force", 10.0, dst_random},
        {4, "similarity graph, components, retained counts", 30.0, graph_trials},
        {5, "mock sessions valid and reproducible", 120.0, [&] { return mock_sessions(tmp.path()); }},
        {6, "top-k equals exhaustive scan", 5.0, topk_exact},
        {7, "judge export anonymity and attribution", 5.0, judge_protocol},
        {8, "budgeted training mix", 1.0, [&] { return budget_mix(tmp.path()); }},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.ok = false;
            o.detail = e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (o.ok && secs > c.limit_s) {
            o.ok = false;
            o.detail = fmt::format("took {:.3f}s, limit {:.0f}s", secs, c.limit_s);
        }
        failures += o.ok ? 0 : 1;
        fmt::print("{} criterion {}: {} ({:.3f}s){}\n", o.ok ? "PASS" : "FAIL", c.id, c.name, secs,
                   o.ok ? "" : " - " + o.detail);
    }
    return failures == 0 ? 0 : 1;
}
