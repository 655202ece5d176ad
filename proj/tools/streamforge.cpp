#include "streamforge/blueprint.hpp"
#include "streamforge/config.hpp"
#include "streamforge/evaluation.hpp"
#include "streamforge/filter.hpp"
#include "streamforge/generation.hpp"
#include "streamforge/ingest.hpp"
#include "streamforge/orchestrator.hpp"
#include "streamforge/persona.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>

using namespace streamforge;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string config_path;
    std::string mode;
    std::string log_level = "warn";
    std::optional<std::uint64_t> seed;
};

config::RunConfig load(const Globals& g, json* raw = nullptr) {
    json j = json::object();
    fs::path base;
    if (!g.config_path.empty()) {
        try {
            j = json::parse(read_text_file(g.config_path));
        } catch (const json::exception& e) {
            throw ConfigError(g.config_path + ": " + e.what());
        }
        base = fs::path(g.config_path).parent_path();
    }
    auto cfg = config::parse_config(j, base);
    if (!g.mode.empty()) {
        cfg.gateway.mode = gateway::parse_mode(g.mode);
        j["gateway"]["mode"] = g.mode;
    }
    if (g.seed) {
        cfg.seed = *g.seed;
        j["seed"] = *g.seed;
    }
    if (raw != nullptr) {
        *raw = j;
    }
    return cfg;
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
}

template <typename T>
void save(const fs::path& p, const std::vector<T>& rows) {
    ensure_parent(p);
    write_jsonl(p, rows);
}

void save_json(const fs::path& p, const json& j) {
    ensure_parent(p);
    write_text_file(p, j.dump(2) + "\n");
}

retrieval::KnowledgeBase load_kb(const std::string& flag, const config::RunConfig& cfg) {
    const fs::path p = flag.empty() ? cfg.paths.kb : fs::path(flag);
    return p.empty() ? retrieval::KnowledgeBase("kb") : retrieval::KnowledgeBase::load(p);
}

std::string pick(const std::string& flag, const fs::path& fallback, const char* what) {
    if (!flag.empty()) {
        return flag;
    }
    if (fallback.empty()) {
        throw ConfigError(std::string(what) + " is required");
    }
    return fallback.string();
}

std::vector<json> read_pool(const std::string& path) {
    if (fs::path(path).extension() == ".json") {
        const json j = json::parse(read_text_file(path));
        return j.get<std::vector<json>>();
    }
    return read_jsonl_raw(path);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"streamforge: task-oriented dialogue dataset pipeline"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand
    Globals g;
    app.add_option("--config", g.config_path, "Run configuration (JSON)");
    app.add_option("--mode", g.mode, "Gateway mode")->check(CLI::IsMember({"mock", "replay", "record", "live"}));
    app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off");
    std::function<int()> action;

    // ingest -----------------------------------------------------------------
    auto* ingest_cmd = app.add_subcommand("ingest", "Filter sources and extract interaction signals");
    std::string sources_dir, signals_out, ingest_kb, source_rejects;
    std::vector<std::string> lexicons;
    ingest_cmd->add_option("--sources", sources_dir, "Directory of exported source archives");
    ingest_cmd->add_option("--out", signals_out, "Signals JSONL")->required();
    ingest_cmd->add_option("--kb", ingest_kb, "Knowledge base JSONL");
    ingest_cmd->add_option("--lexicon", lexicons, "Lexicon TSV (repeatable)");
    ingest_cmd->add_option("--rejections", source_rejects, "Rejected sources JSONL");
    ingest_cmd->callback([&] {
        action = [&] {
            auto cfg = load(g);
            auto rt = orchestrator::Runtime::create(cfg);
            auto icfg = cfg.ingest;
            for (const auto& lx : cfg.paths.lexicons) {
                icfg.lexicons.push_back(ingest::DomainLexicon::load_tsv(lx.path, lx.scope));
            }
            for (const auto& lx : lexicons) {
                icfg.lexicons.push_back(ingest::DomainLexicon::load_tsv(lx));
            }
            const auto kb = load_kb(ingest_kb, cfg);
            const auto result = ingest::ingest_sources(pick(sources_dir, cfg.paths.sources, "--sources"), icfg,
                                                       *rt.provider, kb, rt.gateway.get());
            save(signals_out, result.signals);
            if (!source_rejects.empty()) {
                std::vector<json> rows;
                for (const auto& r : result.rejected) {
                    rows.push_back({{"source_id", r.source_id}, {"reason", r.reason}});
                }
                save(source_rejects, rows);
            }
            rt.finish(cfg);
            fmt::print("sources {}  retained {}  rejected {}\n", result.sources_seen, result.signals.size(),
                       result.rejected.size());
            return 0;
        };
    });

    // personas ---------------------------------------------------------------
    auto* personas_cmd = app.add_subcommand("personas", "Synthesize user and agent personas");
    std::string p_signals, p_seeds, p_out_user, p_out_agent, p_kb, p_rejects;
    personas_cmd->add_option("--signals", p_signals)->required();
    personas_cmd->add_option("--seeds", p_seeds);
    personas_cmd->add_option("--out-user", p_out_user)->required();
    personas_cmd->add_option("--out-agent", p_out_agent)->required();
    personas_cmd->add_option("--kb", p_kb);
    personas_cmd->add_option("--rejections", p_rejects);
    personas_cmd->add_option("--seed", g.seed);
    personas_cmd->callback([&] {
        action = [&] {
            auto cfg = load(g);
            auto rt = orchestrator::Runtime::create(cfg);
            const auto signals = read_jsonl<ingest::AtomicSignals>(p_signals);
            const auto seeds = read_jsonl<SeedDialogue>(pick(p_seeds, cfg.paths.seeds, "--seeds"));
            const auto kb = load_kb(p_kb, cfg);
            const auto result = persona::build_personas(signals, seeds, cfg.persona, cfg.ontology, kb.id(), *rt.gateway,
                                                        derive_seed(cfg.seed, "personas"));
            save(p_out_user, result.users);
            save(p_out_agent, result.agents);
            if (!p_rejects.empty()) {
                save(p_rejects, result.rejections);
            }
            rt.finish(cfg);
            fmt::print("users {}  agents {}  rejected {}\n", result.users.size(), result.agents.size(),
                       result.rejections.size());
            return 0;
        };
    });

    // blueprint --------------------------------------------------------------
    auto* bp_cmd = app.add_subcommand("blueprint", "Build conversational blueprints from strategy tags");
    std::string b_tags, b_agents, b_seeds, b_out, b_rejects;
    bp_cmd->add_option("--tags", b_tags, "Signals JSONL carrying strategy tags")->required();
    bp_cmd->add_option("--agents", b_agents)->required();
    bp_cmd->add_option("--seeds", b_seeds);
    bp_cmd->add_option("--out", b_out)->required();
    bp_cmd->add_option("--rejections", b_rejects);
    bp_cmd->add_option("--seed", g.seed);
    bp_cmd->callback([&] {
        action = [&] {
            auto cfg = load(g);
            auto rt = orchestrator::Runtime::create(cfg);
            const auto signals = read_jsonl<ingest::AtomicSignals>(b_tags);
            const auto agents = read_jsonl<AgentPersona>(b_agents);
            std::vector<SeedDialogue> seeds;
            if (!b_seeds.empty() || !cfg.paths.seeds.empty()) {
                seeds = read_jsonl<SeedDialogue>(pick(b_seeds, cfg.paths.seeds, "--seeds"));
            }
            const auto result = blueprint::build_blueprints(signals, agents, seeds, cfg.blueprint, cfg.stage_order,
                                                            cfg.ontology, *rt.gateway, derive_seed(cfg.seed, "blueprint"));
            save(b_out, result.blueprints);
            if (!b_rejects.empty()) {
                save(b_rejects, result.rejections);
            }
            rt.finish(cfg);
            fmt::print("blueprints {}  rejected {}\n", result.blueprints.size(), result.rejections.size());
            return 0;
        };
    });

    // generate ---------------------------------------------------------------
    auto* gen_cmd = app.add_subcommand("generate", "Run the user/agent generation loop");
    std::string gu, ga, gb, gs, gk, gsig, gout, gabort;
    std::optional<std::size_t> gn;
    gen_cmd->add_option("--user-personas", gu)->required();
    gen_cmd->add_option("--agent-personas", ga)->required();
    gen_cmd->add_option("--blueprints", gb)->required();
    gen_cmd->add_option("--seeds", gs);
    gen_cmd->add_option("--kb", gk);
    gen_cmd->add_option("--signals", gsig, "Signals JSONL whose QA pairs join the expert-answer pool");
    gen_cmd->add_option("--n", gn, "Number of sessions");
    gen_cmd->add_option("--seed", g.seed);
    gen_cmd->add_option("--out", gout)->required();
    gen_cmd->add_option("--aborted", gabort, "Aborted sessions JSONL");
    gen_cmd->callback([&] {
        action = [&] {
            auto cfg = load(g);
            if (gn) {
                cfg.generation.sessions = *gn;
            }
            auto rt = orchestrator::Runtime::create(cfg);
            const auto users = read_jsonl<UserPersona>(gu);
            const auto agents = read_jsonl<AgentPersona>(ga);
            const auto blueprints = read_jsonl<Blueprint>(gb);
            const auto seeds = read_jsonl<SeedDialogue>(pick(gs, cfg.paths.seeds, "--seeds"));
            std::vector<ingest::AtomicSignals> signals;
            if (!gsig.empty()) {
                signals = read_jsonl<ingest::AtomicSignals>(gsig);
            }
            const auto kb = load_kb(gk, cfg);
            const generation::CachedProvider cached(*rt.provider);
            const auto pools = generation::GenerationPools::build(signals, seeds, cached);
            const auto result = generation::run_generation(users, agents, blueprints, pools, kb, cfg.ontology, cached,
                                                           *rt.gateway, cfg.generation, derive_seed(cfg.seed, "generate"));
            save(gout, result.sessions);
            if (!gabort.empty()) {
                save(gabort, result.aborted);
            }
            rt.finish(cfg);
            fmt::print("sessions {}  aborted {}\n", result.sessions.size(), result.aborted.size());
            return 0;
        };
    });

    // filter -----------------------------------------------------------------
    auto* filter_cmd = app.add_subcommand("filter", "Similarity-graph redundancy filtering");
    std::string f_in, f_out, f_report, f_method;
    std::optional<double> f_tau_u, f_tau_a, f_rho;
    filter_cmd->add_option("--in", f_in)->required();
    filter_cmd->add_option("--out", f_out)->required();
    filter_cmd->add_option("--report", f_report);
    filter_cmd->add_option("--tau-u", f_tau_u);
    filter_cmd->add_option("--tau-a", f_tau_a);
    filter_cmd->add_option("--rho", f_rho);
    filter_cmd->add_option("--method", f_method)->check(
        CLI::IsMember({"components", "connected_components", "label_propagation"}));
    filter_cmd->add_option("--seed", g.seed);
    filter_cmd->callback([&] {
        action = [&] {
            auto cfg = load(g);
            auto fcfg = cfg.filter;
            fcfg.tau_user = f_tau_u.value_or(fcfg.tau_user);
            fcfg.tau_agent = f_tau_a.value_or(fcfg.tau_agent);
            fcfg.rho = f_rho.value_or(fcfg.rho);
            if (!f_method.empty()) {
                fcfg.method = filter::parse_method(f_method);
            }
            const auto provider = retrieval::make_provider(cfg.embedding);
            const auto dialogues = read_jsonl<SessionQuadruplet>(f_in);
            const auto result = filter::filter_dialogues(dialogues, *provider, fcfg, derive_seed(cfg.seed, "filter"));
            save(f_out, result.retained);
            if (!f_report.empty()) {
                save_json(f_report, result.report);
            }
            fmt::print("input {}  retained {}  communities {}\n", dialogues.size(), result.retained.size(),
                       result.report.at("communities").get<std::size_t>());
            return 0;
        };
    });

    // eval -------------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "Evaluation tools");
    eval_cmd->require_subcommand(1);

    auto* dst_cmd = eval_cmd->add_subcommand("dst", "Joint goal accuracy and slot-value F1");
    std::string dst_gold, dst_pred, dst_out;
    dst_cmd->add_option("--gold", dst_gold)->required();
    dst_cmd->add_option("--pred", dst_pred)->required();
    dst_cmd->add_option("--out", dst_out);
    dst_cmd->callback([&] {
        action = [&] {
            const auto gold = read_jsonl<evaluation::StateRecord>(dst_gold);
            const auto pred = read_jsonl<evaluation::StateRecord>(dst_pred);
            const auto s = evaluation::evaluate_dst(gold, pred);
            fmt::print("JGA {:.2f}  F1 {:.2f}  P {:.2f}  R {:.2f}  turns {}\n", s.jga, s.f1, s.precision, s.recall,
                       s.turns);
            if (!dst_out.empty()) {
                save_json(dst_out, s);
            }
            return 0;
        };
    });

    auto* gold_cmd = eval_cmd->add_subcommand("dst-gold", "Cumulative gold states from a dataset");
    std::string gold_in, gold_out;
    gold_cmd->add_option("--in", gold_in)->required();
    gold_cmd->add_option("--out", gold_out)->required();
    gold_cmd->callback([&] {
        action = [&] {
            const auto sessions = read_jsonl<SessionQuadruplet>(gold_in);
            save(gold_out, evaluation::gold_states(sessions));
            return 0;
        };
    });

    auto* slots_cmd = eval_cmd->add_subcommand("slots", "Slot coverage and value diversity");
    std::string slots_in, slots_table, slots_ontology, slots_domain, slots_out;
    slots_cmd->add_option("--in", slots_in, "Dataset JSONL");
    slots_cmd->add_option("--table", slots_table, "Precomputed coverage/value columns (JSON)");
    slots_cmd->add_option("--ontology", slots_ontology, "Ontology JSON (domain -> slots)");
    slots_cmd->add_option("--domain", slots_domain);
    slots_cmd->add_option("--out", slots_out);
    slots_cmd->callback([&] {
        action = [&] {
            std::map<std::string, evaluation::SlotDistributionTable> tables;
            if (!slots_table.empty()) {
                tables = evaluation::slot_tables_from_json(json::parse(read_text_file(slots_table)));
            } else if (!slots_in.empty()) {
                auto cfg = load(g);
                profile::Ontology ontology = cfg.ontology;
                if (!slots_ontology.empty()) {
                    ontology = profile::Ontology::from_json(json::parse(read_text_file(slots_ontology)));
                }
                const auto sessions = read_jsonl<SessionQuadruplet>(slots_in);
                std::set<std::string> domains;
                if (!slots_domain.empty()) {
                    domains.insert(slots_domain);
                } else {
                    for (const auto& s : sessions) {
                        domains.insert(s.domain.name());
                    }
                }
                for (const auto& name : domains) {
                    const Domain d = Domain::parse(name);
                    std::vector<SessionQuadruplet> subset;
                    for (const auto& s : sessions) {
                        if (s.domain == d) {
                            subset.push_back(s);
                        }
                    }
                    if (!ontology.slots(d).empty()) {
                        tables.emplace(name, evaluation::slot_distribution(subset, ontology.slots(d)));
                    }
                }
            } else {
                throw ConfigError("eval slots needs --in or --table");
            }
            json report = json::object();
            for (const auto& [name, t] : tables) {
                const std::string label = name.empty() ? "table" : name;
                fmt::print("{:<12} coverage_variance {:.2f}  avg_values {:.2f}\n", label, t.coverage_variance,
                           t.avg_values);
                report[label] = t;
            }
            if (!slots_out.empty()) {
                save_json(slots_out, report);
            }
            return 0;
        };
    });

    auto* mix_cmd = eval_cmd->add_subcommand("mix", "Budget-controlled training-set mixing");
    std::string mix_public, mix_synth, mix_out, mix_manifest;
    std::size_t mix_budget = 2000;
    double mix_ratio = 0.5;
    std::uint64_t mix_seed = 7;
    mix_cmd->add_option("--public", mix_public)->required();
    mix_cmd->add_option("--synthetic", mix_synth)->required();
    mix_cmd->add_option("--budget", mix_budget);
    mix_cmd->add_option("--ratio", mix_ratio);
    mix_cmd->add_option("--seed", mix_seed);
    mix_cmd->add_option("--out", mix_out);
    mix_cmd->add_option("--manifest", mix_manifest);
    mix_cmd->callback([&] {
        action = [&] {
            const auto pub = read_pool(mix_public);
            const auto syn = read_pool(mix_synth);
            auto result = evaluation::mix_training_budget(pub, syn, mix_budget, mix_ratio, mix_seed);
            result.manifest["public_file"] = {{"path", mix_public}, {"sha256", file_sha256(mix_public)}};
            result.manifest["synthetic_file"] = {{"path", mix_synth}, {"sha256", file_sha256(mix_synth)}};
            if (!mix_out.empty()) {
                save(mix_out, result.items);
                const fs::path manifest_path =
                    mix_manifest.empty() ? fs::path(mix_out).replace_extension(".manifest.json") : fs::path(mix_manifest);
                save_json(manifest_path, result.manifest);
            } else if (!mix_manifest.empty()) {
                save_json(mix_manifest, result.manifest);
            }
            fmt::print("public {}  synthetic {}  total {}\n", result.manifest.at("public_count").get<std::size_t>(),
                       result.manifest.at("synthetic_count").get<std::size_t>(), result.items.size());
            return 0;
        };
    });

    auto* jex_cmd = eval_cmd->add_subcommand("judge-export", "Anonymized, shuffled batch for judging");
    std::vector<std::string> jex_in;
    std::string jex_out, jex_key;
    std::uint64_t jex_seed = 7;
    jex_cmd->add_option("--in", jex_in, "Dataset JSONL, optionally label=path (repeatable)")->required();
    jex_cmd->add_option("--seed", jex_seed);
    jex_cmd->add_option("--out", jex_out)->required();
    jex_cmd->add_option("--key", jex_key)->required();
    jex_cmd->callback([&] {
        action = [&] {
            std::vector<evaluation::JudgeSource> sources;
            for (const auto& arg : jex_in) {
                const auto eq = arg.find('=');
                const std::string path = eq == std::string::npos ? arg : arg.substr(eq + 1);
                const std::string label = eq == std::string::npos ? fs::path(arg).stem().string() : arg.substr(0, eq);
                sources.push_back({label, read_jsonl<SessionQuadruplet>(path)});
            }
            const auto batch = evaluation::export_judge_batch(sources, jex_seed);
            evaluation::write_judge_batch(batch, jex_out, jex_key);
            fmt::print("items {}  sources {}\n", batch.items.size(), sources.size());
            return 0;
        };
    });

    auto* jag_cmd = eval_cmd->add_subcommand("judge-aggregate", "Per-source, per-dimension judge means");
    std::vector<std::string> jag_scores;
    std::string jag_key, jag_out;
    jag_cmd->add_option("--scores", jag_scores, "Score JSONL (repeatable)")->required();
    jag_cmd->add_option("--key", jag_key)->required();
    jag_cmd->add_option("--out", jag_out);
    jag_cmd->callback([&] {
        action = [&] {
            std::vector<json> lines;
            for (const auto& f : jag_scores) {
                for (auto& j : read_jsonl_raw(f)) {
                    lines.push_back(std::move(j));
                }
            }
            const auto agg = evaluation::aggregate_judge_scores(lines, json::parse(read_text_file(jag_key)));
            for (const auto& [source, dims] : agg.means) {
                for (const auto& [dim, judges] : dims) {
                    for (const auto& [judge, mean] : judges) {
                        fmt::print("{:<16} {:<16} {:<16} {:.2f}\n", source, dim, judge, mean);
                    }
                }
            }
            if (!agg.missing.empty()) {
                fmt::print("missing scores: {}\n", agg.missing.size());
            }
            if (!jag_out.empty()) {
                save_json(jag_out, agg);
            }
            return 0;
        };
    });

    // stats ------------------------------------------------------------------
    auto* stats_cmd = app.add_subcommand("stats", "Dialogue and turn counts per domain");
    std::string stats_in, stats_report;
    std::vector<std::string> stats_counts;
    stats_cmd->add_option("--in", stats_in, "Dataset JSONL");
    stats_cmd->add_option("--counts", stats_counts, "domain:dialogues:turns (repeatable)");
    stats_cmd->add_option("--report", stats_report, "Machine-readable report (JSON)");
    stats_cmd->callback([&] {
        action = [&] {
            DatasetStats stats;
            if (!stats_in.empty()) {
                stats = compute_dataset_stats(fs::path(stats_in));
            }
            for (const auto& spec : stats_counts) {
                const auto parts = split(spec, ':');
                if (parts.size() != 3) {
                    throw ConfigError("--counts expects domain:dialogues:turns, got '" + spec + "'");
                }
                try {
                    stats.add_counts(parts[0], {std::stoull(parts[1]), std::stoull(parts[2])});
                } catch (const std::logic_error&) {
                    throw ConfigError("--counts expects integer counts, got '" + spec + "'");
                }
            }
            if (stats_in.empty() && stats_counts.empty()) {
                throw ConfigError("stats needs --in or --counts");
            }
            std::cout << stats.table();
            if (!stats_report.empty()) {
                save_json(stats_report, stats);
            }
            return 0;
        };
    });

    // run --------------------------------------------------------------------
    auto* run_cmd = app.add_subcommand("run", "Run pipeline phases from a config");
    std::vector<std::string> run_phases;
    run_cmd->add_option("--phases", run_phases, "Subset of ingest,personas,blueprint,generate,filter,eval")
        ->delimiter(',');
    run_cmd->add_option("--seed", g.seed);
    run_cmd->callback([&] {
        action = [&] {
            if (g.config_path.empty()) {
                throw ConfigError("run needs --config");
            }
            json raw;
            const auto cfg = load(g, &raw);
            std::vector<orchestrator::Phase> phases;
            for (const auto& p : run_phases) {
                phases.push_back(orchestrator::parse_phase(p));
            }
            if (phases.empty()) {
                phases = orchestrator::all_phases();
            }
            const auto outcome = orchestrator::run_pipeline(cfg, phases, raw);
            for (const auto& p : outcome.manifest.at("phases")) {
                fmt::print("{:<10} {}\n", p.at("phase").get<std::string>(), p.at("status").get<std::string>());
            }
            fmt::print("manifest {}\n", (cfg.paths.out_dir / orchestrator::files::manifest).string());
            return outcome.ok ? 0 : 1;
        };
    });

    auto* validate_cmd = app.add_subcommand("validate-config", "Check a config without running anything");
    validate_cmd->callback([&] {
        action = [&] {
            if (g.config_path.empty()) {
                throw ConfigError("validate-config needs --config");
            }
            const auto report = config::validate_config_file(g.config_path);
            for (const auto& v : report.violations) {
                fmt::print("{}: {}\n", v.code, v.detail);
            }
            if (report.ok()) {
                fmt::print("ok\n");
            }
            return report.ok() ? 0 : 1;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    auto logger = spdlog::stderr_color_mt("streamforge");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(g.log_level));

    try {
        return action ? action() : 1;
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
}
