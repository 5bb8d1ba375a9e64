// Command-line front end: synthesize audio, run the experiment grid, render
// reports, and validate specs. Every failure category maps to its own exit
// code with a single-line machine-parsable error on stderr.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ttsaug/corpus.hpp"
#include "ttsaug/errors.hpp"
#include "ttsaug/experiment_spec.hpp"
#include "ttsaug/reporting.hpp"
#include "ttsaug/stats.hpp"
#include "ttsaug/synthesis.hpp"
#include "ttsaug/training.hpp"
#include "ttsaug/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ttsaug;

namespace {

int exit_code_for(Errc c) {
    switch (c) {
        case Errc::config: return 2;
        case Errc::synthesis: return 3;
        case Errc::credentials: return 4;
        case Errc::corpus: return 5;
        case Errc::manifest_gap: return 6;
        case Errc::backend: return 7;
        case Errc::report: return 8;
        case Errc::io: return 9;
    }
    return 1;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ';');
    return s;
}

std::string money(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

struct Options {
    std::string spec_path;
    bool seed_set = false;
    uint64_t seed = 0;
    std::string output_dir;
    bool dry_run = false;
    bool print_config = false;
};

// Relative spec paths resolve against the spec file's directory, so a spec
// can sit next to its data and work from any working directory.
void resolve_paths(ExperimentSpec& spec, const fs::path& spec_file) {
    fs::path base = fs::absolute(spec_file).parent_path();
    auto resolve = [&](std::string& p) {
        if (!p.empty() && fs::path(p).is_relative())
            p = (base / p).lexically_normal().string();
    };
    resolve(spec.corpus_path);
    resolve(spec.output_dir);
}

ExperimentSpec load_for(const Options& opt) {
    ExperimentSpec spec = load_spec(opt.spec_path);
    resolve_paths(spec, opt.spec_path);
    if (opt.seed_set) {
        spec.seed = opt.seed;
        spec.train.seed = opt.seed;
    }
    if (!opt.output_dir.empty()) spec.output_dir = opt.output_dir;
    return spec;
}

std::vector<Sample> budget_subset(const Corpus& corpus, const ExperimentSpec& spec) {
    bool stratify = corpus.descriptor.label_spec.kind == LabelKind::categorical;
    return downsample_to_budget(corpus.samples, corpus.descriptor, spec.budget,
                                spec.rate_per_char, spec.seed, stratify);
}

fs::path slot_manifest_path(const ExperimentSpec& spec, const std::string& slot) {
    return fs::path(spec.output_dir) / "synthesis" / slot / "manifest.jsonl";
}

std::vector<std::string> engine_slots(const ExperimentSpec& spec) {
    std::vector<std::string> slots;
    for (AudioSource src : spec.sources) {
        if (src != AudioSource::local && src != AudioSource::remote) continue;
        std::string slot = audio_source_name(src);
        if (spec.engines.count(slot)) slots.push_back(slot);
    }
    return slots;
}

size_t count_completed(const fs::path& run_root) {
    if (!fs::is_directory(run_root)) return 0;
    size_t n = 0;
    for (const auto& entry : fs::directory_iterator(run_root))
        if (entry.is_directory() && fs::exists(entry.path() / "result.json")) ++n;
    return n;
}

int cmd_validate(const ExperimentSpec& spec) {
    Corpus corpus = load_corpus(spec.corpus_name, spec.corpus_path);
    std::vector<Violation> violations = validate_corpus(corpus.descriptor, corpus.samples);
    std::cout << "spec OK: corpus " << spec.corpus_name << " (" << corpus.samples.size()
              << " samples, metric " << metric_name(corpus.descriptor.metric) << ", "
              << (corpus.descriptor.has_canonical_split
                      ? "seeds x" + std::to_string(spec.canonical_seeds.size())
                      : std::to_string(spec.folds) + "-fold")
              << ")\n";
    for (const Violation& v : violations)
        std::cout << "violation " << v.kind << " " << v.sample_id << ": " << v.message << "\n";
    if (!violations.empty())
        throw Error(Errc::corpus, "corpus validation found " + std::to_string(violations.size()) +
                                      " violation(s)");
    std::cout << "corpus OK: no violations\n";
    return 0;
}

int cmd_synthesize(const ExperimentSpec& spec, bool dry_run) {
    Corpus corpus = load_corpus(spec.corpus_name, spec.corpus_path);
    std::vector<Sample> subset = budget_subset(corpus, spec);
    std::vector<std::string> slots = engine_slots(spec);
    std::cout << "corpus " << spec.corpus_name << ": " << corpus.samples.size() << " samples, "
              << subset.size() << " within budget " << money(spec.budget) << "\n";
    if (slots.empty()) {
        std::cout << "no engine sources configured; nothing to synthesize\n";
        return 0;
    }

    // All engines come up before any synthesis, so a missing credential
    // fails fast instead of surfacing after another slot already spent.
    std::map<std::string, std::unique_ptr<TtsEngine>> engines;
    if (!dry_run)
        for (const std::string& slot : slots)
            engines.emplace(slot, make_engine(spec.engines.at(slot)));

    size_t aborted_total = 0;
    for (const std::string& slot : slots) {
        const EngineConfig& cfg = spec.engines.at(slot);
        fs::path manifest_file = slot_manifest_path(spec, slot);
        if (dry_run) {
            // Read-only pass: count unique uncached keys without touching disk.
            std::unique_ptr<AudioManifest> manifest;
            if (fs::exists(manifest_file))
                manifest = std::make_unique<AudioManifest>(manifest_file);
            std::set<std::string> planned;
            size_t cached = 0, empty = 0, chars = 0;
            for (const Sample& sample : subset) {
                std::string text = trim(select_target_text(sample, corpus.descriptor));
                if (text.empty()) {
                    ++empty;
                    continue;
                }
                std::string key =
                    cache_key(cfg.engine_id, cfg.model_name, cfg.voice, content_digest(text));
                if (manifest && manifest->find(key)) {
                    ++cached;
                } else if (planned.insert(key).second) {
                    chars += text.size();
                }
            }
            std::cout << "[dry-run] engine " << slot << " (" << cfg.engine_id << ":"
                      << cfg.model_name << "): " << planned.size() << " new requests (" << chars
                      << " chars, cost " << money(chars * spec.rate_per_char) << "), " << cached
                      << " cache hits, " << empty << " empty\n";
            continue;
        }
        AudioManifest manifest(manifest_file);
        SynthesisReport report =
            synthesize_corpus(subset, corpus.descriptor.select_rule, *engines.at(slot), cfg,
                              manifest, spec.rate_per_char, spec.budget,
                              spec.synthesis_parallelism);
        std::cout << "engine " << slot << " (" << cfg.engine_id << ":" << cfg.model_name
                  << "): " << report.synthesized << " new requests ("
                  << report.chars_synthesized << " chars, spent " << money(report.cost_spent)
                  << "), " << report.cached << " cache hits, " << report.failed << " failed, "
                  << report.aborted << " budget-aborted\n";
        aborted_total += report.aborted;
    }
    if (dry_run) {
        std::cout << "dry-run: no files written\n";
        return 0;
    }
    if (aborted_total > 0)
        throw Error(Errc::synthesis, "budget exhausted: " + std::to_string(aborted_total) +
                                         " sample(s) aborted; partial manifest preserved");
    return 0;
}

struct PlannedCell {
    FusionMode mode = FusionMode::text_only;
    AudioSource source = AudioSource::none;
};

std::vector<PlannedCell> planned_cells(const ExperimentSpec& spec) {
    std::vector<PlannedCell> cells;
    for (FusionMode mode : spec.modes) {
        if (mode == FusionMode::text_only) {
            cells.push_back({mode, AudioSource::none});
            continue;
        }
        for (AudioSource src : spec.sources) cells.push_back({mode, src});
    }
    return cells;
}

int cmd_run(const ExperimentSpec& spec, bool dry_run) {
    Corpus corpus = load_corpus(spec.corpus_name, spec.corpus_path);
    std::vector<Sample> subset = budget_subset(corpus, spec);
    SplitPlan plan = make_split_plan(corpus.descriptor, subset, spec.seed, spec.folds,
                                     spec.canonical_seeds);
    size_t units = plan.strategy == SplitPlan::Strategy::canonical_seeds
                       ? plan.seeds.size()
                       : static_cast<size_t>(plan.folds);
    std::vector<PlannedCell> cells = planned_cells(spec);
    fs::path run_root = fs::path(spec.output_dir) / "runs";

    std::cout << "corpus " << spec.corpus_name << ": " << subset.size() << " samples, "
              << (plan.strategy == SplitPlan::Strategy::canonical_seeds
                      ? std::to_string(plan.seeds.size()) + " canonical seeds"
                      : std::to_string(plan.folds) + " folds")
              << ", " << cells.size() << " grid cells, " << cells.size() * units
              << " runs planned\n";
    for (const PlannedCell& cell : cells)
        std::cout << "plan: " << fusion_mode_name(cell.mode) << " + "
                  << audio_source_name(cell.source) << " -> " << units << " units\n";
    if (dry_run) {
        std::cout << "dry-run: nothing executed\n";
        return 0;
    }

    std::map<std::string, std::unique_ptr<AudioManifest>> manifests;
    auto manifest_for = [&](AudioSource src) -> const AudioManifest* {
        if (src != AudioSource::local && src != AudioSource::remote) return nullptr;
        std::string slot = audio_source_name(src);
        auto it = manifests.find(slot);
        if (it == manifests.end())
            it = manifests.emplace(slot, std::make_unique<AudioManifest>(
                                             slot_manifest_path(spec, slot)))
                     .first;
        return it->second.get();
    };

    fs::create_directories(run_root);
    size_t completed_before = count_completed(run_root);
    for (const PlannedCell& cell : cells) {
        ExperimentSetup setup;
        setup.fusion.mode = cell.mode;
        setup.fusion.head = corpus.descriptor.label_spec.kind == LabelKind::categorical
                                ? HeadKind::classification
                                : HeadKind::regression;
        setup.fusion.num_classes =
            static_cast<int>(std::max<size_t>(corpus.descriptor.label_spec.num_classes(), 2));
        setup.train = spec.train;
        setup.source = cell.source;
        setup.features = spec.features;
        setup.text_encoder = spec.text_encoder;
        setup.audio_encoder = spec.audio_encoder;
        setup.run_root = run_root.string();
        setup.resume = true;
        std::vector<RunResult> results =
            run_experiment(corpus.descriptor, subset, manifest_for(cell.source), setup, plan);
        std::vector<double> values;
        for (const RunResult& r : results) values.push_back(r.metric_value);
        std::cout << "run: " << fusion_mode_name(cell.mode) << " + "
                  << audio_source_name(cell.source) << ": " << results.front().metric_name
                  << " mean "
                  << render_metric_value(corpus.descriptor.metric, aggregate_mean(values))
                  << " over " << results.size() << " units\n";
    }
    size_t completed_after = count_completed(run_root);
    size_t executed = completed_after - completed_before;
    std::cout << "executed " << executed << " new runs, reused "
              << cells.size() * units - executed << " completed runs\n";
    return 0;
}

int cmd_report(const ExperimentSpec& spec, bool dry_run) {
    fs::path runs_dir = fs::path(spec.output_dir) / "runs";
    CollectedResults collected = collect_run_results(runs_dir.string(), spec.significance);
    Report report = build_report(collected.aggregates, collected.marks, spec.alpha);

    std::string markdown = render_markdown(report);
    markdown += "\nSignificance: † marks p < " + format_double(spec.alpha) + " by the " +
                collected.significance_label + ".\n";
    json doc = json::parse(render_json(report));
    doc["significance_test"] = collected.significance_label;

    std::cout << markdown;
    if (dry_run) {
        std::cout << "dry-run: no files written\n";
        return 0;
    }
    fs::path md_path = fs::path(spec.output_dir) / "report.md";
    fs::path json_path = fs::path(spec.output_dir) / "report.json";
    write_file_atomic(md_path, markdown);
    write_file_atomic(json_path, doc.dump(2) + "\n");
    std::cout << "report written: " << md_path.string() << ", " << json_path.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Options opt;
    CLI::App app{"TTS-augmented text+audio classification pipeline"};
    app.require_subcommand(1);
    auto* seed_opt = app.add_option("--seed", opt.seed, "override the spec seed");
    app.add_option("--output-dir", opt.output_dir, "override the spec output directory");
    app.add_flag("--dry-run", opt.dry_run, "print the plan without side effects");
    app.add_flag("--print-config", opt.print_config,
                 "print the normalized spec and exit without acting");

    const char* blurbs[][2] = {
        {"synthesize", "synthesize the corpus target texts into the audio manifest"},
        {"run", "execute the mode grid over the split plan"},
        {"report", "aggregate completed runs into report.md and report.json"},
        {"validate", "check the spec and corpus without running anything"},
    };
    for (const auto& b : blurbs) {
        CLI::App* sub = app.add_subcommand(b[0], b[1]);
        sub->add_option("spec", opt.spec_path, "experiment spec file")->required();
        sub->fallthrough();
    }

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e);
        } catch (const CLI::CallForAllHelp& e) {
            return app.exit(e);
        } catch (const CLI::ParseError& e) {
            std::cerr << "error: usage: " << one_line(e.what()) << "\n";
            return 64;
        }
        opt.seed_set = seed_opt->count() > 0;

        ExperimentSpec spec = load_for(opt);
        if (opt.print_config) {
            std::cout << spec_to_text(spec);
            return 0;
        }
        std::string cmd = app.get_subcommands().at(0)->get_name();
        if (cmd == "validate") return cmd_validate(spec);
        if (cmd == "synthesize") return cmd_synthesize(spec, opt.dry_run);
        if (cmd == "run") return cmd_run(spec, opt.dry_run);
        return cmd_report(spec, opt.dry_run);
    } catch (const Error& e) {
        std::cerr << "error: " << errc_name(e.code()) << ": " << one_line(e.what()) << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: unexpected: " << one_line(e.what()) << "\n";
        return 1;
    }
}
