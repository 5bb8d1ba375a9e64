#include "ttsaug/reporting.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>

#include <nlohmann/json.hpp>

#include "ttsaug/corpus.hpp"
#include "ttsaug/util.hpp"

namespace ttsaug {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

MetricKind metric_from_name(const std::string& name, const std::string& context) {
    if (name == "MAE") return MetricKind::mae;
    if (name == "Accuracy") return MetricKind::accuracy;
    if (name == "F1") return MetricKind::f1;
    throw Error(Errc::report, context + ": unknown metric '" + name + "'");
}

// Maps a run's (mode, engine) onto its report column. The two fusion
// variants share a column; the variant tag keeps them apart until the
// better one is chosen.
struct ColumnSlot {
    Column column = Column::text;
    std::string variant;  // "early" | "late" for fused runs, empty otherwise
};

ColumnSlot column_for(const std::string& mode, const std::string& engine,
                      const std::string& context) {
    if (mode == "text") return {Column::text, ""};
    bool fused = mode == "early_fusion" || mode == "late_fusion";
    if (!fused && mode != "audio")
        throw Error(Errc::report, context + ": unknown mode '" + mode + "'");
    Column col;
    if (engine == "gold") {
        col = fused ? Column::mm_gold : Column::audio_gold;
    } else if (engine == "local") {
        col = fused ? Column::mm_local : Column::audio_local;
    } else if (engine == "remote") {
        col = fused ? Column::mm_remote : Column::audio_remote;
    } else {
        throw Error(Errc::report, context + ": unknown engine '" + engine + "'");
    }
    return {col, fused ? (mode == "early_fusion" ? "early" : "late") : ""};
}

struct Group {
    MetricKind metric = MetricKind::accuracy;
    bool metric_set = false;
    // variant -> unit -> value; non-fused columns use the "" variant
    std::map<std::string, std::map<std::string, double>> variants;
};

double mean_of(const std::map<std::string, double>& runs) {
    double sum = 0.0;
    for (const auto& [unit, v] : runs) sum += v;
    return sum / static_cast<double>(runs.size());
}

}  // namespace

CollectedResults collect_run_results(const std::string& runs_dir,
                                     const std::string& significance) {
    std::string label;
    if (significance == "binomial") {
        label = "one-sided exact binomial outperformance test vs the text baseline "
                "(per-run wins, ties count against, null rate 0.5)";
    } else if (significance == "paired_t") {
        label = "two-sided paired t-test vs the text baseline";
    } else if (significance == "welch") {
        label = "two-sided Welch two-sample t-test vs the text baseline";
    } else {
        throw Error(Errc::config, "unknown significance test '" + significance + "'");
    }

    std::vector<fs::path> dirs;
    if (fs::is_directory(runs_dir)) {
        for (const auto& entry : fs::directory_iterator(runs_dir))
            if (entry.is_directory() && fs::exists(entry.path() / "result.json"))
                dirs.push_back(entry.path());
    }
    if (dirs.empty()) throw Error(Errc::report, "no completed runs under " + runs_dir);
    std::sort(dirs.begin(), dirs.end());

    // corpus -> column -> group
    std::map<std::string, std::map<Column, Group>> corpora;
    for (const fs::path& dir : dirs) {
        std::string context = (dir / "result.json").string();
        json result;
        try {
            result = json::parse(read_file(dir / "result.json"));
        } catch (const json::exception& e) {
            throw Error(Errc::report, context + ": unreadable result: " + e.what());
        }
        std::string corpus, mode, engine, unit, metric;
        double value = 0.0;
        try {
            corpus = result.at("corpus").get<std::string>();
            mode = result.at("mode").get<std::string>();
            engine = result.at("engine").get<std::string>();
            unit = result.at("unit").get<std::string>();
            metric = result.at("metric_name").get<std::string>();
            value = result.at("metric_value").get<double>();
        } catch (const json::exception& e) {
            throw Error(Errc::report, context + ": malformed result: " + e.what());
        }
        ColumnSlot slot = column_for(mode, engine, context);
        Group& group = corpora[corpus][slot.column];
        MetricKind kind = metric_from_name(metric, context);
        if (group.metric_set && group.metric != kind)
            throw Error(Errc::report, context + ": conflicting metrics within one column");
        group.metric = kind;
        group.metric_set = true;
        auto [it, inserted] = group.variants[slot.variant].emplace(unit, value);
        if (!inserted)
            throw Error(Errc::report,
                        context + ": duplicate run for unit '" + unit + "' in this column");
    }

    // Corpora appear in registry order; anything unknown follows alphabetically.
    std::vector<std::string> order;
    for (const std::string& name : registry_names())
        if (corpora.count(name)) order.push_back(name);
    for (const auto& [name, groups] : corpora)
        if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);

    CollectedResults out;
    out.significance_label = label;
    for (const std::string& corpus : order) {
        const auto& groups = corpora.at(corpus);
        // Chosen per-column run sets, ready for aggregation and pairing.
        std::map<Column, std::pair<MetricKind, std::map<std::string, double>>> chosen;
        for (const auto& [column, group] : groups) {
            const std::map<std::string, double>* best = nullptr;
            double best_mean = 0.0;
            for (const auto& [variant, runs] : group.variants) {
                double m = mean_of(runs);
                bool better = best == nullptr ||
                              (group.metric == MetricKind::mae ? m < best_mean : m > best_mean);
                if (better) {
                    best = &runs;
                    best_mean = m;
                }
            }
            chosen.emplace(column, std::make_pair(group.metric, *best));
        }

        for (const auto& [column, picked] : chosen) {
            AggregateEntry entry;
            entry.corpus = corpus;
            entry.metric = picked.first;
            entry.column = column;
            for (const auto& [unit, value] : picked.second) entry.per_run.push_back(value);
            out.aggregates.push_back(std::move(entry));
        }

        auto baseline_it = chosen.find(Column::text);
        if (baseline_it == chosen.end()) continue;  // build_report reports the gap
        const auto& baseline_runs = baseline_it->second.second;
        for (const auto& [column, picked] : chosen) {
            if (column == Column::text) continue;
            const auto& runs = picked.second;
            if (runs.size() != baseline_runs.size()) continue;
            std::vector<double> base, treat;
            bool aligned = true;
            auto bit = baseline_runs.begin();
            for (auto rit = runs.begin(); rit != runs.end(); ++rit, ++bit) {
                if (rit->first != bit->first) {
                    aligned = false;
                    break;
                }
                base.push_back(bit->second);
                treat.push_back(rit->second);
            }
            if (!aligned || base.empty()) continue;

            double p = 1.0;
            if (significance == "binomial") {
                bool higher_better = picked.first != MetricKind::mae;
                p = binomial_outperformance_test(base, treat, higher_better).p_value;
            } else {
                if (base.size() < 2) continue;
                TTestResult t = significance == "paired_t" ? paired_t_test(treat, base)
                                                           : welch_t_test(treat, base);
                if (t.degenerate) continue;
                p = t.p_two_sided;
            }
            out.marks.push_back({corpus, column, p});
        }
    }
    return out;
}

}  // namespace ttsaug
