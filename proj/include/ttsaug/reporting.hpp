// Bridges persisted run directories and the report: collects result files,
// groups them into per-column aggregates, collapses the two fusion variants
// into one multimodal column, and attaches baseline significance tests.
#pragma once

#include <string>
#include <vector>

#include "ttsaug/errors.hpp"
#include "ttsaug/stats.hpp"

namespace ttsaug {

struct CollectedResults {
    std::vector<AggregateEntry> aggregates;
    std::vector<SignificanceMark> marks;
    std::string significance_label;  // human-readable test description for the footer
};

// Scans `runs_dir` for completed run directories (those holding result.json),
// groups results by (corpus, mode, engine), maps each group onto a report
// column, keeps the better fusion variant per engine, and tests every
// audio-bearing column against the text baseline with the named test
// (binomial | paired_t | welch). Runs pair by unit name; a column whose unit
// set differs from the baseline's gets no mark. Throws Errc::report when the
// directory holds no completed runs.
CollectedResults collect_run_results(const std::string& runs_dir,
                                     const std::string& significance);

}  // namespace ttsaug
