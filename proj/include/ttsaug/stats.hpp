// Evaluation metrics, the outperformance sign test, t-tests, and report
// assembly (aggregation, tie-aware bolding, significance markers, renderers).
#pragma once

#include <map>
#include <string>
#include <vector>

#include "ttsaug/corpus.hpp"
#include "ttsaug/errors.hpp"

namespace ttsaug {

// ---- Special functions -------------------------------------------------------

// I_x(a, b), evaluated with the symmetric continued fraction.
double regularized_incomplete_beta(double a, double b, double x);

// CDF of Student's t with `df` degrees of freedom (df may be fractional, as
// produced by the Welch correction).
double students_t_cdf(double t, double df);

// ---- Metrics -------------------------------------------------------------------
// Accuracy and F1 are percentages; MAE stays in label units.

enum class F1Average { macro, micro, weighted };

double mean_absolute_error(const std::vector<double>& pred, const std::vector<double>& gold);
double accuracy(const std::vector<int>& pred, const std::vector<int>& gold);
// Averages per-class F1 over the classes present in gold; classes that are
// only predicted do not contribute.
double f1_score(const std::vector<int>& pred, const std::vector<int>& gold,
                F1Average avg = F1Average::macro);

// Dispatch on the corpus metric. For categorical metrics the doubles must
// hold integral class ids.
double compute_metric(MetricKind kind, const std::vector<double>& pred,
                      const std::vector<double>& gold);

// Mean over per-run metric values; Errc::report when empty.
double aggregate_mean(const std::vector<double>& values);

// ---- Outperformance sign test ---------------------------------------------------

// P(X >= k) for X ~ Binomial(n, 1/2); exact for any practical n.
double binomial_outperformance(int k, int n);

struct OutperformanceResult {
    int improvements = 0;  // strict wins for the treatment; ties count as losses
    int comparisons = 0;
    double p_value = 1.0;  // one-sided
};

OutperformanceResult binomial_outperformance_test(const std::vector<double>& baseline,
                                                  const std::vector<double>& treatment,
                                                  bool higher_is_better);

// ---- t-tests ---------------------------------------------------------------------

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p_two_sided = 1.0;
    bool degenerate = false;  // zero variance; p collapses to 0 or 1
};

// Paired two-sided t-test on matched samples (df = n - 1).
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);
// Welch's two-sample t-test with the Welch-Satterthwaite df.
TTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

// ---- Derived comparison figures ---------------------------------------------------

// Relative decrease, e.g. MAE 0.785 -> 0.741 is a 5.6% decrease.
double percent_decrease(double base, double treatment);
// Decrease of the error mass (100 - score), e.g. 74.9 -> 76.0 removes 4.4%.
double error_decrease_percent(double base, double treatment);
// Absolute point gain, e.g. 56.6 -> 63.4 is +6.8.
double point_improvement(double base, double treatment);

// ---- Report assembly -----------------------------------------------------------

// One column per evaluated configuration, following the main-table layout:
// text-only, audio-only and fused, each with gold, local-engine, or
// remote-engine audio.
enum class Column { text, audio_gold, audio_local, audio_remote, mm_gold, mm_local, mm_remote };
const char* column_name(Column c);

struct AggregateEntry {
    std::string corpus;
    MetricKind metric = MetricKind::accuracy;
    Column column = Column::text;
    std::vector<double> per_run;  // per-seed or per-fold metric values
};

struct SignificanceMark {
    std::string corpus;
    Column column = Column::text;
    double p_value = 1.0;
};

struct ReportCell {
    bool present = false;
    double value = 0.0;  // mean over runs, unrounded
    bool bold = false;
    bool dagger = false;
};

struct ReportRow {
    std::string corpus;
    MetricKind metric = MetricKind::accuracy;
    std::map<Column, ReportCell> cells;
};

// A headline figure derived from one row: the text baseline against the
// row's best fused cell. F1 rows yield both framings (relative error
// decrease and absolute points); MAE rows a relative decrease; accuracy rows
// absolute points.
struct DerivedClaim {
    std::string corpus;
    std::string kind;  // mae_decrease_percent | f1_error_decrease_percent | point_improvement
    Column column = Column::text;  // the fused cell being compared
    double value = 0.0;
};

struct Report {
    std::vector<ReportRow> rows;
    std::vector<DerivedClaim> claims;
    double alpha = 0.05;
};

// Rounded rendering: one decimal for percentages, three for MAE.
std::string render_metric_value(MetricKind metric, double v);

// Aggregates entries into rows, bolds every cell tied for best at rendering
// precision (lower is better for MAE, higher otherwise), attaches
// significance daggers for marks with p < alpha, and derives the headline
// baseline-vs-fused figures. Every row must include the text-only baseline.
Report build_report(const std::vector<AggregateEntry>& entries,
                    const std::vector<SignificanceMark>& marks = {}, double alpha = 0.05);

std::string render_markdown(const Report& report);
std::string render_json(const Report& report);

}  // namespace ttsaug
