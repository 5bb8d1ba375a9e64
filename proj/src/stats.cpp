#include "ttsaug/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>

#include <json.hpp>

using nlohmann::json;

namespace ttsaug {

namespace {

// Continued fraction for the incomplete beta (modified Lentz). Converges
// quickly for x < (a+1)/(a+b+2); the symmetry relation covers the rest.
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-15;
    constexpr double kTiny = 1e-300;

    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

int require_class_count(const std::vector<int>& pred, const std::vector<int>& gold) {
    int hi = 0;
    for (int v : pred) hi = std::max(hi, v);
    for (int v : gold) hi = std::max(hi, v);
    return hi + 1;
}

double rounded_for_comparison(MetricKind metric, double v) {
    return std::strtod(render_metric_value(metric, v).c_str(), nullptr);
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw Error(Errc::report, "incomplete beta needs a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_cf(a, b, x) / a;
    }
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double students_t_cdf(double t, double df) {
    if (!(df > 0.0)) throw Error(Errc::report, "t distribution needs df > 0");
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    double x = df / (df + t * t);
    double half_tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x);
    return t >= 0.0 ? 1.0 - half_tail : half_tail;
}

double mean_absolute_error(const std::vector<double>& pred, const std::vector<double>& gold) {
    if (pred.size() != gold.size() || pred.empty()) {
        throw Error(Errc::report, "MAE needs matched non-empty prediction/gold vectors");
    }
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) acc += std::fabs(pred[i] - gold[i]);
    return acc / static_cast<double>(pred.size());
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& gold) {
    if (pred.size() != gold.size() || pred.empty()) {
        throw Error(Errc::report, "accuracy needs matched non-empty prediction/gold vectors");
    }
    size_t hits = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == gold[i]) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(pred.size());
}

double f1_score(const std::vector<int>& pred, const std::vector<int>& gold, F1Average avg) {
    if (pred.size() != gold.size() || pred.empty()) {
        throw Error(Errc::report, "F1 needs matched non-empty prediction/gold vectors");
    }
    const int n_classes = require_class_count(pred, gold);
    std::vector<long long> tp(static_cast<size_t>(n_classes), 0);
    std::vector<long long> fp(static_cast<size_t>(n_classes), 0);
    std::vector<long long> fn(static_cast<size_t>(n_classes), 0);
    std::vector<long long> support(static_cast<size_t>(n_classes), 0);
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || gold[i] < 0) throw Error(Errc::report, "negative class id");
        support[static_cast<size_t>(gold[i])]++;
        if (pred[i] == gold[i]) tp[static_cast<size_t>(gold[i])]++;
        else {
            fp[static_cast<size_t>(pred[i])]++;
            fn[static_cast<size_t>(gold[i])]++;
        }
    }

    if (avg == F1Average::micro) {
        // With one label per sample, micro-F1 reduces to accuracy; computed
        // from the counts anyway so the reduction is checked by tests.
        long long tps = 0, fps = 0, fns = 0;
        for (int c = 0; c < n_classes; ++c) {
            tps += tp[static_cast<size_t>(c)];
            fps += fp[static_cast<size_t>(c)];
            fns += fn[static_cast<size_t>(c)];
        }
        double denom = 2.0 * static_cast<double>(tps) + static_cast<double>(fps + fns);
        return denom == 0.0 ? 0.0 : 100.0 * 2.0 * static_cast<double>(tps) / denom;
    }

    double sum = 0.0;
    long long weight_total = 0;
    for (int c = 0; c < n_classes; ++c) {
        auto uc = static_cast<size_t>(c);
        if (support[uc] == 0) continue;  // only classes present in gold
        double denom = 2.0 * static_cast<double>(tp[uc]) + static_cast<double>(fp[uc] + fn[uc]);
        double f1 = denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp[uc]) / denom;
        if (avg == F1Average::weighted) {
            sum += f1 * static_cast<double>(support[uc]);
            weight_total += support[uc];
        } else {
            sum += f1;
            weight_total += 1;
        }
    }
    if (weight_total == 0) throw Error(Errc::report, "no classes present in gold");
    return 100.0 * sum / static_cast<double>(weight_total);
}

double compute_metric(MetricKind kind, const std::vector<double>& pred,
                      const std::vector<double>& gold) {
    if (kind == MetricKind::mae) return mean_absolute_error(pred, gold);
    std::vector<int> p(pred.size()), g(gold.size());
    for (size_t i = 0; i < pred.size(); ++i) p[i] = static_cast<int>(std::llround(pred[i]));
    for (size_t i = 0; i < gold.size(); ++i) g[i] = static_cast<int>(std::llround(gold[i]));
    return kind == MetricKind::accuracy ? accuracy(p, g) : f1_score(p, g);
}

double aggregate_mean(const std::vector<double>& values) {
    if (values.empty()) throw Error(Errc::report, "cannot aggregate zero runs");
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc / static_cast<double>(values.size());
}

double binomial_outperformance(int k, int n) {
    if (n <= 0) throw Error(Errc::report, "sign test needs n > 0");
    if (k <= 0) return 1.0;
    if (k > n) return 0.0;
    if (n <= 62) {
        // Exact integer tail: sum of C(n, i) for i >= k over 2^n.
        unsigned long long coeff = 1;  // C(n, 0)
        unsigned long long tail = 0;
        for (int i = 0; i <= n; ++i) {
            if (i >= k) tail += coeff;
            // C(n, i+1) = C(n, i) * (n - i) / (i + 1), exact at every step
            if (i < n) coeff = coeff * static_cast<unsigned long long>(n - i) /
                               static_cast<unsigned long long>(i + 1);
        }
        return static_cast<double>(static_cast<long double>(tail) /
                                   std::pow(2.0L, static_cast<long double>(n)));
    }
    // Log-space fallback for large n.
    long double p = 0.0L;
    for (int i = k; i <= n; ++i) {
        long double lg = std::lgamma(static_cast<long double>(n) + 1) -
                         std::lgamma(static_cast<long double>(i) + 1) -
                         std::lgamma(static_cast<long double>(n - i) + 1) -
                         static_cast<long double>(n) * std::log(2.0L);
        p += std::exp(lg);
    }
    return static_cast<double>(std::min(p, 1.0L));
}

OutperformanceResult binomial_outperformance_test(const std::vector<double>& baseline,
                                                  const std::vector<double>& treatment,
                                                  bool higher_is_better) {
    if (baseline.size() != treatment.size() || baseline.empty()) {
        throw Error(Errc::report, "sign test needs matched non-empty score vectors");
    }
    OutperformanceResult r;
    r.comparisons = static_cast<int>(baseline.size());
    for (size_t i = 0; i < baseline.size(); ++i) {
        bool win = higher_is_better ? treatment[i] > baseline[i] : treatment[i] < baseline[i];
        if (win) r.improvements++;  // ties are not improvements
    }
    r.p_value = binomial_outperformance(r.improvements, r.comparisons);
    return r;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw Error(Errc::report, "paired t-test needs matched vectors with n >= 2");
    }
    const auto n = static_cast<double>(a.size());
    double mean = 0.0;
    for (size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
    mean /= n;
    double ss = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i] - mean;
        ss += d * d;
    }
    TTestResult r;
    r.df = n - 1.0;
    double var = ss / (n - 1.0);
    if (var == 0.0) {
        r.degenerate = true;
        r.t = mean == 0.0 ? 0.0 : (mean > 0 ? INFINITY : -INFINITY);
        r.p_two_sided = mean == 0.0 ? 1.0 : 0.0;
        return r;
    }
    r.t = mean / std::sqrt(var / n);
    r.p_two_sided = 2.0 * (1.0 - students_t_cdf(std::fabs(r.t), r.df));
    return r;
}

TTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw Error(Errc::report, "Welch t-test needs n >= 2 in both groups");
    }
    auto moments = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return std::pair<double, double>(mean, ss / static_cast<double>(v.size() - 1));
    };
    auto [ma, va] = moments(a);
    auto [mb, vb] = moments(b);
    double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double sa = va / na, sb = vb / nb;
    TTestResult r;
    if (sa + sb == 0.0) {
        r.degenerate = true;
        r.df = na + nb - 2.0;
        r.t = ma == mb ? 0.0 : (ma > mb ? INFINITY : -INFINITY);
        r.p_two_sided = ma == mb ? 1.0 : 0.0;
        return r;
    }
    r.t = (ma - mb) / std::sqrt(sa + sb);
    r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    r.p_two_sided = 2.0 * (1.0 - students_t_cdf(std::fabs(r.t), r.df));
    return r;
}

double percent_decrease(double base, double treatment) {
    if (base == 0.0) throw Error(Errc::report, "percent decrease undefined for a zero baseline");
    return (base - treatment) / base * 100.0;
}

double error_decrease_percent(double base, double treatment) {
    if (base >= 100.0) {
        throw Error(Errc::report, "error decrease undefined when the baseline has no error");
    }
    return (treatment - base) / (100.0 - base) * 100.0;
}

double point_improvement(double base, double treatment) { return treatment - base; }

const char* column_name(Column c) {
    switch (c) {
        case Column::text: return "text";
        case Column::audio_gold: return "audio_gold";
        case Column::audio_local: return "audio_local";
        case Column::audio_remote: return "audio_remote";
        case Column::mm_gold: return "mm_gold";
        case Column::mm_local: return "mm_local";
        case Column::mm_remote: return "mm_remote";
    }
    return "?";
}

std::string render_metric_value(MetricKind metric, double v) {
    char buf[64];
    if (metric == MetricKind::mae) std::snprintf(buf, sizeof buf, "%.3f", v);
    else std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

Report build_report(const std::vector<AggregateEntry>& entries,
                    const std::vector<SignificanceMark>& marks, double alpha) {
    Report report;
    report.alpha = alpha;
    std::map<std::string, size_t> row_of;
    for (const AggregateEntry& e : entries) {
        auto [it, fresh] = row_of.try_emplace(e.corpus, report.rows.size());
        if (fresh) {
            report.rows.push_back(ReportRow{e.corpus, e.metric, {}});
        }
        ReportRow& row = report.rows[it->second];
        if (row.metric != e.metric) {
            throw Error(Errc::report, e.corpus + ": conflicting metrics across entries");
        }
        if (row.cells.count(e.column)) {
            throw Error(Errc::report, e.corpus + ": duplicate column " +
                                          column_name(e.column));
        }
        ReportCell cell;
        cell.present = true;
        cell.value = aggregate_mean(e.per_run);
        row.cells[e.column] = cell;
    }

    // Bold all cells tied for best at the precision the table shows.
    for (ReportRow& row : report.rows) {
        bool lower_better = row.metric == MetricKind::mae;
        double best = lower_better ? 1e300 : -1e300;
        for (auto& [col, cell] : row.cells) {
            double r = rounded_for_comparison(row.metric, cell.value);
            best = lower_better ? std::min(best, r) : std::max(best, r);
        }
        for (auto& [col, cell] : row.cells) {
            cell.bold = rounded_for_comparison(row.metric, cell.value) == best;
        }
    }

    for (const SignificanceMark& m : marks) {
        auto it = row_of.find(m.corpus);
        if (it == row_of.end()) {
            throw Error(Errc::report, "significance mark for unknown corpus " + m.corpus);
        }
        ReportRow& row = report.rows[it->second];
        auto cell = row.cells.find(m.column);
        if (cell == row.cells.end()) {
            throw Error(Errc::report, m.corpus + ": significance mark for absent column " +
                                          column_name(m.column));
        }
        if (m.p_value < alpha) cell->second.dagger = true;
    }

    // Headline figures: the text baseline against the best fused cell.
    for (const ReportRow& row : report.rows) {
        auto text_it = row.cells.find(Column::text);
        if (text_it == row.cells.end()) {
            throw Error(Errc::report, row.corpus + ": missing text-only baseline column");
        }
        bool lower_better = row.metric == MetricKind::mae;
        const Column fused[] = {Column::mm_gold, Column::mm_local, Column::mm_remote};
        const ReportCell* best = nullptr;
        Column best_col = Column::text;
        for (Column col : fused) {
            auto it = row.cells.find(col);
            if (it == row.cells.end()) continue;
            bool better = best == nullptr || (lower_better ? it->second.value < best->value
                                                           : it->second.value > best->value);
            if (better) {
                best = &it->second;
                best_col = col;
            }
        }
        if (best == nullptr) continue;  // no fused cells, nothing to claim
        double base = text_it->second.value;
        double treat = best->value;
        if (row.metric == MetricKind::mae) {
            if (base != 0.0) {
                report.claims.push_back({row.corpus, "mae_decrease_percent", best_col,
                                         percent_decrease(base, treat)});
            }
        } else if (row.metric == MetricKind::f1) {
            if (base < 100.0) {
                report.claims.push_back({row.corpus, "f1_error_decrease_percent", best_col,
                                         error_decrease_percent(base, treat)});
            }
            report.claims.push_back(
                {row.corpus, "point_improvement", best_col, point_improvement(base, treat)});
        } else {
            report.claims.push_back(
                {row.corpus, "point_improvement", best_col, point_improvement(base, treat)});
        }
    }
    return report;
}

namespace {

const char* column_label(Column c) {
    switch (c) {
        case Column::text: return "Text";
        case Column::audio_gold: return "Audio (gold)";
        case Column::audio_local: return "Audio (local)";
        case Column::audio_remote: return "Audio (remote)";
        case Column::mm_gold: return "Fused (gold)";
        case Column::mm_local: return "Fused (local)";
        case Column::mm_remote: return "Fused (remote)";
    }
    return "?";
}

std::string claim_sentence(const DerivedClaim& c) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", c.value);
    std::string label = column_label(c.column);
    if (c.kind == "mae_decrease_percent") {
        return c.corpus + ": " + buf + "% MAE decrease (" + label + " vs Text)";
    }
    if (c.kind == "f1_error_decrease_percent") {
        return c.corpus + ": " + buf + "% F1 error decrease (" + label + " vs Text)";
    }
    std::string sign = c.value >= 0 ? "+" : "";
    return c.corpus + ": " + sign + buf + " point improvement (" + label + " vs Text)";
}

}  // namespace

std::string render_markdown(const Report& report) {
    static const Column kOrder[] = {Column::text,       Column::audio_gold, Column::audio_local,
                                    Column::audio_remote, Column::mm_gold,  Column::mm_local,
                                    Column::mm_remote};
    std::string out = "| Corpus | Metric |";
    for (Column col : kOrder) out += std::string(" ") + column_label(col) + " |";
    out += "\n|---|---|---|---|---|---|---|---|---|\n";
    for (const ReportRow& row : report.rows) {
        out += "| " + row.corpus + " | " + metric_name(row.metric) + " |";
        for (Column col : kOrder) {
            auto it = row.cells.find(col);
            if (it == row.cells.end() || !it->second.present) {
                out += " - |";
                continue;
            }
            std::string v = render_metric_value(row.metric, it->second.value);
            if (it->second.bold) v = "**" + v + "**";
            if (it->second.dagger) v += "†";
            out += " " + v + " |";
        }
        out += "\n";
    }
    if (!report.claims.empty()) {
        out += "\nDerived comparisons (best fused cell against the text baseline):\n";
        for (const DerivedClaim& c : report.claims) {
            out += "- " + claim_sentence(c) + "\n";
        }
    }
    return out;
}

std::string render_json(const Report& report) {
    json rows = json::array();
    for (const ReportRow& row : report.rows) {
        json cells = json::object();
        for (const auto& [col, cell] : row.cells) {
            if (!cell.present) continue;
            cells[column_name(col)] = {
                {"value", cell.value},
                {"rendered", render_metric_value(row.metric, cell.value)},
                {"bold", cell.bold},
                {"significant", cell.dagger},
            };
        }
        rows.push_back({{"corpus", row.corpus},
                        {"metric", metric_name(row.metric)},
                        {"cells", cells}});
    }
    json claims = json::array();
    for (const DerivedClaim& c : report.claims) {
        claims.push_back({{"corpus", c.corpus},
                          {"kind", c.kind},
                          {"column", column_name(c.column)},
                          {"value", c.value}});
    }
    json doc = {{"alpha", report.alpha}, {"rows", rows}, {"claims", claims}};
    return doc.dump(2) + "\n";
}

}  // namespace ttsaug
