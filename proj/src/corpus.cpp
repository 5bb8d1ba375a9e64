#include "ttsaug/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "ttsaug/rng.hpp"
#include "ttsaug/util.hpp"

namespace fs = std::filesystem;

namespace ttsaug {

LabelSpec LabelSpec::make_continuous(double lo, double hi) {
    LabelSpec s;
    s.kind = LabelKind::continuous;
    s.lo = lo;
    s.hi = hi;
    return s;
}

LabelSpec LabelSpec::make_categorical(std::vector<std::string> classes) {
    LabelSpec s;
    s.kind = LabelKind::categorical;
    s.classes = std::move(classes);
    return s;
}

const char* metric_name(MetricKind m) {
    switch (m) {
        case MetricKind::mae: return "MAE";
        case MetricKind::accuracy: return "Accuracy";
        case MetricKind::f1: return "F1";
    }
    return "?";
}

const char* task_name(TaskType t) {
    switch (t) {
        case TaskType::control: return "control";
        case TaskType::sentiment: return "sentiment";
        case TaskType::belief: return "belief";
        case TaskType::emotion: return "emotion";
    }
    return "?";
}

std::string split_name(SplitTag t) {
    switch (t) {
        case SplitTag::none: return "none";
        case SplitTag::train: return "train";
        case SplitTag::dev: return "dev";
        case SplitTag::test: return "test";
    }
    return "?";
}

std::string select_target_text(const Sample& sample, SelectRule rule) {
    if (sample.target_span) {
        const Span& s = *sample.target_span;
        return sample.text.substr(s.begin, s.end - s.begin);
    }
    if (rule == SelectRule::last_sentence && !sample.sentences.empty()) {
        const Span& s = sample.sentences.back();
        return sample.text.substr(s.begin, s.end - s.begin);
    }
    return sample.text;
}

std::string select_target_text(const Sample& sample, const CorpusDescriptor& descriptor) {
    return select_target_text(sample, descriptor.select_rule);
}

Span head_to_span(const std::vector<Token>& tokens, const std::vector<int>& heads, int head) {
    const int n = static_cast<int>(tokens.size());
    if (heads.size() != tokens.size()) {
        throw Error(Errc::corpus, "head_to_span: arcs/token count mismatch");
    }
    if (head < 0 || head >= n) {
        throw Error(Errc::corpus, "head_to_span: head index out of range");
    }
    for (int i = 0; i < n; ++i) {
        if (heads[i] < -1 || heads[i] >= n) {
            throw Error(Errc::corpus, "head_to_span: arc target out of range at token " +
                                          std::to_string(i));
        }
    }
    // Cycle check: every parent chain must terminate at a root within n steps.
    for (int i = 0; i < n; ++i) {
        int cur = i;
        int steps = 0;
        while (heads[cur] != -1 && heads[cur] != cur) {
            cur = heads[cur];
            if (++steps > n) throw Error(Errc::corpus, "head_to_span: cyclic arcs");
        }
    }
    // Subtree membership by downward traversal over children lists.
    std::vector<std::vector<int>> children(tokens.size());
    for (int i = 0; i < n; ++i) {
        if (heads[i] != -1 && heads[i] != i) children[static_cast<size_t>(heads[i])].push_back(i);
    }
    Span out = tokens[static_cast<size_t>(head)].span;
    std::vector<int> stack = {head};
    while (!stack.empty()) {
        int cur = stack.back();
        stack.pop_back();
        const Span& s = tokens[static_cast<size_t>(cur)].span;
        out.begin = std::min(out.begin, s.begin);
        out.end = std::max(out.end, s.end);
        for (int c : children[static_cast<size_t>(cur)]) stack.push_back(c);
    }
    return out;
}

ParsedSentence ChainStubParser::parse(const std::string& text) const {
    ParsedSentence out;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size()) break;
        size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        out.tokens.push_back({Span{start, i}});
        out.heads.push_back(static_cast<int>(out.heads.size()) - 1);  // chain; token 0 gets -1
    }
    return out;
}

namespace {

size_t target_chars(const Sample& s, const CorpusDescriptor& d) {
    return select_target_text(s, d).size();
}

std::vector<size_t> greedy_pack(const std::vector<size_t>& order,
                                const std::vector<size_t>& chars, double budget,
                                double rate_per_char) {
    std::vector<size_t> picked;
    unsigned long long selected_chars = 0;
    for (size_t idx : order) {
        unsigned long long next = selected_chars + chars[idx];
        if (static_cast<double>(next) * rate_per_char <= budget) {
            picked.push_back(idx);
            selected_chars = next;
        }
    }
    return picked;
}

}  // namespace

std::vector<Sample> downsample_to_budget(const std::vector<Sample>& samples,
                                         const CorpusDescriptor& descriptor, double budget,
                                         double rate_per_char, uint64_t seed, bool stratify) {
    if (budget <= 0.0) throw Error(Errc::config, "downsample: budget must be positive");
    if (rate_per_char <= 0.0) throw Error(Errc::config, "downsample: rate must be positive");
    if (samples.empty()) return {};

    std::vector<size_t> chars(samples.size());
    unsigned long long total = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
        chars[i] = target_chars(samples[i], descriptor);
        total += chars[i];
    }
    if (static_cast<double>(total) * rate_per_char <= budget) {
        return samples;  // already affordable, keep everything as-is
    }
    size_t cheapest = *std::min_element(chars.begin(), chars.end());
    if (static_cast<double>(cheapest) * rate_per_char > budget) {
        throw Error(Errc::config, "downsample: budget too small to afford even one sample");
    }

    Rng rng(seed);
    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<size_t> picked;
    if (stratify) {
        if (descriptor.label_spec.kind != LabelKind::categorical) {
            throw Error(Errc::config, "downsample: stratification requires categorical labels");
        }
        // Per-class shuffles interleaved round-robin so the selection keeps
        // the class mix while the cap applies globally.
        std::map<int, std::vector<size_t>> by_class;
        for (size_t i : order) by_class[samples[i].label.class_id].push_back(i);
        for (auto& [cls, idxs] : by_class) rng.shuffle(idxs);
        std::vector<size_t> interleaved;
        bool more = true;
        for (size_t round = 0; more; ++round) {
            more = false;
            for (auto& [cls, idxs] : by_class) {
                if (round < idxs.size()) {
                    interleaved.push_back(idxs[round]);
                    more = true;
                }
            }
        }
        picked = greedy_pack(interleaved, chars, budget, rate_per_char);
    } else {
        rng.shuffle(order);
        picked = greedy_pack(order, chars, budget, rate_per_char);
    }

    std::sort(picked.begin(), picked.end());  // keep input order
    std::vector<Sample> out;
    out.reserve(picked.size());
    for (size_t idx : picked) out.push_back(samples[idx]);
    return out;
}

SplitPlan make_split_plan(const CorpusDescriptor& descriptor, const std::vector<Sample>& samples,
                          uint64_t seed, int folds, std::vector<int> canonical_seeds) {
    if (samples.empty()) throw Error(Errc::config, "make_split_plan: no samples");
    SplitPlan plan;
    if (descriptor.has_canonical_split) {
        plan.strategy = SplitPlan::Strategy::canonical_seeds;
        plan.seeds = std::move(canonical_seeds);
        return plan;
    }
    if (folds < 1) throw Error(Errc::config, "make_split_plan: folds must be >= 1");
    if (samples.size() < static_cast<size_t>(folds)) {
        throw Error(Errc::config, "make_split_plan: fewer samples than folds");
    }
    plan.strategy = SplitPlan::Strategy::kfold;
    plan.folds = folds;
    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    plan.assignment.assign(samples.size(), 0);
    for (size_t pos = 0; pos < order.size(); ++pos) {
        plan.assignment[order[pos]] = static_cast<int>(pos % static_cast<size_t>(folds));
    }
    return plan;
}

std::vector<Violation> validate_corpus(const CorpusDescriptor& descriptor,
                                       const std::vector<Sample>& samples) {
    std::vector<Violation> out;
    std::set<std::string> seen;
    for (const Sample& s : samples) {
        if (!seen.insert(s.id).second) {
            out.push_back({"duplicate-id", s.id, "duplicate sample id '" + s.id + "'"});
        }
        if (s.label.kind != descriptor.label_spec.kind) {
            out.push_back({"label-kind", s.id, "label kind does not match corpus label spec"});
        } else if (descriptor.label_spec.kind == LabelKind::continuous) {
            if (s.label.value < descriptor.label_spec.lo || s.label.value > descriptor.label_spec.hi) {
                std::ostringstream msg;
                msg << "label " << s.label.value << " outside [" << descriptor.label_spec.lo
                    << ", " << descriptor.label_spec.hi << "]";
                out.push_back({"label-range", s.id, msg.str()});
            }
        } else {
            if (s.label.class_id < 0 ||
                static_cast<size_t>(s.label.class_id) >= descriptor.label_spec.classes.size()) {
                out.push_back({"label-class", s.id,
                               "class id " + std::to_string(s.label.class_id) +
                                   " outside the declared class inventory"});
            }
        }
        if (s.target_span) {
            if (s.target_span->begin >= s.target_span->end ||
                s.target_span->end > s.text.size()) {
                out.push_back({"span", s.id, "target span does not lie within the text"});
            }
        }
        if (descriptor.has_gold_audio) {
            if (s.gold_audio.empty()) {
                out.push_back({"gold-audio", s.id, "missing gold audio reference"});
            } else if (!fs::exists(s.gold_audio)) {
                out.push_back({"gold-audio", s.id, "gold audio file not found: " + s.gold_audio});
            }
        }
    }
    return out;
}

}  // namespace ttsaug
