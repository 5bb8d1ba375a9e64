// Unified sample model over heterogeneous cognitive-state corpora, plus the
// text-selection, budget-downsampling, and split-planning operations applied
// before synthesis and training.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ttsaug/errors.hpp"

namespace ttsaug {

// Half-open character interval [begin, end).
struct Span {
    size_t begin = 0;
    size_t end = 0;
    bool operator==(const Span&) const = default;
};

enum class LabelKind { continuous, categorical };

struct LabelSpec {
    LabelKind kind = LabelKind::continuous;
    double lo = 0.0;  // continuous range
    double hi = 0.0;
    std::vector<std::string> classes;  // categorical

    static LabelSpec make_continuous(double lo, double hi);
    static LabelSpec make_categorical(std::vector<std::string> classes);
    size_t num_classes() const { return classes.size(); }
};

struct Label {
    LabelKind kind = LabelKind::continuous;
    double value = 0.0;  // continuous
    int class_id = -1;   // categorical

    static Label continuous(double v) { return {LabelKind::continuous, v, -1}; }
    static Label categorical(int id) { return {LabelKind::categorical, 0.0, id}; }
    bool operator==(const Label&) const = default;
};

enum class TaskType { control, sentiment, belief, emotion };
enum class MetricKind { mae, accuracy, f1 };
enum class SplitTag { none, train, dev, test };

// How select_target_text picks the string to synthesize/encode.
enum class SelectRule { span_else_full, last_sentence };

struct Sample {
    std::string id;
    std::string text;
    std::string context;
    std::optional<Span> target_span;
    Label label;
    std::string gold_audio;  // path, empty when absent
    std::vector<double> annotator_values;
    std::vector<Span> sentences;  // distribution-provided segmentation
    SplitTag split = SplitTag::none;
};

struct CorpusDescriptor {
    std::string name;
    TaskType task = TaskType::control;
    LabelSpec label_spec;
    bool has_gold_audio = false;
    bool has_canonical_split = false;
    MetricKind metric = MetricKind::accuracy;
    size_t size = 0;  // loaded sample count
    SelectRule select_rule = SelectRule::span_else_full;
};

struct Corpus {
    CorpusDescriptor descriptor;
    std::vector<Sample> samples;
};

struct SplitPlan {
    enum class Strategy { canonical_seeds, kfold };
    Strategy strategy = Strategy::kfold;
    std::vector<int> seeds;           // canonical_seeds
    int folds = 0;                    // kfold
    std::vector<int> assignment;      // per-sample fold id, aligned with samples
};

// Registry of the built-in task descriptors (metric, gold-audio availability,
// split regime). Throws Errc::corpus for unknown names.
CorpusDescriptor registry_descriptor(const std::string& name);
std::vector<std::string> registry_names();

// Loads a corpus from `path` using the adapter registered for `name`.
// Adapters and their expected on-disk layouts are documented in the README.
Corpus load_corpus(const std::string& name, const std::string& path);

// ---- Target-text selection -------------------------------------------------

std::string select_target_text(const Sample& sample, SelectRule rule);
std::string select_target_text(const Sample& sample, const CorpusDescriptor& descriptor);

// ---- Dependency-span extraction ---------------------------------------------

struct Token {
    Span span;  // character offsets into the sentence text
};

// Character interval spanning the yield of the subtree rooted at `head`.
// `heads[i]` is the index of token i's parent; the root points at itself or
// carries -1. Throws Errc::corpus on out-of-range heads or cyclic arcs.
Span head_to_span(const std::vector<Token>& tokens, const std::vector<int>& heads, int head);

// Pluggable dependency parser; the FactBank adapter consumes parses from the
// data file when present and falls back to the configured parser otherwise.
struct ParsedSentence {
    std::vector<Token> tokens;
    std::vector<int> heads;
};

class DependencyParser {
public:
    virtual ~DependencyParser() = default;
    virtual ParsedSentence parse(const std::string& text) const = 0;
};

// Deterministic parser for tests and offline runs: whitespace tokens chained
// left-to-right (token 0 is the root, token i attaches to i-1).
class ChainStubParser : public DependencyParser {
public:
    ParsedSentence parse(const std::string& text) const override;
};

// ---- Budget downsampling ----------------------------------------------------

// Uniform random selection without replacement (seeded shuffle, greedy pack),
// capped by the cumulative character cost of the selected target texts.
// Returns the input unchanged when it already fits. The result preserves the
// input order. Throws Errc::config when not even the cheapest sample fits.
std::vector<Sample> downsample_to_budget(const std::vector<Sample>& samples,
                                         const CorpusDescriptor& descriptor,
                                         double budget, double rate_per_char,
                                         uint64_t seed, bool stratify = false);

// ---- Split planning ----------------------------------------------------------

SplitPlan make_split_plan(const CorpusDescriptor& descriptor,
                          const std::vector<Sample>& samples, uint64_t seed,
                          int folds = 5, std::vector<int> canonical_seeds = {42, 0, 1});

// ---- Validation ---------------------------------------------------------------

struct Violation {
    std::string kind;       // duplicate-id | label-range | label-class | span | gold-audio
    std::string sample_id;
    std::string message;
};

std::vector<Violation> validate_corpus(const CorpusDescriptor& descriptor,
                                       const std::vector<Sample>& samples);

// ---- Interchange format --------------------------------------------------------
// One JSON object per line: {id, text, context, span_start, span_end, label,
// gold_audio_path}. span_* and context/gold_audio_path are null when absent;
// label is a number for continuous specs and a class name string for
// categorical ones.

void write_interchange(const std::string& path, const CorpusDescriptor& descriptor,
                       const std::vector<Sample>& samples);
std::vector<Sample> read_interchange(const std::string& path, const CorpusDescriptor& descriptor,
                                     SplitTag split = SplitTag::none);

// Helpers shared by adapters and the report.
const char* metric_name(MetricKind m);
const char* task_name(TaskType t);
std::string split_name(SplitTag t);

}  // namespace ttsaug
