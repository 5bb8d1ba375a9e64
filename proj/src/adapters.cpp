// Corpus adapters: the built-in task registry, the JSON-lines interchange
// format, and the native-format loaders (SWBD-S annotator CSV, CB sentence
// records, FactBank token/arc records). Expected layouts are documented in
// the README.
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "ttsaug/corpus.hpp"
#include "ttsaug/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ttsaug {

namespace {

CorpusDescriptor make_descriptor(const std::string& name, TaskType task, LabelSpec spec,
                                 bool gold_audio, bool canonical, MetricKind metric,
                                 SelectRule rule = SelectRule::span_else_full) {
    CorpusDescriptor d;
    d.name = name;
    d.task = task;
    d.label_spec = std::move(spec);
    d.has_gold_audio = gold_audio;
    d.has_canonical_split = canonical;
    d.metric = metric;
    d.select_rule = rule;
    return d;
}

const std::vector<CorpusDescriptor>& registry() {
    static const std::vector<CorpusDescriptor> reg = {
        make_descriptor("boolq", TaskType::control,
                        LabelSpec::make_categorical({"false", "true"}), false, true,
                        MetricKind::accuracy),
        make_descriptor("wic", TaskType::control, LabelSpec::make_categorical({"false", "true"}),
                        false, true, MetricKind::accuracy),
        make_descriptor("wsc", TaskType::control, LabelSpec::make_categorical({"false", "true"}),
                        false, true, MetricKind::accuracy),
        make_descriptor("swbd_s", TaskType::sentiment, LabelSpec::make_continuous(-1.0, 1.0),
                        true, false, MetricKind::mae),
        make_descriptor("imdb", TaskType::sentiment,
                        LabelSpec::make_categorical({"negative", "positive"}), false, true,
                        MetricKind::accuracy),
        make_descriptor("cb_prosody", TaskType::belief, LabelSpec::make_continuous(-3.0, 3.0),
                        true, false, MetricKind::mae, SelectRule::last_sentence),
        make_descriptor("cb", TaskType::belief, LabelSpec::make_continuous(-3.0, 3.0), false,
                        true, MetricKind::mae, SelectRule::last_sentence),
        // Class inventories for these three are data-driven from the training
        // split at load time.
        make_descriptor("factbank", TaskType::belief, LabelSpec::make_categorical({}), false,
                        true, MetricKind::f1),
        make_descriptor("iemocap", TaskType::emotion, LabelSpec::make_categorical({}), true, true,
                        MetricKind::f1),
        make_descriptor("goemotions", TaskType::emotion, LabelSpec::make_categorical({}), false,
                        true, MetricKind::f1),
    };
    return reg;
}

[[noreturn]] void record_error(const std::string& path, size_t line_no, const std::string& what) {
    throw Error(Errc::corpus, path + ":" + std::to_string(line_no) + ": " + what);
}

json parse_record(const std::string& path, size_t line_no, const std::string& line) {
    try {
        return json::parse(line);
    } catch (const json::parse_error& e) {
        record_error(path, line_no, std::string("malformed record: ") + e.what());
    }
}

Label parse_label(const json& rec, const LabelSpec& spec, const std::string& path,
                  size_t line_no) {
    if (!rec.contains("label")) record_error(path, line_no, "missing 'label'");
    const json& l = rec.at("label");
    if (spec.kind == LabelKind::continuous) {
        if (!l.is_number()) record_error(path, line_no, "continuous corpus needs numeric label");
        double v = l.get<double>();
        if (v < spec.lo || v > spec.hi) {
            record_error(path, line_no,
                         "label " + format_double(v) + " outside [" + format_double(spec.lo) +
                             ", " + format_double(spec.hi) + "]");
        }
        return Label::continuous(v);
    }
    std::string name;
    if (l.is_string()) name = l.get<std::string>();
    else if (l.is_number_integer()) name = std::to_string(l.get<long long>());
    else record_error(path, line_no, "categorical corpus needs string label");
    auto it = std::find(spec.classes.begin(), spec.classes.end(), name);
    if (it == spec.classes.end()) {
        record_error(path, line_no, "label '" + name + "' not in the class inventory");
    }
    return Label::categorical(static_cast<int>(it - spec.classes.begin()));
}

// ---- interchange -----------------------------------------------------------

Sample interchange_sample(const json& rec, const CorpusDescriptor& d, const std::string& path,
                          size_t line_no, SplitTag split) {
    Sample s;
    if (!rec.contains("id")) record_error(path, line_no, "missing 'id'");
    if (!rec.contains("text")) record_error(path, line_no, "missing 'text'");
    s.id = rec.at("id").is_string() ? rec.at("id").get<std::string>() : rec.at("id").dump();
    s.text = rec.at("text").get<std::string>();
    if (rec.contains("context") && rec.at("context").is_string()) {
        s.context = rec.at("context").get<std::string>();
    }
    bool has_start = rec.contains("span_start") && !rec.at("span_start").is_null();
    bool has_end = rec.contains("span_end") && !rec.at("span_end").is_null();
    if (has_start != has_end) record_error(path, line_no, "span_start/span_end must come together");
    if (has_start) {
        long long b = rec.at("span_start").get<long long>();
        long long e = rec.at("span_end").get<long long>();
        if (b < 0 || e <= b || static_cast<size_t>(e) > s.text.size()) {
            record_error(path, line_no, "target span does not lie within the text");
        }
        s.target_span = Span{static_cast<size_t>(b), static_cast<size_t>(e)};
    }
    s.label = parse_label(rec, d.label_spec, path, line_no);
    if (rec.contains("gold_audio_path") && rec.at("gold_audio_path").is_string()) {
        s.gold_audio = rec.at("gold_audio_path").get<std::string>();
    }
    s.split = split;
    return s;
}

std::vector<std::string> collect_class_names(const std::vector<fs::path>& files,
                                             const std::string& label_field) {
    std::set<std::string> names;
    for (const fs::path& p : files) {
        size_t line_no = 0;
        for (const std::string& line : read_lines(p)) {
            ++line_no;
            if (line.empty()) continue;
            json rec = parse_record(p.string(), line_no, line);
            if (rec.contains(label_field) && rec.at(label_field).is_string()) {
                names.insert(rec.at(label_field).get<std::string>());
            }
        }
    }
    return {names.begin(), names.end()};
}

struct SplitFiles {
    std::vector<std::pair<fs::path, SplitTag>> files;  // in load order
};

// A corpus path is either one .jsonl file (unsplit) or a directory holding
// train/dev/test .jsonl files (canonical layout) or a single corpus.jsonl.
SplitFiles locate_split_files(const std::string& path) {
    SplitFiles out;
    fs::path p(path);
    if (fs::is_regular_file(p)) {
        out.files.emplace_back(p, SplitTag::none);
        return out;
    }
    if (!fs::is_directory(p)) throw Error(Errc::corpus, "corpus path not found: " + path);
    const std::pair<const char*, SplitTag> names[] = {
        {"train.jsonl", SplitTag::train}, {"dev.jsonl", SplitTag::dev},
        {"test.jsonl", SplitTag::test}};
    for (auto& [fname, tag] : names) {
        if (fs::exists(p / fname)) out.files.emplace_back(p / fname, tag);
    }
    if (out.files.empty() && fs::exists(p / "corpus.jsonl")) {
        out.files.emplace_back(p / "corpus.jsonl", SplitTag::none);
    }
    if (out.files.empty()) {
        throw Error(Errc::corpus, "no corpus files found under: " + path);
    }
    return out;
}

Corpus load_interchange_corpus(CorpusDescriptor d, const std::string& path) {
    SplitFiles sf = locate_split_files(path);
    if (d.label_spec.kind == LabelKind::categorical && d.label_spec.classes.empty()) {
        // Data-driven class inventory, built from the training split when
        // present, otherwise from the whole corpus.
        std::vector<fs::path> source;
        for (auto& [f, tag] : sf.files) {
            if (tag == SplitTag::train) source.push_back(f);
        }
        if (source.empty()) {
            for (auto& [f, tag] : sf.files) source.push_back(f);
        }
        d.label_spec.classes = collect_class_names(source, "label");
        if (d.label_spec.classes.empty()) {
            throw Error(Errc::corpus, d.name + ": no class labels found in " + path);
        }
    }
    Corpus c;
    for (auto& [f, tag] : sf.files) {
        size_t line_no = 0;
        for (const std::string& line : read_lines(f)) {
            ++line_no;
            if (line.empty()) continue;
            json rec = parse_record(f.string(), line_no, line);
            c.samples.push_back(interchange_sample(rec, d, f.string(), line_no, tag));
        }
    }
    d.size = c.samples.size();
    c.descriptor = std::move(d);
    return c;
}

// ---- SWBD-S annotator CSV ----------------------------------------------------

// Minimal CSV with quoting: fields separated by commas, quotes double-escaped.
std::vector<std::string> csv_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

Corpus load_swbd_s(CorpusDescriptor d, const std::string& path) {
    fs::path p(path);
    if (fs::is_directory(p)) {
        if (fs::exists(p / "swbd_s.csv")) p /= "swbd_s.csv";
        else return load_interchange_corpus(std::move(d), path);
    }
    if (p.extension() == ".jsonl") return load_interchange_corpus(std::move(d), path);

    auto lines = read_lines(p);
    if (lines.empty()) throw Error(Errc::corpus, path + ": empty corpus file");
    auto header = csv_fields(lines[0]);
    auto col = [&](const std::string& name) -> int {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : static_cast<int>(it - header.begin());
    };
    int c_id = col("id"), c_text = col("text");
    int c_a1 = col("annotator1"), c_a2 = col("annotator2"), c_a3 = col("annotator3");
    int c_audio = col("audio");
    if (c_id < 0 || c_text < 0 || c_a1 < 0 || c_a2 < 0 || c_a3 < 0) {
        throw Error(Errc::corpus,
                    path + ":1: header must name id,text,annotator1,annotator2,annotator3");
    }
    Corpus c;
    for (size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        auto f = csv_fields(lines[ln]);
        if (f.size() < header.size()) record_error(path, ln + 1, "short record");
        Sample s;
        s.id = f[static_cast<size_t>(c_id)];
        s.text = f[static_cast<size_t>(c_text)];
        for (int ci : {c_a1, c_a2, c_a3}) {
            try {
                s.annotator_values.push_back(std::stod(f[static_cast<size_t>(ci)]));
            } catch (const std::exception&) {
                record_error(path, ln + 1, "annotator value is not a number");
            }
        }
        double mean =
            (s.annotator_values[0] + s.annotator_values[1] + s.annotator_values[2]) / 3.0;
        if (mean < d.label_spec.lo || mean > d.label_spec.hi) {
            record_error(path, ln + 1,
                         "label " + format_double(mean) + " outside [" +
                             format_double(d.label_spec.lo) + ", " +
                             format_double(d.label_spec.hi) + "]");
        }
        s.label = Label::continuous(mean);
        if (c_audio >= 0 && static_cast<size_t>(c_audio) < f.size()) {
            s.gold_audio = f[static_cast<size_t>(c_audio)];
        }
        c.samples.push_back(std::move(s));
    }
    d.size = c.samples.size();
    c.descriptor = std::move(d);
    return c;
}

// ---- CB sentence records -------------------------------------------------------

// Native record: {"id", "context": [sentence, ...], "target": sentence,
// "label": number}. Text is the context sentences plus the target joined with
// single spaces; the distribution's own segmentation is kept so the
// last-sentence selection rule never re-segments.
Sample cb_sample(const json& rec, const CorpusDescriptor& d, const std::string& path,
                 size_t line_no, SplitTag split) {
    Sample s;
    if (!rec.contains("id")) record_error(path, line_no, "missing 'id'");
    if (!rec.contains("target")) record_error(path, line_no, "missing 'target'");
    s.id = rec.at("id").is_string() ? rec.at("id").get<std::string>() : rec.at("id").dump();
    std::vector<std::string> sentences;
    if (rec.contains("context")) {
        for (const json& j : rec.at("context")) sentences.push_back(j.get<std::string>());
    }
    sentences.push_back(rec.at("target").get<std::string>());
    for (const std::string& sent : sentences) {
        if (!s.text.empty()) s.text += " ";
        size_t begin = s.text.size();
        s.text += sent;
        s.sentences.push_back(Span{begin, s.text.size()});
    }
    s.label = parse_label(rec, d.label_spec, path, line_no);
    if (rec.contains("gold_audio_path") && rec.at("gold_audio_path").is_string()) {
        s.gold_audio = rec.at("gold_audio_path").get<std::string>();
    }
    s.split = split;
    return s;
}

Corpus load_cb_like(CorpusDescriptor d, const std::string& path) {
    SplitFiles sf = locate_split_files(path);
    // Sniff the first record: interchange files carry "text".
    for (auto& [f, tag] : sf.files) {
        for (const std::string& line : read_lines(f)) {
            if (line.empty()) continue;
            json rec = parse_record(f.string(), 1, line);
            if (rec.contains("text") && !rec.contains("target")) {
                return load_interchange_corpus(std::move(d), path);
            }
            break;
        }
        break;
    }
    Corpus c;
    for (auto& [f, tag] : sf.files) {
        size_t line_no = 0;
        for (const std::string& line : read_lines(f)) {
            ++line_no;
            if (line.empty()) continue;
            json rec = parse_record(f.string(), line_no, line);
            c.samples.push_back(cb_sample(rec, d, f.string(), line_no, tag));
        }
    }
    d.size = c.samples.size();
    c.descriptor = std::move(d);
    return c;
}

// ---- FactBank token/arc records ---------------------------------------------

// Native record: {"id", "text", "label": class-name, "tokens": [{"start",
// "end", "head"}, ...], "event": token-index}. The target span is the yield
// of the dependency subtree rooted at the event token.
Corpus load_factbank(CorpusDescriptor d, const std::string& path) {
    SplitFiles sf = locate_split_files(path);
    for (auto& [f, tag] : sf.files) {
        for (const std::string& line : read_lines(f)) {
            if (line.empty()) continue;
            json rec = parse_record(f.string(), 1, line);
            if (!rec.contains("tokens")) return load_interchange_corpus(std::move(d), path);
            break;
        }
        break;
    }
    if (d.label_spec.classes.empty()) {
        std::vector<fs::path> source;
        for (auto& [f, tag] : sf.files) {
            if (tag == SplitTag::train) source.push_back(f);
        }
        if (source.empty()) {
            for (auto& [f, tag] : sf.files) source.push_back(f);
        }
        d.label_spec.classes = collect_class_names(source, "label");
        if (d.label_spec.classes.empty()) {
            throw Error(Errc::corpus, d.name + ": no class labels found in " + path);
        }
    }
    Corpus c;
    for (auto& [f, tag] : sf.files) {
        size_t line_no = 0;
        for (const std::string& line : read_lines(f)) {
            ++line_no;
            if (line.empty()) continue;
            json rec = parse_record(f.string(), line_no, line);
            Sample s;
            if (!rec.contains("id") || !rec.contains("text") || !rec.contains("tokens") ||
                !rec.contains("event")) {
                record_error(f.string(), line_no, "record needs id, text, tokens, event");
            }
            s.id = rec.at("id").is_string() ? rec.at("id").get<std::string>()
                                            : rec.at("id").dump();
            s.text = rec.at("text").get<std::string>();
            std::vector<Token> tokens;
            std::vector<int> heads;
            for (const json& t : rec.at("tokens")) {
                tokens.push_back({Span{t.at("start").get<size_t>(), t.at("end").get<size_t>()}});
                heads.push_back(t.at("head").get<int>());
            }
            int event = rec.at("event").get<int>();
            try {
                s.target_span = head_to_span(tokens, heads, event);
            } catch (const Error& e) {
                record_error(f.string(), line_no, e.what());
            }
            s.label = parse_label(rec, d.label_spec, f.string(), line_no);
            s.split = tag;
            c.samples.push_back(std::move(s));
        }
    }
    d.size = c.samples.size();
    c.descriptor = std::move(d);
    return c;
}

}  // namespace

CorpusDescriptor registry_descriptor(const std::string& name) {
    for (const CorpusDescriptor& d : registry()) {
        if (d.name == name) return d;
    }
    throw Error(Errc::corpus, "unknown corpus: " + name);
}

std::vector<std::string> registry_names() {
    std::vector<std::string> out;
    for (const CorpusDescriptor& d : registry()) out.push_back(d.name);
    return out;
}

Corpus load_corpus(const std::string& name, const std::string& path) {
    CorpusDescriptor d = registry_descriptor(name);
    if (name == "swbd_s") return load_swbd_s(std::move(d), path);
    if (name == "cb" || name == "cb_prosody") return load_cb_like(std::move(d), path);
    if (name == "factbank") return load_factbank(std::move(d), path);
    return load_interchange_corpus(std::move(d), path);
}

void write_interchange(const std::string& path, const CorpusDescriptor& descriptor,
                       const std::vector<Sample>& samples) {
    std::string out;
    for (const Sample& s : samples) {
        json rec;
        rec["id"] = s.id;
        rec["text"] = s.text;
        rec["context"] = s.context.empty() ? json() : json(s.context);
        // Materialize the selection rule so downstream consumers need no
        // corpus-specific logic.
        std::optional<Span> span = s.target_span;
        if (!span && descriptor.select_rule == SelectRule::last_sentence &&
            !s.sentences.empty()) {
            span = s.sentences.back();
        }
        rec["span_start"] = span ? json(span->begin) : json();
        rec["span_end"] = span ? json(span->end) : json();
        if (s.label.kind == LabelKind::continuous) {
            rec["label"] = s.label.value;
        } else {
            rec["label"] = descriptor.label_spec.classes.at(static_cast<size_t>(s.label.class_id));
        }
        rec["gold_audio_path"] = s.gold_audio.empty() ? json() : json(s.gold_audio);
        out += rec.dump();
        out += "\n";
    }
    write_file_atomic(path, out);
}

std::vector<Sample> read_interchange(const std::string& path, const CorpusDescriptor& descriptor,
                                     SplitTag split) {
    std::vector<Sample> out;
    size_t line_no = 0;
    for (const std::string& line : read_lines(path)) {
        ++line_no;
        if (line.empty()) continue;
        json rec = parse_record(path, line_no, line);
        out.push_back(interchange_sample(rec, descriptor, path, line_no, split));
    }
    return out;
}

}  // namespace ttsaug
