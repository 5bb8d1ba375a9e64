#include "ttsaug/experiment_spec.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include <nlohmann/json.hpp>

#include "ttsaug/corpus.hpp"
#include "ttsaug/util.hpp"

namespace ttsaug {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& origin, const std::string& path,
                       const std::string& message) {
    throw Error(Errc::config, origin + ": " + path + ": " + message);
}

const char* type_name(const json& v) {
    if (v.is_object()) return "an object";
    if (v.is_array()) return "an array";
    if (v.is_string()) return "a string";
    if (v.is_boolean()) return "a boolean";
    if (v.is_null()) return "null";
    return "a number";
}

// Guarded view over one JSON object. Every key read is recorded; finish()
// rejects leftovers, so typos surface instead of silently keeping defaults.
class ObjectReader {
  public:
    ObjectReader(const json& obj, std::string path, std::string origin)
        : obj_(obj), path_(std::move(path)), origin_(std::move(origin)) {
        if (!obj.is_object()) fail(origin_, path_, std::string("expected an object, got ") + type_name(obj));
    }

    const json* get(const char* key) {
        used_.insert(key);
        auto it = obj_.find(key);
        return it == obj_.end() ? nullptr : &*it;
    }

    const json& require(const char* key) {
        const json* v = get(key);
        if (!v) fail(origin_, key_path(key), "missing required key");
        return *v;
    }

    std::string str(const char* key, std::string def) {
        const json* v = get(key);
        return v ? str_value(*v, key_path(key)) : std::move(def);
    }

    std::string str_req(const char* key) { return str_value(require(key), key_path(key)); }

    double num(const char* key, double def) {
        const json* v = get(key);
        if (!v) return def;
        if (!v->is_number()) fail(origin_, key_path(key), std::string("expected a number, got ") + type_name(*v));
        return v->get<double>();
    }

    int64_t integer(const char* key, int64_t def) {
        const json* v = get(key);
        if (!v) return def;
        if (!v->is_number_integer()) fail(origin_, key_path(key), std::string("expected an integer, got ") + type_name(*v));
        return v->get<int64_t>();
    }

    int64_t nonneg(const char* key, int64_t def) {
        int64_t v = integer(key, def);
        if (v < 0) fail(origin_, key_path(key), "must be >= 0");
        return v;
    }

    int64_t positive(const char* key, int64_t def) {
        int64_t v = integer(key, def);
        if (v < 1) fail(origin_, key_path(key), "must be >= 1");
        return v;
    }

    std::string key_path(const char* key) const { return path_ + "." + key; }
    const std::string& path() const { return path_; }
    const std::string& origin() const { return origin_; }

    void finish() {
        for (const auto& item : obj_.items())
            if (!used_.count(item.key())) fail(origin_, path_ + "." + item.key(), "unknown key");
    }

  private:
    std::string str_value(const json& v, const std::string& path) {
        if (!v.is_string()) fail(origin_, path, std::string("expected a string, got ") + type_name(v));
        return v.get<std::string>();
    }

    const json& obj_;
    std::string path_, origin_;
    std::set<std::string> used_;
};

FusionMode mode_from_spec_name(const std::string& name, const std::string& origin,
                               const std::string& path) {
    if (name == "text" || name == "text_only") return FusionMode::text_only;
    if (name == "audio" || name == "audio_only") return FusionMode::audio_only;
    if (name == "early" || name == "early_fusion") return FusionMode::early;
    if (name == "late" || name == "late_fusion") return FusionMode::late;
    fail(origin, path, "unknown mode '" + name + "' (expected text, audio, early, late, or fused)");
}

std::vector<FusionMode> parse_modes(const json& arr, const std::string& origin,
                                    const std::string& path) {
    if (!arr.is_array()) fail(origin, path, std::string("expected an array, got ") + type_name(arr));
    std::vector<FusionMode> modes;
    auto push = [&](FusionMode m) {
        if (std::find(modes.begin(), modes.end(), m) == modes.end()) modes.push_back(m);
    };
    for (size_t i = 0; i < arr.size(); ++i) {
        std::string elem_path = path + "[" + std::to_string(i) + "]";
        if (!arr[i].is_string()) fail(origin, elem_path, std::string("expected a string, got ") + type_name(arr[i]));
        std::string name = arr[i].get<std::string>();
        if (name == "fused" || name == "multimodal") {
            push(FusionMode::early);
            push(FusionMode::late);
        } else {
            push(mode_from_spec_name(name, origin, elem_path));
        }
    }
    if (modes.empty()) fail(origin, path, "must name at least one mode");
    return modes;
}

std::vector<AudioSource> parse_sources(const json& arr, const std::string& origin,
                                       const std::string& path) {
    if (!arr.is_array()) fail(origin, path, std::string("expected an array, got ") + type_name(arr));
    std::vector<AudioSource> sources;
    for (size_t i = 0; i < arr.size(); ++i) {
        std::string elem_path = path + "[" + std::to_string(i) + "]";
        if (!arr[i].is_string()) fail(origin, elem_path, std::string("expected a string, got ") + type_name(arr[i]));
        std::string name = arr[i].get<std::string>();
        AudioSource src;
        try {
            src = audio_source_from_name(name);
        } catch (const Error&) {
            fail(origin, elem_path, "unknown source '" + name + "' (expected gold, local, or remote)");
        }
        if (src == AudioSource::none) fail(origin, elem_path, "'none' is not a usable audio source");
        if (std::find(sources.begin(), sources.end(), src) == sources.end()) sources.push_back(src);
    }
    return sources;
}

EngineConfig parse_engine(const json& v, const std::string& origin, const std::string& path) {
    ObjectReader r(v, path, origin);
    EngineConfig cfg;
    cfg.engine_id = r.str_req("type");
    cfg.model_name = r.str("model", "");
    cfg.voice = r.str("voice", "");
    cfg.output_format = r.str("format", "wav");
    cfg.target_sample_rate = static_cast<int>(r.positive("sample_rate", 16000));
    cfg.endpoint = r.str("endpoint", "");
    cfg.api_key_env = r.str("api_key_env", "");
    cfg.command = r.str("command", "");
    r.finish();
    try {
        validate_engine_config(cfg);
    } catch (const Error& e) {
        fail(origin, path, e.what());
    }
    return cfg;
}

ExperimentSpec parse_spec_json(const json& doc, const std::string& origin) {
    ObjectReader r(doc, "spec", origin);
    ExperimentSpec spec;

    {
        ObjectReader c(r.require("corpus"), "spec.corpus", origin);
        spec.corpus_name = c.str_req("name");
        spec.corpus_path = c.str_req("path");
        c.finish();
    }
    CorpusDescriptor descriptor;
    try {
        descriptor = registry_descriptor(spec.corpus_name);
    } catch (const Error&) {
        std::string known = join(registry_names(), ", ");
        fail(origin, "spec.corpus.name",
             "unknown corpus adapter '" + spec.corpus_name + "' (known: " + known + ")");
    }
    if (spec.corpus_path.empty()) fail(origin, "spec.corpus.path", "must not be empty");

    spec.output_dir = r.str("output_dir", "out");
    if (spec.output_dir.empty()) fail(origin, "spec.output_dir", "must not be empty");
    spec.seed = static_cast<uint64_t>(r.nonneg("seed", 42));
    spec.budget = r.num("budget", 10.0);
    if (!(spec.budget > 0.0)) fail(origin, "spec.budget", "must be > 0");
    spec.rate_per_char = r.num("rate_per_char", 3e-5);
    if (spec.rate_per_char < 0.0) fail(origin, "spec.rate_per_char", "must be >= 0");
    spec.synthesis_parallelism = static_cast<size_t>(r.positive("synthesis_parallelism", 1));

    if (const json* engines = r.get("engines")) {
        ObjectReader e(*engines, "spec.engines", origin);
        for (const char* slot : {"local", "remote"}) {
            if (const json* v = e.get(slot))
                spec.engines.emplace(slot, parse_engine(*v, origin, e.key_path(slot)));
        }
        e.finish();
    }

    if (const json* train = r.get("train")) {
        ObjectReader t(*train, "spec.train", origin);
        spec.train.epochs = static_cast<size_t>(t.positive("epochs", 10));
        spec.train.learning_rate = t.num("learning_rate", 2e-5);
        if (!(spec.train.learning_rate >= 0.0))
            fail(origin, "spec.train.learning_rate", "must be >= 0");
        spec.train.batch_size = static_cast<size_t>(t.positive("batch_size", 1));
        if (spec.train.batch_size != 1)
            fail(origin, "spec.train.batch_size", "the recipe fixes batch_size at 1");
        t.finish();
    }
    spec.train.loss = descriptor.label_spec.kind == LabelKind::continuous ? LossKind::mse
                                                                          : LossKind::cross_entropy;
    spec.train.seed = spec.seed;

    if (const json* features = r.get("features")) {
        ObjectReader f(*features, "spec.features", origin);
        spec.features.window_seconds = f.num("window_seconds", 30.0);
        if (!(spec.features.window_seconds > 0.0))
            fail(origin, "spec.features.window_seconds", "must be > 0");
        spec.features.mel.sample_rate = static_cast<int>(f.positive("sample_rate", 16000));
        spec.features.mel.n_fft = static_cast<size_t>(f.positive("n_fft", 512));
        spec.features.mel.hop = static_cast<size_t>(f.positive("hop", 160));
        spec.features.mel.n_mels = static_cast<size_t>(f.positive("n_mels", 80));
        spec.features.mel.fmin = f.num("fmin", 0.0);
        spec.features.mel.fmax = f.num("fmax", 8000.0);
        if (!(spec.features.mel.fmax > spec.features.mel.fmin))
            fail(origin, "spec.features.fmax", "must exceed fmin");
        f.finish();
    }

    if (const json* encoders = r.get("encoders")) {
        ObjectReader e(*encoders, "spec.encoders", origin);
        if (const json* text = e.get("text")) {
            ObjectReader t(*text, "spec.encoders.text", origin);
            spec.text_encoder.vocab = static_cast<size_t>(t.positive("vocab", 512));
            spec.text_encoder.hidden = static_cast<size_t>(t.positive("hidden", 32));
            spec.text_encoder.max_positions = static_cast<size_t>(t.positive("max_positions", 512));
            t.finish();
        }
        if (const json* audio = e.get("audio")) {
            ObjectReader a(*audio, "spec.encoders.audio", origin);
            spec.audio_encoder.hidden = static_cast<size_t>(a.positive("hidden", 32));
            spec.audio_encoder.pool_stride = static_cast<size_t>(a.positive("pool_stride", 20));
            a.finish();
        }
        e.finish();
    }
    // The audio encoder consumes what the feature pipeline emits.
    spec.audio_encoder.in_dims = spec.features.mel.n_mels;

    spec.folds = static_cast<int>(r.positive("folds", 5));
    if (spec.folds < 2) fail(origin, "spec.folds", "must be >= 2");

    if (const json* seeds = r.get("seeds")) {
        if (!seeds->is_array()) fail(origin, "spec.seeds", std::string("expected an array, got ") + type_name(*seeds));
        spec.canonical_seeds.clear();
        for (size_t i = 0; i < seeds->size(); ++i) {
            const json& v = (*seeds)[i];
            std::string elem_path = "spec.seeds[" + std::to_string(i) + "]";
            if (!v.is_number_integer()) fail(origin, elem_path, std::string("expected an integer, got ") + type_name(v));
            spec.canonical_seeds.push_back(v.get<int>());
        }
        if (spec.canonical_seeds.empty()) fail(origin, "spec.seeds", "must name at least one seed");
    }

    if (const json* report = r.get("report")) {
        ObjectReader rep(*report, "spec.report", origin);
        spec.alpha = rep.num("alpha", 0.05);
        if (!(spec.alpha > 0.0 && spec.alpha < 1.0)) fail(origin, "spec.report.alpha", "must lie in (0, 1)");
        spec.significance = rep.str("significance", "binomial");
        if (spec.significance != "binomial" && spec.significance != "paired_t" &&
            spec.significance != "welch")
            fail(origin, "spec.report.significance",
                 "unknown test '" + spec.significance + "' (expected binomial, paired_t, or welch)");
        rep.finish();
    }

    // Audio sources default to everything available: gold when the task ships
    // recordings, plus every configured engine slot.
    std::vector<AudioSource> available;
    if (descriptor.has_gold_audio) available.push_back(AudioSource::gold);
    if (spec.engines.count("local")) available.push_back(AudioSource::local);
    if (spec.engines.count("remote")) available.push_back(AudioSource::remote);

    const json* sources_json = r.get("sources");
    if (sources_json) {
        spec.sources = parse_sources(*sources_json, origin, "spec.sources");
        for (size_t i = 0; i < spec.sources.size(); ++i) {
            AudioSource src = spec.sources[i];
            std::string elem_path = "spec.sources[" + std::to_string(i) + "]";
            if (src == AudioSource::gold && !descriptor.has_gold_audio)
                fail(origin, elem_path,
                     "corpus '" + spec.corpus_name +
                         "' ships no gold recordings; gold-audio availability is a fixed "
                         "property of each task");
            if (src == AudioSource::local && !spec.engines.count("local"))
                fail(origin, elem_path, "no engine configured under spec.engines.local");
            if (src == AudioSource::remote && !spec.engines.count("remote"))
                fail(origin, elem_path, "no engine configured under spec.engines.remote");
        }
    } else {
        spec.sources = available;
    }

    const json* modes_json = r.get("modes");
    if (modes_json) {
        spec.modes = parse_modes(*modes_json, origin, "spec.modes");
        bool audio_bearing = std::any_of(spec.modes.begin(), spec.modes.end(),
                                         [](FusionMode m) { return m != FusionMode::text_only; });
        if (audio_bearing && spec.sources.empty())
            fail(origin, "spec.modes",
                 "audio-bearing modes need at least one audio source (gold or a configured engine)");
    } else {
        spec.modes = {FusionMode::text_only};
        if (!spec.sources.empty()) {
            spec.modes.push_back(FusionMode::audio_only);
            spec.modes.push_back(FusionMode::early);
            spec.modes.push_back(FusionMode::late);
        }
    }

    for (const auto& [slot, engine] : spec.engines)
        if (engine.target_sample_rate != spec.features.mel.sample_rate)
            fail(origin, "spec.engines." + slot + ".sample_rate",
                 "must match spec.features.sample_rate (" +
                     std::to_string(spec.features.mel.sample_rate) + ")");

    r.finish();
    return spec;
}

const char* mode_spec_name(FusionMode m) {
    switch (m) {
        case FusionMode::text_only: return "text";
        case FusionMode::audio_only: return "audio";
        case FusionMode::early: return "early";
        case FusionMode::late: return "late";
    }
    return "text";
}

}  // namespace

ExperimentSpec parse_spec_text(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        size_t pos = e.byte > 0 ? e.byte - 1 : 0;
        pos = std::min(pos, text.size());
        size_t line = 1, col = 1;
        for (size_t i = 0; i < pos; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::string reason = e.what();
        size_t tag = reason.find("] ");
        if (tag != std::string::npos) reason = reason.substr(tag + 2);
        throw Error(Errc::config, origin + ":" + std::to_string(line) + ":" + std::to_string(col) +
                                      ": " + reason);
    }
    return parse_spec_json(doc, origin);
}

ExperimentSpec load_spec(const std::string& path) {
    if (!fs::exists(path)) throw Error(Errc::config, path + ": spec file not found");
    return parse_spec_text(read_file(path), path);
}

std::string spec_to_text(const ExperimentSpec& spec) {
    json doc;
    doc["corpus"] = {{"name", spec.corpus_name}, {"path", spec.corpus_path}};
    doc["output_dir"] = spec.output_dir;
    doc["seed"] = spec.seed;
    doc["budget"] = spec.budget;
    doc["rate_per_char"] = spec.rate_per_char;
    doc["synthesis_parallelism"] = spec.synthesis_parallelism;

    json engines = json::object();
    for (const auto& [slot, cfg] : spec.engines) {
        json e = {{"type", cfg.engine_id},
                  {"model", cfg.model_name},
                  {"voice", cfg.voice},
                  {"format", cfg.output_format},
                  {"sample_rate", cfg.target_sample_rate}};
        if (!cfg.endpoint.empty()) e["endpoint"] = cfg.endpoint;
        if (!cfg.api_key_env.empty()) e["api_key_env"] = cfg.api_key_env;
        if (!cfg.command.empty()) e["command"] = cfg.command;
        engines[slot] = std::move(e);
    }
    doc["engines"] = std::move(engines);

    json modes = json::array();
    for (FusionMode m : spec.modes) modes.push_back(mode_spec_name(m));
    doc["modes"] = std::move(modes);

    json sources = json::array();
    for (AudioSource s : spec.sources) sources.push_back(audio_source_name(s));
    doc["sources"] = std::move(sources);

    doc["train"] = {{"epochs", spec.train.epochs},
                    {"learning_rate", spec.train.learning_rate},
                    {"batch_size", spec.train.batch_size}};
    doc["features"] = {{"window_seconds", spec.features.window_seconds},
                       {"sample_rate", spec.features.mel.sample_rate},
                       {"n_fft", spec.features.mel.n_fft},
                       {"hop", spec.features.mel.hop},
                       {"n_mels", spec.features.mel.n_mels},
                       {"fmin", spec.features.mel.fmin},
                       {"fmax", spec.features.mel.fmax}};
    doc["encoders"] = {{"text",
                        {{"vocab", spec.text_encoder.vocab},
                         {"hidden", spec.text_encoder.hidden},
                         {"max_positions", spec.text_encoder.max_positions}}},
                       {"audio",
                        {{"hidden", spec.audio_encoder.hidden},
                         {"pool_stride", spec.audio_encoder.pool_stride}}}};
    doc["folds"] = spec.folds;
    doc["seeds"] = spec.canonical_seeds;
    doc["report"] = {{"alpha", spec.alpha}, {"significance", spec.significance}};
    return doc.dump(2) + "\n";
}

}  // namespace ttsaug
