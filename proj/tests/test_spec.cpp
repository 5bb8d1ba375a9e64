#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttsaug/experiment_spec.hpp"
#include "ttsaug/reporting.hpp"
#include "ttsaug/util.hpp"

using namespace ttsaug;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("ttsaug_spec_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

ExperimentSpec parse(const json& doc) { return parse_spec_text(doc.dump(), "<spec>"); }

json minimal(const std::string& corpus = "goemotions") {
    return json{{"corpus", {{"name", corpus}, {"path", "data"}}}};
}

json mock_engine(const std::string& model = "tone-1") {
    return json{{"type", "mock"}, {"model", model}, {"voice", "a"}};
}

std::string error_of(const json& doc) {
    try {
        parse(doc);
    } catch (const Error& e) {
        CHECK(e.code() == Errc::config);
        return e.what();
    }
    FAIL("expected the spec to be rejected: ", doc.dump());
    return "";
}

void write_result(const fs::path& runs, const std::string& name, const std::string& corpus,
                  const std::string& mode, const std::string& engine, const std::string& unit,
                  const std::string& metric, double value) {
    fs::create_directories(runs / name);
    json doc{{"corpus", corpus},     {"mode", mode},          {"engine", engine},
             {"unit", unit},         {"metric_name", metric}, {"metric_value", value},
             {"loss_curve", {1.0}},  {"epochs", 1},           {"seed", 0}};
    write_file_atomic(runs / name / "result.json", doc.dump() + "\n");
}

const AggregateEntry& entry_for(const CollectedResults& collected, const std::string& corpus,
                                Column column) {
    for (const AggregateEntry& e : collected.aggregates)
        if (e.corpus == corpus && e.column == column) return e;
    FAIL("no aggregate for ", corpus, "/", column_name(column));
    static AggregateEntry none;
    return none;
}

}  // namespace

TEST_CASE("a minimal spec fills every default") {
    ExperimentSpec spec = parse(minimal());
    CHECK(spec.corpus_name == "goemotions");
    CHECK(spec.corpus_path == "data");
    CHECK(spec.output_dir == "out");
    CHECK(spec.seed == 42);
    CHECK(spec.budget == doctest::Approx(10.0));
    CHECK(spec.rate_per_char == doctest::Approx(3e-5));
    CHECK(spec.synthesis_parallelism == 1);
    CHECK(spec.engines.empty());
    // No audio available at all: the grid collapses to the text baseline.
    CHECK(spec.sources.empty());
    CHECK(spec.modes == std::vector<FusionMode>{FusionMode::text_only});
    CHECK(spec.train.epochs == 10);
    CHECK(spec.train.learning_rate == doctest::Approx(2e-5));
    CHECK(spec.train.batch_size == 1);
    CHECK(spec.train.loss == LossKind::cross_entropy);  // goemotions is categorical
    CHECK(spec.train.seed == 42);
    CHECK(spec.features.window_seconds == doctest::Approx(30.0));
    CHECK(spec.features.mel.sample_rate == 16000);
    CHECK(spec.features.mel.n_mels == 80);
    CHECK(spec.audio_encoder.in_dims == 80);
    CHECK(spec.folds == 5);
    CHECK(spec.canonical_seeds == std::vector<int>{42, 0, 1});
    CHECK(spec.alpha == doctest::Approx(0.05));
    CHECK(spec.significance == "binomial");
}

TEST_CASE("loss and seed derive from the corpus and the global seed") {
    json doc = minimal("swbd_s");
    doc["seed"] = 7;
    ExperimentSpec spec = parse(doc);
    CHECK(spec.train.loss == LossKind::mse);  // continuous labels
    CHECK(spec.seed == 7);
    CHECK(spec.train.seed == 7);
}

TEST_CASE("engines enable the full default grid and default sources") {
    json doc = minimal("iemocap");  // ships gold audio
    doc["engines"] = {{"local", mock_engine()}, {"remote", mock_engine("tone-2")}};
    ExperimentSpec spec = parse(doc);
    CHECK(spec.sources == std::vector<AudioSource>{AudioSource::gold, AudioSource::local,
                                                   AudioSource::remote});
    CHECK(spec.modes == std::vector<FusionMode>{FusionMode::text_only, FusionMode::audio_only,
                                                FusionMode::early, FusionMode::late});

    json no_gold = minimal("goemotions");
    no_gold["engines"] = {{"local", mock_engine()}};
    ExperimentSpec spec2 = parse(no_gold);
    CHECK(spec2.sources == std::vector<AudioSource>{AudioSource::local});
}

TEST_CASE("mode lists accept aliases, expand fused, and dedupe") {
    json doc = minimal();
    doc["engines"] = {{"local", mock_engine()}};
    doc["modes"] = {"text_only", "fused", "early", "multimodal", "audio"};
    ExperimentSpec spec = parse(doc);
    CHECK(spec.modes == std::vector<FusionMode>{FusionMode::text_only, FusionMode::early,
                                                FusionMode::late, FusionMode::audio_only});

    doc["modes"] = {"text", "samba"};
    std::string err = error_of(doc);
    CHECK(err.find("spec.modes[1]") != std::string::npos);
    CHECK(err.find("samba") != std::string::npos);
}

TEST_CASE("schema violations name the offending key path") {
    json doc = minimal();

    SUBCASE("unknown top-level key") {
        doc["budgett"] = 3;
        CHECK(error_of(doc).find("spec.budgett: unknown key") != std::string::npos);
    }
    SUBCASE("unknown nested key") {
        doc["engines"] = {{"local", mock_engine()}};
        doc["engines"]["local"]["voce"] = "b";
        CHECK(error_of(doc).find("spec.engines.local.voce: unknown key") != std::string::npos);
    }
    SUBCASE("unknown engine slot") {
        doc["engines"] = {{"center", mock_engine()}};
        CHECK(error_of(doc).find("spec.engines.center") != std::string::npos);
    }
    SUBCASE("wrong type") {
        doc["budget"] = "lots";
        std::string err = error_of(doc);
        CHECK(err.find("spec.budget") != std::string::npos);
        CHECK(err.find("expected a number, got a string") != std::string::npos);
    }
    SUBCASE("missing required key") {
        doc["corpus"].erase("path");
        CHECK(error_of(doc).find("spec.corpus.path: missing required key") != std::string::npos);
    }
    SUBCASE("root must be an object") {
        CHECK_THROWS_WITH_AS(parse_spec_text("[1, 2]", "<spec>"),
                             doctest::Contains("expected an object"), Error);
    }
}

TEST_CASE("value constraints are enforced at parse time") {
    CHECK(error_of([] { auto d = minimal(); d["budget"] = 0.0; return d; }())
              .find("spec.budget: must be > 0") != std::string::npos);
    CHECK(error_of([] { auto d = minimal(); d["rate_per_char"] = -1e-5; return d; }())
              .find("spec.rate_per_char") != std::string::npos);
    CHECK(error_of([] { auto d = minimal(); d["train"] = {{"batch_size", 8}}; return d; }())
              .find("the recipe fixes batch_size at 1") != std::string::npos);
    CHECK(error_of([] { auto d = minimal(); d["train"] = {{"epochs", 0}}; return d; }())
              .find("spec.train.epochs: must be >= 1") != std::string::npos);
    CHECK(error_of([] { auto d = minimal(); d["folds"] = 1; return d; }())
              .find("spec.folds") != std::string::npos);
    CHECK(error_of([] { auto d = minimal(); d["seeds"] = json::array(); return d; }())
              .find("spec.seeds") != std::string::npos);
    CHECK(error_of([] { auto d = minimal(); d["seeds"] = {1, "x"}; return d; }())
              .find("spec.seeds[1]") != std::string::npos);
    CHECK(error_of([] { auto d = minimal(); d["report"] = {{"alpha", 1.5}}; return d; }())
              .find("spec.report.alpha") != std::string::npos);
    CHECK(error_of([] { auto d = minimal(); d["report"] = {{"significance", "chi2"}}; return d; }())
              .find("spec.report.significance") != std::string::npos);
    CHECK(error_of([] { auto d = minimal("nope"); return d; }())
              .find("unknown corpus adapter 'nope'") != std::string::npos);
    // The unknown-corpus message lists what would work.
    CHECK(error_of([] { auto d = minimal("nope"); return d; }())
              .find("goemotions") != std::string::npos);
}

TEST_CASE("cross-field validation ties sources, engines, and gold together") {
    SUBCASE("gold needs a corpus that ships recordings") {
        json doc = minimal("goemotions");
        doc["engines"] = {{"local", mock_engine()}};
        doc["sources"] = {"gold"};
        std::string err = error_of(doc);
        CHECK(err.find("spec.sources[0]") != std::string::npos);
        CHECK(err.find("no gold recordings") != std::string::npos);
    }
    SUBCASE("engine sources need a configured slot") {
        json doc = minimal();
        doc["sources"] = {"remote"};
        CHECK(error_of(doc).find("no engine configured under spec.engines.remote") !=
              std::string::npos);
    }
    SUBCASE("audio modes need some audio source") {
        json doc = minimal();
        doc["modes"] = {"early"};
        CHECK(error_of(doc).find("audio-bearing modes need at least one audio source") !=
              std::string::npos);
    }
    SUBCASE("engine sample rate must match the feature pipeline") {
        json doc = minimal();
        doc["engines"] = {{"local", mock_engine()}};
        doc["engines"]["local"]["sample_rate"] = 22050;
        std::string err = error_of(doc);
        CHECK(err.find("spec.engines.local.sample_rate") != std::string::npos);
        CHECK(err.find("16000") != std::string::npos);
    }
    SUBCASE("engine invariants are checked per slot") {
        json doc = minimal();
        doc["engines"] = {{"remote", {{"type", "remote_api"}, {"model", "m"}, {"voice", "v"}}}};
        CHECK(error_of(doc).find("spec.engines.remote") != std::string::npos);
    }
}

TEST_CASE("syntax errors carry line and column positions") {
    try {
        parse_spec_text("{\n  \"corpus\": {\"name\": \"goemotions\",, \"path\": \"x\"}\n}",
                        "conf.json");
        FAIL("expected a syntax error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::config);
        CHECK(std::string(e.what()).find("conf.json:2:") != std::string::npos);
    }
    try {
        parse_spec_text("{\"a\": 1}trailing", "conf.json");
        FAIL("expected a syntax error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("conf.json:1:") != std::string::npos);
        CHECK(std::string(e.what()).find("expected end of input") != std::string::npos);
    }
}

TEST_CASE("the audio encoder width follows the mel band count") {
    json doc = minimal();
    doc["features"] = {{"n_mels", 40}};
    ExperimentSpec spec = parse(doc);
    CHECK(spec.features.mel.n_mels == 40);
    CHECK(spec.audio_encoder.in_dims == 40);
}

TEST_CASE("spec serialization round-trips to the identical normalized form") {
    json doc = minimal("iemocap");
    doc["engines"] = {{"local", mock_engine()},
                      {"remote",
                       {{"type", "remote_api"},
                        {"model", "speech-1"},
                        {"voice", "alloy"},
                        {"endpoint", "https://example.test"},
                        {"api_key_env", "SPEECH_KEY"}}}};
    doc["modes"] = {"text", "fused"};
    doc["sources"] = {"gold", "remote"};
    doc["budget"] = 2.5;
    doc["seed"] = 9;
    doc["train"] = {{"epochs", 3}, {"learning_rate", 0.001}};
    doc["report"] = {{"alpha", 0.01}, {"significance", "paired_t"}};

    ExperimentSpec spec = parse(doc);
    std::string text = spec_to_text(spec);
    ExperimentSpec again = parse_spec_text(text, "<echo>");
    CHECK(spec_to_text(again) == text);

    // The normalized form names every materialized default.
    json echoed = json::parse(text);
    CHECK(echoed.at("folds") == 5);
    CHECK(echoed.at("train").at("batch_size") == 1);
    CHECK(echoed.at("engines").at("remote").at("api_key_env") == "SPEECH_KEY");
    CHECK(echoed.at("sources") == json({"gold", "remote"}));
    CHECK(echoed.at("modes") == json({"text", "early", "late"}));
}

TEST_CASE("load_spec reports missing files and parses real ones") {
    CHECK_THROWS_WITH_AS(load_spec("/definitely/missing.json"),
                         doctest::Contains("spec file not found"), Error);
    TempDir dir;
    write_file_atomic(dir.path / "spec.json", minimal().dump());
    ExperimentSpec spec = load_spec((dir.path / "spec.json").string());
    CHECK(spec.corpus_name == "goemotions");
}

TEST_CASE("collect_run_results groups runs into report columns") {
    TempDir dir;
    fs::path runs = dir.path / "runs";
    // Text baseline plus both fusion variants; early has the better mean.
    write_result(runs, "g_text_none_seed_42", "goemotions", "text", "none", "seed:42", "F1", 50.0);
    write_result(runs, "g_text_none_seed_0", "goemotions", "text", "none", "seed:0", "F1", 52.0);
    write_result(runs, "g_text_none_seed_1", "goemotions", "text", "none", "seed:1", "F1", 51.0);
    write_result(runs, "g_ef_local_seed_42", "goemotions", "early_fusion", "local", "seed:42",
                 "F1", 60.0);
    write_result(runs, "g_ef_local_seed_0", "goemotions", "early_fusion", "local", "seed:0", "F1",
                 62.0);
    write_result(runs, "g_ef_local_seed_1", "goemotions", "early_fusion", "local", "seed:1", "F1",
                 61.0);
    write_result(runs, "g_lf_local_seed_42", "goemotions", "late_fusion", "local", "seed:42", "F1",
                 55.0);
    write_result(runs, "g_lf_local_seed_0", "goemotions", "late_fusion", "local", "seed:0", "F1",
                 54.0);
    write_result(runs, "g_lf_local_seed_1", "goemotions", "late_fusion", "local", "seed:1", "F1",
                 56.0);
    write_result(runs, "g_audio_gold_seed_42", "goemotions", "audio", "gold", "seed:42", "F1",
                 40.0);
    // An unfinished run directory is ignored.
    fs::create_directories(runs / "g_half_done");

    CollectedResults collected = collect_run_results(runs.string(), "binomial");

    const AggregateEntry& text = entry_for(collected, "goemotions", Column::text);
    CHECK(text.per_run == std::vector<double>{52.0, 51.0, 50.0});  // unit-name order
    const AggregateEntry& fused = entry_for(collected, "goemotions", Column::mm_local);
    CHECK(fused.per_run == std::vector<double>{62.0, 61.0, 60.0});  // early wins the collapse
    CHECK(entry_for(collected, "goemotions", Column::audio_gold).per_run ==
          std::vector<double>{40.0});
    CHECK(collected.aggregates.size() == 3);

    // mm_local beats text on all three seeds: one-sided binomial p = 1/8.
    // audio_gold has a different unit set, so it gets no mark.
    REQUIRE(collected.marks.size() == 1);
    CHECK(collected.marks[0].corpus == "goemotions");
    CHECK(collected.marks[0].column == Column::mm_local);
    CHECK(collected.marks[0].p_value == doctest::Approx(0.125));
    CHECK(collected.significance_label.find("binomial") != std::string::npos);
}

TEST_CASE("fusion collapse respects the metric direction") {
    TempDir dir;
    fs::path runs = dir.path / "runs";
    write_result(runs, "s_text_none_fold_0", "swbd_s", "text", "none", "fold:0", "MAE", 0.9);
    write_result(runs, "s_ef_local_fold_0", "swbd_s", "early_fusion", "local", "fold:0", "MAE",
                 0.8);
    write_result(runs, "s_lf_local_fold_0", "swbd_s", "late_fusion", "local", "fold:0", "MAE",
                 0.7);
    CollectedResults collected = collect_run_results(runs.string(), "binomial");
    // Lower MAE wins, so the late-fusion variant provides the column.
    CHECK(entry_for(collected, "swbd_s", Column::mm_local).per_run == std::vector<double>{0.7});
}

TEST_CASE("collect_run_results pairs runs for the configured test") {
    TempDir dir;
    fs::path runs = dir.path / "runs";
    // Treatment gains vary per seed (4, 6, 3 points), so the paired
    // differences have nonzero variance: t ~ 4.9 on df 2, p < 0.05.
    double gains[] = {4.0, 6.0, 3.0};
    for (int s : {0, 1, 2}) {
        write_result(runs, "b_text_" + std::to_string(s), "boolq", "text", "none",
                     "seed:" + std::to_string(s), "Accuracy", 60.0 + s);
        write_result(runs, "b_ef_" + std::to_string(s), "boolq", "early_fusion", "local",
                     "seed:" + std::to_string(s), "Accuracy", 60.0 + s + gains[s]);
        // Identical to the baseline: degenerate under a paired t-test.
        write_result(runs, "b_lf_" + std::to_string(s), "boolq", "audio", "local",
                     "seed:" + std::to_string(s), "Accuracy", 60.0 + s);
    }

    CollectedResults paired = collect_run_results(runs.string(), "paired_t");
    REQUIRE(paired.marks.size() == 1);  // the degenerate pair is skipped
    CHECK(paired.marks[0].column == Column::mm_local);
    CHECK(paired.marks[0].p_value < 0.05);
    CHECK(paired.significance_label.find("paired t-test") != std::string::npos);

    CollectedResults welch = collect_run_results(runs.string(), "welch");
    CHECK(welch.marks.size() == 2);  // Welch tolerates equal samples (p = 1)
    CHECK(welch.significance_label.find("Welch") != std::string::npos);

    CHECK_THROWS_AS(collect_run_results(runs.string(), "chi2"), Error);
}

TEST_CASE("collect_run_results orders corpora by the registry and rejects junk") {
    TempDir dir;
    fs::path runs = dir.path / "runs";
    write_result(runs, "g_text", "goemotions", "text", "none", "seed:0", "F1", 50.0);
    write_result(runs, "b_text", "boolq", "text", "none", "seed:0", "Accuracy", 60.0);
    CollectedResults collected = collect_run_results(runs.string(), "binomial");
    REQUIRE(collected.aggregates.size() == 2);
    CHECK(collected.aggregates[0].corpus == "boolq");  // registry order, not directory order
    CHECK(collected.aggregates[1].corpus == "goemotions");

    SUBCASE("duplicate unit in one column") {
        write_result(runs, "g_text_dup", "goemotions", "text", "none", "seed:0", "F1", 51.0);
        CHECK_THROWS_WITH_AS(collect_run_results(runs.string(), "binomial"),
                             doctest::Contains("duplicate run"), Error);
    }
    SUBCASE("conflicting metric in one column") {
        write_result(runs, "g_text_b", "goemotions", "text", "none", "seed:1", "MAE", 0.5);
        CHECK_THROWS_WITH_AS(collect_run_results(runs.string(), "binomial"),
                             doctest::Contains("conflicting metrics"), Error);
    }
    SUBCASE("unknown mode") {
        write_result(runs, "g_bad", "goemotions", "sideways", "none", "seed:1", "F1", 1.0);
        CHECK_THROWS_WITH_AS(collect_run_results(runs.string(), "binomial"),
                             doctest::Contains("unknown mode"), Error);
    }
}

TEST_CASE("collect_run_results demands at least one completed run") {
    TempDir dir;
    fs::path runs = dir.path / "runs";
    CHECK_THROWS_WITH_AS(collect_run_results(runs.string(), "binomial"),
                         doctest::Contains("no completed runs"), Error);
    fs::create_directories(runs / "incomplete");
    CHECK_THROWS_WITH_AS(collect_run_results(runs.string(), "binomial"),
                         doctest::Contains("no completed runs"), Error);
}
