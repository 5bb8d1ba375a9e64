#include "ttsaug/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "ttsaug/rng.hpp"
#include "ttsaug/stats.hpp"
#include "ttsaug/util.hpp"

namespace ttsaug {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Distinct model seeds per run, derived deterministically from the configured
// base seed and the run's protocol seed.
uint64_t mix_seed(uint64_t base, uint64_t run_seed) {
    return fnv1a64(std::to_string(base) + "#" + std::to_string(run_seed));
}

std::vector<double> labels_to_doubles(const std::vector<Label>& labels) {
    std::vector<double> out;
    out.reserve(labels.size());
    for (const Label& l : labels) {
        out.push_back(l.kind == LabelKind::continuous ? l.value
                                                      : static_cast<double>(l.class_id));
    }
    return out;
}

json label_to_json(const Label& label, const LabelSpec& spec) {
    if (label.kind == LabelKind::continuous) return label.value;
    if (label.class_id < 0 || static_cast<size_t>(label.class_id) >= spec.classes.size()) {
        throw Error(Errc::report, "class id out of range while persisting predictions");
    }
    return spec.classes[static_cast<size_t>(label.class_id)];
}

Label label_from_json(const json& j, const LabelSpec& spec) {
    if (spec.kind == LabelKind::continuous) return Label::continuous(j.get<double>());
    std::string name = j.get<std::string>();
    for (size_t i = 0; i < spec.classes.size(); ++i) {
        if (spec.classes[i] == name) return Label::categorical(static_cast<int>(i));
    }
    throw Error(Errc::io, "unknown class name in persisted predictions: " + name);
}

}  // namespace

std::string loss_kind_name(LossKind loss) {
    return loss == LossKind::mse ? "mse" : "cross_entropy";
}

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "mse") return LossKind::mse;
    if (name == "cross_entropy") return LossKind::cross_entropy;
    throw Error(Errc::config, "unknown loss: " + name);
}

std::string audio_source_name(AudioSource source) {
    switch (source) {
        case AudioSource::none: return "none";
        case AudioSource::gold: return "gold";
        case AudioSource::local: return "local";
        case AudioSource::remote: return "remote";
    }
    throw Error(Errc::config, "invalid audio source");
}

AudioSource audio_source_from_name(const std::string& name) {
    if (name == "none") return AudioSource::none;
    if (name == "gold") return AudioSource::gold;
    if (name == "local") return AudioSource::local;
    if (name == "remote") return AudioSource::remote;
    throw Error(Errc::config, "unknown audio source: " + name);
}

AdamOptimizer::AdamOptimizer(std::vector<Param*> params, double learning_rate)
    : params_(std::move(params)), lr_(learning_rate) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Param* p : params_) {
        m_.emplace_back(p->value.data.size(), 0.0);
        v_.emplace_back(p->value.data.size(), 0.0);
    }
}

void AdamOptimizer::zero_grad() {
    for (Param* p : params_) p->zero_grad();
}

void AdamOptimizer::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Param& p = *params_[pi];
        std::vector<double>& m = m_[pi];
        std::vector<double>& v = v_[pi];
        for (size_t i = 0; i < p.value.data.size(); ++i) {
            double g = p.grad.data[i];
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            p.value.data[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
        }
    }
}

std::vector<double> train_model(FusionModel& model, const std::vector<PreparedSample>& train,
                                const TrainConfig& config) {
    if (train.empty()) throw Error(Errc::config, "no training samples");
    if (config.batch_size != 1) {
        throw Error(Errc::config, "the recipe fixes batch_size at 1");
    }
    if (config.epochs == 0) throw Error(Errc::config, "epochs must be positive");
    for (const PreparedSample& s : train) {
        bool continuous = s.gold.kind == LabelKind::continuous;
        if (continuous != (config.loss == LossKind::mse)) {
            throw Error(Errc::config,
                        "loss " + loss_kind_name(config.loss) +
                            " does not match the label kind of sample " + s.id);
        }
    }

    AdamOptimizer opt(model.trainable_parameters(), config.learning_rate);
    Rng rng(config.seed);
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> curve;
    curve.reserve(config.epochs);
    for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double total = 0.0;
        for (size_t idx : order) {
            const PreparedSample& s = train[idx];
            ModelInput in;
            in.text = &s.text;
            in.audio = s.audio.get();
            opt.zero_grad();
            Prediction pred = model.forward(in);
            LossGrad lg = config.loss == LossKind::mse
                              ? mse_loss(pred.logits, s.gold.value)
                              : cross_entropy_loss(pred.logits, s.gold.class_id);
            if (!std::isfinite(lg.loss)) {
                throw Error(Errc::backend, "non-finite loss at epoch " +
                                               std::to_string(epoch + 1) + ", sample " + s.id);
            }
            model.backward(lg.grad);
            opt.step();
            total += lg.loss;
        }
        curve.push_back(total / static_cast<double>(train.size()));
    }
    return curve;
}

std::vector<Label> evaluate(FusionModel& model, const std::vector<PreparedSample>& samples,
                            const LabelSpec& spec) {
    std::vector<Label> out;
    out.reserve(samples.size());
    for (const PreparedSample& s : samples) {
        ModelInput in;
        in.text = &s.text;
        in.audio = s.audio.get();
        out.push_back(predict_label(model.forward(in), spec));
    }
    return out;
}

namespace {

// Loads, window-fits, and featurizes one audio file, reusing tensors across
// samples that point at the same file.
std::shared_ptr<const FeatureTensor> featurize(
    const std::string& path, const FeatureConfig& features,
    std::unordered_map<std::string, std::shared_ptr<const FeatureTensor>>& cache) {
    auto it = cache.find(path);
    if (it != cache.end()) return it->second;
    int rate = features.mel.sample_rate;
    Waveform wave = load_waveform(path, rate);
    Waveform fitted;
    fitted.sample_rate = rate;
    fitted.samples = fit_to_window(std::move(wave.samples), rate, features.window_seconds);
    auto tensor = std::make_shared<FeatureTensor>(extract_features(fitted, features));
    cache.emplace(path, tensor);
    return tensor;
}

std::vector<PreparedSample> prepare_samples(const CorpusDescriptor& descriptor,
                                            const std::vector<Sample>& samples,
                                            const AudioManifest* manifest,
                                            const ExperimentSetup& setup) {
    bool needs_audio = setup.fusion.mode != FusionMode::text_only;
    std::vector<PreparedSample> prepared;
    prepared.reserve(samples.size());
    std::vector<std::string> missing;
    std::unordered_map<std::string, std::shared_ptr<const FeatureTensor>> cache;

    for (const Sample& sample : samples) {
        PreparedSample ps;
        ps.id = sample.id;
        ps.text = select_target_text(sample, descriptor);
        ps.gold = sample.label;
        if (needs_audio) {
            std::string path;
            if (setup.source == AudioSource::gold) {
                path = sample.gold_audio;
                if (path.empty()) {
                    missing.push_back(sample.id + " (no gold recording)");
                } else if (!fs::exists(path)) {
                    missing.push_back(sample.id + " (gold file missing: " + path + ")");
                }
            } else {
                const AudioManifestEntry* entry =
                    manifest->find_sample(sample.id, content_digest(trim(ps.text)));
                if (entry == nullptr) {
                    missing.push_back(sample.id + " (no manifest entry)");
                } else if (!fs::exists(entry->file_path)) {
                    missing.push_back(sample.id + " (audio file missing: " + entry->file_path +
                                      ")");
                } else {
                    path = entry->file_path;
                }
            }
            if (missing.empty() && !path.empty()) {
                ps.audio = featurize(path, setup.features, cache);
            }
        }
        prepared.push_back(std::move(ps));
    }

    if (!missing.empty()) {
        std::string detail;
        size_t shown = std::min<size_t>(missing.size(), 10);
        for (size_t i = 0; i < shown; ++i) {
            if (i > 0) detail += ", ";
            detail += missing[i];
        }
        if (missing.size() > shown) {
            detail += ", and " + std::to_string(missing.size() - shown) + " more";
        }
        std::string msg = "audio unavailable for " + std::to_string(missing.size()) +
                          " sample(s) of " + descriptor.name + ": " + detail;
        throw Error(setup.source == AudioSource::gold ? Errc::corpus : Errc::manifest_gap, msg);
    }
    return prepared;
}

std::string unit_dir_name(const RunResult& rr) {
    std::string unit = rr.unit;
    std::replace(unit.begin(), unit.end(), ':', '_');
    return rr.corpus + "_" + fusion_mode_name(rr.mode) + "_" + rr.engine + "_" + unit;
}

void persist_run(const fs::path& dir, const RunResult& rr, const TrainConfig& train,
                 const LabelSpec& spec) {
    fs::create_directories(dir);
    json cfg{{"corpus", rr.corpus},
             {"mode", fusion_mode_name(rr.mode)},
             {"engine", rr.engine},
             {"unit", rr.unit},
             {"epochs", train.epochs},
             {"learning_rate", train.learning_rate},
             {"batch_size", train.batch_size},
             {"loss", loss_kind_name(train.loss)},
             {"seed", train.seed},
             {"metric", rr.metric_name}};
    write_file_atomic(dir / "config.json", cfg.dump(2) + "\n");

    std::string lines;
    for (size_t i = 0; i < rr.ids.size(); ++i) {
        json row{{"id", rr.ids[i]},
                 {"prediction", label_to_json(rr.predictions[i], spec)},
                 {"gold", label_to_json(rr.golds[i], spec)}};
        lines += row.dump();
        lines += '\n';
    }
    write_file_atomic(dir / "predictions.jsonl", lines);

    // result.json lands last and atomically: its presence marks completion.
    json result{{"corpus", rr.corpus},
                {"mode", fusion_mode_name(rr.mode)},
                {"engine", rr.engine},
                {"unit", rr.unit},
                {"metric_name", rr.metric_name},
                {"metric_value", rr.metric_value},
                {"loss_curve", rr.loss_curve}};
    write_file_atomic(dir / "result.json", result.dump(2) + "\n");
}

RunResult load_run(const fs::path& dir, const LabelSpec& spec) {
    RunResult rr;
    json result;
    try {
        result = json::parse(read_file(dir / "result.json"));
        rr.corpus = result.at("corpus").get<std::string>();
        rr.mode = fusion_mode_from_name(result.at("mode").get<std::string>());
        rr.engine = result.at("engine").get<std::string>();
        rr.unit = result.at("unit").get<std::string>();
        rr.metric_name = result.at("metric_name").get<std::string>();
        rr.metric_value = result.at("metric_value").get<double>();
        rr.loss_curve = result.at("loss_curve").get<std::vector<double>>();
        size_t line_no = 0;
        for (const std::string& line : read_lines(dir / "predictions.jsonl")) {
            ++line_no;
            if (trim(line).empty()) continue;
            json row = json::parse(line);
            rr.ids.push_back(row.at("id").get<std::string>());
            rr.predictions.push_back(label_from_json(row.at("prediction"), spec));
            rr.golds.push_back(label_from_json(row.at("gold"), spec));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::io, dir.string() + ": unreadable run directory: " + e.what());
    }
    return rr;
}

}  // namespace

std::vector<RunResult> run_experiment(const CorpusDescriptor& descriptor,
                                      const std::vector<Sample>& samples,
                                      const AudioManifest* manifest,
                                      const ExperimentSetup& setup, const SplitPlan& plan) {
    const FusionMode mode = setup.fusion.mode;
    const bool needs_audio = mode != FusionMode::text_only;
    if (!needs_audio && setup.source != AudioSource::none) {
        throw Error(Errc::config, "text-only runs take no audio source");
    }
    if (needs_audio && setup.source == AudioSource::none) {
        throw Error(Errc::config,
                    std::string(fusion_mode_name(mode)) + " runs need an audio source");
    }
    if (setup.source == AudioSource::gold && !descriptor.has_gold_audio) {
        throw Error(Errc::config, "corpus " + descriptor.name +
                                      " ships no recordings; gold-audio runs are impossible");
    }
    if ((setup.source == AudioSource::local || setup.source == AudioSource::remote) &&
        manifest == nullptr) {
        throw Error(Errc::config, "synthetic-audio runs need an audio manifest");
    }

    bool continuous = descriptor.label_spec.kind == LabelKind::continuous;
    if (continuous != (setup.fusion.head == HeadKind::regression)) {
        throw Error(Errc::config, "prediction head does not match the label kind of " +
                                      descriptor.name);
    }
    if (continuous != (setup.train.loss == LossKind::mse)) {
        throw Error(Errc::config,
                    "loss " + loss_kind_name(setup.train.loss) + " does not match " +
                        descriptor.name + "'s label kind");
    }

    // Split plan sanity before the expensive preparation.
    std::vector<std::pair<std::string, uint64_t>> units;  // (unit name, run seed)
    if (plan.strategy == SplitPlan::Strategy::canonical_seeds) {
        if (!descriptor.has_canonical_split) {
            throw Error(Errc::config,
                        descriptor.name + " has no canonical split; use a kfold plan");
        }
        if (plan.seeds.empty()) throw Error(Errc::config, "canonical plan without seeds");
        for (int s : plan.seeds) {
            units.emplace_back("seed:" + std::to_string(s), static_cast<uint64_t>(s));
        }
    } else {
        if (plan.folds < 2) throw Error(Errc::config, "kfold plan needs at least 2 folds");
        if (plan.assignment.size() != samples.size()) {
            throw Error(Errc::config, "fold assignment does not cover the corpus");
        }
        for (int f = 0; f < plan.folds; ++f) {
            units.emplace_back("fold:" + std::to_string(f), setup.train.seed);
        }
    }

    std::vector<PreparedSample> prepared = prepare_samples(descriptor, samples, manifest, setup);

    std::vector<RunResult> results;
    results.reserve(units.size());
    for (size_t u = 0; u < units.size(); ++u) {
        const auto& [unit, run_seed] = units[u];

        std::vector<const PreparedSample*> train_set;
        std::vector<const PreparedSample*> test_set;
        if (plan.strategy == SplitPlan::Strategy::canonical_seeds) {
            for (size_t i = 0; i < samples.size(); ++i) {
                if (samples[i].split == SplitTag::train) train_set.push_back(&prepared[i]);
                if (samples[i].split == SplitTag::test) test_set.push_back(&prepared[i]);
            }
        } else {
            int fold = static_cast<int>(u);
            for (size_t i = 0; i < samples.size(); ++i) {
                if (plan.assignment[i] == fold) {
                    test_set.push_back(&prepared[i]);
                } else {
                    train_set.push_back(&prepared[i]);
                }
            }
        }
        if (train_set.empty() || test_set.empty()) {
            throw Error(Errc::config, "unit " + unit + " of " + descriptor.name +
                                          " has an empty train or test set");
        }

        RunResult rr;
        rr.corpus = descriptor.name;
        rr.mode = mode;
        rr.engine = audio_source_name(setup.source);
        rr.unit = unit;
        rr.metric_name = metric_name(descriptor.metric);

        fs::path dir;
        if (!setup.run_root.empty()) dir = fs::path(setup.run_root) / unit_dir_name(rr);
        if (setup.resume && !dir.empty() && fs::exists(dir / "result.json")) {
            results.push_back(load_run(dir, descriptor.label_spec));
            continue;
        }

        TinyTextConfig text_cfg = setup.text_encoder;
        text_cfg.seed = mix_seed(text_cfg.seed, run_seed);
        TinyAudioConfig audio_cfg = setup.audio_encoder;
        audio_cfg.seed = mix_seed(audio_cfg.seed, run_seed);
        FusionConfig fusion_cfg = setup.fusion;
        fusion_cfg.seed = mix_seed(fusion_cfg.seed, run_seed);
        if (descriptor.label_spec.kind == LabelKind::categorical) {
            fusion_cfg.num_classes = descriptor.label_spec.classes.size();
        }
        std::shared_ptr<TextEncoder> text_enc;
        std::shared_ptr<AudioEncoder> audio_enc;
        if (mode != FusionMode::audio_only) {
            text_enc = std::make_shared<TinyTextEncoder>(text_cfg);
        }
        if (needs_audio) audio_enc = std::make_shared<TinyAudioEncoder>(audio_cfg);
        FusionModel model(fusion_cfg, text_enc, audio_enc);

        TrainConfig train_cfg = setup.train;
        train_cfg.seed = run_seed;

        std::vector<PreparedSample> train_copy;
        train_copy.reserve(train_set.size());
        for (const PreparedSample* p : train_set) train_copy.push_back(*p);
        rr.loss_curve = train_model(model, train_copy, train_cfg);

        std::vector<PreparedSample> test_copy;
        test_copy.reserve(test_set.size());
        for (const PreparedSample* p : test_set) test_copy.push_back(*p);
        std::vector<Label> preds = evaluate(model, test_copy, descriptor.label_spec);

        for (const PreparedSample& p : test_copy) {
            rr.ids.push_back(p.id);
            rr.golds.push_back(p.gold);
        }
        rr.predictions = preds;
        rr.metric_value = compute_metric(descriptor.metric, labels_to_doubles(preds),
                                         labels_to_doubles(rr.golds));

        if (!dir.empty()) persist_run(dir, rr, train_cfg, descriptor.label_spec);
        results.push_back(std::move(rr));
    }
    return results;
}

std::vector<GridCell> experiment_grid(const CorpusDescriptor& descriptor,
                                      const std::vector<AudioSource>& engines) {
    std::vector<AudioSource> usable;
    for (AudioSource e : engines) {
        if (e == AudioSource::none) {
            throw Error(Errc::config, "none is not an engine");
        }
        if (e == AudioSource::gold && !descriptor.has_gold_audio) continue;
        if (std::find(usable.begin(), usable.end(), e) == usable.end()) usable.push_back(e);
    }
    std::vector<GridCell> grid;
    grid.push_back({FusionMode::text_only, AudioSource::none});
    for (AudioSource e : usable) grid.push_back({FusionMode::audio_only, e});
    for (AudioSource e : usable) {
        grid.push_back({FusionMode::early, e});
        grid.push_back({FusionMode::late, e});
    }
    return grid;
}

}  // namespace ttsaug
