// The fixed fine-tuning recipe and the seed/fold experiment protocol that
// turns a corpus plus an audio manifest into per-run metric results.
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ttsaug/audio.hpp"
#include "ttsaug/corpus.hpp"
#include "ttsaug/errors.hpp"
#include "ttsaug/modeling.hpp"
#include "ttsaug/synthesis.hpp"

namespace ttsaug {

enum class LossKind { mse, cross_entropy };
std::string loss_kind_name(LossKind loss);
LossKind loss_kind_from_name(const std::string& name);

// The recipe is deliberately rigid: no early stopping, no schedules, no
// tuning. Only the seed varies between runs.
struct TrainConfig {
    size_t epochs = 10;
    double learning_rate = 2e-5;
    size_t batch_size = 1;
    LossKind loss = LossKind::mse;
    uint64_t seed = 42;
};

// A sample ready for the model: target text already selected, audio already
// decoded, window-fitted, and featurized (null for text-only runs).
struct PreparedSample {
    std::string id;
    std::string text;
    std::shared_ptr<const FeatureTensor> audio;
    Label gold;
};

// Adam with the usual defaults; only the learning rate is configurable, the
// recipe names nothing else.
class AdamOptimizer {
  public:
    AdamOptimizer(std::vector<Param*> params, double learning_rate);
    void zero_grad();
    void step();

  private:
    std::vector<Param*> params_;
    double lr_;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    size_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

// Exactly config.epochs passes in seeded-shuffled order, one optimizer step
// per sample. Returns the per-epoch mean training loss. Throws Errc::config
// when the loss kind contradicts the label kind and Errc::backend on a
// non-finite loss.
std::vector<double> train_model(FusionModel& model, const std::vector<PreparedSample>& train,
                                const TrainConfig& config);

// Last-epoch predictions for each sample, decoded per the label spec.
std::vector<Label> evaluate(FusionModel& model, const std::vector<PreparedSample>& samples,
                            const LabelSpec& spec);

// Which audio accompanies a run: none (text-only), distribution-provided
// recordings, or synthesized audio from one of the two engines.
enum class AudioSource { none, gold, local, remote };
std::string audio_source_name(AudioSource source);
AudioSource audio_source_from_name(const std::string& name);

struct RunResult {
    std::string corpus;
    FusionMode mode = FusionMode::text_only;
    std::string engine;  // gold | local | remote | none
    std::string unit;    // "seed:42" or "fold:3"
    std::string metric_name;
    double metric_value = 0.0;
    std::vector<double> loss_curve;  // one entry per epoch
    std::vector<std::string> ids;    // evaluation-set sample ids
    std::vector<Label> predictions;  // last-epoch predictions, same order
    std::vector<Label> golds;
};

struct ExperimentSetup {
    FusionConfig fusion;
    TrainConfig train;
    AudioSource source = AudioSource::none;
    FeatureConfig features;
    TinyTextConfig text_encoder;
    TinyAudioConfig audio_encoder;
    std::string run_root;  // when nonempty, one persisted directory per run
    bool resume = false;   // reuse completed run directories instead of retraining
};

// Executes the protocol over the split plan: canonical plans train once per
// seed on the canonical train split and evaluate on the canonical test
// split; kfold plans train once per fold on the remaining folds. Audio for
// audio-bearing modes comes from the manifest (local/remote) or the samples'
// gold recordings; a sample without usable audio is a manifest gap error
// that names the missing ids before any training starts.
std::vector<RunResult> run_experiment(const CorpusDescriptor& descriptor,
                                      const std::vector<Sample>& samples,
                                      const AudioManifest* manifest,
                                      const ExperimentSetup& setup, const SplitPlan& plan);

// One entry of the full evaluation grid for a corpus.
struct GridCell {
    FusionMode mode = FusionMode::text_only;
    AudioSource source = AudioSource::none;
};

// The grid covers {text} plus {audio, fused} for each available engine;
// fused expands to both fusion variants, whose aggregates later collapse
// into one reported column (the better of the two).
std::vector<GridCell> experiment_grid(const CorpusDescriptor& descriptor,
                                      const std::vector<AudioSource>& engines);

}  // namespace ttsaug
