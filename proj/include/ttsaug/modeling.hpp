// Classifier/regressor architectures over pluggable text and audio encoders:
// max-pool over time per modality, then either a shared head on concatenated
// representations (early fusion) or per-modality heads whose logits feed a
// learned linear combiner (late fusion). Gradients are hand-rolled; the
// sequence math runs on the shared compute kernels.
//
// Training uses batch size 1 throughout, so encoders keep the state of their
// most recent forward and backward() refers to that call.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ttsaug/audio.hpp"
#include "ttsaug/corpus.hpp"
#include "ttsaug/errors.hpp"
#include "ttsaug/rng.hpp"

namespace ttsaug {

struct Matrix {
    size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    double* row(size_t i) { return data.data() + i * cols; }
    const double* row(size_t i) const { return data.data() + i * cols; }
    double& at(size_t i, size_t j) { return data[i * cols + j]; }
    double at(size_t i, size_t j) const { return data[i * cols + j]; }
    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

// A learnable tensor and its gradient accumulator.
struct Param {
    Matrix value;
    Matrix grad;

    Param() = default;
    Param(size_t r, size_t c) : value(r, c), grad(r, c) {}
    void zero_grad() { grad.fill(0.0); }
};

using Sequence = Matrix;  // time x dim

// ---- Encoder interfaces ----------------------------------------------------

class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual size_t dim() const = 0;
    // Per-position representations; at least one row for any input.
    virtual Sequence forward(const std::string& text) = 0;
    // Gradient of the loss w.r.t. the last forward's output.
    virtual void backward(const Matrix& grad_seq) = 0;
    virtual std::vector<Param*> parameters() = 0;
};

class AudioEncoder {
public:
    virtual ~AudioEncoder() = default;
    virtual size_t dim() const = 0;
    virtual Sequence forward(const FeatureTensor& features) = 0;
    virtual void backward(const Matrix& grad_seq) = 0;
    virtual std::vector<Param*> parameters() = 0;
};

// ---- Tiny deterministic encoders ---------------------------------------------
// Desk-scale stand-ins with the same interfaces and training behavior as
// full-scale pretrained encoders.

// Greedy run tokenizer: maximal runs of alphanumeric or non-alphanumeric
// bytes, each run capped at `cap` characters. Every non-empty text yields at
// least ceil(len/cap) tokens, so long texts always fill the position budget.
std::vector<std::string> totalizing_tokens(const std::string& text, size_t cap = 16);

struct TinyTextConfig {
    size_t vocab = 512;
    size_t hidden = 32;
    size_t max_positions = 512;
    uint64_t seed = 7;
};

class TinyTextEncoder final : public TextEncoder {
public:
    explicit TinyTextEncoder(TinyTextConfig cfg = {});
    size_t dim() const override { return cfg_.hidden; }
    size_t max_positions() const { return cfg_.max_positions; }
    Sequence forward(const std::string& text) override;
    void backward(const Matrix& grad_seq) override;
    std::vector<Param*> parameters() override;
    // Hash-bucket token ids after truncation to the position budget.
    std::vector<size_t> token_ids(const std::string& text) const;

private:
    TinyTextConfig cfg_;
    Param emb_, w1_, b1_, w2_, b2_;
    std::vector<size_t> ids_;
    Matrix x0_, x1_, x2_;
};

struct TinyAudioConfig {
    size_t in_dims = 80;    // mel bands
    size_t hidden = 32;
    size_t pool_stride = 20;  // average-pool over time before the stack
    uint64_t seed = 8;
};

// Log-mel inputs first pass through the reference dynamic-range
// normalization (clamp to clip-max minus 8, then (x + 4) / 4), the same
// preprocessing the full-scale audio encoder applies to its spectrograms.

class TinyAudioEncoder final : public AudioEncoder {
public:
    explicit TinyAudioEncoder(TinyAudioConfig cfg = {});
    size_t dim() const override { return cfg_.hidden; }
    Sequence forward(const FeatureTensor& features) override;
    void backward(const Matrix& grad_seq) override;
    std::vector<Param*> parameters() override;

private:
    TinyAudioConfig cfg_;
    Param w1_, b1_, w2_, b2_;
    Matrix pooled_, x1_, x2_;
};

// ---- Fusion model ---------------------------------------------------------------

enum class FusionMode { text_only, audio_only, early, late };
enum class HeadKind { regression, classification };

const char* fusion_mode_name(FusionMode m);
FusionMode fusion_mode_from_name(const std::string& name);

struct FusionConfig {
    FusionMode mode = FusionMode::text_only;
    HeadKind head = HeadKind::classification;
    int num_classes = 2;      // classification only
    bool freeze_text = false;
    bool freeze_audio = false;
    uint64_t seed = 9;        // head initialization
};

struct ModelInput {
    const std::string* text = nullptr;
    const FeatureTensor* audio = nullptr;
};

struct Prediction {
    std::vector<double> logits;  // one entry for regression

    double value() const { return logits.at(0); }
    // Lowest index wins ties, deterministically.
    int argmax() const;
};

class FusionModel {
public:
    FusionModel(FusionConfig cfg, std::shared_ptr<TextEncoder> text,
                std::shared_ptr<AudioEncoder> audio);

    const FusionConfig& config() const { return cfg_; }
    size_t output_dim() const { return out_dim_; }
    // Width of the pooled representation feeding the (shared) head.
    size_t fused_dim() const;

    Prediction forward(const ModelInput& in);
    // grad_logits = dL/dlogits for the last forward; accumulates into
    // parameter grads (trainable ones only).
    void backward(const std::vector<double>& grad_logits);

    std::vector<Param*> parameters();            // everything, for checkpoints
    std::vector<Param*> trainable_parameters();  // respects the freeze flags

private:
    struct Branch {
        Sequence seq;
        std::vector<size_t> argmax;  // per-dim pool winners
        std::vector<double> pooled;
        std::vector<double> logits;  // late fusion per-modality head output
    };

    void check_input(const ModelInput& in) const;
    static std::vector<double> max_pool(const Sequence& seq, std::vector<size_t>& argmax);

    FusionConfig cfg_;
    std::shared_ptr<TextEncoder> text_;
    std::shared_ptr<AudioEncoder> audio_;
    size_t out_dim_ = 0;
    Param head_text_w_, head_text_b_;    // text head (text_only, late)
    Param head_audio_w_, head_audio_b_;  // audio head (audio_only, late)
    Param head_shared_w_, head_shared_b_;  // early fusion shared head
    Param combiner_w_, combiner_b_;        // late fusion logit combiner
    Branch tb_, ab_;
    bool has_forward_ = false;
};

// ---- Losses and prediction --------------------------------------------------------

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;  // dL/dlogits
};

LossGrad mse_loss(const std::vector<double>& logits, double target);
LossGrad cross_entropy_loss(const std::vector<double>& logits, int target_class);

Label predict_label(const Prediction& pred, const LabelSpec& spec);

// ---- Checkpoints ------------------------------------------------------------------
// meta.json (architecture fingerprint) + params.bin (raw doubles in
// parameters() order). Loading into a mismatched architecture throws Errc::io.

void save_checkpoint(FusionModel& model, const std::string& dir);
void load_checkpoint(FusionModel& model, const std::string& dir);

}  // namespace ttsaug
