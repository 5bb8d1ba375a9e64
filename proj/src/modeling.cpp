#include "ttsaug/modeling.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>

#include <json.hpp>

#include "ttsaug/kernels.hpp"
#include "ttsaug/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ttsaug {

namespace {

void init_normal(Param& p, Rng& rng, double scale) {
    for (double& v : p.value.data) v = rng.normal() * scale;
}

// y = tanh(x W + b), where x is T x in, W is in x out, b is 1 x out.
Matrix linear_tanh(const Matrix& x, const Param& w, const Param& b) {
    Matrix y(x.rows, w.value.cols);
    kernels::matmul(x.data.data(), w.value.data.data(), y.data.data(), x.rows, x.cols,
                    w.value.cols);
    for (size_t t = 0; t < y.rows; ++t) {
        double* row = y.row(t);
        for (size_t j = 0; j < y.cols; ++j) row[j] = std::tanh(row[j] + b.value.data[j]);
    }
    return y;
}

// Backprop through y = tanh(x W + b). grad_y is overwritten with the
// pre-activation gradient; returns dL/dx and accumulates into w, b.
Matrix linear_tanh_backward(const Matrix& x, const Matrix& y, Param& w, Param& b,
                            Matrix& grad_y) {
    for (size_t i = 0; i < grad_y.data.size(); ++i) {
        grad_y.data[i] *= 1.0 - y.data[i] * y.data[i];
    }
    kernels::matmul_tn(x.data.data(), grad_y.data.data(), w.grad.data.data(), x.rows, x.cols,
                       grad_y.cols, /*accumulate=*/true);
    for (size_t t = 0; t < grad_y.rows; ++t) {
        const double* row = grad_y.row(t);
        for (size_t j = 0; j < grad_y.cols; ++j) b.grad.data[j] += row[j];
    }
    Matrix grad_x(x.rows, x.cols);
    kernels::matmul_nt(grad_y.data.data(), w.value.data.data(), grad_x.data.data(), grad_y.rows,
                       grad_y.cols, x.cols);
    return grad_x;
}

// Dense head: logits[o] = sum_i w[o][i] * in[i] + b[o].
std::vector<double> head_forward(const std::vector<double>& in, const Param& w, const Param& b) {
    std::vector<double> out(w.value.rows);
    for (size_t o = 0; o < w.value.rows; ++o) {
        const double* wr = w.value.row(o);
        double acc = b.value.data[o];
        for (size_t i = 0; i < in.size(); ++i) acc += wr[i] * in[i];
        out[o] = acc;
    }
    return out;
}

std::vector<double> head_backward(const std::vector<double>& in, Param& w, Param& b,
                                  const std::vector<double>& grad_out) {
    std::vector<double> grad_in(in.size(), 0.0);
    for (size_t o = 0; o < w.value.rows; ++o) {
        double g = grad_out[o];
        double* wg = w.grad.row(o);
        const double* wv = w.value.row(o);
        for (size_t i = 0; i < in.size(); ++i) {
            wg[i] += g * in[i];
            grad_in[i] += g * wv[i];
        }
        b.grad.data[o] += g;
    }
    return grad_in;
}

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0; }

}  // namespace

// ---- Tokenizer ---------------------------------------------------------------

std::vector<std::string> totalizing_tokens(const std::string& text, size_t cap) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < text.size()) {
        bool word = is_word_byte(static_cast<unsigned char>(text[i]));
        size_t j = i;
        while (j < text.size() && j - i < cap &&
               is_word_byte(static_cast<unsigned char>(text[j])) == word) {
            ++j;
        }
        out.push_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

// ---- TinyTextEncoder ------------------------------------------------------------

TinyTextEncoder::TinyTextEncoder(TinyTextConfig cfg)
    : cfg_(cfg),
      emb_(cfg.vocab, cfg.hidden),
      w1_(cfg.hidden, cfg.hidden),
      b1_(1, cfg.hidden),
      w2_(cfg.hidden, cfg.hidden),
      b2_(1, cfg.hidden) {
    if (cfg_.vocab == 0 || cfg_.hidden == 0 || cfg_.max_positions == 0) {
        throw Error(Errc::config, "text encoder dimensions must be positive");
    }
    Rng rng(cfg_.seed);
    init_normal(emb_, rng, 0.1);
    init_normal(w1_, rng, 1.0 / std::sqrt(static_cast<double>(cfg_.hidden)));
    init_normal(w2_, rng, 1.0 / std::sqrt(static_cast<double>(cfg_.hidden)));
}

std::vector<size_t> TinyTextEncoder::token_ids(const std::string& text) const {
    std::vector<std::string> tokens = totalizing_tokens(text);
    std::vector<size_t> ids;
    ids.reserve(std::min(tokens.size(), cfg_.max_positions));
    for (const std::string& tok : tokens) {
        if (ids.size() == cfg_.max_positions) break;
        ids.push_back(fnv1a64(tok) % cfg_.vocab);
    }
    if (ids.empty()) ids.push_back(fnv1a64("") % cfg_.vocab);
    return ids;
}

Sequence TinyTextEncoder::forward(const std::string& text) {
    ids_ = token_ids(text);
    x0_ = Matrix(ids_.size(), cfg_.hidden);
    for (size_t t = 0; t < ids_.size(); ++t) {
        std::memcpy(x0_.row(t), emb_.value.row(ids_[t]), cfg_.hidden * sizeof(double));
    }
    x1_ = linear_tanh(x0_, w1_, b1_);
    x2_ = linear_tanh(x1_, w2_, b2_);
    return x2_;
}

void TinyTextEncoder::backward(const Matrix& grad_seq) {
    if (grad_seq.rows != x2_.rows || grad_seq.cols != x2_.cols) {
        throw Error(Errc::backend, "text encoder backward shape mismatch");
    }
    Matrix g2 = grad_seq;
    Matrix g1 = linear_tanh_backward(x1_, x2_, w2_, b2_, g2);
    Matrix g0 = linear_tanh_backward(x0_, x1_, w1_, b1_, g1);
    for (size_t t = 0; t < ids_.size(); ++t) {
        double* eg = emb_.grad.row(ids_[t]);
        const double* row = g0.row(t);
        for (size_t j = 0; j < cfg_.hidden; ++j) eg[j] += row[j];
    }
}

std::vector<Param*> TinyTextEncoder::parameters() { return {&emb_, &w1_, &b1_, &w2_, &b2_}; }

// ---- TinyAudioEncoder ------------------------------------------------------------

TinyAudioEncoder::TinyAudioEncoder(TinyAudioConfig cfg)
    : cfg_(cfg),
      w1_(cfg.in_dims, cfg.hidden),
      b1_(1, cfg.hidden),
      w2_(cfg.hidden, cfg.hidden),
      b2_(1, cfg.hidden) {
    if (cfg_.in_dims == 0 || cfg_.hidden == 0 || cfg_.pool_stride == 0) {
        throw Error(Errc::config, "audio encoder dimensions must be positive");
    }
    Rng rng(cfg_.seed);
    init_normal(w1_, rng, 1.0 / std::sqrt(static_cast<double>(cfg_.in_dims)));
    init_normal(w2_, rng, 1.0 / std::sqrt(static_cast<double>(cfg_.hidden)));
}

Sequence TinyAudioEncoder::forward(const FeatureTensor& features) {
    if (features.dims != cfg_.in_dims) {
        throw Error(Errc::backend, "audio encoder expects " + std::to_string(cfg_.in_dims) +
                                       "-dim features, got " + std::to_string(features.dims));
    }
    if (features.frames == 0) throw Error(Errc::backend, "audio encoder got an empty tensor");
    // Dynamic-range normalization, mirroring the full-scale encoder's
    // preprocessing: clamp to 8 below the clip maximum, then rescale to
    // roughly [-1, 1]. Raw log-mels span tens of log units and would pin
    // the tanh stack to its saturated ends.
    double peak = features.data.empty() ? 0.0 : *std::max_element(features.data.begin(),
                                                                  features.data.end());
    auto squash = [peak](double v) { return (std::max(v, peak - 8.0) + 4.0) / 4.0; };
    const size_t blocks = (features.frames + cfg_.pool_stride - 1) / cfg_.pool_stride;
    pooled_ = Matrix(blocks, cfg_.in_dims);
    for (size_t bidx = 0; bidx < blocks; ++bidx) {
        size_t lo = bidx * cfg_.pool_stride;
        size_t hi = std::min(lo + cfg_.pool_stride, features.frames);
        double* row = pooled_.row(bidx);
        for (size_t t = lo; t < hi; ++t) {
            const double* src = features.row(t);
            for (size_t j = 0; j < cfg_.in_dims; ++j) row[j] += squash(src[j]);
        }
        double inv = 1.0 / static_cast<double>(hi - lo);
        for (size_t j = 0; j < cfg_.in_dims; ++j) row[j] *= inv;
    }
    x1_ = linear_tanh(pooled_, w1_, b1_);
    x2_ = linear_tanh(x1_, w2_, b2_);
    return x2_;
}

void TinyAudioEncoder::backward(const Matrix& grad_seq) {
    if (grad_seq.rows != x2_.rows || grad_seq.cols != x2_.cols) {
        throw Error(Errc::backend, "audio encoder backward shape mismatch");
    }
    Matrix g2 = grad_seq;
    Matrix g1 = linear_tanh_backward(x1_, x2_, w2_, b2_, g2);
    (void)linear_tanh_backward(pooled_, x1_, w1_, b1_, g1);  // no gradient into features
}

std::vector<Param*> TinyAudioEncoder::parameters() { return {&w1_, &b1_, &w2_, &b2_}; }

// ---- FusionModel -----------------------------------------------------------------

const char* fusion_mode_name(FusionMode m) {
    switch (m) {
        case FusionMode::text_only: return "text";
        case FusionMode::audio_only: return "audio";
        case FusionMode::early: return "early_fusion";
        case FusionMode::late: return "late_fusion";
    }
    return "?";
}

FusionMode fusion_mode_from_name(const std::string& name) {
    if (name == "text") return FusionMode::text_only;
    if (name == "audio") return FusionMode::audio_only;
    if (name == "early_fusion") return FusionMode::early;
    if (name == "late_fusion") return FusionMode::late;
    throw Error(Errc::config, "unknown fusion mode: " + name);
}

int Prediction::argmax() const {
    int best = 0;
    for (int i = 1; i < static_cast<int>(logits.size()); ++i) {
        if (logits[static_cast<size_t>(i)] > logits[static_cast<size_t>(best)]) best = i;
    }
    return best;
}

FusionModel::FusionModel(FusionConfig cfg, std::shared_ptr<TextEncoder> text,
                         std::shared_ptr<AudioEncoder> audio)
    : cfg_(cfg), text_(std::move(text)), audio_(std::move(audio)) {
    const bool needs_text = cfg_.mode != FusionMode::audio_only;
    const bool needs_audio = cfg_.mode != FusionMode::text_only;
    if (needs_text && !text_) throw Error(Errc::config, "fusion mode needs a text encoder");
    if (needs_audio && !audio_) throw Error(Errc::config, "fusion mode needs an audio encoder");
    if (cfg_.head == HeadKind::classification && cfg_.num_classes < 2) {
        throw Error(Errc::config, "classification needs at least two classes");
    }
    out_dim_ = cfg_.head == HeadKind::regression ? 1 : static_cast<size_t>(cfg_.num_classes);

    Rng rng(cfg_.seed);
    auto make_head = [&](Param& w, Param& b, size_t in) {
        w = Param(out_dim_, in);
        b = Param(1, out_dim_);
        init_normal(w, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    };
    switch (cfg_.mode) {
        case FusionMode::text_only:
            make_head(head_text_w_, head_text_b_, text_->dim());
            break;
        case FusionMode::audio_only:
            make_head(head_audio_w_, head_audio_b_, audio_->dim());
            break;
        case FusionMode::early:
            make_head(head_shared_w_, head_shared_b_, text_->dim() + audio_->dim());
            break;
        case FusionMode::late:
            make_head(head_text_w_, head_text_b_, text_->dim());
            make_head(head_audio_w_, head_audio_b_, audio_->dim());
            make_head(combiner_w_, combiner_b_, 2 * out_dim_);
            break;
    }
}

size_t FusionModel::fused_dim() const {
    switch (cfg_.mode) {
        case FusionMode::text_only: return text_->dim();
        case FusionMode::audio_only: return audio_->dim();
        case FusionMode::early: return text_->dim() + audio_->dim();
        case FusionMode::late: return 2 * out_dim_;  // concatenated logits
    }
    return 0;
}

void FusionModel::check_input(const ModelInput& in) const {
    if (cfg_.mode != FusionMode::audio_only && in.text == nullptr) {
        throw Error(Errc::backend, "model input is missing text");
    }
    if (cfg_.mode != FusionMode::text_only && in.audio == nullptr) {
        throw Error(Errc::backend, "model input is missing audio features");
    }
}

std::vector<double> FusionModel::max_pool(const Sequence& seq, std::vector<size_t>& argmax) {
    std::vector<double> pooled(seq.cols);
    argmax.assign(seq.cols, 0);
    for (size_t j = 0; j < seq.cols; ++j) pooled[j] = seq.at(0, j);
    for (size_t t = 1; t < seq.rows; ++t) {
        const double* row = seq.row(t);
        for (size_t j = 0; j < seq.cols; ++j) {
            if (row[j] > pooled[j]) {  // first winner kept on ties
                pooled[j] = row[j];
                argmax[j] = t;
            }
        }
    }
    return pooled;
}

Prediction FusionModel::forward(const ModelInput& in) {
    check_input(in);
    Prediction pred;
    if (cfg_.mode != FusionMode::audio_only) {
        tb_.seq = text_->forward(*in.text);
        tb_.pooled = max_pool(tb_.seq, tb_.argmax);
    }
    if (cfg_.mode != FusionMode::text_only) {
        ab_.seq = audio_->forward(*in.audio);
        ab_.pooled = max_pool(ab_.seq, ab_.argmax);
    }
    switch (cfg_.mode) {
        case FusionMode::text_only:
            pred.logits = head_forward(tb_.pooled, head_text_w_, head_text_b_);
            break;
        case FusionMode::audio_only:
            pred.logits = head_forward(ab_.pooled, head_audio_w_, head_audio_b_);
            break;
        case FusionMode::early: {
            std::vector<double> cat = tb_.pooled;
            cat.insert(cat.end(), ab_.pooled.begin(), ab_.pooled.end());
            pred.logits = head_forward(cat, head_shared_w_, head_shared_b_);
            break;
        }
        case FusionMode::late: {
            tb_.logits = head_forward(tb_.pooled, head_text_w_, head_text_b_);
            ab_.logits = head_forward(ab_.pooled, head_audio_w_, head_audio_b_);
            std::vector<double> cat = tb_.logits;
            cat.insert(cat.end(), ab_.logits.begin(), ab_.logits.end());
            pred.logits = head_forward(cat, combiner_w_, combiner_b_);
            break;
        }
    }
    has_forward_ = true;
    return pred;
}

void FusionModel::backward(const std::vector<double>& grad_logits) {
    if (!has_forward_) throw Error(Errc::backend, "backward before forward");
    if (grad_logits.size() != out_dim_) {
        throw Error(Errc::backend, "gradient size does not match the model output");
    }

    auto unpool_backward = [](const Branch& br, const std::vector<double>& grad_pooled) {
        Matrix grad_seq(br.seq.rows, br.seq.cols);
        for (size_t j = 0; j < br.seq.cols; ++j) {
            grad_seq.at(br.argmax[j], j) += grad_pooled[j];
        }
        return grad_seq;
    };

    std::vector<double> grad_text_pooled, grad_audio_pooled;
    switch (cfg_.mode) {
        case FusionMode::text_only:
            grad_text_pooled = head_backward(tb_.pooled, head_text_w_, head_text_b_, grad_logits);
            break;
        case FusionMode::audio_only:
            grad_audio_pooled =
                head_backward(ab_.pooled, head_audio_w_, head_audio_b_, grad_logits);
            break;
        case FusionMode::early: {
            std::vector<double> cat = tb_.pooled;
            cat.insert(cat.end(), ab_.pooled.begin(), ab_.pooled.end());
            std::vector<double> gcat =
                head_backward(cat, head_shared_w_, head_shared_b_, grad_logits);
            grad_text_pooled.assign(gcat.begin(),
                                    gcat.begin() + static_cast<long>(tb_.pooled.size()));
            grad_audio_pooled.assign(gcat.begin() + static_cast<long>(tb_.pooled.size()),
                                     gcat.end());
            break;
        }
        case FusionMode::late: {
            std::vector<double> cat = tb_.logits;
            cat.insert(cat.end(), ab_.logits.begin(), ab_.logits.end());
            std::vector<double> gcat = head_backward(cat, combiner_w_, combiner_b_, grad_logits);
            std::vector<double> gzt(gcat.begin(), gcat.begin() + static_cast<long>(out_dim_));
            std::vector<double> gza(gcat.begin() + static_cast<long>(out_dim_), gcat.end());
            grad_text_pooled = head_backward(tb_.pooled, head_text_w_, head_text_b_, gzt);
            grad_audio_pooled = head_backward(ab_.pooled, head_audio_w_, head_audio_b_, gza);
            break;
        }
    }

    if (!grad_text_pooled.empty() && !cfg_.freeze_text) {
        text_->backward(unpool_backward(tb_, grad_text_pooled));
    }
    if (!grad_audio_pooled.empty() && !cfg_.freeze_audio) {
        audio_->backward(unpool_backward(ab_, grad_audio_pooled));
    }
}

std::vector<Param*> FusionModel::parameters() {
    std::vector<Param*> out;
    auto add = [&out](Param& p) {
        if (p.value.rows > 0) out.push_back(&p);
    };
    if (cfg_.mode != FusionMode::audio_only) {
        for (Param* p : text_->parameters()) out.push_back(p);
    }
    if (cfg_.mode != FusionMode::text_only) {
        for (Param* p : audio_->parameters()) out.push_back(p);
    }
    add(head_text_w_);
    add(head_text_b_);
    add(head_audio_w_);
    add(head_audio_b_);
    add(head_shared_w_);
    add(head_shared_b_);
    add(combiner_w_);
    add(combiner_b_);
    return out;
}

std::vector<Param*> FusionModel::trainable_parameters() {
    std::vector<Param*> out;
    auto add = [&out](Param& p) {
        if (p.value.rows > 0) out.push_back(&p);
    };
    if (cfg_.mode != FusionMode::audio_only && !cfg_.freeze_text) {
        for (Param* p : text_->parameters()) out.push_back(p);
    }
    if (cfg_.mode != FusionMode::text_only && !cfg_.freeze_audio) {
        for (Param* p : audio_->parameters()) out.push_back(p);
    }
    add(head_text_w_);
    add(head_text_b_);
    add(head_audio_w_);
    add(head_audio_b_);
    add(head_shared_w_);
    add(head_shared_b_);
    add(combiner_w_);
    add(combiner_b_);
    return out;
}

// ---- Losses -----------------------------------------------------------------------

LossGrad mse_loss(const std::vector<double>& logits, double target) {
    if (logits.size() != 1) throw Error(Errc::backend, "MSE expects a single output");
    double diff = logits[0] - target;
    return {diff * diff, {2.0 * diff}};
}

LossGrad cross_entropy_loss(const std::vector<double>& logits, int target_class) {
    if (logits.empty()) throw Error(Errc::backend, "cross entropy got no logits");
    if (target_class < 0 || static_cast<size_t>(target_class) >= logits.size()) {
        throw Error(Errc::backend, "target class outside the logit range");
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    std::vector<double> p(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& v : p) v /= z;
    LossGrad out;
    out.loss = -std::log(std::max(p[static_cast<size_t>(target_class)], 1e-300));
    out.grad = p;
    out.grad[static_cast<size_t>(target_class)] -= 1.0;
    return out;
}

Label predict_label(const Prediction& pred, const LabelSpec& spec) {
    if (spec.kind == LabelKind::continuous) return Label::continuous(pred.value());
    return Label::categorical(pred.argmax());
}

// ---- Checkpoints --------------------------------------------------------------------

void save_checkpoint(FusionModel& model, const std::string& dir) {
    fs::create_directories(dir);
    auto params = model.parameters();
    json shapes = json::array();
    std::string blob;
    for (Param* p : params) {
        shapes.push_back({p->value.rows, p->value.cols});
        blob.append(reinterpret_cast<const char*>(p->value.data.data()),
                    p->value.data.size() * sizeof(double));
    }
    json meta = {
        {"mode", fusion_mode_name(model.config().mode)},
        {"head", model.config().head == HeadKind::regression ? "regression" : "classification"},
        {"num_classes", model.config().num_classes},
        {"shapes", shapes},
    };
    write_file_atomic(fs::path(dir) / "meta.json", meta.dump(2) + "\n");
    write_file_atomic(fs::path(dir) / "params.bin", blob);
}

void load_checkpoint(FusionModel& model, const std::string& dir) {
    json meta;
    try {
        meta = json::parse(read_file(fs::path(dir) / "meta.json"));
    } catch (const json::parse_error& e) {
        throw Error(Errc::io, dir + "/meta.json: " + e.what());
    }
    if (meta.value("mode", "") != fusion_mode_name(model.config().mode)) {
        throw Error(Errc::io, dir + ": checkpoint fusion mode does not match the model");
    }
    std::string head =
        model.config().head == HeadKind::regression ? "regression" : "classification";
    if (meta.value("head", "") != head ||
        meta.value("num_classes", -1) != model.config().num_classes) {
        throw Error(Errc::io, dir + ": checkpoint head does not match the model");
    }
    auto params = model.parameters();
    const json& shapes = meta.at("shapes");
    if (shapes.size() != params.size()) {
        throw Error(Errc::io, dir + ": checkpoint parameter count mismatch");
    }
    std::string blob = read_file(fs::path(dir) / "params.bin");
    size_t off = 0;
    for (size_t i = 0; i < params.size(); ++i) {
        size_t r = shapes[i][0].get<size_t>();
        size_t c = shapes[i][1].get<size_t>();
        if (r != params[i]->value.rows || c != params[i]->value.cols) {
            throw Error(Errc::io, dir + ": checkpoint shape mismatch at parameter " +
                                      std::to_string(i));
        }
        size_t bytes = r * c * sizeof(double);
        if (off + bytes > blob.size()) throw Error(Errc::io, dir + ": checkpoint blob too short");
        std::memcpy(params[i]->value.data.data(), blob.data() + off, bytes);
        off += bytes;
    }
    if (off != blob.size()) throw Error(Errc::io, dir + ": checkpoint blob has trailing bytes");
}

}  // namespace ttsaug
