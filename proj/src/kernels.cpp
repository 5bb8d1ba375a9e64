#include "ttsaug/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace ttsaug::kernels {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

// Per-element bodies shared by the parallel and reference loops. Keeping the
// inner arithmetic identical makes the two paths bit-exact.

inline double dot_row_col(const double* a_row, const double* b, size_t k, size_t n, size_t col) {
    double acc = 0.0;
    for (size_t p = 0; p < k; ++p) acc += a_row[p] * b[p * n + col];
    return acc;
}

inline double dot_row_row(const double* a_row, const double* b_row, size_t k) {
    double acc = 0.0;
    for (size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
    return acc;
}

inline double dot_col_col(const double* a, const double* b, size_t m, size_t k, size_t n,
                          size_t arow, size_t bcol) {
    double acc = 0.0;
    for (size_t p = 0; p < m; ++p) acc += a[p * k + arow] * b[p * n + bcol];
    return acc;
}

// Parallelizing tiny products costs more than it saves; everything under this
// element count runs serially.
constexpr size_t kParallelThreshold = 16 * 1024;

inline double sinc(double x) {
    if (std::fabs(x) < 1e-12) return 1.0;
    double px = kPi * x;
    return std::sin(px) / px;
}

struct ResamplePlan {
    double step;      // input samples per output sample
    double cutoff;    // cycles per input sample
    double half_width;
    size_t n_out;
};

ResamplePlan make_resample_plan(size_t n_in, int in_rate, int out_rate) {
    ResamplePlan p;
    p.step = static_cast<double>(in_rate) / static_cast<double>(out_rate);
    double ratio = static_cast<double>(out_rate) / static_cast<double>(in_rate);
    p.cutoff = 0.475 * std::min(1.0, ratio);
    constexpr double kTaps = 32.0;
    p.half_width = kTaps / std::min(1.0, ratio);
    p.n_out = resampled_length(n_in, in_rate, out_rate);
    return p;
}

inline float resample_one(const std::vector<float>& in, const ResamplePlan& p, size_t j) {
    double pos = static_cast<double>(j) * p.step;
    long lo = static_cast<long>(std::ceil(pos - p.half_width));
    long hi = static_cast<long>(std::floor(pos + p.half_width));
    double acc = 0.0;
    double wsum = 0.0;
    for (long kk = lo; kk <= hi; ++kk) {
        if (kk < 0 || kk >= static_cast<long>(in.size())) continue;
        double d = static_cast<double>(kk) - pos;
        double w = 2.0 * p.cutoff * sinc(2.0 * p.cutoff * d) *
                   (0.5 + 0.5 * std::cos(kPi * d / p.half_width));
        wsum += w;
        acc += w * in[static_cast<size_t>(kk)];
    }
    if (wsum != 0.0) acc /= wsum;
    return static_cast<float>(acc);
}

// Reflect-padded sample access for the centered STFT.
inline double sample_reflect(const float* x, size_t n, long i) {
    if (n == 1) return x[0];
    long last = static_cast<long>(n) - 1;
    while (i < 0 || i > last) {
        if (i < 0) i = -i;
        if (i > last) i = 2 * last - i;
    }
    return x[i];
}

void log_mel_frame(const float* samples, size_t n, const MelConfig& cfg,
                   const std::vector<double>& fbank, const std::vector<double>& window,
                   size_t t, std::complex<double>* scratch, double* out_row) {
    const size_t n_fft = static_cast<size_t>(cfg.n_fft);
    const size_t n_bins = n_fft / 2 + 1;
    long center = static_cast<long>(t) * cfg.hop;
    long start = center - static_cast<long>(n_fft) / 2;
    for (size_t i = 0; i < n_fft; ++i) {
        scratch[i] = {sample_reflect(samples, n, start + static_cast<long>(i)) * window[i], 0.0};
    }
    fft_radix2(scratch, n_fft);
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double* filt = &fbank[static_cast<size_t>(m) * n_bins];
        double e = 0.0;
        for (size_t b = 0; b < n_bins; ++b) {
            if (filt[b] == 0.0) continue;
            double p = std::norm(scratch[b]);
            e += filt[b] * p;
        }
        out_row[m] = std::log10(std::max(e, cfg.log_floor));
    }
}

}  // namespace

void fft_radix2(std::complex<double>* a, size_t n) {
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft size must be a power of two");
    // bit reversal
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * kPi / static_cast<double>(len);
        std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                std::complex<double> u = a[i + j];
                std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

void matmul(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
            bool accumulate) {
    const bool par = m * k * n >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
    for (long long i = 0; i < static_cast<long long>(m); ++i) {
        const double* a_row = a + static_cast<size_t>(i) * k;
        double* c_row = c + static_cast<size_t>(i) * n;
        for (size_t j = 0; j < n; ++j) {
            double v = dot_row_col(a_row, b, k, n, j);
            c_row[j] = accumulate ? c_row[j] + v : v;
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
               bool accumulate) {
    const bool par = m * k * n >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
    for (long long i = 0; i < static_cast<long long>(m); ++i) {
        const double* a_row = a + static_cast<size_t>(i) * k;
        double* c_row = c + static_cast<size_t>(i) * n;
        for (size_t j = 0; j < n; ++j) {
            double v = dot_row_row(a_row, b + j * k, k);
            c_row[j] = accumulate ? c_row[j] + v : v;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
               bool accumulate) {
    const bool par = m * k * n >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
    for (long long i = 0; i < static_cast<long long>(k); ++i) {
        double* c_row = c + static_cast<size_t>(i) * n;
        for (size_t j = 0; j < n; ++j) {
            double v = dot_col_col(a, b, m, k, n, static_cast<size_t>(i), j);
            c_row[j] = accumulate ? c_row[j] + v : v;
        }
    }
}

size_t resampled_length(size_t n_in, int in_rate, int out_rate) {
    if (in_rate <= 0 || out_rate <= 0) throw std::invalid_argument("sample rates must be positive");
    unsigned long long num =
        static_cast<unsigned long long>(n_in) * static_cast<unsigned long long>(out_rate) +
        static_cast<unsigned long long>(in_rate) / 2;
    return static_cast<size_t>(num / static_cast<unsigned long long>(in_rate));
}

std::vector<float> resample(const std::vector<float>& in, int in_rate, int out_rate) {
    if (in_rate == out_rate) return in;
    ResamplePlan plan = make_resample_plan(in.size(), in_rate, out_rate);
    std::vector<float> out(plan.n_out);
#pragma omp parallel for schedule(static)
    for (long long j = 0; j < static_cast<long long>(plan.n_out); ++j) {
        out[static_cast<size_t>(j)] = resample_one(in, plan, static_cast<size_t>(j));
    }
    return out;
}

size_t mel_frame_count(size_t n_samples, const MelConfig& cfg) {
    if (cfg.hop <= 0) throw std::invalid_argument("hop must be positive");
    return n_samples / static_cast<size_t>(cfg.hop);
}

std::vector<double> mel_filterbank(const MelConfig& cfg) {
    const size_t n_bins = static_cast<size_t>(cfg.n_fft) / 2 + 1;
    std::vector<double> fbank(static_cast<size_t>(cfg.n_mels) * n_bins, 0.0);
    auto hz_to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
    auto mel_to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
    double fmax = cfg.fmax > 0 ? cfg.fmax : cfg.sample_rate / 2.0;
    double mlo = hz_to_mel(cfg.fmin);
    double mhi = hz_to_mel(fmax);
    std::vector<double> centers(static_cast<size_t>(cfg.n_mels) + 2);
    for (size_t i = 0; i < centers.size(); ++i) {
        centers[i] = mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(i) /
                                         static_cast<double>(cfg.n_mels + 1));
    }
    for (int m = 0; m < cfg.n_mels; ++m) {
        double lo = centers[static_cast<size_t>(m)];
        double mid = centers[static_cast<size_t>(m) + 1];
        double hi = centers[static_cast<size_t>(m) + 2];
        for (size_t b = 0; b < n_bins; ++b) {
            double f = static_cast<double>(b) * cfg.sample_rate / cfg.n_fft;
            double w = 0.0;
            if (f > lo && f < mid && mid > lo) w = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi && hi > mid) w = (hi - f) / (hi - mid);
            if (w > 0.0) fbank[static_cast<size_t>(m) * n_bins + b] = w;
        }
    }
    return fbank;
}

void log_mel(const float* samples, size_t n, const MelConfig& cfg,
             const std::vector<double>& fbank, double* out) {
    const size_t frames = mel_frame_count(n, cfg);
    const size_t n_fft = static_cast<size_t>(cfg.n_fft);
    std::vector<double> window(n_fft);
    for (size_t i = 0; i < n_fft; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                         static_cast<double>(n_fft));
    }
#pragma omp parallel
    {
        std::vector<std::complex<double>> scratch(n_fft);
#pragma omp for schedule(static)
        for (long long t = 0; t < static_cast<long long>(frames); ++t) {
            log_mel_frame(samples, n, cfg, fbank, window, static_cast<size_t>(t), scratch.data(),
                          out + static_cast<size_t>(t) * cfg.n_mels);
        }
    }
}

namespace reference {

void matmul(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
            bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) {
            double v = dot_row_col(a + i * k, b, k, n, j);
            c[i * n + j] = accumulate ? c[i * n + j] + v : v;
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
               bool accumulate) {
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < n; ++j) {
            double v = dot_row_row(a + i * k, b + j * k, k);
            c[i * n + j] = accumulate ? c[i * n + j] + v : v;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n,
               bool accumulate) {
    for (size_t i = 0; i < k; ++i) {
        for (size_t j = 0; j < n; ++j) {
            double v = dot_col_col(a, b, m, k, n, i, j);
            c[i * n + j] = accumulate ? c[i * n + j] + v : v;
        }
    }
}

std::vector<float> resample(const std::vector<float>& in, int in_rate, int out_rate) {
    if (in_rate == out_rate) return in;
    ResamplePlan plan = make_resample_plan(in.size(), in_rate, out_rate);
    std::vector<float> out(plan.n_out);
    for (size_t j = 0; j < plan.n_out; ++j) out[j] = resample_one(in, plan, j);
    return out;
}

void log_mel(const float* samples, size_t n, const MelConfig& cfg,
             const std::vector<double>& fbank, double* out) {
    const size_t frames = mel_frame_count(n, cfg);
    const size_t n_fft = static_cast<size_t>(cfg.n_fft);
    std::vector<double> window(n_fft);
    for (size_t i = 0; i < n_fft; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                         static_cast<double>(n_fft));
    }
    std::vector<std::complex<double>> scratch(n_fft);
    for (size_t t = 0; t < frames; ++t) {
        log_mel_frame(samples, n, cfg, fbank, window, t, scratch.data(), out + t * cfg.n_mels);
    }
}

}  // namespace reference

}  // namespace ttsaug::kernels
