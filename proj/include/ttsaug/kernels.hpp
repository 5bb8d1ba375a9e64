// Data-parallel compute kernels behind the audio pipeline and the tiny
// encoder backends. Each kernel has an OpenMP entry point and a serial twin
// under kernels::reference. Both share the same per-element arithmetic, so
// outputs are bit-identical regardless of thread count; tests assert exact
// equality and bench/bench_kernels.cpp compares throughput.
#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace ttsaug::kernels {

// Row-major matrix products used by the linear layers.
//   matmul:    C(m x n)  = A(m x k) * B(k x n)       [+C if accumulate]
//   matmul_nt: C(m x n)  = A(m x k) * B(n x k)^T
//   matmul_tn: C(k x n)  = A(m x k)^T * B(m x n)
void matmul(const double* a, const double* b, double* c,
            size_t m, size_t k, size_t n, bool accumulate = false);
void matmul_nt(const double* a, const double* b, double* c,
               size_t m, size_t k, size_t n, bool accumulate = false);
void matmul_tn(const double* a, const double* b, double* c,
               size_t m, size_t k, size_t n, bool accumulate = false);

// Windowed-sinc resampler. Output length is round(n_in * out_rate / in_rate)
// computed in integer arithmetic. Returns the input unchanged when the rates
// match. Kernel weights are normalized per output sample so DC is preserved
// at the edges.
std::vector<float> resample(const std::vector<float>& in, int in_rate, int out_rate);
size_t resampled_length(size_t n_in, int in_rate, int out_rate);

// In-place radix-2 FFT; n must be a power of two.
void fft_radix2(std::complex<double>* data, size_t n);

struct MelConfig {
    int sample_rate = 16000;
    int n_fft = 512;       // power of two
    int hop = 160;
    int n_mels = 80;
    double fmin = 0.0;
    double fmax = 8000.0;  // defaults to Nyquist of sample_rate
    double log_floor = 1e-10;
};

// Number of frames produced for n_samples of audio (center-padded STFT).
size_t mel_frame_count(size_t n_samples, const MelConfig& cfg);

// Triangular mel filterbank on the HTK mel scale; (n_mels x (n_fft/2+1)).
std::vector<double> mel_filterbank(const MelConfig& cfg);

// log10 mel power spectrogram. `out` must hold frame_count * n_mels doubles,
// row-major (frame-major). Frames are centered at t*hop with reflect padding.
void log_mel(const float* samples, size_t n, const MelConfig& cfg,
             const std::vector<double>& filterbank, double* out);

namespace reference {
void matmul(const double* a, const double* b, double* c,
            size_t m, size_t k, size_t n, bool accumulate = false);
void matmul_nt(const double* a, const double* b, double* c,
               size_t m, size_t k, size_t n, bool accumulate = false);
void matmul_tn(const double* a, const double* b, double* c,
               size_t m, size_t k, size_t n, bool accumulate = false);
std::vector<float> resample(const std::vector<float>& in, int in_rate, int out_rate);
void log_mel(const float* samples, size_t n, const MelConfig& cfg,
             const std::vector<double>& filterbank, double* out);
}  // namespace reference

}  // namespace ttsaug::kernels
