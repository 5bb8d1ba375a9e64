// Throughput comparison between the OpenMP kernels and their serial
// reference twins. Also cross-checks that both paths produce identical bits,
// since that is the property the tests rely on.
//
// Usage: bench_kernels [repeats]
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ttsaug/kernels.hpp"
#include "ttsaug/rng.hpp"

using namespace ttsaug;
using namespace ttsaug::kernels;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename F>
double time_best_of(int repeats, F&& fn) {
    double best = 1e30;
    for (int r = 0; r < repeats; ++r) {
        auto t0 = Clock::now();
        fn();
        best = std::min(best, seconds_since(t0));
    }
    return best;
}

bool identical(const std::vector<double>& a, const std::vector<double>& b) {
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

void report(const char* name, double work, const char* unit, double t_par, double t_ref,
            bool same) {
    std::printf("%-10s  parallel %8.3f ms  serial %8.3f ms  speedup %5.2fx  %8.1f %s  %s\n",
                name, t_par * 1e3, t_ref * 1e3, t_ref / t_par, work / t_par / 1e6, unit,
                same ? "outputs identical" : "OUTPUT MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
    int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
    if (repeats < 1) repeats = 1;
#ifdef _OPENMP
    std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
    std::printf("openmp: not enabled\n");
#endif

    Rng rng(1);
    bool all_same = true;

    {
        const size_t m = 256, k = 256, n = 256;
        std::vector<double> a(m * k), b(k * n), c_par(m * n), c_ref(m * n);
        for (auto& v : a) v = rng.uniform(-1.0, 1.0);
        for (auto& v : b) v = rng.uniform(-1.0, 1.0);
        double t_par = time_best_of(repeats, [&] { matmul(a.data(), b.data(), c_par.data(), m, k, n); });
        double t_ref = time_best_of(
            repeats, [&] { reference::matmul(a.data(), b.data(), c_ref.data(), m, k, n); });
        bool same = identical(c_par, c_ref);
        all_same = all_same && same;
        report("matmul", 2.0 * static_cast<double>(m * k * n), "MFLOP/s", t_par, t_ref, same);
    }

    {
        std::vector<float> in(48000 * 10);
        for (auto& v : in) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        std::vector<float> out_par, out_ref;
        double t_par = time_best_of(repeats, [&] { out_par = resample(in, 48000, 16000); });
        double t_ref =
            time_best_of(repeats, [&] { out_ref = reference::resample(in, 48000, 16000); });
        bool same = out_par.size() == out_ref.size();
        for (size_t i = 0; same && i < out_par.size(); ++i) same = out_par[i] == out_ref[i];
        all_same = all_same && same;
        report("resample", static_cast<double>(in.size()), "Msample/s", t_par, t_ref, same);
    }

    {
        MelConfig cfg;
        std::vector<float> x(16000 * 10);
        for (auto& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        auto fbank = mel_filterbank(cfg);
        size_t frames = mel_frame_count(x.size(), cfg);
        std::vector<double> out_par(frames * static_cast<size_t>(cfg.n_mels));
        std::vector<double> out_ref(out_par.size());
        double t_par =
            time_best_of(repeats, [&] { log_mel(x.data(), x.size(), cfg, fbank, out_par.data()); });
        double t_ref = time_best_of(
            repeats, [&] { reference::log_mel(x.data(), x.size(), cfg, fbank, out_ref.data()); });
        bool same = identical(out_par, out_ref);
        all_same = all_same && same;
        report("log_mel", static_cast<double>(x.size()), "Msample/s", t_par, t_ref, same);
    }

    if (!all_same) {
        std::fprintf(stderr, "error: parallel and reference outputs differ\n");
        return 1;
    }
    return 0;
}
