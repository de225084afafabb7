#pragma once

// Log-mel spectrogram front-end for the audio encoder. The hop equals one
// video frame of samples so row t summarizes exactly frame t's window,
// keeping audio tokens aligned 1:1 with video frames.

#include "ssu/common.hpp"

#include <fftw3.h>

#include <complex>
#include <vector>

namespace ssu::audio {

constexpr double kLogFloor = 1e-6;

struct MelSpectrogram {
    Matd values;  // T x n_mels, natural log of floored filterbank energies
    int n_mels = 0;
    int sample_rate = 0;
    double fps = 0;
};

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular HTK-style filterbank over [0, sample_rate/2]: n_mels x n_bins.
inline Matd mel_filterbank(int n_mels, int n_fft, int sample_rate) {
    const int n_bins = n_fft / 2 + 1;
    Matd fb = Matd::Zero(n_mels, n_bins);
    const double mel_lo = hz_to_mel(0.0);
    const double mel_hi = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
    for (int i = 0; i < n_mels + 2; ++i)
        edges[static_cast<std::size_t>(i)] =
            mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
    for (int m = 0; m < n_mels; ++m) {
        double f0 = edges[static_cast<std::size_t>(m)];
        double f1 = edges[static_cast<std::size_t>(m) + 1];
        double f2 = edges[static_cast<std::size_t>(m) + 2];
        for (int k = 0; k < n_bins; ++k) {
            double fk = static_cast<double>(k) * sample_rate / n_fft;
            if (fk > f0 && fk < f1)
                fb(m, k) = (fk - f0) / (f1 - f0);
            else if (fk >= f1 && fk < f2)
                fb(m, k) = (f2 - fk) / (f2 - f1);
        }
    }
    return fb;
}

// Center frequency (Hz) of each mel filter; used by tests to locate the
// filter nearest a pure tone.
inline std::vector<double> mel_filter_centers(int n_mels, int sample_rate) {
    const double mel_lo = hz_to_mel(0.0);
    const double mel_hi = hz_to_mel(sample_rate / 2.0);
    std::vector<double> centers(static_cast<std::size_t>(n_mels));
    for (int m = 0; m < n_mels; ++m)
        centers[static_cast<std::size_t>(m)] =
            mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (n_mels + 1));
    return centers;
}

inline int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

inline MelSpectrogram compute_log_mel(const std::vector<float>& waveform, int sample_rate,
                                      double fps, int n_mels) {
    if (n_mels < 8) throw ConfigError("mel.n_mels: must be >= 8");
    if (fps <= 0) throw ConfigError("mel.fps: must be > 0");
    const int hop = static_cast<int>(std::lround(sample_rate / fps));
    if (hop < 2) throw ConfigError("mel: hop shorter than two samples");
    if (static_cast<int>(waveform.size()) < hop)
        throw ConfigError("mel: waveform shorter than one frame window");
    const int frames = static_cast<int>(waveform.size()) / hop;
    const int n_fft = next_pow2(hop);
    const int n_bins = n_fft / 2 + 1;

    std::vector<double> hann(static_cast<std::size_t>(hop));
    for (int i = 0; i < hop; ++i)
        hann[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (hop - 1));

    Matd fb = mel_filterbank(n_mels, n_fft, sample_rate);

    std::vector<double> in(static_cast<std::size_t>(n_fft), 0.0);
    std::vector<std::complex<double>> out(static_cast<std::size_t>(n_bins));
    fftw_plan plan = fftw_plan_dft_r2c_1d(n_fft, in.data(),
                                          reinterpret_cast<fftw_complex*>(out.data()),
                                          FFTW_ESTIMATE);

    MelSpectrogram spec;
    spec.values = Matd(frames, n_mels);
    spec.n_mels = n_mels;
    spec.sample_rate = sample_rate;
    spec.fps = fps;
    Eigen::VectorXd power(n_bins);
    for (int t = 0; t < frames; ++t) {
        std::fill(in.begin(), in.end(), 0.0);
        for (int i = 0; i < hop; ++i)
            in[static_cast<std::size_t>(i)] =
                static_cast<double>(waveform[static_cast<std::size_t>(t * hop + i)]) *
                hann[static_cast<std::size_t>(i)];
        fftw_execute(plan);
        for (int k = 0; k < n_bins; ++k) power(k) = std::norm(out[static_cast<std::size_t>(k)]);
        Eigen::VectorXd mel = fb * power;
        for (int m = 0; m < n_mels; ++m) spec.values(t, m) = std::log(mel(m) + kLogFloor);
    }
    fftw_destroy_plan(plan);
    return spec;
}

}  // namespace ssu::audio
