#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "aan/dataio.hpp"
#include "aan/errors.hpp"
#include "aan/features.hpp"

namespace aan {

struct SyntheticSpec {
    std::size_t n_movies = 8;
    std::size_t segments_per_movie = 120;
    std::uint64_t seed = 42;
    double noise_std = 0.1;
    std::size_t smoothing_window = 5;
    double duration_s = 5.0;

    void validate() const {
        if (n_movies < 1 || segments_per_movie < 1 || smoothing_window < 1) {
            throw ParameterError("synthetic spec: counts must be positive");
        }
        if (!(noise_std >= 0.0)) throw ParameterError("synthetic spec: noise_std must be >= 0");
        if (!(duration_s > 0.0)) throw ParameterError("synthetic spec: duration must be positive");
    }
};

namespace detail {

// Moving average of unit Gaussians, min-max rescaled to [-1, 1].
inline std::vector<double> smoothed_latent(std::size_t n, std::size_t window, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> raw(n + window - 1);
    for (auto& v : raw) v = normal(rng);
    std::vector<double> out(n);
    for (std::size_t t = 0; t < n; ++t) {
        double acc = 0.0;
        for (std::size_t k = 0; k < window; ++k) acc += raw[t + k];
        out[t] = acc / static_cast<double>(window);
    }
    const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
    const double min = *lo, span = *hi - *lo;
    for (auto& v : out) v = span > 0.0 ? std::clamp(2.0 * (v - min) / span - 1.0, -1.0, 1.0) : 0.0;
    return out;
}

}  // namespace detail

/// Dataset with a planted signal: arousal a(t) is a smoothed random walk per
/// movie, valence an independent one; each modality vector is a fixed random
/// linear image of [a, a^2, 1] plus Gaussian noise. Only arousal is
/// recoverable from the features.
inline Dataset synth_generate(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    // Per-modality maps, row-major [dim x 3].
    std::array<std::vector<double>, kNumModalities> maps;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
        maps[m].resize(kModalities[m].input_dim * 3);
        for (auto& v : maps[m]) v = normal(rng);
    }

    Dataset d;
    char buf[64];
    for (std::size_t movie = 0; movie < spec.n_movies; ++movie) {
        const auto arousal = detail::smoothed_latent(spec.segments_per_movie, spec.smoothing_window, rng);
        const auto valence = detail::smoothed_latent(spec.segments_per_movie, spec.smoothing_window, rng);
        std::snprintf(buf, sizeof(buf), "movie_%02zu", movie);
        const std::string movie_id = buf;
        for (std::size_t t = 0; t < spec.segments_per_movie; ++t) {
            ClipManifestEntry e;
            std::snprintf(buf, sizeof(buf), "m%02zu_s%04zu", movie, t);
            e.clip_id = buf;
            e.movie_id = movie_id;
            e.segment_index = static_cast<int>(t);
            e.duration_s = spec.duration_s;
            e.arousal = arousal[t];
            e.valence = valence[t];
            e.label_range = kCognimuseRange;

            FeatureRecord r;
            r.clip_id = e.clip_id;
            const std::array<double, 3> basis = {arousal[t], arousal[t] * arousal[t], 1.0};
            for (std::size_t m = 0; m < kNumModalities; ++m) {
                const std::size_t dim = kModalities[m].input_dim;
                auto& v = r.modalities[m];
                v.resize(dim);
                for (std::size_t j = 0; j < dim; ++j) {
                    const double* row = maps[m].data() + j * 3;
                    v[j] = row[0] * basis[0] + row[1] * basis[1] + row[2] * basis[2];
                    if (spec.noise_std > 0.0) v[j] += spec.noise_std * normal(rng);
                }
            }
            d.manifest.push_back(std::move(e));
            d.records.push_back(std::move(r));
        }
    }
    return d;
}

}  // namespace aan
