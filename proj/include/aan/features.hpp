#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aan/errors.hpp"
#include "aan/tensor.hpp"

namespace aan {

enum class Modality : std::size_t { rgb_resnet = 0, rgb_i3d = 1, flow = 2, opensmile = 3, vggish = 4 };

enum class AffectDimension { arousal, valence };

inline std::string_view affect_dimension_name(AffectDimension d) {
    return d == AffectDimension::arousal ? "arousal" : "valence";
}

inline std::optional<AffectDimension> affect_dimension_from_name(std::string_view name) {
    if (name == "arousal") return AffectDimension::arousal;
    if (name == "valence") return AffectDimension::valence;
    return std::nullopt;
}

inline constexpr std::size_t kNumModalities = 5;
inline constexpr std::size_t kTokenWidth = 8;

struct ModalitySpec {
    std::string_view name;
    std::size_t input_dim;
};

// Fixed order; every per-modality array in the project follows it.
inline constexpr std::array<ModalitySpec, kNumModalities> kModalities = {{
    {"rgb_resnet", 2048},
    {"rgb_i3d", 1024},
    {"flow", 1024},
    {"opensmile", 1582},
    {"vggish", 128},
}};

inline std::optional<Modality> modality_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kNumModalities; ++i) {
        if (kModalities[i].name == name) return static_cast<Modality>(i);
    }
    return std::nullopt;
}

/// One clip segment's five averaged modality vectors.
struct FeatureRecord {
    std::string clip_id;
    std::array<std::vector<double>, kNumModalities> modalities;

    const std::vector<double>& operator[](Modality m) const { return modalities[static_cast<std::size_t>(m)]; }
    std::vector<double>& operator[](Modality m) { return modalities[static_cast<std::size_t>(m)]; }

    void validate() const {
        for (std::size_t i = 0; i < kNumModalities; ++i) {
            const auto& spec = kModalities[i];
            if (modalities[i].size() != spec.input_dim) {
                throw SchemaError("feature schema: modality " + std::string(spec.name) + " of clip '" + clip_id +
                                  "' expected " + std::to_string(spec.input_dim) + " values, got " +
                                  std::to_string(modalities[i].size()));
            }
            for (double v : modalities[i]) {
                if (!std::isfinite(v)) {
                    throw SchemaError("feature schema: non-finite value in modality " + std::string(spec.name) +
                                      " of clip '" + clip_id + "'");
                }
            }
        }
    }
};

/// Consecutive segments of one movie with their labels; the training target
/// is the last label.
struct Window {
    std::string movie_id;
    std::vector<int> segment_indices;
    std::vector<const FeatureRecord*> segments;
    std::vector<double> labels;

    std::size_t length() const { return segments.size(); }
    double target() const { return labels.back(); }
};

// Rows of one modality from a list of records, as an [N, dim] tensor.
inline Tensor stack_modality(std::span<const FeatureRecord* const> records, Modality m) {
    const std::size_t dim = kModalities[static_cast<std::size_t>(m)].input_dim;
    std::vector<double> data;
    data.reserve(records.size() * dim);
    for (const FeatureRecord* r : records) {
        const auto& v = (*r)[m];
        if (v.size() != dim) {
            throw SchemaError("feature schema: modality " + std::string(kModalities[static_cast<std::size_t>(m)].name) +
                              " of clip '" + r->clip_id + "' expected " + std::to_string(dim) + " values, got " +
                              std::to_string(v.size()));
        }
        data.insert(data.end(), v.begin(), v.end());
    }
    return Tensor({records.size(), dim}, std::move(data));
}

}  // namespace aan
