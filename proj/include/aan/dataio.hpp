#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "aan/errors.hpp"
#include "aan/features.hpp"

namespace aan {

namespace fs = std::filesystem;

struct LabelRange {
    double lo = -1.0;
    double hi = 1.0;

    bool contains(double v) const { return v >= lo && v <= hi; }
    bool operator==(const LabelRange&) const = default;
};

inline constexpr LabelRange kCognimuseRange{-1.0, 1.0};
inline constexpr LabelRange kEimt16Range{0.0, 5.0};

struct ClipManifestEntry {
    std::string clip_id;
    std::string movie_id;
    int segment_index = 0;
    double duration_s = 5.0;
    std::optional<double> arousal;
    std::optional<double> valence;
    LabelRange label_range = kCognimuseRange;

    std::optional<double> label(AffectDimension d) const { return d == AffectDimension::arousal ? arousal : valence; }
    bool operator==(const ClipManifestEntry&) const = default;
};

using Manifest = std::vector<ClipManifestEntry>;

inline void sort_manifest(Manifest& m) {
    std::stable_sort(m.begin(), m.end(), [](const auto& a, const auto& b) {
        return std::tie(a.movie_id, a.segment_index) < std::tie(b.movie_id, b.segment_index);
    });
}

namespace detail {

// 1-based line of each top-level array element in a JSON document.
inline std::vector<int> element_lines(std::string_view text) {
    std::vector<int> lines;
    int line = 1, depth = 0;
    bool in_string = false, escaped = false;
    for (char c : text) {
        if (c == '\n') ++line;
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '[' || c == '{') {
            if (depth == 1) lines.push_back(line);
            ++depth;
        } else if (c == ']' || c == '}') {
            --depth;
        }
    }
    return lines;
}

inline int line_of_offset(std::string_view text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

/// Parses a manifest document: a JSON array of objects with keys clip_id,
/// movie_id, segment_index, duration_s, arousal, valence, label_range
/// ([lo, hi]). Labels may be null. Rows come back sorted by (movie, segment).
inline Manifest parse_manifest(std::string_view text) {
    Manifest out;
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return out;
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("manifest: malformed JSON at line " + std::to_string(detail::line_of_offset(text, e.byte)) + ": " +
                         e.what());
    }
    if (!doc.is_array()) throw ParseError("manifest: line 1: top level must be an array");
    const std::vector<int> lines = detail::element_lines(text);
    std::map<std::string, std::set<int>> seen;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const int line = i < lines.size() ? lines[i] : 0;
        const auto& row = doc[i];
        auto fail = [&](const std::string& msg) { return ParseError("manifest: line " + std::to_string(line) + ": " + msg); };
        if (!row.is_object()) throw fail("row is not an object");
        ClipManifestEntry e;
        try {
            e.clip_id = row.at("clip_id").get<std::string>();
            e.movie_id = row.at("movie_id").get<std::string>();
            e.segment_index = row.at("segment_index").get<int>();
            e.duration_s = row.at("duration_s").get<double>();
            if (row.contains("arousal") && !row["arousal"].is_null()) e.arousal = row["arousal"].get<double>();
            if (row.contains("valence") && !row["valence"].is_null()) e.valence = row["valence"].get<double>();
            const auto& range = row.at("label_range");
            if (!range.is_array() || range.size() != 2) throw fail("label_range must be [lo, hi]");
            e.label_range = {range[0].get<double>(), range[1].get<double>()};
        } catch (const nlohmann::json::exception& ex) {
            throw fail(ex.what());
        }
        if (!(e.label_range.lo < e.label_range.hi)) throw fail("label_range lower bound must be below upper bound");
        if (!(e.duration_s > 0.0)) throw fail("duration_s must be positive");
        if (e.segment_index < 0) throw fail("segment_index must be non-negative");
        for (auto [name, v] : {std::pair{"arousal", e.arousal}, std::pair{"valence", e.valence}}) {
            if (v && !e.label_range.contains(*v)) {
                throw RangeError("manifest: line " + std::to_string(line) + ": " + name + " " + std::to_string(*v) +
                                 " outside [" + std::to_string(e.label_range.lo) + ", " +
                                 std::to_string(e.label_range.hi) + "]");
            }
        }
        if (!seen[e.movie_id].insert(e.segment_index).second) {
            throw fail("duplicate segment_index " + std::to_string(e.segment_index) + " in movie " + e.movie_id);
        }
        out.push_back(std::move(e));
    }
    sort_manifest(out);
    return out;
}

inline Manifest load_manifest(const fs::path& path) { return parse_manifest(detail::read_file(path)); }

inline std::string format_manifest(Manifest manifest) {
    sort_manifest(manifest);
    std::string out = "[\n";
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& e = manifest[i];
        nlohmann::ordered_json row;
        row["clip_id"] = e.clip_id;
        row["movie_id"] = e.movie_id;
        row["segment_index"] = e.segment_index;
        row["duration_s"] = e.duration_s;
        row["arousal"] = e.arousal ? nlohmann::ordered_json(*e.arousal) : nlohmann::ordered_json(nullptr);
        row["valence"] = e.valence ? nlohmann::ordered_json(*e.valence) : nlohmann::ordered_json(nullptr);
        row["label_range"] = {e.label_range.lo, e.label_range.hi};
        out += "  " + row.dump() + (i + 1 < manifest.size() ? ",\n" : "\n");
    }
    return out + "]\n";
}

inline void save_manifest(const fs::path& path, const Manifest& manifest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << format_manifest(manifest);
}

enum class FeatureFormat { text, binary };

inline fs::path feature_path(const fs::path& dir, Modality m, FeatureFormat format) {
    const std::string stem = "features_" + std::string(kModalities[static_cast<std::size_t>(m)].name);
    return dir / (stem + (format == FeatureFormat::text ? ".csv" : ".aanf"));
}

inline constexpr std::array<char, 4> kFeatureMagic = {'A', 'A', 'N', 'F'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 16;

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

inline void append_number(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

}  // namespace detail

/// One file per modality. Text: `clip_id,0,1,...` header then one row per
/// clip. Binary: "AANF", version, modality code, dimension (little-endian
/// u32 each) followed by float32 rows in the given record order.
inline void save_features(const fs::path& dir, std::span<const FeatureRecord> records, FeatureFormat format) {
    fs::create_directories(dir);
    for (std::size_t mi = 0; mi < kNumModalities; ++mi) {
        const auto m = static_cast<Modality>(mi);
        const std::size_t dim = kModalities[mi].input_dim;
        std::string buf;
        if (format == FeatureFormat::text) {
            buf = "clip_id";
            for (std::size_t j = 0; j < dim; ++j) buf += "," + std::to_string(j);
            buf += "\n";
            for (const auto& r : records) {
                if (r[m].size() != dim) r.validate();
                buf += r.clip_id;
                for (double v : r[m]) {
                    buf += ',';
                    detail::append_number(buf, v);
                }
                buf += '\n';
            }
        } else {
            buf.append(kFeatureMagic.begin(), kFeatureMagic.end());
            detail::put_u32(buf, kFeatureVersion);
            detail::put_u32(buf, static_cast<std::uint32_t>(mi));
            detail::put_u32(buf, static_cast<std::uint32_t>(dim));
            buf.reserve(kFeatureHeaderBytes + records.size() * dim * 4);
            for (const auto& r : records) {
                if (r[m].size() != dim) r.validate();
                for (double v : r[m]) detail::put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            }
        }
        std::ofstream out(feature_path(dir, m, format), std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + feature_path(dir, m, format).string());
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
}

namespace detail {

inline void load_text_modality(const fs::path& path, Modality m, const Manifest& manifest,
                               std::vector<FeatureRecord>& records) {
    const std::string modality_name(kModalities[static_cast<std::size_t>(m)].name);
    const std::size_t dim = kModalities[static_cast<std::size_t>(m)].input_dim;
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < manifest.size(); ++i) index[manifest[i].clip_id] = i;
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    std::vector<char> filled(manifest.size(), 0);
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 || line.empty()) continue;
        const auto comma = line.find(',');
        const std::string clip = line.substr(0, comma);
        auto it = index.find(clip);
        if (it == index.end()) continue;  // extra clips are ignored
        std::vector<double> values;
        values.reserve(dim);
        std::size_t pos = comma;
        while (pos != std::string::npos) {
            const std::size_t start = pos + 1;
            pos = line.find(',', start);
            const std::size_t end = pos == std::string::npos ? line.size() : pos;
            double v = 0.0;
            auto res = std::from_chars(line.data() + start, line.data() + end, v);
            if (res.ec != std::errc() || res.ptr != line.data() + end) {
                throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": bad number");
            }
            values.push_back(v);
        }
        if (values.size() != dim) {
            throw SchemaError("feature schema: modality " + modality_name + " of clip '" + clip + "' expected " +
                              std::to_string(dim) + " values, got " + std::to_string(values.size()));
        }
        records[it->second][m] = std::move(values);
        filled[it->second] = 1;
    }
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        if (!filled[i]) {
            throw CompletenessError("features: clip '" + manifest[i].clip_id + "' missing from " + path.string());
        }
    }
}

inline void load_binary_modality(const fs::path& path, Modality m, const Manifest& manifest,
                                 std::vector<FeatureRecord>& records) {
    const std::string modality_name(kModalities[static_cast<std::size_t>(m)].name);
    const std::size_t dim = kModalities[static_cast<std::size_t>(m)].input_dim;
    const std::string buf = read_file(path);
    if (buf.size() < kFeatureHeaderBytes || !std::equal(kFeatureMagic.begin(), kFeatureMagic.end(), buf.begin())) {
        throw SchemaError(path.string() + ": not an AANF feature file");
    }
    const std::uint32_t version = get_u32(buf.data() + 4);
    const std::uint32_t code = get_u32(buf.data() + 8);
    const std::uint32_t file_dim = get_u32(buf.data() + 12);
    if (version != kFeatureVersion) throw SchemaError(path.string() + ": unsupported version " + std::to_string(version));
    if (code != static_cast<std::uint32_t>(m)) {
        throw SchemaError(path.string() + ": modality code " + std::to_string(code) + " but file is named for " + modality_name);
    }
    if (file_dim != dim) {
        throw SchemaError("feature schema: modality " + modality_name + " expected " + std::to_string(dim) +
                          " values per clip, file header says " + std::to_string(file_dim));
    }
    const std::size_t payload = buf.size() - kFeatureHeaderBytes;
    if (payload % (dim * 4) != 0) throw SchemaError(path.string() + ": truncated row");
    const std::size_t rows = payload / (dim * 4);
    if (rows != manifest.size()) {
        throw CompletenessError(path.string() + ": " + std::to_string(rows) + " rows for " +
                                std::to_string(manifest.size()) + " manifest clips");
    }
    const char* p = buf.data() + kFeatureHeaderBytes;
    for (std::size_t i = 0; i < rows; ++i) {
        std::vector<double> values(dim);
        for (std::size_t j = 0; j < dim; ++j, p += 4) values[j] = static_cast<double>(std::bit_cast<float>(get_u32(p)));
        records[i][m] = std::move(values);
    }
}

}  // namespace detail

/// Reads every modality for the manifest's clips, in manifest order. Prefers
/// the binary file of a modality when both encodings are present.
inline std::vector<FeatureRecord> load_features(const fs::path& dir, const Manifest& manifest,
                                                std::optional<FeatureFormat> format = std::nullopt) {
    std::vector<FeatureRecord> records(manifest.size());
    for (std::size_t i = 0; i < manifest.size(); ++i) records[i].clip_id = manifest[i].clip_id;
    if (manifest.empty()) return records;
    for (std::size_t mi = 0; mi < kNumModalities; ++mi) {
        const auto m = static_cast<Modality>(mi);
        FeatureFormat f;
        if (format) {
            f = *format;
        } else if (fs::exists(feature_path(dir, m, FeatureFormat::binary))) {
            f = FeatureFormat::binary;
        } else {
            f = FeatureFormat::text;
        }
        const fs::path path = feature_path(dir, m, f);
        if (!fs::exists(path)) throw CompletenessError("features: missing file " + path.string());
        if (f == FeatureFormat::text) {
            detail::load_text_modality(path, m, manifest, records);
        } else {
            detail::load_binary_modality(path, m, manifest, records);
        }
    }
    for (const auto& r : records) r.validate();
    return records;
}

struct Dataset {
    Manifest manifest;
    std::vector<FeatureRecord> records;  // aligned with manifest
};

inline Dataset load_dataset(const fs::path& dir) {
    Dataset d;
    d.manifest = load_manifest(dir / "manifest.json");
    d.records = load_features(dir, d.manifest);
    return d;
}

struct Fold {
    std::size_t index = 0;
    std::string test_movie;
    std::vector<std::size_t> train;  // manifest row indices
    std::vector<std::size_t> test;
};

/// One fold per movie (sorted by id); the test side is all of that movie's rows.
inline std::vector<Fold> split_leave_one_movie_out(const Manifest& manifest) {
    std::set<std::string> movies;
    for (const auto& e : manifest) movies.insert(e.movie_id);
    if (movies.size() < 2) throw ContractError("leave-one-movie-out needs at least two movies, got " + std::to_string(movies.size()));
    std::vector<Fold> folds;
    for (const auto& movie : movies) {
        Fold f;
        f.index = folds.size();
        f.test_movie = movie;
        for (std::size_t i = 0; i < manifest.size(); ++i) (manifest[i].movie_id == movie ? f.test : f.train).push_back(i);
        folds.push_back(std::move(f));
    }
    return folds;
}

namespace detail {

// Row indices grouped per movie, each group in chronological order.
inline std::map<std::string, std::vector<std::size_t>> rows_by_movie(const Manifest& manifest,
                                                                     std::span<const std::size_t> rows) {
    std::map<std::string, std::vector<std::size_t>> out;
    for (auto i : rows) out[manifest[i].movie_id].push_back(i);
    for (auto& [movie, idx] : out) {
        std::sort(idx.begin(), idx.end(),
                  [&](auto a, auto b) { return manifest[a].segment_index < manifest[b].segment_index; });
    }
    return out;
}

inline Window make_window(const Manifest& manifest, std::span<const FeatureRecord> records,
                          std::span<const std::size_t> rows, AffectDimension target) {
    Window w;
    w.movie_id = manifest[rows.front()].movie_id;
    for (auto i : rows) {
        w.segment_indices.push_back(manifest[i].segment_index);
        w.segments.push_back(&records[i]);
        w.labels.push_back(manifest[i].label(target).value_or(std::numeric_limits<double>::quiet_NaN()));
    }
    return w;
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    return rows;
}

}  // namespace detail

/// Stride-1 windows of `seq_len` consecutive segments inside each movie.
/// Movies shorter than `seq_len` contribute nothing and add a warning.
inline std::vector<Window> build_windows(const Manifest& manifest, std::span<const FeatureRecord> records,
                                         std::size_t seq_len, AffectDimension target,
                                         std::optional<std::span<const std::size_t>> rows = std::nullopt,
                                         std::vector<std::string>* warnings = nullptr) {
    if (seq_len < 1) throw ParameterError("build_windows: seq_len must be >= 1");
    if (records.size() != manifest.size()) throw ContractError("build_windows: records and manifest differ in length");
    const std::vector<std::size_t> every = rows ? std::vector<std::size_t>() : detail::all_rows(manifest.size());
    std::vector<Window> out;
    for (const auto& [movie, idx] : detail::rows_by_movie(manifest, rows ? *rows : std::span<const std::size_t>(every))) {
        if (idx.size() < seq_len) {
            if (warnings) {
                warnings->push_back("movie " + movie + " has " + std::to_string(idx.size()) +
                                    " segments, fewer than sequence length " + std::to_string(seq_len));
            }
            continue;
        }
        for (std::size_t s = 0; s + seq_len <= idx.size(); ++s) {
            out.push_back(detail::make_window(manifest, records, std::span(idx).subspan(s, seq_len), target));
        }
    }
    return out;
}

/// One window ending at every segment of the given rows; the first
/// `seq_len - 1` segments of a movie get the shorter prefix available.
inline std::vector<Window> build_prediction_windows(const Manifest& manifest, std::span<const FeatureRecord> records,
                                                    std::span<const std::size_t> rows, std::size_t seq_len,
                                                    AffectDimension target) {
    if (seq_len < 1) throw ParameterError("build_prediction_windows: seq_len must be >= 1");
    std::vector<Window> out;
    for (const auto& [movie, idx] : detail::rows_by_movie(manifest, rows)) {
        for (std::size_t end = 0; end < idx.size(); ++end) {
            const std::size_t begin = end + 1 >= seq_len ? end + 1 - seq_len : 0;
            out.push_back(detail::make_window(manifest, records, std::span(idx).subspan(begin, end + 1 - begin), target));
        }
    }
    return out;
}

}  // namespace aan
