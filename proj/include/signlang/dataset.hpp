#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "signlang/landmarks.hpp"

namespace signlang {

/// Frames per recorded sign; also the real-time window length.
inline constexpr std::size_t kSequenceLength = 30;

/// Ordered, unique, non-empty UTF-8 class names. Class index = position.
class LabelSet {
public:
    LabelSet() = default;
    explicit LabelSet(std::vector<std::string> labels);

    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }
    const std::string& operator[](std::size_t index) const { return labels_.at(index); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    std::optional<std::size_t> index_of(std::string_view label) const;

    bool operator==(const LabelSet&) const = default;

private:
    std::vector<std::string> labels_;
};

/// One labeled sign: `seq_len` frames of `feature_dim` values, frame-major.
/// Values are float32, the on-disk precision.
struct SequenceSample {
    std::size_t seq_len = kSequenceLength;
    std::size_t feature_dim = kFeatureDim;
    std::vector<float> values;
    std::size_t label_index = 0;

    std::span<const float> frame(std::size_t t) const {
        return std::span<const float>(values).subspan(t * feature_dim, feature_dim);
    }

    bool operator==(const SequenceSample&) const = default;
};

// BSEQ sequence file: 24-byte header, float32 payload, CRC-32 trailer.
std::vector<std::uint8_t> encode_sequence(const SequenceSample& sample);
SequenceSample decode_sequence(std::span<const std::uint8_t> bytes);
void save_sequence(const SequenceSample& sample, const std::filesystem::path& path);
SequenceSample load_sequence(const std::filesystem::path& path);

struct SampleEntry {
    std::size_t label_index = 0;
    std::string path; ///< relative to the dataset root

    bool operator==(const SampleEntry&) const = default;
};

struct DatasetManifest {
    std::uint32_t format_version = 1;
    std::size_t seq_len = kSequenceLength;
    std::size_t feature_dim = kFeatureDim;
    LabelSet labels;
    std::vector<SampleEntry> samples;

    bool operator==(const DatasetManifest&) const = default;
};

inline constexpr const char* kManifestFileName = "manifest.json";

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& root);

/// Parses and structurally validates `root/manifest.json` without touching
/// the sample files.
DatasetManifest load_manifest(const std::filesystem::path& root);

struct Dataset {
    DatasetManifest manifest;
    std::vector<SequenceSample> samples; ///< parallel to manifest.samples
};

/// Loads the manifest and every sample, checking each file's shape and label
/// against the manifest.
Dataset load_dataset(const std::filesystem::path& root);

struct SplitConfig {
    double train_fraction = 0.9;
    std::uint64_t seed = 42;
};

/// Indices into DatasetManifest::samples, ascending.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Stratified split: per class, round(train_fraction * n) samples go to
/// train, clamped so both sides keep at least one.
Split split(const DatasetManifest& manifest, const SplitConfig& config);

struct SynthConfig {
    std::size_t per_class = 60;
    double noise_sigma = 0.05;
    std::uint64_t seed = 42;
    std::size_t seq_len = kSequenceLength;
    std::size_t feature_dim = kFeatureDim;
};

inline constexpr double kSynthAmplitude = 0.25;

/// Phase of feature `dim` for `label`, as a fraction of a full turn in [0,1).
double synth_phase_fraction(std::size_t label, std::size_t dim) noexcept;

/// Sample `index` of class `label`. A pure function of its arguments.
SequenceSample synth_sample(std::size_t label, std::size_t index, const SynthConfig& config);

/// Writes `per_class` samples for every label plus the manifest under `root`.
DatasetManifest synth_generate(const LabelSet& labels, const SynthConfig& config,
                               const std::filesystem::path& root);

std::vector<double> one_hot(std::size_t label_index, std::size_t num_classes);

} // namespace signlang
