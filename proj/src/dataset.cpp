#include "signlang/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "signlang/binary_io.hpp"
#include "signlang/error.hpp"

namespace signlang {

namespace {

constexpr char kSequenceMagic[4] = {'B', 'S', 'E', 'Q'};
constexpr std::uint32_t kSequenceVersion = 1;

std::uint64_t mix64(std::uint64_t x) noexcept {
    // splitmix64 finalizer
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept {
    return mix64(mix64(a) ^ b);
}

} // namespace

LabelSet::LabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
    std::set<std::string_view> seen;
    for (const auto& label : labels_) {
        if (label.empty()) {
            throw ValidationError("empty label");
        }
        if (!is_valid_utf8(label)) {
            throw ValidationError("label is not valid UTF-8");
        }
        if (!seen.insert(label).second) {
            throw ValidationError("duplicate label '" + label + "'");
        }
    }
}

std::optional<std::size_t> LabelSet::index_of(std::string_view label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - labels_.begin());
}

std::vector<std::uint8_t> encode_sequence(const SequenceSample& sample) {
    if (sample.values.size() != sample.seq_len * sample.feature_dim) {
        throw ValidationError("sequence holds " + std::to_string(sample.values.size()) +
                              " values, expected " +
                              std::to_string(sample.seq_len * sample.feature_dim));
    }
    ByteWriter w;
    w.text({kSequenceMagic, 4});
    w.u32(kSequenceVersion);
    w.u32(static_cast<std::uint32_t>(sample.seq_len));
    w.u32(static_cast<std::uint32_t>(sample.feature_dim));
    w.u32(static_cast<std::uint32_t>(sample.label_index));
    w.u32(0);
    w.f32s(sample.values);
    w.seal();
    return std::move(w).take();
}

SequenceSample decode_sequence(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    auto magic = r.bytes(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), kSequenceMagic)) {
        throw LoadError(LoadErrorKind::BadMagic, "not a BSEQ sequence file");
    }
    const auto version = r.u32("header");
    if (version != kSequenceVersion) {
        throw LoadError(LoadErrorKind::UnsupportedVersion,
                        "sequence file version " + std::to_string(version));
    }
    SequenceSample s;
    s.seq_len = r.u32("header");
    s.feature_dim = r.u32("header");
    s.label_index = r.u32("header");
    if (r.u32("header") != 0) {
        throw LoadError(LoadErrorKind::Malformed, "reserved header field is not zero");
    }
    const std::uint64_t count = std::uint64_t{s.seq_len} * s.feature_dim;
    r.require(count * sizeof(float), "payload");
    s.values.resize(count);
    r.f32s(s.values, "payload");
    r.verify_seal();
    return s;
}

void save_sequence(const SequenceSample& sample, const std::filesystem::path& path) {
    write_file_atomic(path, encode_sequence(sample));
}

SequenceSample load_sequence(const std::filesystem::path& path) {
    return decode_sequence(read_file(path));
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& root) {
    nlohmann::ordered_json j;
    j["format_version"] = manifest.format_version;
    j["seq_len"] = manifest.seq_len;
    j["feature_dim"] = manifest.feature_dim;
    j["labels"] = manifest.labels.labels();
    auto samples = nlohmann::ordered_json::array();
    for (const auto& entry : manifest.samples) {
        samples.push_back({{"label", entry.label_index}, {"path", entry.path}});
    }
    j["samples"] = std::move(samples);
    const std::string text = j.dump(1) + "\n";
    std::filesystem::create_directories(root);
    write_file_atomic(root / kManifestFileName,
                      {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

DatasetManifest load_manifest(const std::filesystem::path& root) {
    const auto bytes = read_file(root / kManifestFileName);
    DatasetManifest m;
    try {
        const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
        m.format_version = j.at("format_version").get<std::uint32_t>();
        if (m.format_version != 1) {
            throw LoadError(LoadErrorKind::UnsupportedVersion,
                            "manifest version " + std::to_string(m.format_version));
        }
        m.seq_len = j.at("seq_len").get<std::size_t>();
        m.feature_dim = j.at("feature_dim").get<std::size_t>();
        m.labels = LabelSet(j.at("labels").get<std::vector<std::string>>());
        for (const auto& s : j.at("samples")) {
            SampleEntry e{s.at("label").get<std::size_t>(), s.at("path").get<std::string>()};
            if (e.label_index >= m.labels.size()) {
                throw LoadError(LoadErrorKind::Malformed,
                                "sample " + e.path + " has label index " +
                                    std::to_string(e.label_index) + " outside [0, " +
                                    std::to_string(m.labels.size()) + ")");
            }
            m.samples.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(LoadErrorKind::Malformed, std::string("manifest: ") + e.what());
    } catch (const ValidationError& e) {
        throw LoadError(LoadErrorKind::Malformed, std::string("manifest: ") + e.what());
    }
    return m;
}

Dataset load_dataset(const std::filesystem::path& root) {
    Dataset d{load_manifest(root), {}};
    d.samples.reserve(d.manifest.samples.size());
    for (const auto& entry : d.manifest.samples) {
        auto sample = load_sequence(root / entry.path);
        if (sample.seq_len != d.manifest.seq_len || sample.feature_dim != d.manifest.feature_dim) {
            throw LoadError(LoadErrorKind::DimensionMismatch,
                            entry.path + " is " + std::to_string(sample.seq_len) + "x" +
                                std::to_string(sample.feature_dim) + ", manifest says " +
                                std::to_string(d.manifest.seq_len) + "x" +
                                std::to_string(d.manifest.feature_dim));
        }
        if (sample.label_index != entry.label_index) {
            throw LoadError(LoadErrorKind::Malformed,
                            entry.path + " carries label " + std::to_string(sample.label_index) +
                                " but the manifest lists " + std::to_string(entry.label_index));
        }
        d.samples.push_back(std::move(sample));
    }
    return d;
}

Split split(const DatasetManifest& manifest, const SplitConfig& config) {
    if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0)) {
        throw ValidationError("train fraction must lie in (0, 1)");
    }
    std::vector<std::vector<std::size_t>> by_class(manifest.labels.size());
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
        by_class.at(manifest.samples[i].label_index).push_back(i);
    }
    Split out;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        const std::size_t n = members.size();
        if (n < 2) {
            throw ValidationError("class '" + manifest.labels[c] + "' has " + std::to_string(n) +
                                  " sample(s); splitting needs at least 2");
        }
        const auto rounded = static_cast<std::size_t>(std::lround(config.train_fraction * n));
        const std::size_t n_train = std::clamp<std::size_t>(rounded, 1, n - 1);
        std::mt19937_64 rng(mix64(config.seed, c));
        std::shuffle(members.begin(), members.end(), rng);
        out.train.insert(out.train.end(), members.begin(), members.begin() + n_train);
        out.test.insert(out.test.end(), members.begin() + n_train, members.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

double synth_phase_fraction(std::size_t label, std::size_t dim) noexcept {
    return static_cast<double>(mix64(label, dim) >> 11) * 0x1.0p-53;
}

SequenceSample synth_sample(std::size_t label, std::size_t index, const SynthConfig& config) {
    SequenceSample s;
    s.seq_len = config.seq_len;
    s.feature_dim = config.feature_dim;
    s.label_index = label;
    s.values.resize(config.seq_len * config.feature_dim);

    std::mt19937_64 rng(mix64(mix64(config.seed, label), index));
    std::normal_distribution<double> noise(0.0, config.noise_sigma);
    const double two_pi = 2.0 * std::numbers::pi;
    const double freq = static_cast<double>(label + 1);
    for (std::size_t t = 0; t < config.seq_len; ++t) {
        const double angle = two_pi * freq * static_cast<double>(t) / static_cast<double>(config.seq_len);
        for (std::size_t d = 0; d < config.feature_dim; ++d) {
            double v = kSynthAmplitude * std::sin(angle + two_pi * synth_phase_fraction(label, d));
            if (config.noise_sigma > 0.0) {
                v += noise(rng);
            }
            s.values[t * config.feature_dim + d] = static_cast<float>(v);
        }
    }
    return s;
}

DatasetManifest synth_generate(const LabelSet& labels, const SynthConfig& config,
                               const std::filesystem::path& root) {
    if (config.per_class < 1) {
        throw ValidationError("per_class must be at least 1");
    }
    if (!(config.noise_sigma >= 0.0)) {
        throw ValidationError("noise sigma must be non-negative");
    }
    DatasetManifest m;
    m.seq_len = config.seq_len;
    m.feature_dim = config.feature_dim;
    m.labels = labels;
    std::filesystem::create_directories(root / "samples");
    for (std::size_t c = 0; c < labels.size(); ++c) {
        for (std::size_t s = 0; s < config.per_class; ++s) {
            const std::string rel = "samples/c" + std::to_string(c) + "_s" + std::to_string(s) + ".bseq";
            save_sequence(synth_sample(c, s, config), root / rel);
            m.samples.push_back({c, rel});
        }
    }
    save_manifest(m, root);
    return m;
}

std::vector<double> one_hot(std::size_t label_index, std::size_t num_classes) {
    if (label_index >= num_classes) {
        throw ValidationError("label index " + std::to_string(label_index) + " outside [0, " +
                              std::to_string(num_classes) + ")");
    }
    std::vector<double> v(num_classes, 0.0);
    v[label_index] = 1.0;
    return v;
}

} // namespace signlang
