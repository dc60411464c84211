#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace listen::audio {

inline constexpr int kSampleRate = 16000;
inline constexpr double kMinDuration = 0.5;
inline constexpr double kMaxDuration = 10.0;
inline constexpr double kMaxSignaturePeak = 0.5;

enum class SignatureKind { Tone, Chirp, NoiseBurst, AmTone };

// Parametric waveform recipe. Frequencies in Hz; `gate` is the burst on/off
// period in seconds (0 = continuous).
struct Signature {
    SignatureKind kind = SignatureKind::Tone;
    double freq = 0.0;
    double low = 0.0;
    double high = 0.0;
    double mod_rate = 0.0;
    double gate = 0.0;
};

struct EventClass {
    std::string id;
    std::string display_name;
    Signature signature;
    std::vector<std::string> synonyms;
    std::vector<std::string> hypernyms;
};

enum class Relation { Synonym, Hypernym };

class Ontology {
public:
    Ontology() = default;
    explicit Ontology(std::vector<EventClass> classes, std::string version = "listen-ontology/1");

    // The versioned ontology compiled in from data/ontology.json.
    static const Ontology& builtin();
    static Ontology from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    // First n classes of this ontology.
    Ontology truncated(std::size_t n) const;

    const EventClass& at(const std::string& id) const;
    bool contains(const std::string& id) const { return index_.count(id) > 0; }
    const std::vector<EventClass>& classes() const { return classes_; }
    std::size_t size() const { return classes_.size(); }
    const std::string& version() const { return version_; }
    std::vector<std::string> ids() const;

    const std::vector<std::string>& lookup(Relation kind, const std::string& id) const;
    // Class ids whose display name, synonym or hypernym list contains `phrase`.
    std::vector<std::string> classes_related_to(const std::string& phrase) const;

private:
    std::vector<EventClass> classes_;
    std::map<std::string, std::size_t> index_;
    std::string version_;
};

enum class Split { Train, Eval };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct AudioClip {
    std::string clip_id;
    int sample_rate = kSampleRate;
    std::vector<float> waveform;
    std::vector<std::string> present_tags;
    std::string caption;
    Split split = Split::Train;

    double duration() const { return static_cast<double>(waveform.size()) / sample_rate; }
};

// Recipe for one synthetic clip; enough to regenerate its waveform bit-exactly.
struct ClipSpec {
    std::string clip_id;
    std::vector<std::string> tags;
    double duration = 1.0;
    double snr_db = 20.0;
    std::uint64_t seed = 0;
    Split split = Split::Train;
};

struct CorpusConfig {
    int n_train = 200;
    int n_eval = 50;
    int ontology_size = 8;
    std::uint64_t seed = 0;
    double snr_db = 20.0;
};

struct CorpusManifest {
    static constexpr const char* kVersion = "listen-corpus/1";

    Ontology ontology;
    std::vector<ClipSpec> clips;
    std::uint64_t seed = 0;
    std::string version = kVersion;

    std::vector<const ClipSpec*> split(Split s) const;
    const ClipSpec& find(const std::string& clip_id) const;

    nlohmann::json to_json() const;
    static CorpusManifest from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static CorpusManifest load(const std::filesystem::path& path);
};

// Single-class signature, peak amplitude <= kMaxSignaturePeak.
std::vector<float> gen_event_waveform(const Ontology& ontology, const std::string& class_id, double duration,
                                      std::uint64_t seed);

// Peak-normalised sum of the tag signatures, before noise is added.
std::vector<float> render_clean_mix(const Ontology& ontology, const ClipSpec& spec);

std::string caption_for(const Ontology& ontology, const std::vector<std::string>& tags);

AudioClip gen_clip(const Ontology& ontology, const ClipSpec& spec);

CorpusManifest build_corpus(const CorpusConfig& config, const Ontology& base = Ontology::builtin());

// Regenerates every clip of one split (or all clips when split is empty).
std::vector<AudioClip> materialize(const CorpusManifest& manifest, std::optional<Split> split = std::nullopt);

std::vector<std::string> ontology_lookup(const Ontology& ontology, Relation kind, const std::string& class_id);

// Ingestion of external corpora: JSONL records
//   {clip_id, audio_path, tags: [..]} or {clip_id, audio_path, caption: ".."}, plus split.
// Relative audio paths resolve against the manifest's directory. Audio must be
// 16 kHz mono WAV (PCM16 or float32).
std::vector<AudioClip> ingest_manifest(const std::filesystem::path& jsonl, const Ontology& ontology);

std::vector<float> read_wav(const std::filesystem::path& path, int* sample_rate = nullptr);
void write_wav(const std::filesystem::path& path, const std::vector<float>& samples, int sample_rate = kSampleRate);

}  // namespace listen::audio
