#include "listen/audio_world.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "listen/errors.hpp"
#include "listen/rng.hpp"
#include "ontology_data.hpp"

namespace listen::audio {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kNoisePartials = 24;
constexpr double kChirpPeriod = 0.5;
constexpr double kGateRamp = 0.005;
constexpr double kClipDurations[] = {1.0, 1.5, 2.0, 2.5, 3.0};

SignatureKind kind_from_string(const std::string& s) {
    if (s == "tone") return SignatureKind::Tone;
    if (s == "chirp") return SignatureKind::Chirp;
    if (s == "noise_burst") return SignatureKind::NoiseBurst;
    if (s == "am_tone") return SignatureKind::AmTone;
    throw FormatError("unknown signature kind '" + s + "'");
}

std::string kind_to_string(SignatureKind k) {
    switch (k) {
        case SignatureKind::Tone: return "tone";
        case SignatureKind::Chirp: return "chirp";
        case SignatureKind::NoiseBurst: return "noise_burst";
        case SignatureKind::AmTone: return "am_tone";
    }
    return "tone";
}

std::size_t sample_count(double duration) {
    return static_cast<std::size_t>(std::llround(duration * kSampleRate));
}

// On/off envelope with short linear ramps; period 2*gate, random offset.
double gate_envelope(double t, double gate, double offset) {
    if (gate <= 0.0) return 1.0;
    const double phase = std::fmod(t + offset, 2.0 * gate);
    if (phase >= gate) return 0.0;
    const double ramp = std::min(kGateRamp, gate / 2.0);
    if (phase < ramp) return phase / ramp;
    if (phase > gate - ramp) return (gate - phase) / ramp;
    return 1.0;
}

void check_tags(const Ontology& ontology, const std::vector<std::string>& tags) {
    if (tags.empty()) throw ArgumentError("clip needs at least one tag");
    if (tags.size() > 3) throw ArgumentError("clip supports at most three tags");
    std::set<std::string> seen;
    for (const auto& t : tags) {
        if (!ontology.contains(t)) throw LookupError("unknown event class '" + t + "'");
        if (!seen.insert(t).second) throw ArgumentError("duplicate tag '" + t + "'");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Ontology

Ontology::Ontology(std::vector<EventClass> classes, std::string version)
    : classes_(std::move(classes)), version_(std::move(version)) {
    for (std::size_t i = 0; i < classes_.size(); ++i) {
        if (!index_.emplace(classes_[i].id, i).second)
            throw ConfigError("duplicate event class id '" + classes_[i].id + "'");
    }
}

const Ontology& Ontology::builtin() {
    static const Ontology ontology = from_json(json::parse(kBuiltinOntologyJson));
    return ontology;
}

Ontology Ontology::from_json(const json& j) {
    std::vector<EventClass> classes;
    for (const auto& c : j.at("classes")) {
        EventClass ec;
        ec.id = c.at("id").get<std::string>();
        ec.display_name = c.at("display_name").get<std::string>();
        const auto& s = c.at("signature");
        ec.signature.kind = kind_from_string(s.at("kind").get<std::string>());
        ec.signature.freq = s.value("freq", 0.0);
        ec.signature.low = s.value("low", 0.0);
        ec.signature.high = s.value("high", 0.0);
        ec.signature.mod_rate = s.value("mod_rate", 0.0);
        ec.signature.gate = s.value("gate", 0.0);
        ec.synonyms = c.value("synonyms", std::vector<std::string>{});
        ec.hypernyms = c.value("hypernyms", std::vector<std::string>{});
        classes.push_back(std::move(ec));
    }
    return Ontology(std::move(classes), j.value("version", std::string("listen-ontology/1")));
}

json Ontology::to_json() const {
    json classes = json::array();
    for (const auto& c : classes_) {
        json sig = {{"kind", kind_to_string(c.signature.kind)}};
        switch (c.signature.kind) {
            case SignatureKind::Tone: sig["freq"] = c.signature.freq; break;
            case SignatureKind::AmTone:
                sig["freq"] = c.signature.freq;
                sig["mod_rate"] = c.signature.mod_rate;
                break;
            case SignatureKind::Chirp:
                sig["low"] = c.signature.low;
                sig["high"] = c.signature.high;
                break;
            case SignatureKind::NoiseBurst:
                sig["low"] = c.signature.low;
                sig["high"] = c.signature.high;
                sig["gate"] = c.signature.gate;
                break;
        }
        classes.push_back({{"id", c.id},
                           {"display_name", c.display_name},
                           {"signature", sig},
                           {"synonyms", c.synonyms},
                           {"hypernyms", c.hypernyms}});
    }
    return {{"version", version_}, {"classes", classes}};
}

Ontology Ontology::truncated(std::size_t n) const {
    n = std::min(n, classes_.size());
    return Ontology(std::vector<EventClass>(classes_.begin(), classes_.begin() + static_cast<std::ptrdiff_t>(n)),
                    version_);
}

const EventClass& Ontology::at(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw LookupError("unknown event class '" + id + "'");
    return classes_[it->second];
}

std::vector<std::string> Ontology::ids() const {
    std::vector<std::string> out;
    out.reserve(classes_.size());
    for (const auto& c : classes_) out.push_back(c.id);
    return out;
}

const std::vector<std::string>& Ontology::lookup(Relation kind, const std::string& id) const {
    const auto& c = at(id);
    return kind == Relation::Synonym ? c.synonyms : c.hypernyms;
}

std::vector<std::string> Ontology::classes_related_to(const std::string& phrase) const {
    std::vector<std::string> out;
    for (const auto& c : classes_) {
        const bool hit = c.display_name == phrase ||
                         std::find(c.synonyms.begin(), c.synonyms.end(), phrase) != c.synonyms.end() ||
                         std::find(c.hypernyms.begin(), c.hypernyms.end(), phrase) != c.hypernyms.end();
        if (hit) out.push_back(c.id);
    }
    return out;
}

std::vector<std::string> ontology_lookup(const Ontology& ontology, Relation kind, const std::string& class_id) {
    return ontology.lookup(kind, class_id);
}

std::string to_string(Split s) { return s == Split::Train ? "train" : "eval"; }

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "eval") return Split::Eval;
    throw FormatError("unknown split '" + s + "'");
}

// ---------------------------------------------------------------------------
// Waveforms

std::vector<float> gen_event_waveform(const Ontology& ontology, const std::string& class_id, double duration,
                                      std::uint64_t seed) {
    const EventClass& ec = ontology.at(class_id);
    if (!(duration > 0.0)) throw ArgumentError("duration must be positive");
    if (duration < kMinDuration || duration > kMaxDuration)
        throw ArgumentError("duration must lie in [0.5, 10] seconds");

    Rng rng = Rng(seed).derive(class_id);
    const double amp = rng.uniform(0.35, kMaxSignaturePeak);
    const double phase = rng.uniform(0.0, kTwoPi);
    const std::size_t n = sample_count(duration);
    const Signature& sig = ec.signature;
    std::vector<double> x(n, 0.0);

    switch (sig.kind) {
        case SignatureKind::Tone:
            for (std::size_t i = 0; i < n; ++i) {
                const double t = static_cast<double>(i) / kSampleRate;
                x[i] = std::sin(kTwoPi * sig.freq * t + phase);
            }
            break;
        case SignatureKind::AmTone: {
            const double mod_phase = rng.uniform(0.0, kTwoPi);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = static_cast<double>(i) / kSampleRate;
                const double env = 0.5 * (1.0 + std::sin(kTwoPi * sig.mod_rate * t + mod_phase));
                x[i] = env * std::sin(kTwoPi * sig.freq * t + phase);
            }
            break;
        }
        case SignatureKind::Chirp: {
            // Repeated linear sweep low -> high, phase-continuous.
            const double offset = rng.uniform(0.0, kChirpPeriod);
            double ph = phase;
            for (std::size_t i = 0; i < n; ++i) {
                const double t = static_cast<double>(i) / kSampleRate;
                const double frac = std::fmod(t + offset, kChirpPeriod) / kChirpPeriod;
                const double f = sig.low + (sig.high - sig.low) * frac;
                x[i] = std::sin(ph);
                ph += kTwoPi * f / kSampleRate;
            }
            break;
        }
        case SignatureKind::NoiseBurst: {
            std::vector<double> freqs(kNoisePartials), phases(kNoisePartials);
            for (int k = 0; k < kNoisePartials; ++k) {
                freqs[k] = rng.uniform(sig.low, sig.high);
                phases[k] = rng.uniform(0.0, kTwoPi);
            }
            const double gate_offset = rng.uniform(0.0, 2.0 * std::max(sig.gate, 0.0));
            for (std::size_t i = 0; i < n; ++i) {
                const double t = static_cast<double>(i) / kSampleRate;
                double s = 0.0;
                for (int k = 0; k < kNoisePartials; ++k) s += std::sin(kTwoPi * freqs[k] * t + phases[k]);
                x[i] = s * gate_envelope(t, sig.gate, gate_offset);
            }
            double peak = 0.0;
            for (double v : x) peak = std::max(peak, std::abs(v));
            if (peak > 0.0)
                for (double& v : x) v /= peak;
            break;
        }
    }

    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = std::clamp(amp * x[i], -kMaxSignaturePeak, kMaxSignaturePeak);
        out[i] = static_cast<float>(v);
    }
    return out;
}

std::vector<float> render_clean_mix(const Ontology& ontology, const ClipSpec& spec) {
    check_tags(ontology, spec.tags);
    const std::size_t n = sample_count(spec.duration);
    std::vector<double> sum(n, 0.0);
    for (const auto& tag : spec.tags) {
        const auto w = gen_event_waveform(ontology, tag, spec.duration, spec.seed);
        for (std::size_t i = 0; i < n; ++i) sum[i] += w[i];
    }
    double peak = 0.0;
    for (double v : sum) peak = std::max(peak, std::abs(v));
    const double gain = peak > 0.0 ? kMaxSignaturePeak / peak : 0.0;
    std::vector<float> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(sum[i] * gain);
    return out;
}

std::string caption_for(const Ontology& ontology, const std::vector<std::string>& tags) {
    if (tags.empty()) throw ArgumentError("caption needs at least one tag");
    std::vector<std::string> names;
    for (const auto& t : tags) names.push_back(ontology.at(t).display_name);
    std::string out = "The sound of " + names[0];
    for (std::size_t i = 1; i < names.size(); ++i) out += (i + 1 == names.size() ? " and " : ", ") + names[i];
    return out + ".";
}

AudioClip gen_clip(const Ontology& ontology, const ClipSpec& spec) {
    auto clean = render_clean_mix(ontology, spec);
    double power = 0.0;
    for (float v : clean) power += static_cast<double>(v) * v;
    power /= static_cast<double>(std::max<std::size_t>(clean.size(), 1));
    const double sigma = std::sqrt(power / std::pow(10.0, spec.snr_db / 10.0));

    Rng noise = Rng(spec.seed).derive("noise");
    AudioClip clip;
    clip.clip_id = spec.clip_id;
    clip.waveform.resize(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const double v = clean[i] + sigma * noise.normal();
        clip.waveform[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
    clip.present_tags = spec.tags;
    clip.caption = caption_for(ontology, spec.tags);
    clip.split = spec.split;
    return clip;
}

// ---------------------------------------------------------------------------
// Corpus

namespace {

std::vector<std::string> draw_tags(Rng& rng, const std::vector<std::string>& ids, std::vector<std::string> required) {
    const std::size_t want = std::max<std::size_t>(required.size(), 1 + rng.below(3));
    std::vector<std::string> pool;
    for (const auto& id : ids)
        if (std::find(required.begin(), required.end(), id) == required.end()) pool.push_back(id);
    rng.shuffle(pool);
    for (std::size_t i = 0; required.size() < want && i < pool.size(); ++i) required.push_back(pool[i]);
    return required;
}

bool eval_coverage_ok(const std::vector<ClipSpec>& eval, const std::vector<std::string>& ids) {
    for (const auto& id : ids) {
        bool present = false, absent = false;
        for (const auto& c : eval) {
            const bool has = std::find(c.tags.begin(), c.tags.end(), id) != c.tags.end();
            present |= has;
            absent |= !has;
        }
        if (!present || !absent) return false;
    }
    return true;
}

std::string clip_name(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%04d", prefix, i);
    return buf;
}

}  // namespace

CorpusManifest build_corpus(const CorpusConfig& config, const Ontology& base) {
    if (config.ontology_size < 6)
        throw ConfigError("ontology_size must be at least 6");
    if (static_cast<std::size_t>(config.ontology_size) > base.size())
        throw ConfigError("ontology_size exceeds the " + std::to_string(base.size()) + " shipped classes");
    if (config.n_train < 1 || config.n_eval < 1) throw ConfigError("n_train and n_eval must be positive");

    CorpusManifest m;
    m.ontology = base.truncated(static_cast<std::size_t>(config.ontology_size));
    m.seed = config.seed;
    const auto ids = m.ontology.ids();
    const int n_classes = static_cast<int>(ids.size());

    std::set<std::string> groups;
    for (const auto& c : m.ontology.classes())
        for (const auto& h : c.hypernyms) groups.insert(h);
    if (groups.size() < 2) throw ConfigError("ontology needs at least two hypernym groups");

    // Every class present in >= 1 eval clip and absent from >= 1.
    if (config.n_eval < 2 || config.n_eval * 3 < n_classes)
        throw ConfigError("n_eval=" + std::to_string(config.n_eval) + " cannot make all " +
                          std::to_string(n_classes) + " classes both present and absent in eval clips");

    Rng rng(config.seed);
    auto next_spec = [&](const std::string& id, std::vector<std::string> tags, Split split) {
        ClipSpec s;
        s.clip_id = id;
        s.tags = std::move(tags);
        s.duration = kClipDurations[rng.below(std::size(kClipDurations))];
        s.snr_db = config.snr_db;
        s.seed = rng.next_u64();
        s.split = split;
        return s;
    };

    for (int i = 0; i < config.n_train; ++i)
        m.clips.push_back(next_spec(clip_name("train", i), draw_tags(rng, ids, {}), Split::Train));

    std::vector<ClipSpec> eval;
    constexpr int kAttempts = 100;
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
        eval.clear();
        for (int i = 0; i < config.n_eval; ++i) {
            std::vector<std::string> required;
            for (int c = i; c < n_classes; c += config.n_eval) required.push_back(ids[static_cast<std::size_t>(c)]);
            eval.push_back(next_spec(clip_name("eval", i), draw_tags(rng, ids, required), Split::Eval));
        }
        if (eval_coverage_ok(eval, ids)) break;
        if (attempt + 1 == kAttempts) throw ConfigError("could not satisfy eval present/absent coverage");
    }
    m.clips.insert(m.clips.end(), eval.begin(), eval.end());
    return m;
}

std::vector<const ClipSpec*> CorpusManifest::split(Split s) const {
    std::vector<const ClipSpec*> out;
    for (const auto& c : clips)
        if (c.split == s) out.push_back(&c);
    return out;
}

const ClipSpec& CorpusManifest::find(const std::string& clip_id) const {
    for (const auto& c : clips)
        if (c.clip_id == clip_id) return c;
    throw DataError("clip '" + clip_id + "' is not in the corpus");
}

json CorpusManifest::to_json() const {
    json clips_json = json::array();
    for (const auto& c : clips) {
        clips_json.push_back({{"clip_id", c.clip_id},
                              {"tags", c.tags},
                              {"duration", c.duration},
                              {"snr_db", c.snr_db},
                              {"seed", c.seed},
                              {"split", to_string(c.split)}});
    }
    return {{"version", version},
            {"seed", seed},
            {"sample_rate", kSampleRate},
            {"ontology", ontology.to_json()},
            {"clips", clips_json}};
}

CorpusManifest CorpusManifest::from_json(const json& j) {
    CorpusManifest m;
    m.version = j.at("version").get<std::string>();
    if (m.version != kVersion) throw FormatError("unsupported corpus version '" + m.version + "'");
    if (j.value("sample_rate", kSampleRate) != kSampleRate) throw FormatError("corpus sample rate must be 16000");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.ontology = Ontology::from_json(j.at("ontology"));
    std::set<std::string> seen;
    for (const auto& c : j.at("clips")) {
        ClipSpec s;
        s.clip_id = c.at("clip_id").get<std::string>();
        s.tags = c.at("tags").get<std::vector<std::string>>();
        s.duration = c.at("duration").get<double>();
        s.snr_db = c.at("snr_db").get<double>();
        s.seed = c.at("seed").get<std::uint64_t>();
        s.split = split_from_string(c.at("split").get<std::string>());
        if (!seen.insert(s.clip_id).second) throw FormatError("duplicate clip id '" + s.clip_id + "'");
        check_tags(m.ontology, s.tags);
        m.clips.push_back(std::move(s));
    }
    return m;
}

void CorpusManifest::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_json().dump(2) << "\n";
}

CorpusManifest CorpusManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read corpus manifest " + path.string());
    try {
        return from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<AudioClip> materialize(const CorpusManifest& manifest, std::optional<Split> split) {
    std::vector<AudioClip> out;
    for (const auto& c : manifest.clips)
        if (!split || c.split == *split) out.push_back(gen_clip(manifest.ontology, c));
    return out;
}

// ---------------------------------------------------------------------------
// Ingestion and WAV I/O

std::vector<AudioClip> ingest_manifest(const std::filesystem::path& jsonl, const Ontology& ontology) {
    std::ifstream in(jsonl);
    if (!in) throw DataError("cannot read " + jsonl.string());
    std::vector<AudioClip> clips;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError(jsonl.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        AudioClip clip;
        clip.clip_id = rec.at("clip_id").get<std::string>();
        clip.split = split_from_string(rec.value("split", std::string("train")));
        const bool has_tags = rec.contains("tags"), has_caption = rec.contains("caption");
        if (!has_tags && !has_caption)
            throw FormatError(jsonl.string() + ":" + std::to_string(line_no) + ": record needs tags or caption");
        if (has_tags) {
            clip.present_tags = rec.at("tags").get<std::vector<std::string>>();
            for (const auto& t : clip.present_tags)
                if (!ontology.contains(t)) throw LookupError("unknown event class '" + t + "'");
        }
        if (has_caption) {
            clip.caption = rec.at("caption").get<std::string>();
            if (!has_tags) {
                for (const auto& c : ontology.classes())
                    if (clip.caption.find(c.display_name) != std::string::npos) clip.present_tags.push_back(c.id);
            }
        }
        std::filesystem::path audio = rec.at("audio_path").get<std::string>();
        if (audio.is_relative()) audio = jsonl.parent_path() / audio;
        int sr = 0;
        clip.waveform = read_wav(audio, &sr);
        if (sr != kSampleRate) throw FormatError(audio.string() + ": sample rate must be 16000");
        clips.push_back(std::move(clip));
    }
    return clips;
}

namespace {

template <typename T>
T read_le(const unsigned char* p) {
    T v{};
    std::memcpy(&v, p, sizeof(T));
    return v;
}

}  // namespace

std::vector<float> read_wav(const std::filesystem::path& path, int* sample_rate) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw FormatError(path.string() + ": not a RIFF/WAVE file");

    int format = 0, channels = 0, bits = 0, rate = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t size = read_le<std::uint32_t>(&bytes[pos + 4]);
        const unsigned char* body = &bytes[pos + 8];
        if (pos + 8 + size > bytes.size()) throw FormatError(path.string() + ": truncated chunk");
        if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
            format = read_le<std::uint16_t>(body);
            channels = read_le<std::uint16_t>(body + 2);
            rate = static_cast<int>(read_le<std::uint32_t>(body + 4));
            bits = read_le<std::uint16_t>(body + 14);
        } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
            if (channels != 1) throw FormatError(path.string() + ": only mono audio is supported");
            std::vector<float> out;
            if (format == 1 && bits == 16) {
                out.resize(size / 2);
                for (std::size_t i = 0; i < out.size(); ++i)
                    out[i] = static_cast<float>(read_le<std::int16_t>(body + 2 * i)) / 32768.0f;
            } else if (format == 3 && bits == 32) {
                out.resize(size / 4);
                for (std::size_t i = 0; i < out.size(); ++i) out[i] = read_le<float>(body + 4 * i);
            } else {
                throw FormatError(path.string() + ": unsupported sample format");
            }
            if (sample_rate) *sample_rate = rate;
            return out;
        }
        pos += 8 + size + (size & 1);
    }
    throw FormatError(path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, const std::vector<float>& samples, int sample_rate) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto put16 = [&](std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); };
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 4);
    out.write("RIFF", 4);
    put32(36 + data_bytes);
    out.write("WAVEfmt ", 8);
    put32(16);
    put16(3);
    put16(1);
    put32(static_cast<std::uint32_t>(sample_rate));
    put32(static_cast<std::uint32_t>(sample_rate * 4));
    put16(4);
    put16(32);
    out.write("data", 4);
    put32(data_bytes);
    out.write(reinterpret_cast<const char*>(samples.data()), static_cast<std::streamsize>(data_bytes));
}

}  // namespace listen::audio
