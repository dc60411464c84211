#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "listen/audio_world.hpp"
#include "listen/rng.hpp"

namespace listen::datagen {

enum class SeedKind { Caption, Tag };
enum class GenKind { Positive, Negative, Combined };

std::string to_string(SeedKind k);
std::string to_string(GenKind k);
SeedKind seed_kind_from_string(const std::string& s);
GenKind gen_kind_from_string(const std::string& s);

struct SeedPrompt {
    SeedKind kind = SeedKind::Caption;
    std::string text;
};

struct GenerationPrompt {
    GenKind kind = GenKind::Positive;
    std::string text;

    // The default instruction for each kind.
    static GenerationPrompt standard(GenKind kind);
};

// Half-open character range [begin, end) of the seed inside the final prompt.
struct PlaceholderSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool operator==(const PlaceholderSpan&) const = default;
};

struct FinalPrompt {
    std::string text;
    PlaceholderSpan span;
};

// "[Begin of audio] " + seed + " [End of audio] " + gen.
FinalPrompt build_final_prompt(const SeedPrompt& seed, const GenerationPrompt& gen);

struct ParsedPrompt {
    std::string begin_delim;
    std::string seed_text;
    std::string end_delim;
    std::string gen_text;
};

// Inverse of build_final_prompt. The seed may not contain the end delimiter.
ParsedPrompt parse_final_prompt(const std::string& final_prompt);

// k distinct classes drawn uniformly without replacement from ontology \ present.
std::vector<std::string> sample_absent_events(const std::vector<std::string>& present, const audio::Ontology& ontology,
                                              int k, Rng& rng);

std::string render_rule_response(GenKind kind, const std::vector<std::string>& present_names,
                                 const std::vector<std::string>& absent_names);

// ----- text-generation clients -------------------------------------------

struct GenerationRequest {
    std::string prompt;
    int max_new_tokens = 64;
    bool greedy = true;
};

class TextClient {
public:
    virtual ~TextClient() = default;
    virtual std::string id() const = 0;
    // Raw completion; throws GenerationError on transport failure or refusal.
    virtual std::string generate(const GenerationRequest& request) = 0;
};

class MockClient : public TextClient {
public:
    explicit MockClient(std::string canned, std::string id = "mock") : canned_(std::move(canned)), id_(std::move(id)) {}
    std::string id() const override { return id_; }
    std::string generate(const GenerationRequest&) override { return canned_; }

private:
    std::string canned_;
    std::string id_;
};

// POSTs {"prompt", "max_new_tokens", "decoding": "greedy"} as JSON to `endpoint`
// (http://host:port/path) and reads {"text"} back. The bearer token, if any,
// comes from the environment variable named by `token_env`.
class HttpClient : public TextClient {
public:
    HttpClient(std::string endpoint, std::string token_env = "LISTEN_LLM_TOKEN",
               std::chrono::seconds timeout = std::chrono::seconds(60));
    std::string id() const override { return "external:" + endpoint_; }
    std::string generate(const GenerationRequest& request) override;

private:
    std::string endpoint_;
    std::string token_env_;
    std::chrono::seconds timeout_;
};

// Completion trimmed of surrounding whitespace; empty completions are an error.
std::string synthesize_with_lm(TextClient& client, const std::string& final_prompt, int max_new_tokens = 64);

// ----- response generators -------------------------------------------------

struct ResponseContext {
    GenKind kind;
    std::string final_prompt;
    std::vector<std::string> present_names;
    std::vector<std::string> absent_names;
};

class ResponseGenerator {
public:
    virtual ~ResponseGenerator() = default;
    virtual std::string id() const = 0;
    virtual std::string respond(const ResponseContext& ctx) = 0;
};

// Template responses built from ground-truth metadata.
class RuleGenerator : public ResponseGenerator {
public:
    std::string id() const override { return "rule"; }
    std::string respond(const ResponseContext& ctx) override {
        return render_rule_response(ctx.kind, ctx.present_names, ctx.absent_names);
    }
};

// Self-generated responses: the final prompt goes to a language model verbatim.
class LmGenerator : public ResponseGenerator {
public:
    explicit LmGenerator(TextClient& client, int max_new_tokens = 64) : client_(&client), max_new_(max_new_tokens) {}
    std::string id() const override { return client_->id(); }
    std::string respond(const ResponseContext& ctx) override {
        return synthesize_with_lm(*client_, ctx.final_prompt, max_new_);
    }

private:
    TextClient* client_;
    int max_new_;
};

// ----- samples and datasets -------------------------------------------------

// The annotation side of a clip (no audio needed to build text data).
struct ClipAnnotation {
    std::string clip_id;
    std::vector<std::string> tags;
    std::string caption;

    static ClipAnnotation from(const audio::ClipSpec& spec, const audio::Ontology& ontology);
    static ClipAnnotation from(const audio::AudioClip& clip);
};

struct TrainingSample {
    std::string clip_id;
    SeedPrompt seed;
    GenerationPrompt gen;
    std::string final_prompt;
    std::string response;
    PlaceholderSpan placeholder_span;
    std::string generator_id;
    std::vector<std::string> absent_tags_used;

    nlohmann::json to_json() const;
    static TrainingSample from_json(const nlohmann::json& j);
};

inline constexpr int kDefaultNegatives = 3;

// Caption wins over tags as the seed; the display names of the tags otherwise.
SeedPrompt seed_for(const ClipAnnotation& clip, const audio::Ontology& ontology);

TrainingSample build_training_sample(const ClipAnnotation& clip, GenKind kind, ResponseGenerator& generator, Rng& rng,
                                     const audio::Ontology& ontology, int negatives = kDefaultNegatives);

enum class ConfigKind { PosOnly, PosNeg, Combined, Custom };
std::string to_string(ConfigKind k);
ConfigKind config_kind_from_string(const std::string& s);

struct DatasetManifest {
    std::string name;
    ConfigKind config_kind = ConfigKind::Custom;
    std::vector<TrainingSample> samples;
    int effective_count = 0;
    std::string clip_policy;  // ablation splits: "distinct" or "two_per_clip"

    // JSONL, one sample per line, plus a "<path>.meta.json" sidecar.
    void save(const std::filesystem::path& path) const;
    static DatasetManifest load(const std::filesystem::path& path);
};

// A combined sample carries present and absent information and counts twice.
int effective_count(const std::vector<TrainingSample>& samples);

struct AblationSplits {
    DatasetManifest pos_only;
    DatasetManifest pos_neg;
    DatasetManifest combined;
};

// Over a seeded permutation of the pool: pos_only = 2N positives on clips [0, 2N);
// pos_neg = N positives on [0, N) + N negatives on [N, 2N); combined = N combined on [0, N).
// With fewer than 2N (but at least N) pool clips, every configuration uses clips
// [0, N) twice instead: two positives per clip, or one positive and one negative.
AblationSplits build_ablation_splits(const std::vector<ClipAnnotation>& pool, int n, ResponseGenerator& generator,
                                     Rng& rng, const audio::Ontology& ontology);

// One sample per clip of the given kind.
DatasetManifest build_dataset(const std::vector<ClipAnnotation>& clips, GenKind kind, ResponseGenerator& generator,
                              Rng& rng, const audio::Ontology& ontology, const std::string& name);

}  // namespace listen::datagen
