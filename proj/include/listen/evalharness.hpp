#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "listen/adapter.hpp"
#include "listen/audio_world.hpp"
#include "listen/backbone.hpp"
#include "listen/encoder.hpp"
#include "listen/rng.hpp"

namespace listen::eval {

enum class ProbeKind { Hallucination, SynHyp, Aqa };
std::string to_string(ProbeKind k);
ProbeKind probe_kind_from_string(const std::string& s);

enum class Answer { Yes, No, Unknown };
std::string to_string(Answer a);

struct ProbeItem {
    std::string clip_id;
    std::string question;
    std::string gold;  // "yes"/"no" for binary probes, a normalised answer for AQA
    ProbeKind kind = ProbeKind::Hallucination;
    std::string queried_concept;  // class id, relation phrase, or "count"

    bool binary() const { return kind != ProbeKind::Aqa; }
    nlohmann::json to_json() const;
};

struct Prediction {
    ProbeItem item;
    std::string raw_text;
    std::string extracted;  // yes / no / unknown, or the normalised AQA answer
    std::string error;      // endpoint failure note, empty on success

    nlohmann::json to_json() const;
};

// One yes-item (a present tag) and one no-item (a uniformly drawn absent tag)
// per eval clip. Throws ConfigError when the eval split lacks coverage.
std::vector<ProbeItem> build_hallucination_probe(const audio::CorpusManifest& corpus, Rng& rng);

// Per eval clip: a synonym/hypernym of a present tag (gold yes) and a relation
// phrase tied only to absent classes (gold no). Clips without a valid negative
// are skipped and reported through `warnings`.
std::vector<ProbeItem> build_synhyp_probe(const audio::CorpusManifest& corpus, const audio::Ontology& ontology,
                                          Rng& rng, std::vector<std::string>* warnings = nullptr);

// Per eval clip: a count question and a presence question (yes or no by coin flip).
std::vector<ProbeItem> build_aqa_probe(const audio::CorpusManifest& corpus, Rng& rng);

// Anything that can answer a question about a clip.
class ModelEndpoint {
public:
    virtual ~ModelEndpoint() = default;
    virtual std::string id() const = 0;
    virtual std::string answer(const audio::AudioClip& clip, const std::string& question, int max_new_tokens) = 0;
};

// encode -> adapter_forward -> embed_with_injection -> greedy_decode.
class PipelineEndpoint : public ModelEndpoint {
public:
    PipelineEndpoint(const encoder::EncoderParams& encoder, const adapter::AdapterParams& adapter,
                     const backbone::Backbone& backbone)
        : encoder_(&encoder), adapter_(&adapter), backbone_(&backbone) {}
    std::string id() const override { return "pipeline"; }
    std::string answer(const audio::AudioClip& clip, const std::string& question, int max_new_tokens) override;

private:
    const encoder::EncoderParams* encoder_;
    const adapter::AdapterParams* adapter_;
    const backbone::Backbone* backbone_;
};

using ClipSource = std::function<audio::AudioClip(const std::string& clip_id)>;

// Clips regenerated from the corpus recipes.
ClipSource corpus_clips(const audio::CorpusManifest& corpus);

// One prediction per item, in order. Endpoint failures mark the item unknown.
std::vector<Prediction> run_eval(ModelEndpoint& endpoint, const std::vector<ProbeItem>& items,
                                 const ClipSource& clips, int max_new_tokens = 8);

// Lowercase, strip punctuation; the first token if it is yes/no, else the only
// one of yes/no that occurs, else unknown.
Answer extract_yes_no(const std::string& raw_text);
// Lowercase, punctuation removed, whitespace collapsed.
std::string normalize_answer(const std::string& text);

struct ConfusionMatrix {
    int tp_yes = 0, fp_yes = 0, fn_yes = 0;
    int tp_no = 0, fp_no = 0, fn_no = 0;
    int unknown_count = 0;
    int support_yes = 0, support_no = 0;

    int total() const { return support_yes + support_no; }
    nlohmann::json to_json() const;
};

// Unknown answers are wrong for the gold class: fn for that class, no fp anywhere.
// Throws KindError for AQA items.
ConfusionMatrix confusion(const std::vector<Prediction>& predictions);

struct MetricsReport {
    double acc = 0.0;
    double f1_yes = 0.0;
    double f1_no = 0.0;
    double f1_weighted = 0.0;
    double yes_rate = 0.0;
    ConfusionMatrix counts;
    std::vector<std::string> flags;  // classes whose F1 was undefined and set to 0

    nlohmann::json to_json() const;
};

// Throws ArgumentError for an empty matrix.
MetricsReport metrics(const ConfusionMatrix& c);

// Exact match over normalised answers; unknown counts wrong.
double aqa_accuracy(const std::vector<Prediction>& predictions);

struct EvalReport {
    std::map<std::string, MetricsReport> binary;  // "hallucination", "synhyp"
    double aqa_acc = -1.0;                          // < 0 when not run
    int n_items = 0;
    nlohmann::json config = nlohmann::json::object();

    // Top-level columns come from the hallucination probe when present.
    nlohmann::json to_json() const;
};

EvalReport summarize(const std::vector<Prediction>& predictions, const nlohmann::json& config);

void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& predictions);

}  // namespace listen::eval
