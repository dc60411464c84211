#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "listen/adapter.hpp"
#include "listen/audio_world.hpp"
#include "listen/autograd.hpp"
#include "listen/datagen.hpp"
#include "listen/rng.hpp"
#include "listen/tokenizer.hpp"

namespace listen::backbone {

using ag::Mat;
using ag::Param;
using ag::RowVec;
using ag::Tape;
using ag::Var;

struct BackboneConfig {
    int d_llm = 64;
    int layers = 2;
    int heads = 2;
    int context = 256;
    int ff_mult = 4;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static BackboneConfig from_json(const nlohmann::json& j);
};

struct BackboneLayer {
    Param ln1_g, ln1_b;
    Param qkv_w, qkv_b;
    Param out_w, out_b;
    Param ln2_g, ln2_b;
    Param ff1_w, ff1_b, ff2_w, ff2_b;
};

// Pre-norm causal transformer; the output head is tied to tok_emb.
class BackboneParams {
public:
    BackboneParams(const BackboneConfig& config, int vocab_size);

    Param tok_emb;  // V x d
    Param pos_emb;  // context x d
    std::vector<BackboneLayer> layers;
    Param lnf_g, lnf_b;

    std::vector<std::pair<std::string, Param*>> named();
    std::vector<std::pair<std::string, const Param*>> named() const;
    std::map<std::string, Mat> arrays() const;
    void load_arrays(const std::map<std::string, Mat>& arrays);
    void set_trainable(bool trainable);
    void zero_grad();
};

struct Backbone {
    static constexpr const char* kVersion = "listen-toylm/1";

    BackboneConfig config;
    Vocab vocab;
    BackboneParams params;
    std::string corpus_digest;

    Backbone(BackboneConfig config, Vocab vocab);

    // <dir>/backbone.ckpt (arrays + config/version/corpus digest) and <dir>/vocab.json.
    void save(const std::filesystem::path& dir) const;
    static Backbone load(const std::filesystem::path& dir);
};

std::string freeze_checksum(const BackboneParams& params);

class BoundBackbone {
public:
    // Frozen binding: no gradients reach the weights, but they flow through to inputs.
    BoundBackbone(Tape& tape, const Backbone& backbone);
    // Trainable binding used for pretraining.
    BoundBackbone(Tape& tape, Backbone& backbone);

    Var embed(std::span<const int> ids) const;
    // Final-norm hidden states, S x d.
    Var hidden(Var embeddings) const;
    // S x V logits, causal.
    Var logits(Var embeddings) const;

    const Backbone& model() const { return *model_; }
    Tape& tape() const { return *tape_; }

private:
    template <typename B>
    void bind(B& backbone);

    struct LayerVars {
        Var ln1_g, ln1_b, qkv_w, qkv_b, out_w, out_b, ln2_g, ln2_b, ff1_w, ff1_b, ff2_w, ff2_b;
    };
    Tape* tape_;
    const Backbone* model_;
    Var tok_emb_, pos_emb_, lnf_g_, lnf_b_;
    std::vector<LayerVars> layers_;
};

// Plain causal forward: S x V logits for S x d input embeddings.
Mat lm_forward(const Backbone& backbone, const Mat& embeddings);

// ----- prompts and injection ------------------------------------------------

// Token-level prompt: [bos] before-seed [audio] x n after-seed [sep].
struct PromptTokens {
    std::vector<int> ids;
    std::size_t span_begin = 0;  // placeholder token span [begin, end)
    std::size_t span_end = 0;
};

// From a final prompt and the character span of its seed. The seed is replaced
// by one placeholder token per seed word (at least one).
PromptTokens prompt_tokens(const Vocab& vocab, const std::string& final_prompt, const datagen::PlaceholderSpan& span);
// Probe prompt: "[Begin of audio] <audio> [End of audio] " + question.
PromptTokens probe_prompt_tokens(const Vocab& vocab, const std::string& question);
// Text-only prompt (no audio slot): [bos] text [sep].
std::vector<int> text_prompt_tokens(const Vocab& vocab, const std::string& prompt);
// tokenize(response) + [eos].
std::vector<int> response_tokens(const Vocab& vocab, const std::string& response);

// Input layout after the placeholder span is swapped for K prefix rows.
// target_ids[i] is the token predicted at position i (-1 when none); loss_mask
// is set exactly on the positions whose target is a response token.
struct InjectedLayout {
    int length = 0;
    int audio_begin = 0;
    int audio_end = 0;
    int response_begin = 0;
    std::vector<int> target_ids;
    std::vector<char> loss_mask;
};

struct InjectedSequence {
    Mat embeddings;  // S x d_llm
    InjectedLayout layout;
};

InjectedLayout injection_layout(const PromptTokens& prompt, int prefix_rows, const std::vector<int>& response);

// Tape version used in training; `prefix` is the adapter output.
Var embed_with_injection(const BoundBackbone& bb, const PromptTokens& prompt, Var prefix,
                         const std::vector<int>& response, InjectedLayout* layout);

InjectedSequence embed_with_injection(const Backbone& backbone, const PromptTokens& prompt,
                                      const adapter::AudioPrefix& prefix, const std::vector<int>& response);

// ----- decoding -----------------------------------------------------------------

// Index of the largest entry; ties go to the lowest index.
int argmax_lowest(const RowVec& row);

// Logits of the next token given the current input embeddings.
using NextLogitsFn = std::function<RowVec(const Mat& embeddings)>;
using EmbedTokenFn = std::function<RowVec(int id)>;

// Appends argmax tokens until eos or max_new_tokens; returns generated ids without eos.
std::vector<int> greedy_ids(const NextLogitsFn& next_logits, const EmbedTokenFn& embed_token, Mat embeddings,
                            int max_new_tokens, int eos_id);

std::string greedy_decode(const Backbone& backbone, const Mat& prefix_embeddings, int max_new_tokens);
// Text prompt in, greedy completion out (no audio).
std::string greedy_complete(const Backbone& backbone, const std::string& prompt, int max_new_tokens);

// datagen::TextClient backed by the frozen toy LM.
class ToyLmClient : public datagen::TextClient {
public:
    explicit ToyLmClient(const Backbone& backbone) : backbone_(&backbone) {}
    std::string id() const override { return "toylm"; }
    std::string generate(const datagen::GenerationRequest& request) override;

private:
    const Backbone* backbone_;
};

// ----- pretraining ----------------------------------------------------------------

// One line per training sequence: "<prompt>\t<response>".
std::vector<std::string> build_pretrain_corpus(const audio::Ontology& ontology, int lines, std::uint64_t seed);

struct PretrainConfig {
    BackboneConfig model;
    int lines = 12000;
    int heldout = 1000;
    int steps = 3000;
    int batch_size = 16;
    double learning_rate = 2e-3;
    double grad_clip = 1.0;
    std::uint64_t seed = 0;
};

struct PretrainLogRecord {
    int step = 0;
    double loss = 0.0;
};

inline constexpr int kMinPretrainLines = 10000;

// Trains on `corpus` (which must hold >= 10k lines), then freezes the weights
// at float32 precision.
Backbone pretrain_toy_lm(const std::vector<std::string>& corpus, const PretrainConfig& config,
                         const std::function<void(const PretrainLogRecord&)>& on_log = {});

// exp(mean next-token NLL) over every predicted position of the lines.
double perplexity(const Backbone& backbone, const std::vector<std::string>& lines);

}  // namespace listen::backbone
