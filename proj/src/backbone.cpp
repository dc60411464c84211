#include "listen/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "listen/checkpoint.hpp"
#include "listen/errors.hpp"
#include "listen/optim.hpp"
#include "listen/templates.hpp"

namespace listen::backbone {

namespace tpl = templates;

namespace {

Mat normal_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
    return m;
}

Var linear(Var x, Var w, Var b) { return ag::add_row(ag::matmul(x, w), b); }

}  // namespace

nlohmann::json BackboneConfig::to_json() const {
    return {{"d_llm", d_llm}, {"layers", layers}, {"heads", heads}, {"context", context}, {"ff_mult", ff_mult},
            {"seed", seed}};
}

BackboneConfig BackboneConfig::from_json(const nlohmann::json& j) {
    BackboneConfig c;
    c.d_llm = j.value("d_llm", c.d_llm);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.context = j.value("context", c.context);
    c.ff_mult = j.value("ff_mult", c.ff_mult);
    c.seed = j.value("seed", c.seed);
    return c;
}

BackboneParams::BackboneParams(const BackboneConfig& c, int vocab_size) {
    if (c.d_llm % c.heads != 0) throw ConfigError("d_llm must be divisible by heads");
    if (vocab_size < 1 || c.layers < 1 || c.context < 1) throw ConfigError("bad backbone dimensions");
    Rng rng = Rng(c.seed).derive("backbone-init");
    const int d = c.d_llm, h = c.ff_mult * c.d_llm;
    const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
    const double resid_std = w_std / std::sqrt(2.0 * c.layers);
    tok_emb = Param(normal_matrix(rng, vocab_size, d, 0.1));
    pos_emb = Param(normal_matrix(rng, c.context, d, 0.1));
    for (int l = 0; l < c.layers; ++l) {
        BackboneLayer L;
        L.ln1_g = Param(Mat::Ones(1, d));
        L.ln1_b = Param(Mat::Zero(1, d));
        L.qkv_w = Param(normal_matrix(rng, d, 3 * d, w_std));
        L.qkv_b = Param(Mat::Zero(1, 3 * d));
        L.out_w = Param(normal_matrix(rng, d, d, resid_std));
        L.out_b = Param(Mat::Zero(1, d));
        L.ln2_g = Param(Mat::Ones(1, d));
        L.ln2_b = Param(Mat::Zero(1, d));
        L.ff1_w = Param(normal_matrix(rng, d, h, w_std));
        L.ff1_b = Param(Mat::Zero(1, h));
        L.ff2_w = Param(normal_matrix(rng, h, d, 1.0 / std::sqrt(static_cast<double>(h)) / std::sqrt(2.0 * c.layers)));
        L.ff2_b = Param(Mat::Zero(1, d));
        layers.push_back(std::move(L));
    }
    lnf_g = Param(Mat::Ones(1, d));
    lnf_b = Param(Mat::Zero(1, d));
}

std::vector<std::pair<std::string, Param*>> BackboneParams::named() {
    std::vector<std::pair<std::string, Param*>> out{{"backbone.tok_emb", &tok_emb}, {"backbone.pos_emb", &pos_emb}};
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string p = "backbone.layer" + std::to_string(i) + ".";
        BackboneLayer& L = layers[i];
        out.insert(out.end(), {{p + "ln1.g", &L.ln1_g}, {p + "ln1.b", &L.ln1_b}, {p + "qkv.w", &L.qkv_w},
                               {p + "qkv.b", &L.qkv_b}, {p + "out.w", &L.out_w}, {p + "out.b", &L.out_b},
                               {p + "ln2.g", &L.ln2_g}, {p + "ln2.b", &L.ln2_b}, {p + "ff1.w", &L.ff1_w},
                               {p + "ff1.b", &L.ff1_b}, {p + "ff2.w", &L.ff2_w}, {p + "ff2.b", &L.ff2_b}});
    }
    out.insert(out.end(), {{"backbone.lnf.g", &lnf_g}, {"backbone.lnf.b", &lnf_b}});
    return out;
}

std::vector<std::pair<std::string, const Param*>> BackboneParams::named() const {
    std::vector<std::pair<std::string, const Param*>> out;
    for (auto& [name, p] : const_cast<BackboneParams*>(this)->named()) out.emplace_back(name, p);
    return out;
}

std::map<std::string, Mat> BackboneParams::arrays() const {
    std::map<std::string, Mat> out;
    for (const auto& [name, p] : named()) out[name] = p->value;
    return out;
}

void BackboneParams::load_arrays(const std::map<std::string, Mat>& arrays) {
    for (auto& [name, p] : named()) {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw FormatError("backbone array '" + name + "' missing");
        if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
            throw ShapeError("backbone array '" + name + "' has the wrong shape");
        p->value = it->second;
    }
}

void BackboneParams::set_trainable(bool trainable) {
    for (auto& [name, p] : named()) p->trainable = trainable;
}

void BackboneParams::zero_grad() {
    for (auto& [name, p] : named()) p->zero_grad();
}

std::string freeze_checksum(const BackboneParams& params) { return ckpt::digest_all(params.arrays()); }

Backbone::Backbone(BackboneConfig config_, Vocab vocab_)
    : config(config_), vocab(std::move(vocab_)), params(config_, vocab.size()) {}

void Backbone::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    ckpt::ArrayStore store;
    store.arrays = params.arrays();
    store.metadata = {{"version", kVersion},
                      {"config", config.to_json()},
                      {"corpus_digest", corpus_digest},
                      {"vocab_size", vocab.size()},
                      {"checksum", freeze_checksum(params)}};
    ckpt::save(dir / "backbone.ckpt", store);
    vocab.save(dir / "vocab.json");
}

Backbone Backbone::load(const std::filesystem::path& dir) {
    const ckpt::ArrayStore store = ckpt::load(dir / "backbone.ckpt");
    if (store.metadata.value("version", std::string()) != kVersion)
        throw FormatError(dir.string() + ": not a " + std::string(kVersion) + " artifact");
    Backbone b(BackboneConfig::from_json(store.metadata.at("config")), Vocab::load(dir / "vocab.json"));
    b.params.load_arrays(store.arrays);
    b.params.set_trainable(false);
    b.corpus_digest = store.metadata.value("corpus_digest", std::string());
    return b;
}

// ---------------------------------------------------------------------------

template <typename B>
void BoundBackbone::bind(B& backbone) {
    Tape& t = *tape_;
    auto& p = backbone.params;
    tok_emb_ = t.param(p.tok_emb);
    pos_emb_ = t.param(p.pos_emb);
    for (auto& L : p.layers) {
        layers_.push_back(LayerVars{t.param(L.ln1_g), t.param(L.ln1_b), t.param(L.qkv_w), t.param(L.qkv_b),
                                    t.param(L.out_w), t.param(L.out_b), t.param(L.ln2_g), t.param(L.ln2_b),
                                    t.param(L.ff1_w), t.param(L.ff1_b), t.param(L.ff2_w), t.param(L.ff2_b)});
    }
    lnf_g_ = t.param(p.lnf_g);
    lnf_b_ = t.param(p.lnf_b);
}

BoundBackbone::BoundBackbone(Tape& tape, const Backbone& backbone) : tape_(&tape), model_(&backbone) {
    bind(backbone);
}

BoundBackbone::BoundBackbone(Tape& tape, Backbone& backbone) : tape_(&tape), model_(&backbone) { bind(backbone); }

Var BoundBackbone::embed(std::span<const int> ids) const { return ag::gather_rows(tok_emb_, ids); }

Var BoundBackbone::hidden(Var embeddings) const {
    const auto& cfg = model_->config;
    const auto seq = embeddings.rows();
    if (seq > cfg.context)
        throw LengthError("sequence of " + std::to_string(seq) + " exceeds the context limit " +
                          std::to_string(cfg.context));
    if (embeddings.cols() != cfg.d_llm) throw ShapeError("embedding width differs from d_llm");
    for (Eigen::Index i = 0; i < embeddings.value().size(); ++i)
        if (!std::isfinite(embeddings.value().data()[i])) throw NumericalError("non-finite input embedding");

    const int d = cfg.d_llm, dh = d / cfg.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Var x = ag::add(embeddings, ag::slice_rows(pos_emb_, 0, seq));
    for (const auto& L : layers_) {
        Var qkv = linear(ag::layer_norm(x, L.ln1_g, L.ln1_b), L.qkv_w, L.qkv_b);
        std::vector<Var> heads;
        for (int h = 0; h < cfg.heads; ++h) {
            Var q = ag::slice_cols(qkv, h * dh, dh);
            Var k = ag::slice_cols(qkv, d + h * dh, dh);
            Var v = ag::slice_cols(qkv, 2 * d + h * dh, dh);
            Var attn = ag::softmax_rows(ag::scale(ag::matmul_bt(q, k), inv_sqrt), true);
            heads.push_back(ag::matmul(attn, v));
        }
        Var ctx = heads.size() == 1 ? heads[0] : ag::concat_cols(heads);
        x = ag::add(x, linear(ctx, L.out_w, L.out_b));
        Var ff = ag::gelu(linear(ag::layer_norm(x, L.ln2_g, L.ln2_b), L.ff1_w, L.ff1_b));
        x = ag::add(x, linear(ff, L.ff2_w, L.ff2_b));
    }
    return ag::layer_norm(x, lnf_g_, lnf_b_);
}

Var BoundBackbone::logits(Var embeddings) const { return ag::matmul_bt(hidden(embeddings), tok_emb_); }

Mat lm_forward(const Backbone& backbone, const Mat& embeddings) {
    Tape tape(false);
    BoundBackbone bb(tape, backbone);
    return bb.logits(tape.constant(embeddings)).value();
}

// ---------------------------------------------------------------------------

PromptTokens prompt_tokens(const Vocab& vocab, const std::string& final_prompt, const datagen::PlaceholderSpan& span) {
    if (span.begin > span.end || span.end > final_prompt.size())
        throw ArgumentError("placeholder span out of range");
    PromptTokens p;
    p.ids.push_back(Vocab::kBos);
    for (int id : vocab.tokenize(final_prompt.substr(0, span.begin))) p.ids.push_back(id);
    p.span_begin = p.ids.size();
    const auto seed_words = split_words(final_prompt.substr(span.begin, span.end - span.begin));
    p.ids.insert(p.ids.end(), std::max<std::size_t>(seed_words.size(), 1), Vocab::kAudio);
    p.span_end = p.ids.size();
    for (int id : vocab.tokenize(final_prompt.substr(span.end))) p.ids.push_back(id);
    p.ids.push_back(Vocab::kSep);
    return p;
}

PromptTokens probe_prompt_tokens(const Vocab& vocab, const std::string& question) {
    PromptTokens p;
    p.ids.push_back(Vocab::kBos);
    for (int id : vocab.tokenize(std::string(tpl::kBeginAudio))) p.ids.push_back(id);
    p.span_begin = p.ids.size();
    p.ids.push_back(Vocab::kAudio);
    p.span_end = p.ids.size();
    for (int id : vocab.tokenize(std::string(tpl::kEndAudio) + " " + question)) p.ids.push_back(id);
    p.ids.push_back(Vocab::kSep);
    return p;
}

std::vector<int> text_prompt_tokens(const Vocab& vocab, const std::string& prompt) {
    std::vector<int> ids{Vocab::kBos};
    for (int id : vocab.tokenize(prompt)) ids.push_back(id);
    ids.push_back(Vocab::kSep);
    return ids;
}

std::vector<int> response_tokens(const Vocab& vocab, const std::string& response) {
    std::vector<int> ids = vocab.tokenize(response);
    ids.push_back(Vocab::kEos);
    return ids;
}

InjectedLayout injection_layout(const PromptTokens& prompt, int prefix_rows, const std::vector<int>& response) {
    if (prefix_rows < 1) throw ArgumentError("audio prefix must have at least one row");
    if (prompt.span_begin > prompt.span_end || prompt.span_end > prompt.ids.size())
        throw ArgumentError("placeholder token span out of range");
    if (prompt.span_begin == prompt.span_end) throw ArgumentError("placeholder token span is empty");
    InjectedLayout L;
    const int before = static_cast<int>(prompt.span_begin);
    const int after = static_cast<int>(prompt.ids.size() - prompt.span_end);
    L.audio_begin = before;
    L.audio_end = before + prefix_rows;
    L.response_begin = L.audio_end + after;
    L.length = L.response_begin + static_cast<int>(response.size());
    L.target_ids.assign(static_cast<std::size_t>(L.length), -1);
    L.loss_mask.assign(static_cast<std::size_t>(L.length), 0);
    // Position i predicts the token at i + 1; only response tokens are targets.
    for (int r = 0; r < static_cast<int>(response.size()); ++r) {
        const int pos = L.response_begin + r - 1;
        if (pos < 0) continue;
        L.target_ids[static_cast<std::size_t>(pos)] = response[static_cast<std::size_t>(r)];
        L.loss_mask[static_cast<std::size_t>(pos)] = 1;
    }
    return L;
}

Var embed_with_injection(const BoundBackbone& bb, const PromptTokens& prompt, Var prefix,
                         const std::vector<int>& response, InjectedLayout* layout) {
    const int k = static_cast<int>(prefix.rows());
    InjectedLayout L = injection_layout(prompt, k, response);
    if (prefix.cols() != bb.model().config.d_llm) throw ShapeError("audio prefix width differs from d_llm");
    std::vector<int> before(prompt.ids.begin(), prompt.ids.begin() + static_cast<std::ptrdiff_t>(prompt.span_begin));
    std::vector<int> after(prompt.ids.begin() + static_cast<std::ptrdiff_t>(prompt.span_end), prompt.ids.end());
    after.insert(after.end(), response.begin(), response.end());
    std::vector<Var> parts;
    if (!before.empty()) parts.push_back(bb.embed(before));
    parts.push_back(prefix);
    if (!after.empty()) parts.push_back(bb.embed(after));
    if (layout) *layout = std::move(L);
    return ag::concat_rows(parts);
}

InjectedSequence embed_with_injection(const Backbone& backbone, const PromptTokens& prompt,
                                      const adapter::AudioPrefix& prefix, const std::vector<int>& response) {
    Tape tape(false);
    BoundBackbone bb(tape, backbone);
    InjectedSequence out;
    out.embeddings = embed_with_injection(bb, prompt, tape.constant(prefix.vectors), response, &out.layout).value();
    return out;
}

// ---------------------------------------------------------------------------

int argmax_lowest(const RowVec& row) {
    int best = 0;
    for (int i = 1; i < row.size(); ++i)
        if (row(i) > row(best)) best = i;
    return best;
}

std::vector<int> greedy_ids(const NextLogitsFn& next_logits, const EmbedTokenFn& embed_token, Mat embeddings,
                            int max_new_tokens, int eos_id) {
    if (max_new_tokens < 1) throw ArgumentError("max_new_tokens must be >= 1");
    std::vector<int> out;
    for (int step = 0; step < max_new_tokens; ++step) {
        const int tok = argmax_lowest(next_logits(embeddings));
        if (tok == eos_id) break;
        out.push_back(tok);
        const RowVec e = embed_token(tok);
        embeddings.conservativeResize(embeddings.rows() + 1, Eigen::NoChange);
        embeddings.row(embeddings.rows() - 1) = e;
    }
    return out;
}

namespace {

RowVec last_logits(const Backbone& backbone, const Mat& embeddings) {
    Tape tape(false);
    BoundBackbone bb(tape, backbone);
    const Mat& h = bb.hidden(tape.constant(embeddings)).value();
    return h.row(h.rows() - 1) * backbone.params.tok_emb.value.transpose();
}

}  // namespace

std::string greedy_decode(const Backbone& backbone, const Mat& prefix_embeddings, int max_new_tokens) {
    const auto ids = greedy_ids([&](const Mat& e) { return last_logits(backbone, e); },
                                [&](int id) { return RowVec(backbone.params.tok_emb.value.row(id)); },
                                prefix_embeddings, max_new_tokens, Vocab::kEos);
    return backbone.vocab.detokenize(ids);
}

std::string greedy_complete(const Backbone& backbone, const std::string& prompt, int max_new_tokens) {
    const auto ids = text_prompt_tokens(backbone.vocab, prompt);
    Mat e(static_cast<Eigen::Index>(ids.size()), backbone.config.d_llm);
    for (std::size_t i = 0; i < ids.size(); ++i) e.row(static_cast<Eigen::Index>(i)) = backbone.params.tok_emb.value.row(ids[i]);
    const int room = backbone.config.context - static_cast<int>(ids.size());
    if (room < 1) throw LengthError("prompt leaves no room in the context window");
    return greedy_decode(backbone, e, std::min(max_new_tokens, room));
}

std::string ToyLmClient::generate(const datagen::GenerationRequest& request) {
    return greedy_complete(*backbone_, request.prompt, request.max_new_tokens);
}

// ---------------------------------------------------------------------------
// Pretraining corpus: rule-rendered responses for the three generation kinds,
// plus yes/no presence, synonym/hypernym and count questions, all over text seeds.

namespace {

std::string seed_text(const audio::Ontology& o, const std::vector<std::string>& tags, bool caption) {
    if (caption) return audio::caption_for(o, tags);
    std::string s;
    for (std::size_t i = 0; i < tags.size(); ++i) s += (i ? ", " : "") + o.at(tags[i]).display_name;
    return s;
}

std::string with_seed(const std::string& seed, const std::string& instruction) {
    return std::string(tpl::kBeginAudio) + " " + seed + " " + std::string(tpl::kEndAudio) + " " + instruction;
}

std::vector<std::string> names_of(const audio::Ontology& o, const std::vector<std::string>& ids) {
    std::vector<std::string> out;
    for (const auto& id : ids) out.push_back(o.at(id).display_name);
    return out;
}

}  // namespace

std::vector<std::string> build_pretrain_corpus(const audio::Ontology& ontology, int lines, std::uint64_t seed) {
    Rng rng = Rng(seed).derive("pretrain-corpus");
    const auto ids = ontology.ids();
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(lines));
    while (static_cast<int>(out.size()) < lines) {
        std::vector<std::string> pool = ids;
        rng.shuffle(pool);
        const std::size_t n_tags = 1 + rng.below(3);
        std::vector<std::string> tags(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_tags));
        const std::string seed_str = seed_text(ontology, tags, rng.below(2) == 0);
        const double u = rng.uniform();

        std::string prompt, response;
        if (u < 0.45) {
            const auto kind = u < 0.2 ? datagen::GenKind::Positive
                                      : (u < 0.33 ? datagen::GenKind::Negative : datagen::GenKind::Combined);
            std::vector<std::string> absent;
            if (kind != datagen::GenKind::Positive) {
                const std::size_t k = 1 + rng.below(3);
                absent.assign(pool.begin() + static_cast<std::ptrdiff_t>(n_tags),
                              pool.begin() + static_cast<std::ptrdiff_t>(n_tags + k));
            }
            prompt = with_seed(seed_str, datagen::GenerationPrompt::standard(kind).text);
            response = datagen::render_rule_response(kind, names_of(ontology, tags), names_of(ontology, absent));
        } else if (u < 0.75) {
            const bool yes = rng.below(2) == 0;
            const std::string& cls = yes ? tags[rng.below(tags.size())] : pool[n_tags + rng.below(pool.size() - n_tags)];
            prompt = with_seed(seed_str, tpl::hallucination_question(ontology.at(cls).display_name));
            response = yes ? "yes" : "no";
        } else if (u < 0.9) {
            // Relation phrases: any synonym/hypernym of a present class is a yes;
            // a phrase tied only to absent classes is a no.
            std::vector<std::string> yes_phrases, no_phrases;
            std::set<std::string> present_phrases;
            for (const auto& t : tags) {
                const auto& c = ontology.at(t);
                for (const auto& s : c.synonyms) present_phrases.insert(s);
                for (const auto& h : c.hypernyms) present_phrases.insert(h);
            }
            yes_phrases.assign(present_phrases.begin(), present_phrases.end());
            for (std::size_t i = n_tags; i < pool.size(); ++i) {
                const auto& c = ontology.at(pool[i]);
                for (const auto* list : {&c.synonyms, &c.hypernyms})
                    for (const auto& p : *list)
                        if (!present_phrases.count(p)) no_phrases.push_back(p);
            }
            const bool yes = no_phrases.empty() || rng.below(2) == 0;
            const auto& phrases = yes ? yes_phrases : no_phrases;
            prompt = with_seed(seed_str, tpl::synhyp_question(phrases[rng.below(phrases.size())]));
            response = yes ? "yes" : "no";
        } else {
            prompt = with_seed(seed_str, std::string(tpl::kCountQuestion));
            response = tpl::count_word(static_cast<int>(n_tags));
        }
        out.push_back(prompt + "\t" + response);
    }
    return out;
}

namespace {

struct LineTokens {
    std::vector<int> inputs;
    std::vector<int> targets;
};

LineTokens line_tokens(const Vocab& vocab, const std::string& line) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("pretraining line without a tab separator");
    std::vector<int> ids = text_prompt_tokens(vocab, line.substr(0, tab));
    const auto resp = response_tokens(vocab, line.substr(tab + 1));
    ids.insert(ids.end(), resp.begin(), resp.end());
    LineTokens t;
    t.inputs.assign(ids.begin(), ids.end() - 1);
    t.targets.assign(ids.begin() + 1, ids.end());
    return t;
}

Var line_nll(const BoundBackbone& bb, const LineTokens& t) {
    Var logits = bb.logits(bb.embed(t.inputs));
    std::vector<char> mask(t.targets.size(), 1);
    return ag::nll_sum(logits, t.targets, mask);
}

}  // namespace

Backbone pretrain_toy_lm(const std::vector<std::string>& corpus, const PretrainConfig& config,
                         const std::function<void(const PretrainLogRecord&)>& on_log) {
    if (static_cast<int>(corpus.size()) < kMinPretrainLines)
        throw ConfigError("pretraining corpus has " + std::to_string(corpus.size()) + " lines, need at least " +
                          std::to_string(kMinPretrainLines));
    if (config.steps < 1 || config.batch_size < 1 || !(config.learning_rate > 0.0))
        throw ConfigError("bad pretraining schedule");

    std::vector<std::string> text;
    for (const auto& line : corpus) {
        const auto tab = line.find('\t');
        text.push_back(line.substr(0, tab));
        if (tab != std::string::npos) text.push_back(line.substr(tab + 1));
    }
    Backbone model(config.model, Vocab::build(text));
    {
        std::string joined;
        for (const auto& line : corpus) joined += line + "\n";
        model.corpus_digest = ckpt::sha256_hex(joined);
    }
    model.params.set_trainable(true);

    std::vector<LineTokens> data;
    data.reserve(corpus.size());
    for (const auto& line : corpus) {
        data.push_back(line_tokens(model.vocab, line));
        if (static_cast<int>(data.back().inputs.size()) > config.model.context)
            throw ConfigError("pretraining line exceeds the context window");
    }

    std::vector<Param*> params;
    for (auto& [name, p] : model.params.named()) params.push_back(p);
    optim::Adam adam(params, config.learning_rate);
    Rng rng = Rng(config.seed).derive("pretrain-order");
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();

    const int warmup = std::max(1, config.steps / 20);
    for (int step = 0; step < config.steps; ++step) {
        const double lr =
            step < warmup ? config.learning_rate * (step + 1) / warmup
                          : config.learning_rate * (0.1 + 0.9 * 0.5 *
                                                               (1.0 + std::cos(std::numbers::pi * (step - warmup) /
                                                                               std::max(1, config.steps - warmup))));
        adam.set_lr(lr);
        model.params.zero_grad();
        Tape tape;
        BoundBackbone bb(tape, model);
        std::vector<Var> losses;
        std::size_t tokens = 0;
        for (int b = 0; b < config.batch_size; ++b) {
            if (cursor == order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            const auto& t = data[order[cursor++]];
            losses.push_back(line_nll(bb, t));
            tokens += t.targets.size();
        }
        Var loss = ag::scale(ag::sum_scalars(losses), 1.0 / static_cast<double>(tokens));
        const double value = loss.value()(0, 0);
        if (!std::isfinite(value)) throw NumericalError("non-finite loss during pretraining at step " + std::to_string(step));
        tape.backward(loss);
        optim::clip_grad_norm(params, config.grad_clip);
        adam.step();
        if (on_log) on_log({step, value});
    }

    for (auto& [name, p] : model.params.named()) {
        p->value = ckpt::to_f32_precision(p->value);
        p->grad.resize(0, 0);
    }
    model.params.set_trainable(false);
    return model;
}

double perplexity(const Backbone& backbone, const std::vector<std::string>& lines) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& line : lines) {
        const auto t = line_tokens(backbone.vocab, line);
        Tape tape(false);
        BoundBackbone bb(tape, backbone);
        total += line_nll(bb, t).value()(0, 0);
        count += t.targets.size();
    }
    if (count == 0) throw ArgumentError("perplexity over no tokens");
    return std::exp(total / static_cast<double>(count));
}

}  // namespace listen::backbone
