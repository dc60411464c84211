#include "listen/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>

#include "listen/checkpoint.hpp"
#include "listen/errors.hpp"
#include "listen/optim.hpp"

namespace listen::trainer {

using json = nlohmann::json;

std::string to_string(Optimizer o) { return o == Optimizer::Adam ? "adam" : "sgd"; }

Optimizer optimizer_from_string(const std::string& s) {
    if (s == "adam") return Optimizer::Adam;
    if (s == "sgd") return Optimizer::Sgd;
    throw ConfigError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

void TrainConfig::validate() const {
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (grad_clip < 0.0) throw ConfigError("grad_clip must be >= 0");
    if (checkpoint_every < 0 || log_every < 1) throw ConfigError("bad checkpoint/log interval");
}

json TrainConfig::to_json() const {
    return {{"data", data.string()},
            {"steps", steps},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"seed", seed},
            {"optimizer", trainer::to_string(optimizer)},
            {"grad_clip", grad_clip},
            {"checkpoint_every", checkpoint_every},
            {"log_every", log_every},
            {"deterministic", deterministic}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    c.data = j.value("data", std::string());
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    c.optimizer = optimizer_from_string(j.value("optimizer", std::string("adam")));
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.log_every = j.value("log_every", c.log_every);
    c.deterministic = j.value("deterministic", c.deterministic);
    return c;
}

json TrainLogRecord::to_json() const {
    return {{"step", step}, {"nll", nll}, {"grad_norm", grad_norm}, {"layer_weights", layer_weights},
            {"wall_clock", wall_clock}};
}

TrainLogRecord TrainLogRecord::from_json(const json& j) {
    TrainLogRecord r;
    r.step = j.at("step").get<int>();
    r.nll = j.at("nll").get<double>();
    r.grad_norm = j.value("grad_norm", 0.0);
    r.layer_weights = j.value("layer_weights", std::vector<double>{});
    r.wall_clock = j.value("wall_clock", 0.0);
    return r;
}

// ---------------------------------------------------------------------------

namespace {

int count_mask(std::span<const char> mask) {
    return static_cast<int>(std::count_if(mask.begin(), mask.end(), [](char c) { return c != 0; }));
}

}  // namespace

double masked_nll(const Mat& logits, std::span<const int> targets, std::span<const char> mask) {
    ag::Tape tape(false);
    return masked_nll(tape.constant(logits), targets, mask).value()(0, 0);
}

Var masked_nll(Var logits, std::span<const int> targets, std::span<const char> mask) {
    const int n = count_mask(mask);
    if (n == 0) throw EmptyInputError("loss mask selects no positions");
    return ag::scale(ag::nll_sum(logits, targets, mask), 1.0 / n);
}

PreparedDataset prepare_dataset(const datagen::DatasetManifest& data, const audio::CorpusManifest& corpus,
                                const encoder::EncoderParams& encoder, const backbone::Vocab& vocab) {
    if (data.samples.empty()) throw DataError("dataset '" + data.name + "' has no samples");
    PreparedDataset out;
    for (const auto& s : data.samples) {
        const audio::ClipSpec* spec = nullptr;
        try {
            spec = &corpus.find(s.clip_id);
        } catch (const LookupError&) {
            throw DataError("sample references clip '" + s.clip_id + "', which is not in the corpus");
        }
        if (spec->split != audio::Split::Train)
            throw DataError("sample references clip '" + s.clip_id + "' from the eval split");
        if (!out.features.count(s.clip_id)) {
            const audio::AudioClip clip = audio::gen_clip(corpus.ontology, *spec);
            out.features.emplace(s.clip_id, encoder::encode(clip.waveform, encoder, clip.sample_rate));
        }
    }
    for (const auto& s : data.samples) {
        PreparedSample p;
        p.clip_id = s.clip_id;
        p.prompt = backbone::prompt_tokens(vocab, s.final_prompt, s.placeholder_span);
        p.response = backbone::response_tokens(vocab, s.response);
        p.features = &out.features.at(s.clip_id);
        out.samples.push_back(std::move(p));
    }
    return out;
}

SampleLoss sample_loss(const adapter::BoundAdapter& ad, const backbone::BoundBackbone& bb, const PreparedSample& s) {
    Var prefix = ad.forward(*s.features);
    backbone::InjectedLayout layout;
    Var emb = backbone::embed_with_injection(bb, s.prompt, prefix, s.response, &layout);
    Var logits = bb.logits(emb);
    SampleLoss out;
    out.tokens = count_mask(layout.loss_mask);
    out.nll_sum = ag::nll_sum(logits, layout.target_ids, layout.loss_mask);
    return out;
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> frozen_digests(const encoder::EncoderParams& encoder,
                                                  const backbone::Backbone& backbone) {
    auto out = ckpt::digest_each(encoder.arrays());
    for (auto& [name, d] : ckpt::digest_each(backbone.params.arrays())) out[name] = d;
    return out;
}

json FrozenReport::to_json() const { return {{"pass", pass}, {"compared", compared}, {"mismatched", mismatched}}; }

FrozenReport verify_frozen(const std::map<std::string, std::string>& before,
                           const std::map<std::string, std::string>& after) {
    auto is_adapter = [](const std::string& name) { return name.rfind("adapter.", 0) == 0; };
    FrozenReport r;
    for (const auto& [name, digest] : before) {
        if (is_adapter(name)) continue;
        ++r.compared;
        auto it = after.find(name);
        if (it == after.end() || it->second != digest) r.mismatched.push_back(name);
    }
    for (const auto& [name, digest] : after)
        if (!is_adapter(name) && !before.count(name)) r.mismatched.push_back(name);
    r.pass = r.mismatched.empty();
    return r;
}

void save_adapter(const std::filesystem::path& path, const adapter::AdapterParams& params, const json& metadata) {
    ckpt::ArrayStore store;
    store.arrays = params.arrays();
    store.metadata = metadata;
    store.metadata["version"] = kAdapterVersion;
    store.metadata["adapter_config"] = params.config().to_json();
    ckpt::save(path, store);
}

adapter::AdapterParams load_adapter(const std::filesystem::path& path, json* metadata) {
    const ckpt::ArrayStore store = ckpt::load(path);
    if (store.metadata.value("version", std::string()) != kAdapterVersion)
        throw FormatError(path.string() + ": not a " + std::string(kAdapterVersion) + " checkpoint");
    adapter::AdapterParams params(adapter::AdapterConfig::from_json(store.metadata.at("adapter_config")));
    params.load_arrays(store.arrays);
    if (metadata) *metadata = store.metadata;
    return params;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> weights_snapshot(const adapter::AdapterParams& p) {
    const ag::RowVec w = adapter::layer_weights(p.layer_logits.value);
    return {w.data(), w.data() + w.size()};
}

class Stepper {
public:
    Stepper(const TrainConfig& c, std::vector<ag::Param*> params) {
        if (c.optimizer == Optimizer::Adam)
            adam_ = std::make_unique<optim::Adam>(params, c.learning_rate);
        else
            sgd_ = std::make_unique<optim::Sgd>(params, c.learning_rate);
    }
    void step() { adam_ ? adam_->step() : sgd_->step(); }

private:
    std::unique_ptr<optim::Adam> adam_;
    std::unique_ptr<optim::Sgd> sgd_;
};

}  // namespace

TrainResult train_adapter(const TrainConfig& config, const PreparedDataset& data,
                          const encoder::EncoderParams& encoder, const backbone::Backbone& backbone,
                          const adapter::AdapterParams& init, const std::filesystem::path& out_dir,
                          const std::function<void(const TrainLogRecord&)>& on_log) {
    config.validate();
    if (data.samples.empty()) throw DataError("no training samples");
    const auto& ac = init.config();
    if (ac.layers != encoder.config().layers || ac.d_enc != encoder.config().d_enc)
        throw ConfigError("adapter config does not match the encoder");
    if (ac.d_llm != backbone.config.d_llm) throw ConfigError("adapter d_llm does not match the backbone");

    const auto frozen_before = frozen_digests(encoder, backbone);
    const json attest_before = frozen_before;
    const auto t0 = std::chrono::steady_clock::now();

    TrainResult result{init, {}, {}, {}, {}};
    adapter::AdapterParams& params = result.params;
    std::vector<ag::Param*> plist;
    for (auto& [name, p] : params.named()) {
        p->trainable = true;
        plist.push_back(p);
    }
    Stepper stepper(config, plist);

    std::ofstream log_out;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        log_out.open(out_dir / "train_log.jsonl");
        if (!log_out) throw DataError("cannot write " + (out_dir / "train_log.jsonl").string());
    }
    auto checkpoint_meta = [&](int step) {
        return json{{"step", step},
                    {"train_config", config.to_json()},
                    {"encoder_config", encoder.config().to_json()},
                    {"backbone_config", backbone.config.to_json()},
                    {"backbone_corpus_digest", backbone.corpus_digest},
                    {"frozen_digests", attest_before}};
    };

    Rng order_rng = Rng(config.seed).derive("batch-order");
    std::vector<std::size_t> order(data.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();

    for (int step = 0; step < config.steps; ++step) {
        std::vector<std::size_t> batch;
        for (int b = 0; b < config.batch_size; ++b) {
            if (cursor == order.size()) {
                order_rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(order[cursor++]);
        }

        params.zero_grad();
        ag::Tape tape;
        adapter::BoundAdapter ad(tape, params);
        backbone::BoundBackbone bb(tape, backbone);
        std::vector<Var> parts;
        int tokens = 0;
        for (std::size_t idx : batch) {
            const SampleLoss sl = sample_loss(ad, bb, data.samples[idx]);
            parts.push_back(sl.nll_sum);
            tokens += sl.tokens;
        }
        if (tokens == 0) throw EmptyInputError("batch has no response tokens");
        Var loss = ag::scale(ag::sum_scalars(parts), 1.0 / tokens);
        const double value = loss.value()(0, 0);
        if (!std::isfinite(value)) {
            json diag = {{"step", step}, {"loss", std::isnan(value) ? "nan" : "inf"}, {"batch", json::array()}};
            for (std::size_t idx : batch) diag["batch"].push_back(data.samples[idx].clip_id);
            if (!out_dir.empty()) std::ofstream(out_dir / "nan_diagnostic.json") << diag.dump(2) << "\n";
            throw NumericalError("non-finite loss at step " + std::to_string(step) + "; batch " + diag["batch"].dump());
        }
        tape.backward(loss);
        const double gnorm = optim::clip_grad_norm(plist, config.grad_clip);
        stepper.step();

        TrainLogRecord rec{step, value, gnorm, weights_snapshot(params),
                           std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
        if (step % config.log_every == 0 || step + 1 == config.steps) {
            result.log.push_back(rec);
            if (log_out) log_out << rec.to_json().dump() << "\n";
            if (on_log) on_log(rec);
        }
        if (!out_dir.empty() && config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 &&
            step + 1 < config.steps) {
            adapter::AdapterParams snap = params;
            for (auto& [name, p] : snap.named()) p->value = ckpt::to_f32_precision(p->value);
            save_adapter(out_dir / ("adapter_step" + std::to_string(step + 1) + ".ckpt"), snap, checkpoint_meta(step + 1));
        }
    }

    // The stored adapter is what evaluation sees, so keep the returned copy identical
    // to it. A zero-step run hands the initial values back untouched.
    for (auto& [name, p] : params.named()) {
        if (config.steps > 0) p->value = ckpt::to_f32_precision(p->value);
        p->grad.resize(0, 0);
    }
    result.frozen = verify_frozen(frozen_before, frozen_digests(encoder, backbone));
    if (!out_dir.empty()) {
        json meta = checkpoint_meta(config.steps);
        meta["frozen_check"] = result.frozen.to_json();
        result.checkpoint = out_dir / "adapter.ckpt";
        save_adapter(result.checkpoint, params, meta);
        result.checkpoint_digest = ckpt::sha256_file(result.checkpoint);
    }
    if (!result.frozen.pass) {
        std::string names;
        for (const auto& n : result.frozen.mismatched) names += " " + n;
        throw NumericalError("frozen arrays changed during training:" + names);
    }
    return result;
}

std::pair<double, double> windowed_means(const std::vector<TrainLogRecord>& log, double fraction) {
    if (log.empty()) throw ArgumentError("empty training log");
    const std::size_t w = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(log.size() * fraction)));
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < w; ++i) {
        first += log[i].nll;
        last += log[log.size() - 1 - i].nll;
    }
    return {first / w, last / w};
}

}  // namespace listen::trainer
