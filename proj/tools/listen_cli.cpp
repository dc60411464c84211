// listen: command-line entry point for corpus synthesis, data generation,
// toy LM pretraining, adapter training, evaluation, ablation and plotting.

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "listen/audio_world.hpp"
#include "listen/backbone.hpp"
#include "listen/checkpoint.hpp"
#include "listen/datagen.hpp"
#include "listen/encoder.hpp"
#include "listen/errors.hpp"
#include "listen/evalharness.hpp"
#include "listen/pipeline.hpp"
#include "listen/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace listen;
using pipeline::RunConfig;

namespace {

// Flag values are kept as text and merged over the config file; numbers and
// booleans are recognised so that dotted keys keep their JSON types.
struct FlagSet {
    std::map<std::string, std::string> values;  // config key -> raw flag text
    std::map<std::string, CLI::Option*> options;
    std::string config_path;

    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        options[key] = app->add_option(flag, values[key], help);
    }
    void add_switch(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        options[key] = app->add_flag(flag, help);
    }

    RunConfig resolve(const json& defaults) const {
        RunConfig cfg(defaults);
        if (!config_path.empty()) cfg.merge(RunConfig::from_file(config_path));
        for (const auto& [key, opt] : options) {
            if (opt->count() == 0) continue;
            if (opt->get_expected_min() == 0) {
                cfg.set(key, true);
                continue;
            }
            const std::string& text = values.at(key);
            json v = json::parse(text, nullptr, false);
            cfg.set(key, v.is_discarded() || v.is_object() || v.is_array() ? json(text) : v);
        }
        return cfg;
    }
};

std::vector<std::uint64_t> parse_seeds(const json& v) {
    std::vector<std::uint64_t> out;
    if (v.is_array()) {
        for (const auto& s : v) out.push_back(s.get<std::uint64_t>());
        return out;
    }
    if (v.is_number_unsigned() || v.is_number_integer()) {
        // A bare count: seeds 0..n-1.
        for (std::uint64_t i = 0; i < v.get<std::uint64_t>(); ++i) out.push_back(i);
        return out;
    }
    std::stringstream ss(v.get<std::string>());
    for (std::string tok; std::getline(ss, tok, ',');) {
        try {
            out.push_back(std::stoull(tok));
        } catch (const std::exception&) {
            throw ConfigError("bad seed '" + tok + "'");
        }
    }
    return out;
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

fs::path require_path(const RunConfig& cfg, const std::string& key) {
    const std::string p = cfg.get<std::string>(key, "");
    if (p.empty()) throw ConfigError("missing required setting '" + key + "'");
    return p;
}

trainer::TrainConfig train_config(const RunConfig& cfg) {
    trainer::TrainConfig tc = trainer::TrainConfig::from_json(cfg.section("train"));
    tc.validate();
    return tc;
}

adapter::AdapterConfig adapter_config(const RunConfig& cfg) { return adapter::AdapterConfig::from_json(cfg.section("adapter")); }

// ----- subcommands -----------------------------------------------------------

int cmd_synth_audio(const RunConfig& cfg) {
    audio::CorpusConfig cc;
    cc.n_train = cfg.get<int>("corpus.n_train", cc.n_train);
    cc.n_eval = cfg.get<int>("corpus.n_eval", cc.n_eval);
    cc.ontology_size = cfg.get<int>("corpus.ontology_size", cc.ontology_size);
    cc.seed = cfg.get<std::uint64_t>("seed", cc.seed);
    cc.snr_db = cfg.get<double>("corpus.snr_db", cc.snr_db);
    const fs::path out = require_path(cfg, "out");
    const audio::CorpusManifest m = audio::build_corpus(cc);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    m.save(out);
    const std::string wav_dir = cfg.get<std::string>("wav_dir", "");
    if (!wav_dir.empty()) {
        fs::create_directories(wav_dir);
        for (const auto& clip : audio::materialize(m)) audio::write_wav(fs::path(wav_dir) / (clip.clip_id + ".wav"), clip.waveform);
    }
    pipeline::write_run_record(out.parent_path().empty() ? fs::path(".") : out.parent_path(), "synth-audio", cfg, {});
    std::cout << "wrote " << out.string() << " (" << m.split(audio::Split::Train).size() << " train, "
              << m.split(audio::Split::Eval).size() << " eval clips)\n";
    return 0;
}

int cmd_synth_data(const RunConfig& cfg) {
    const fs::path corpus_path = require_path(cfg, "corpus");
    const audio::CorpusManifest corpus = audio::CorpusManifest::load(corpus_path);
    const std::string kind = cfg.get<std::string>("kind", "pos");
    const std::string gen_name = cfg.get<std::string>("generator", "rule");
    const fs::path out = require_path(cfg, "out");
    Rng rng(cfg.get<std::uint64_t>("seed", 0));

    std::optional<backbone::Backbone> lm;
    std::unique_ptr<datagen::TextClient> client;
    std::unique_ptr<datagen::ResponseGenerator> gen;
    if (gen_name == "rule") {
        gen = std::make_unique<datagen::RuleGenerator>();
    } else if (gen_name == "toylm") {
        lm = backbone::Backbone::load(require_path(cfg, "backbone"));
        client = std::make_unique<backbone::ToyLmClient>(*lm);
        gen = std::make_unique<datagen::LmGenerator>(*client);
    } else if (gen_name == "external") {
        client = std::make_unique<datagen::HttpClient>(cfg.get<std::string>("endpoint", ""),
                                                       cfg.get<std::string>("token_env", "LISTEN_LLM_TOKEN"));
        gen = std::make_unique<datagen::LmGenerator>(*client);
    } else {
        throw ConfigError("unknown generator '" + gen_name + "' (expected rule, toylm or external)");
    }

    std::vector<datagen::ClipAnnotation> pool;
    for (const auto* spec : corpus.split(audio::Split::Train)) pool.push_back(datagen::ClipAnnotation::from(*spec, corpus.ontology));
    std::map<std::string, fs::path> inputs{{"corpus", corpus_path}};
    if (lm) inputs["backbone"] = require_path(cfg, "backbone");

    if (kind == "ablation") {
        const int n = cfg.get<int>("n", 100);
        const auto splits = datagen::build_ablation_splits(pool, n, *gen, rng, corpus.ontology);
        fs::create_directories(out);
        splits.pos_only.save(out / "pos_only.jsonl");
        splits.pos_neg.save(out / "pos_neg.jsonl");
        splits.combined.save(out / "combined.jsonl");
        pipeline::write_run_record(out, "synth-data", cfg, inputs);
        std::cout << "wrote pos_only/pos_neg/combined manifests to " << out.string() << " (effective count "
                  << splits.pos_only.effective_count << " each)\n";
        return 0;
    }
    const datagen::GenKind gk = datagen::gen_kind_from_string(kind);
    const int n = cfg.get<int>("n", static_cast<int>(pool.size()));
    if (n < 1 || n > static_cast<int>(pool.size()))
        throw ConfigError("n must be in [1, " + std::to_string(pool.size()) + "]");
    pool.resize(static_cast<std::size_t>(n));
    const auto manifest = datagen::build_dataset(pool, gk, *gen, rng, corpus.ontology, kind);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    manifest.save(out);
    pipeline::write_run_record(out.parent_path().empty() ? fs::path(".") : out.parent_path(), "synth-data", cfg, inputs);
    std::cout << "wrote " << manifest.samples.size() << " samples to " << out.string() << "\n";
    return 0;
}

int cmd_pretrain(const RunConfig& cfg) {
    backbone::PretrainConfig pc;
    pc.model = backbone::BackboneConfig::from_json(cfg.section("model"));
    pc.lines = cfg.get<int>("pretrain.lines", pc.lines);
    pc.heldout = cfg.get<int>("pretrain.heldout", pc.heldout);
    pc.steps = cfg.get<int>("pretrain.steps", pc.steps);
    pc.batch_size = cfg.get<int>("pretrain.batch_size", pc.batch_size);
    pc.learning_rate = cfg.get<double>("pretrain.learning_rate", pc.learning_rate);
    pc.grad_clip = cfg.get<double>("pretrain.grad_clip", pc.grad_clip);
    pc.seed = cfg.get<std::uint64_t>("seed", pc.seed);
    pc.model.seed = pc.seed;
    if (pc.heldout < 1 || pc.lines - pc.heldout < backbone::kMinPretrainLines)
        throw ConfigError("pretraining needs at least " + std::to_string(backbone::kMinPretrainLines) +
                          " training lines after the held-out split");
    const fs::path out = require_path(cfg, "out");
    fs::create_directories(out);

    const auto corpus = backbone::build_pretrain_corpus(audio::Ontology::builtin(), pc.lines, pc.seed);
    {
        std::ofstream c(out / "pretrain_corpus.txt");
        for (const auto& l : corpus) c << l << "\n";
    }
    const std::vector<std::string> train(corpus.begin(), corpus.end() - pc.heldout);
    const std::vector<std::string> heldout(corpus.end() - pc.heldout, corpus.end());
    std::ofstream log(out / "pretrain_log.jsonl");
    const int every = cfg.get<int>("pretrain.log_every", 50);
    const backbone::Backbone lm = backbone::pretrain_toy_lm(train, pc, [&](const backbone::PretrainLogRecord& r) {
        log << json{{"step", r.step}, {"loss", r.loss}}.dump() << "\n";
        if (r.step % every == 0) std::cerr << "step " << r.step << " loss " << r.loss << "\n";
    });
    lm.save(out);
    const double ppl = backbone::perplexity(lm, heldout);
    write_json(out / "pretrain_summary.json", {{"heldout_perplexity", ppl},
                                               {"train_lines", train.size()},
                                               {"heldout_lines", heldout.size()},
                                               {"vocab_size", lm.vocab.size()},
                                               {"checksum", backbone::freeze_checksum(lm.params)}});
    pipeline::write_run_record(out, "pretrain-lm", cfg, {});
    std::cout << "toy LM written to " << out.string() << "; held-out perplexity " << ppl << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    trainer::TrainConfig tc = train_config(cfg);
    tc.data = require_path(cfg, "train.data");
    const fs::path corpus_path = require_path(cfg, "corpus");
    const fs::path backbone_dir = require_path(cfg, "backbone");
    const fs::path out = require_path(cfg, "out_dir");

    const auto corpus = audio::CorpusManifest::load(corpus_path);
    const auto data = datagen::DatasetManifest::load(tc.data);
    const auto lm = backbone::Backbone::load(backbone_dir);
    const encoder::EncoderParams enc(encoder::EncoderConfig::from_json(cfg.section("encoder")));
    adapter::AdapterConfig ac = adapter_config(cfg);
    ac.layers = enc.config().layers;
    ac.d_enc = enc.config().d_enc;
    ac.d_llm = lm.config.d_llm;
    if (!cfg.has("adapter.seed")) ac.seed = tc.seed;

    const auto prepared = trainer::prepare_dataset(data, corpus, enc, lm.vocab);
    const adapter::AdapterParams init(ac);
    const int every = cfg.get<int>("progress_every", 100);
    const auto result = trainer::train_adapter(tc, prepared, enc, lm, init, out, [&](const trainer::TrainLogRecord& r) {
        if (r.step % every == 0) std::cerr << "step " << r.step << " nll " << r.nll << " |g| " << r.grad_norm << "\n";
    });
    json summary = {{"checkpoint", result.checkpoint.string()},
                    {"checkpoint_sha256", result.checkpoint_digest},
                    {"frozen_check", result.frozen.to_json()},
                    {"steps", tc.steps}};
    if (!result.log.empty()) {
        const auto [first, last] = trainer::windowed_means(result.log);
        summary["nll_first_window"] = first;
        summary["nll_last_window"] = last;
    }
    write_json(out / "train_summary.json", summary);
    pipeline::write_run_record(out, "train", cfg, {{"data", tc.data}, {"corpus", corpus_path}, {"backbone", backbone_dir}});
    std::cout << "adapter written to " << result.checkpoint.string() << " (sha256 " << result.checkpoint_digest << ")\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    const fs::path corpus_path = require_path(cfg, "corpus");
    const fs::path ckpt_path = require_path(cfg, "checkpoint");
    const fs::path backbone_dir = require_path(cfg, "backbone");
    const fs::path out = require_path(cfg, "out");
    const std::string probe = cfg.get<std::string>("probe", "all");
    const auto seed = cfg.get<std::uint64_t>("seed", 0);
    const int max_new = cfg.get<int>("max_new_tokens", 8);

    const auto corpus = audio::CorpusManifest::load(corpus_path);
    const auto lm = backbone::Backbone::load(backbone_dir);
    json meta;
    const auto adapter_params = trainer::load_adapter(ckpt_path, &meta);
    if (meta.contains("backbone_corpus_digest") && meta["backbone_corpus_digest"] != lm.corpus_digest)
        throw DataError("checkpoint was trained against a different backbone");
    const encoder::EncoderParams enc(encoder::EncoderConfig::from_json(meta.value("encoder_config", json::object())));

    Rng rng = Rng(seed).derive("probes");
    std::vector<eval::ProbeItem> items;
    std::vector<std::string> warnings;
    const bool all = probe == "all";
    if (!all && probe != "halluc" && probe != "synhyp" && probe != "aqa")
        throw ConfigError("unknown probe '" + probe + "' (expected halluc, synhyp, aqa or all)");
    if (all || probe == "halluc")
        for (auto& it : eval::build_hallucination_probe(corpus, rng)) items.push_back(std::move(it));
    if (all || probe == "synhyp")
        for (auto& it : eval::build_synhyp_probe(corpus, corpus.ontology, rng, &warnings)) items.push_back(std::move(it));
    if (all || probe == "aqa")
        for (auto& it : eval::build_aqa_probe(corpus, rng)) items.push_back(std::move(it));
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    eval::PipelineEndpoint endpoint(enc, adapter_params, lm);
    const auto preds = eval::run_eval(endpoint, items, eval::corpus_clips(corpus), max_new);
    const json config_echo = {{"corpus", corpus_path.string()}, {"checkpoint", ckpt_path.string()},
                              {"backbone", backbone_dir.string()}, {"probe", probe},
                              {"seed", seed}, {"max_new_tokens", max_new}, {"decoding", "greedy"}};
    const auto report = eval::summarize(preds, config_echo);
    write_json(out, report.to_json());
    fs::path pred_path = out;
    pred_path.replace_extension(".predictions.jsonl");
    eval::write_predictions(pred_path, preds);
    pipeline::write_run_record(out.parent_path().empty() ? fs::path(".") : out.parent_path(), "eval", cfg,
                               {{"corpus", corpus_path}, {"checkpoint", ckpt_path}, {"backbone", backbone_dir}});
    std::cout << report.to_json().dump(2) << "\n";
    return 0;
}

int cmd_ablate(const RunConfig& cfg) {
    pipeline::AblationConfig ac;
    ac.corpus = require_path(cfg, "corpus");
    ac.backbone_dir = require_path(cfg, "backbone");
    ac.out_dir = require_path(cfg, "out_dir");
    ac.n = cfg.get<int>("n", ac.n);
    if (cfg.has("seeds")) ac.seeds = parse_seeds(cfg.flat().at("seeds"));
    ac.generator = cfg.get<std::string>("generator", ac.generator);
    ac.train = train_config(cfg);
    ac.adapter = adapter_config(cfg);
    ac.probe_seed = cfg.get<std::uint64_t>("probe_seed", ac.probe_seed);
    ac.max_new_tokens = cfg.get<int>("max_new_tokens", ac.max_new_tokens);
    pipeline::write_run_record(ac.out_dir, "ablate", cfg, {{"corpus", ac.corpus}, {"backbone", ac.backbone_dir}});
    const auto report = pipeline::run_ablation(ac);
    const auto plots = pipeline::emit_plots(report, ac.out_dir);
    for (const auto& n : plots.notes) std::cerr << "plot note: " << n << "\n";
    std::cout << report.table();
    bool failed = false;
    for (const auto& r : report.rows) failed |= !r.ok;
    if (failed) std::cerr << "some ablation runs failed; see ablation_report.json\n";
    return failed ? kExitNumerical : 0;
}

int cmd_plot(const RunConfig& cfg) {
    const fs::path report_path = require_path(cfg, "report");
    std::ifstream in(report_path);
    if (!in) throw DataError("cannot read " + report_path.string());
    const auto report = pipeline::AblationReport::from_json(json::parse(in));
    const fs::path out = cfg.get<std::string>("out_dir", report_path.parent_path().string());
    const auto plots = pipeline::emit_plots(report, out.empty() ? fs::path(".") : out);
    for (const auto& p : plots.written) std::cout << "wrote " << p.string() << "\n";
    for (const auto& n : plots.notes) std::cerr << "note: " << n << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"listen: desk-scale audio-LLM adapter training and hallucination evaluation"};
    app.require_subcommand(1);
    std::map<std::string, FlagSet> flags;
    std::map<std::string, json> defaults;

    auto sub = [&](const std::string& name, const std::string& help) {
        CLI::App* s = app.add_subcommand(name, help);
        s->add_option("--config", flags[name].config_path, "Flat JSON config with dotted keys; flags override it");
        return s;
    };

    CLI::App* synth_audio = sub("synth-audio", "Generate a synthetic corpus manifest");
    {
        auto& f = flags["synth-audio"];
        f.add(synth_audio, "--out", "out", "Corpus manifest path (JSON)");
        f.add(synth_audio, "--n-train", "corpus.n_train", "Number of training clips (default 200)");
        f.add(synth_audio, "--n-eval", "corpus.n_eval", "Number of eval clips (default 50)");
        f.add(synth_audio, "--ontology-size", "corpus.ontology_size", "Number of event classes, 6-12 (default 8)");
        f.add(synth_audio, "--snr-db", "corpus.snr_db", "Signal-to-noise ratio in dB (default 20)");
        f.add(synth_audio, "--seed", "seed", "Corpus seed (default 0)");
        f.add(synth_audio, "--wav-dir", "wav_dir", "Also write every clip as a WAV file here");
    }
    CLI::App* synth_data = sub("synth-data", "Build training samples from a corpus");
    {
        auto& f = flags["synth-data"];
        f.add(synth_data, "--corpus", "corpus", "Corpus manifest");
        f.add(synth_data, "--kind", "kind", "pos | neg | comb | ablation (default pos)");
        f.add(synth_data, "--n", "n", "Clips to use; for ablation, N (each configuration gets 2N)");
        f.add(synth_data, "--generator", "generator", "rule | toylm | external (default rule)");
        f.add(synth_data, "--backbone", "backbone", "Toy LM directory (generator toylm)");
        f.add(synth_data, "--endpoint", "endpoint", "http:// endpoint (generator external)");
        f.add(synth_data, "--token-env", "token_env", "Environment variable holding the bearer token");
        f.add(synth_data, "--seed", "seed", "Sampling seed (default 0)");
        f.add(synth_data, "--out", "out", "Manifest path, or a directory for --kind ablation");
    }
    CLI::App* pretrain = sub("pretrain-lm", "Pretrain and freeze the toy language model");
    {
        auto& f = flags["pretrain-lm"];
        f.add(pretrain, "--out", "out", "Output directory for the frozen toy LM");
        f.add(pretrain, "--lines", "pretrain.lines", "Corpus lines including held-out (default 12000)");
        f.add(pretrain, "--heldout", "pretrain.heldout", "Held-out lines for perplexity (default 1000)");
        f.add(pretrain, "--steps", "pretrain.steps", "Optimisation steps (default 3000)");
        f.add(pretrain, "--batch-size", "pretrain.batch_size", "Sequences per step (default 16)");
        f.add(pretrain, "--lr", "pretrain.learning_rate", "Peak learning rate (default 2e-3)");
        f.add(pretrain, "--seed", "seed", "Seed (default 0)");
    }
    CLI::App* train = sub("train", "Train the audio adapter against the frozen encoder and toy LM");
    {
        auto& f = flags["train"];
        f.add(train, "--data", "train.data", "Dataset manifest (JSONL)");
        f.add(train, "--corpus", "corpus", "Corpus manifest the dataset refers to");
        f.add(train, "--backbone", "backbone", "Frozen toy LM directory");
        f.add(train, "--out-dir", "out_dir", "Output directory (checkpoints, log, run record)");
        f.add(train, "--seed", "train.seed", "Seed for adapter init and batch order (default 0)");
        f.add(train, "--steps", "train.steps", "Optimisation steps (default 2000)");
        f.add(train, "--batch-size", "train.batch_size", "Samples per step (default 8)");
        f.add(train, "--lr", "train.learning_rate", "Learning rate (default 1e-3)");
        f.add(train, "--optimizer", "train.optimizer", "adam | sgd (default adam)");
        f.add(train, "--checkpoint-every", "train.checkpoint_every", "Intermediate checkpoint interval, 0 = off (default 500)");
        f.add_switch(train, "--deterministic", "train.deterministic", "Single-threaded, bit-reproducible run (the default)");
    }
    CLI::App* evalc = sub("eval", "Run the probes against a trained adapter");
    {
        auto& f = flags["eval"];
        f.add(evalc, "--corpus", "corpus", "Corpus manifest (eval split is probed)");
        f.add(evalc, "--checkpoint", "checkpoint", "Adapter checkpoint");
        f.add(evalc, "--backbone", "backbone", "Frozen toy LM directory");
        f.add(evalc, "--probe", "probe", "halluc | synhyp | aqa | all (default all)");
        f.add(evalc, "--out", "out", "Report JSON path; predictions go next to it");
        f.add(evalc, "--seed", "seed", "Probe construction seed (default 0)");
        f.add(evalc, "--max-new-tokens", "max_new_tokens", "Greedy decoding budget (default 8)");
    }
    CLI::App* ablate = sub("ablate", "Compare positive-only, positive+negative and combined training data");
    {
        auto& f = flags["ablate"];
        f.add(ablate, "--corpus", "corpus", "Corpus manifest");
        f.add(ablate, "--backbone", "backbone", "Frozen toy LM directory");
        f.add(ablate, "--out-dir", "out_dir", "Output directory");
        f.add(ablate, "--n", "n", "N; each configuration gets 2N effective data points (default 100)");
        f.add(ablate, "--seeds", "seeds", "Seed count, or a comma-separated list (default 0,1,2)");
        f.add(ablate, "--steps", "train.steps", "Training steps per run (default 2000)");
        f.add(ablate, "--generator", "generator", "rule | toylm (default rule)");
        f.add(ablate, "--probe-seed", "probe_seed", "Probe construction seed (default 0)");
    }
    CLI::App* plot = sub("plot", "Render SVG plots from an ablation report");
    {
        auto& f = flags["plot"];
        f.add(plot, "--report", "report", "ablation_report.json");
        f.add(plot, "--out-dir", "out_dir", "Output directory (default: next to the report)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    const std::map<std::string, int (*)(const RunConfig&)> handlers = {
        {"synth-audio", cmd_synth_audio}, {"synth-data", cmd_synth_data}, {"pretrain-lm", cmd_pretrain},
        {"train", cmd_train},             {"eval", cmd_eval},             {"ablate", cmd_ablate},
        {"plot", cmd_plot}};
    const std::string name = app.get_subcommands().front()->get_name();
    try {
        const RunConfig cfg = flags[name].resolve(json::object());
        return handlers.at(name)(cfg);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: malformed input: " << e.what() << "\n";
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
