#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "listen/errors.hpp"
#include "listen/evalharness.hpp"
#include "listen/pipeline.hpp"
#include "listen/trainer.hpp"

using namespace listen;
using ag::Mat;
using eval::Answer;
using eval::Prediction;
using eval::ProbeItem;
using eval::ProbeKind;

namespace {

// Probability-space oracle: -log(p_target) from an explicitly normalised row.
double nll_oracle(const Mat& logits, const std::vector<int>& targets, const std::vector<char>& mask) {
    double total = 0.0;
    int n = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        double z = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) z += std::exp(logits(i, j));
        total -= std::log(std::exp(logits(i, targets[static_cast<std::size_t>(i)])) / z);
        ++n;
    }
    return total / n;
}

Prediction binary_pred(const std::string& gold, const std::string& extracted) {
    Prediction p;
    p.item.gold = gold;
    p.item.kind = ProbeKind::Hallucination;
    p.extracted = extracted;
    return p;
}

std::vector<Prediction> preds_of(const std::string& golds, const std::string& outs) {
    std::vector<Prediction> v;
    auto word = [](char c) { return c == 'Y' ? "yes" : c == 'N' ? "no" : "unknown"; };
    for (std::size_t i = 0; i < golds.size(); ++i) v.push_back(binary_pred(word(golds[i]), word(outs[i])));
    return v;
}

// Metrics recomputed straight from the prediction list, independent of the confusion matrix.
struct Recount {
    double acc, yes_rate;
};
Recount recount(const std::vector<Prediction>& v) {
    int correct = 0, yes = 0;
    for (const auto& p : v) {
        correct += p.extracted == p.item.gold;
        yes += p.extracted == "yes";
    }
    return {static_cast<double>(correct) / static_cast<double>(v.size()),
            static_cast<double>(yes) / static_cast<double>(v.size())};
}

backbone::Backbone tiny_backbone(const backbone::Vocab& vocab) {
    backbone::BackboneConfig cfg;
    cfg.d_llm = 16;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.context = 160;
    cfg.seed = 4;
    return backbone::Backbone(cfg, vocab);
}

adapter::AdapterConfig tiny_adapter() {
    adapter::AdapterConfig cfg;
    cfg.d_q = 8;
    cfg.queries = 2;
    cfg.blocks = 1;
    cfg.d_llm = 16;
    return cfg;
}

}  // namespace

TEST_CASE("masked nll against closed forms and an oracle") {
    const Mat uniform = Mat::Zero(3, 100);
    const std::vector<int> t3{4, 50, 99};
    const std::vector<char> all{1, 1, 1};
    CHECK(trainer::masked_nll(uniform, t3, all) == doctest::Approx(std::log(100.0)).epsilon(1e-12));

    Mat sharp = Mat::Zero(1, 5);
    sharp(0, 2) = 50.0;
    const std::vector<int> t1{2};
    const std::vector<char> m1{1};
    CHECK(trainer::masked_nll(sharp, t1, m1) < 1e-20);

    Rng rng(1);
    Mat logits(6, 7);
    for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal();
    const std::vector<int> t6{0, 1, 2, 3, 4, 5};
    const std::vector<char> half{1, 0, 1, 0, 1, 0};
    CHECK(trainer::masked_nll(logits, t6, half) == doctest::Approx(nll_oracle(logits, t6, half)).epsilon(1e-10));
    const std::vector<char> none(6, 0);
    CHECK_THROWS_AS(trainer::masked_nll(logits, t6, none), EmptyInputError);
}

TEST_CASE("frozen digest verification") {
    const encoder::EncoderParams enc;
    const auto vocab = backbone::Vocab::build({"yes no"});
    auto bb = tiny_backbone(vocab);
    const auto before = trainer::frozen_digests(enc, bb);
    CHECK(trainer::verify_frozen(before, trainer::frozen_digests(enc, bb)).pass);

    bb.params.lnf_b.value(0, 3) += 1e-9;
    const auto report = trainer::verify_frozen(before, trainer::frozen_digests(enc, bb));
    CHECK_FALSE(report.pass);
    CHECK(report.mismatched == std::vector<std::string>{"backbone.lnf.b"});

    auto with_adapter = before;
    with_adapter["adapter.proj_w"] = "something";
    CHECK(trainer::verify_frozen(before, with_adapter).pass);
    auto missing = before;
    missing.erase("backbone.lnf.g");
    CHECK_FALSE(trainer::verify_frozen(before, missing).pass);
}

TEST_CASE("adapter training is deterministic and leaves frozen parts untouched") {
    const auto corpus = audio::build_corpus({8, 10, 8, 1, 20.0});
    datagen::RuleGenerator rule;
    Rng rng(2);
    std::vector<datagen::ClipAnnotation> pool;
    for (const auto* spec : corpus.split(audio::Split::Train))
        pool.push_back(datagen::ClipAnnotation::from(*spec, corpus.ontology));
    const auto data = datagen::build_dataset(pool, datagen::GenKind::Positive, rule, rng, corpus.ontology, "pos");

    std::vector<std::string> lines;
    for (const auto& s : data.samples) lines.push_back(s.final_prompt + " " + s.response);
    const auto vocab = backbone::Vocab::build(lines);
    const auto bb = tiny_backbone(vocab);
    const encoder::EncoderParams enc;
    const auto prepared = trainer::prepare_dataset(data, corpus, enc, vocab);
    CHECK(prepared.samples.size() == 8);

    adapter::AdapterConfig acfg = tiny_adapter();
    const adapter::AdapterParams init(acfg);
    trainer::TrainConfig cfg;
    cfg.steps = 0;
    const auto zero = trainer::train_adapter(cfg, prepared, enc, bb, init);
    CHECK(zero.params.arrays() == init.arrays());
    CHECK(zero.log.empty());

    cfg.steps = 6;
    cfg.batch_size = 3;
    cfg.checkpoint_every = 0;
    const auto dir_a = std::filesystem::temp_directory_path() / "listen_unit_train_a";
    const auto dir_b = std::filesystem::temp_directory_path() / "listen_unit_train_b";
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
    const auto a = trainer::train_adapter(cfg, prepared, enc, bb, init, dir_a);
    const auto b = trainer::train_adapter(cfg, prepared, enc, bb, init, dir_b);
    CHECK(a.frozen.pass);
    CHECK(a.log.size() == 6);
    CHECK(a.checkpoint_digest == b.checkpoint_digest);
    CHECK(a.params.arrays() != init.arrays());
    for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].nll == b.log[i].nll);
    const auto loaded = trainer::load_adapter(dir_a / "adapter.ckpt");
    CHECK(loaded.arrays() == a.params.arrays());

    // An eval-split clip is not training data.
    auto bad = data;
    bad.samples[0].clip_id = corpus.split(audio::Split::Eval)[0]->clip_id;
    CHECK_THROWS_AS(trainer::prepare_dataset(bad, corpus, enc, vocab), DataError);
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

TEST_CASE("yes/no extraction") {
    CHECK(eval::extract_yes_no("Yes.") == Answer::Yes);
    CHECK(eval::extract_yes_no("no, there is no dog") == Answer::No);
    CHECK(eval::extract_yes_no("  YES  ") == Answer::Yes);
    CHECK(eval::extract_yes_no("I hear water pouring.") == Answer::Unknown);
    CHECK(eval::extract_yes_no("There is a dog, yes") == Answer::Yes);
    CHECK(eval::extract_yes_no("") == Answer::Unknown);
    CHECK(eval::normalize_answer("Two.") == eval::normalize_answer("two"));
    CHECK(eval::normalize_answer("  A  dog,  barking! ") == "a dog barking");
}

TEST_CASE("confusion matrix tallies") {
    const auto c = eval::confusion(preds_of("YNNN", "YYNY"));
    CHECK(c.tp_yes == 1);
    CHECK(c.fp_yes == 2);
    CHECK(c.fn_yes == 0);
    CHECK(c.tp_no == 1);
    CHECK(c.fn_no == 2);
    CHECK(c.fp_no == 0);

    const auto perfect = eval::confusion(preds_of("YNYN", "YNYN"));
    CHECK(perfect.fp_yes + perfect.fn_yes + perfect.fp_no + perfect.fn_no == 0);

    const auto unknown = eval::confusion(preds_of("YN", "?N"));
    CHECK(unknown.fn_yes == 1);
    CHECK(unknown.fp_no == 0);
    CHECK(unknown.unknown_count == 1);

    auto aqa = preds_of("Y", "Y");
    aqa[0].item.kind = ProbeKind::Aqa;
    CHECK_THROWS_AS(eval::confusion(aqa), KindError);
}

TEST_CASE("metric fixtures") {
    struct Fixture {
        std::string gold, pred;
        double acc, f1_yes, f1_no, f1_w, yes_rate;
    };
    const std::vector<Fixture> fixtures{
        {"YNNN", "YYNY", 0.5, 0.5, 0.5, 0.5, 0.75},
        {"YYNN", "YYYY", 0.5, 2.0 / 3.0, 0.0, 1.0 / 3.0, 1.0},
        {"YYYN", "YYYN", 1.0, 1.0, 1.0, 1.0, 0.75},
        {"YYNN", "NNNN", 0.5, 0.0, 2.0 / 3.0, 1.0 / 3.0, 0.0},
        // gold yes x3, no x2; preds: Y, N, ?, N, Y.
        // yes: tp1 fp1 fn2 -> P 1/2 R 1/3 F1 0.4; no: tp1 fp1 fn1 -> F1 0.5.
        {"YYYNN", "YN?NY", 0.4, 0.4, 0.5, (3 * 0.4 + 2 * 0.5) / 5.0, 0.4},
        {"YYYY", "YYYY", 1.0, 1.0, 0.0, 1.0, 1.0},
    };
    for (const auto& f : fixtures) {
        CAPTURE(f.pred);
        const auto preds = preds_of(f.gold, f.pred);
        const auto m = eval::metrics(eval::confusion(preds));
        CHECK(m.acc == doctest::Approx(f.acc).epsilon(1e-12));
        CHECK(m.f1_yes == doctest::Approx(f.f1_yes).epsilon(1e-12));
        CHECK(m.f1_no == doctest::Approx(f.f1_no).epsilon(1e-12));
        CHECK(m.f1_weighted == doctest::Approx(f.f1_w).epsilon(1e-12));
        CHECK(m.yes_rate == doctest::Approx(f.yes_rate).epsilon(1e-12));
        const auto r = recount(preds);
        CHECK(m.acc == doctest::Approx(r.acc).epsilon(1e-12));
        CHECK(m.yes_rate == doctest::Approx(r.yes_rate).epsilon(1e-12));
        const double sy = m.counts.support_yes, sn = m.counts.support_no;
        CHECK(m.f1_weighted == doctest::Approx((sy * m.f1_yes + sn * m.f1_no) / (sy + sn)).epsilon(1e-12));
    }
    const auto all_yes = eval::metrics(eval::confusion(preds_of("YYYY", "YYYY")));
    REQUIRE(all_yes.flags.size() == 1);
    CHECK(all_yes.flags[0].rfind("f1_no", 0) == 0);
    CHECK_THROWS_AS(eval::metrics(eval::ConfusionMatrix{}), ArgumentError);
}

TEST_CASE("probe construction is balanced and sound") {
    const auto corpus = audio::build_corpus({20, 40, 8, 3, 20.0});
    Rng rng(1);
    const auto items = eval::build_hallucination_probe(corpus, rng);
    CHECK(items.size() == 80);
    int yes = 0;
    for (const auto& it : items) {
        const auto& spec = corpus.find(it.clip_id);
        const bool present = std::find(spec.tags.begin(), spec.tags.end(), it.queried_concept) != spec.tags.end();
        CHECK(present == (it.gold == "yes"));
        CHECK(it.question.find(corpus.ontology.at(it.queried_concept).display_name) != std::string::npos);
        yes += it.gold == "yes";
    }
    CHECK(yes == 40);

    std::vector<std::string> warnings;
    Rng rng2(1);
    const auto syn = eval::build_synhyp_probe(corpus, corpus.ontology, rng2, &warnings);
    CHECK(syn.size() + 2 * warnings.size() == 80);
    for (const auto& it : syn) CHECK(it.kind == ProbeKind::SynHyp);

    Rng rng3(1);
    const auto aqa = eval::build_aqa_probe(corpus, rng3);
    CHECK(aqa.size() == 80);
}

TEST_CASE("endpoint failures mark one item unknown") {
    struct Flaky : eval::ModelEndpoint {
        std::string id() const override { return "flaky"; }
        std::string answer(const audio::AudioClip& clip, const std::string&, int) override {
            if (clip.clip_id == "boom") throw GenerationError("endpoint down", "q");
            return "Yes.";
        }
    };
    Flaky endpoint;
    std::vector<ProbeItem> items{{"ok", "Is there a dog?", "yes", ProbeKind::Hallucination, "dog_bark"},
                                 {"boom", "Is there rain?", "no", ProbeKind::Hallucination, "rain"},
                                 {"ok", "How many?", "two", ProbeKind::Aqa, "count"}};
    const auto clip_of = [](const std::string& id) {
        audio::AudioClip c;
        c.clip_id = id;
        return c;
    };
    const auto preds = eval::run_eval(endpoint, items, clip_of);
    REQUIRE(preds.size() == 3);
    CHECK(preds[0].extracted == "yes");
    CHECK(preds[1].extracted == "unknown");
    CHECK_FALSE(preds[1].error.empty());
    CHECK(preds[2].extracted == "yes");
    CHECK(eval::aqa_accuracy({preds[2]}) == 0.0);
    const auto report = eval::summarize(preds, {{"config", "x"}});
    CHECK(report.n_items == 3);
    CHECK(report.binary.at("hallucination").counts.unknown_count == 1);
}

TEST_CASE("run configuration layering") {
    pipeline::RunConfig base(pipeline::flatten({{"train", {{"steps", 10}, {"lr", 0.1}}}, {"seed", 1}}));
    CHECK(base.get<int>("train.steps", 0) == 10);
    pipeline::RunConfig flags;
    flags.set("train.steps", 20);
    base.merge(flags);
    CHECK(base.get<int>("train.steps", 0) == 20);
    CHECK(base.get<double>("train.lr", 0.0) == 0.1);
    CHECK(base.get<int>("missing", 7) == 7);
    CHECK(base.section("train.") == nlohmann::json{{"steps", 20}, {"lr", 0.1}});
    base.set("name", "abc");
    CHECK_THROWS_AS(base.get<int>("name", 0), ConfigError);
}

TEST_CASE("svg output is deterministic and plots tolerate missing logs") {
    const auto a = pipeline::svg_bar_chart("F1(N)", {"pos_only", "pos_neg"}, {0.4, 0.6}, 1.0);
    CHECK(a == pipeline::svg_bar_chart("F1(N)", {"pos_only", "pos_neg"}, {0.4, 0.6}, 1.0));
    CHECK(a.rfind("<svg", 0) == 0);
    CHECK(a.find("pos_neg") != std::string::npos);

    pipeline::AblationReport report;
    pipeline::AblationRow row;
    row.config = "pos_only";
    row.seed = "median";
    row.metrics = {{"F1(N)", 0.5}, {"Yes", 0.7}};
    report.rows.push_back(row);
    const auto dir = std::filesystem::temp_directory_path() / "listen_unit_plots";
    std::filesystem::remove_all(dir);
    const auto result = pipeline::emit_plots(report, dir);
    CHECK(std::filesystem::exists(dir / "f1n_bar.svg"));
    CHECK(std::filesystem::exists(dir / "yesrate_bar.svg"));
    CHECK_FALSE(result.notes.empty());
    std::filesystem::remove_all(dir);
}
