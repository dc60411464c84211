#include <cmath>
#include <functional>

#include "doctest.h"
#include "listen/adapter.hpp"
#include "listen/autograd.hpp"
#include "listen/backbone.hpp"
#include "listen/checkpoint.hpp"
#include "listen/errors.hpp"
#include "listen/rng.hpp"
#include "listen/trainer.hpp"

using namespace listen;
using ag::Mat;
using ag::RowVec;
using ag::Tape;
using ag::Var;

namespace {

Mat random_mat(Rng& rng, int r, int c, double s = 1.0) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = s * rng.normal();
    return m;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-8); }

// Checks d f / d x of a matrix-valued op against central differences. The op
// output is reduced to a scalar with fixed random weights: r^T y c.
void check_op(const std::function<Var(Tape&, Var)>& op, const Mat& x0, std::uint64_t seed = 7) {
    Rng rng(seed);
    Tape probe(false);
    const Mat y0 = op(probe, probe.constant(x0)).value();
    const Mat r = random_mat(rng, 1, static_cast<int>(y0.rows()));
    const Mat c = random_mat(rng, static_cast<int>(y0.cols()), 1);
    auto scalar = [&](const Mat& x) {
        Tape t(false);
        return (r * op(t, t.constant(x)).value() * c)(0, 0);
    };
    Tape tape;
    const Var x = tape.input(x0);
    const Var loss = ag::matmul(ag::matmul(tape.constant(r), op(tape, x)), tape.constant(c));
    tape.backward(loss);
    const Mat& g = tape.grad(x);
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
        Mat xp = x0, xm = x0;
        xp.data()[i] += h;
        xm.data()[i] -= h;
        const double numeric = (scalar(xp) - scalar(xm)) / (2.0 * h);
        CHECK(rel_err(g.data()[i], numeric) < 1e-4);
    }
}

backbone::Vocab tiny_vocab() { return backbone::Vocab::build({"is there a dog ? yes no the sound"}); }

backbone::Backbone tiny_backbone(int d = 16) {
    backbone::BackboneConfig cfg;
    cfg.d_llm = d;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.context = 32;
    cfg.seed = 3;
    return backbone::Backbone(cfg, tiny_vocab());
}

}  // namespace

TEST_CASE("op gradients match central differences") {
    Rng rng(11);
    const Mat a = random_mat(rng, 3, 4), w = random_mat(rng, 4, 5), row = random_mat(rng, 1, 4);
    check_op([&](Tape& t, Var x) { return ag::matmul(x, t.constant(w)); }, a);
    check_op([&](Tape& t, Var x) { return ag::matmul(t.constant(a), x); }, w);
    check_op([&](Tape& t, Var x) { return ag::matmul_bt(x, t.constant(w.transpose())); }, a);
    check_op([&](Tape& t, Var x) { return ag::add_row(t.constant(a), x); }, row);
    check_op([](Tape&, Var x) { return ag::gelu(x); }, a);
    check_op([](Tape&, Var x) { return ag::tanh(x); }, a);
    check_op([](Tape&, Var x) { return ag::scale(ag::add(x, x), 0.3); }, a);
    check_op([](Tape&, Var x) { return ag::softmax_rows(x, false); }, a);
    check_op([](Tape&, Var x) { return ag::softmax_rows(x, true); }, random_mat(rng, 4, 4));
    const Mat g = random_mat(rng, 1, 4, 0.5).array() + 1.0, b = random_mat(rng, 1, 4);
    check_op([&](Tape& t, Var x) { return ag::layer_norm(x, t.constant(g), t.constant(b)); }, a);
    check_op([&](Tape& t, Var x) { return ag::layer_norm(t.constant(a), x, t.constant(b)); }, g);
    check_op([](Tape&, Var x) { return ag::concat_rows({ag::slice_rows(x, 1, 2), ag::slice_cols(x, 0, 4)}); },
             random_mat(rng, 3, 4));
    check_op([](Tape&, Var x) { return ag::concat_cols({ag::slice_cols(x, 2, 2), x}); }, a);
    const std::vector<int> ids{2, 0, 2};
    check_op([&](Tape&, Var x) { return ag::gather_rows(x, ids); }, a);

    const std::vector<Mat> layers{random_mat(rng, 3, 2), random_mat(rng, 3, 2), random_mat(rng, 3, 2)};
    const std::vector<const Mat*> ptrs{&layers[0], &layers[1], &layers[2]};
    check_op([&](Tape&, Var x) { return ag::softmax_weighted_sum(x, ptrs); }, random_mat(rng, 1, 3));

    const std::vector<int> targets{1, 3, 0};
    const std::vector<char> mask{1, 0, 1};
    check_op([&](Tape&, Var x) { return ag::nll_sum(x, targets, mask); }, a);
}

TEST_CASE("autograd rejects misuse") {
    Tape t;
    const Var a = t.input(Mat::Ones(2, 3));
    CHECK_THROWS_AS(ag::matmul(a, a), ShapeError);
    CHECK_THROWS_AS(t.backward(a), ShapeError);
    Tape off(false);
    CHECK_THROWS_AS(off.backward(off.constant(Mat::Ones(1, 1))), ArgumentError);
}

TEST_CASE("adapter gradients through a frozen backbone match central differences") {
    adapter::AdapterConfig cfg;
    cfg.d_enc = 8;
    cfg.layers = 4;
    cfg.d_q = 8;
    cfg.queries = 2;
    cfg.blocks = 1;
    cfg.d_llm = 16;
    cfg.seed = 5;
    adapter::AdapterParams params(cfg);
    // Non-trivial logits so the layer softmax is not at a symmetric point.
    params.layer_logits.value << 0.3, -0.2, 0.5, 0.1;
    const auto bb_model = tiny_backbone(16);
    const auto& vocab = bb_model.vocab;

    Rng rng(6);
    encoder::LayerStack stack;
    for (int l = 0; l < 4; ++l) stack.layers.push_back(random_mat(rng, 5, 8));
    trainer::PreparedSample sample;
    sample.clip_id = "x";
    sample.prompt.ids = {backbone::Vocab::kBos, backbone::Vocab::kAudio, vocab.id("is"), vocab.id("there"),
                         vocab.id("a"), vocab.id("dog"), vocab.id("?"), backbone::Vocab::kSep};
    sample.prompt.span_begin = 1;
    sample.prompt.span_end = 2;
    sample.response = {vocab.id("yes"), backbone::Vocab::kEos};
    sample.features = &stack;

    auto loss_value = [&]() {
        Tape t(false);
        const adapter::BoundAdapter ad(t, static_cast<const adapter::AdapterParams&>(params));
        const backbone::BoundBackbone bb(t, bb_model);
        return trainer::sample_loss(ad, bb, sample).nll_sum.value()(0, 0);
    };
    params.zero_grad();
    {
        Tape t;
        const adapter::BoundAdapter ad(t, params);
        const backbone::BoundBackbone bb(t, bb_model);
        t.backward(trainer::sample_loss(ad, bb, sample).nll_sum);
    }

    auto check_entries = [&](ag::Param& p, std::initializer_list<std::pair<int, int>> entries) {
        for (const auto& [r, c] : entries) {
            const double h = 1e-5, saved = p.value(r, c);
            p.value(r, c) = saved + h;
            const double up = loss_value();
            p.value(r, c) = saved - h;
            const double down = loss_value();
            p.value(r, c) = saved;
            const double numeric = (up - down) / (2.0 * h);
            CHECK(rel_err(p.grad(r, c), numeric) < 1e-4);
        }
    };
    check_entries(params.layer_logits, {{0, 0}, {0, 1}, {0, 2}, {0, 3}});
    check_entries(params.queries, {{0, 0}, {0, 3}, {1, 7}});
    check_entries(params.blocks[0].k_w, {{0, 0}, {3, 5}, {7, 2}});
    check_entries(params.blocks[0].q_w, {{1, 1}, {6, 4}});
    check_entries(params.proj_w, {{0, 0}, {4, 9}, {7, 15}});
    check_entries(params.proj_b, {{0, 3}});
}

TEST_CASE("tokenizer round-trip and unknowns") {
    const auto vocab = backbone::Vocab::build({"Replay the audio."});
    CHECK(vocab.size() == 6 + 4);
    const auto ids = vocab.tokenize("Replay the audio.");
    CHECK(ids.size() == 4);
    CHECK(vocab.detokenize(ids) == "Replay the audio.");
    CHECK(vocab.tokenize("").empty());
    CHECK(vocab.tokenize("zebra") == std::vector<int>{backbone::Vocab::kUnk});
    CHECK(vocab.tokenize("<audio>") == std::vector<int>{backbone::Vocab::kUnk});
    CHECK(backbone::join_words(backbone::split_words("Is there a dog? Yes, (two).")) == "Is there a dog? Yes, (two).");
    CHECK(backbone::Vocab::from_json(vocab.to_json()).tokenize("Replay the audio.") == ids);
}

TEST_CASE("injection layout arithmetic") {
    backbone::PromptTokens p;
    p.ids.assign(12, 7);
    p.span_begin = 3;
    p.span_end = 5;
    const std::vector<int> response{8, 9, 2};
    const auto L = backbone::injection_layout(p, 8, response);
    CHECK(L.response_begin == 18);
    CHECK(L.length == 21);
    CHECK(L.audio_begin == 3);
    CHECK(L.audio_end == 11);
    int masked = 0;
    for (char m : L.loss_mask) masked += m;
    CHECK(masked == 3);
    CHECK(L.target_ids[17] == 8);
    CHECK(L.target_ids[19] == 2);
    CHECK(L.target_ids[20] == -1);
    CHECK_THROWS_AS(backbone::injection_layout(p, 0, response), ArgumentError);

    const auto model = tiny_backbone();
    adapter::AudioPrefix prefix{Mat::Constant(8, 16, 0.5)};
    const auto seq = backbone::embed_with_injection(model, p, prefix, response);
    CHECK(seq.embeddings.rows() == 21);
    CHECK((seq.embeddings.row(5).array() == 0.5).all());
    CHECK(seq.embeddings.row(0) == model.params.tok_emb.value.row(7));
    CHECK(seq.embeddings.row(18) == model.params.tok_emb.value.row(8));
}

TEST_CASE("backbone is causal and its distributions normalise") {
    const auto model = tiny_backbone();
    Rng rng(8);
    const Mat e = random_mat(rng, 10, 16);
    const Mat logits = backbone::lm_forward(model, e);
    Mat changed = e;
    changed.row(9) = random_mat(rng, 1, 16);
    const Mat logits2 = backbone::lm_forward(model, changed);
    CHECK((logits.topRows(9) - logits2.topRows(9)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((logits.row(9) - logits2.row(9)).cwiseAbs().maxCoeff() > 1e-6);
    const Mat probs = ag::softmax_rows(logits);
    for (Eigen::Index i = 0; i < probs.rows(); ++i) CHECK(probs.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(backbone::lm_forward(model, random_mat(rng, 33, 16)), LengthError);
}

TEST_CASE("greedy decoding") {
    // Forced logits: "yes" then eos.
    const int yes = 7, eos = backbone::Vocab::kEos;
    int calls = 0;
    auto next = [&](const Mat&) {
        RowVec r = RowVec::Zero(10);
        r(calls++ == 0 ? yes : eos) = 5.0;
        return r;
    };
    auto embed = [](int) { return RowVec(RowVec::Zero(4)); };
    CHECK(backbone::greedy_ids(next, embed, Mat::Zero(2, 4), 8, eos) == std::vector<int>{yes});
    RowVec tie = RowVec::Zero(5);
    tie(1) = tie(3) = 2.0;
    CHECK(backbone::argmax_lowest(tie) == 1);
    auto always_one = [](const Mat&) {
        RowVec r = RowVec::Zero(4);
        r(1) = 1.0;
        return r;
    };
    CHECK(backbone::greedy_ids(always_one, embed, Mat::Zero(1, 4), 3, eos).size() == 3);
    CHECK_THROWS_AS(backbone::greedy_ids(always_one, embed, Mat::Zero(1, 4), 0, eos), ArgumentError);
}

TEST_CASE("backbone save and load") {
    const auto model = tiny_backbone();
    const auto dir = std::filesystem::temp_directory_path() / "listen_unit_backbone";
    model.save(dir);
    const auto back = backbone::Backbone::load(dir);
    CHECK(back.vocab.size() == model.vocab.size());
    std::map<std::string, Mat> rounded;
    for (const auto& [name, m] : model.params.arrays()) rounded[name] = ckpt::to_f32_precision(m);
    CHECK(backbone::freeze_checksum(back.params) == ckpt::digest_all(rounded));
    std::filesystem::remove_all(dir);
}
