#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "listen/adapter.hpp"
#include "listen/audio_world.hpp"
#include "listen/checkpoint.hpp"
#include "listen/encoder.hpp"
#include "listen/errors.hpp"
#include "listen/rng.hpp"

using namespace listen;
using ag::Mat;
using ag::RowVec;

namespace {

Mat random_mat(Rng& rng, int r, int c, double s = 1.0) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = s * rng.normal();
    return m;
}

encoder::LayerStack random_stack(Rng& rng, int layers, int frames, int dim) {
    encoder::LayerStack s;
    for (int l = 0; l < layers; ++l) s.layers.push_back(random_mat(rng, frames, dim));
    return s;
}

// Straightforward triple loop, independent of Eigen's products.
Mat naive_matmul(const Mat& a, const Mat& b) {
    Mat out(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (Eigen::Index k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            out(i, j) = acc;
        }
    return out;
}

}  // namespace

TEST_CASE("encoder frame arithmetic and determinism") {
    const encoder::EncoderParams params;
    const auto& o = audio::Ontology::builtin();
    const auto clip = audio::gen_clip(o, {"c", {"dog_bark"}, 1.0, 20.0, 1, audio::Split::Train});
    const auto a = encoder::encode(clip.waveform, params);
    const auto b = encoder::encode(clip.waveform, params);
    CHECK(a.frames() == 100);
    CHECK(a.layer_count() == 4);
    CHECK(a.dim() == 32);
    for (int l = 0; l < 4; ++l) CHECK(a.layers[l] == b.layers[l]);

    const auto longer = audio::gen_clip(o, {"c", {"dog_bark"}, 3.0, 20.0, 1, audio::Split::Train});
    CHECK(encoder::encode(longer.waveform, params).frames() == 300);

    std::vector<float> bad = clip.waveform;
    bad[10] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(encoder::encode(bad, params), InputError);
    CHECK_THROWS_AS(encoder::encode(clip.waveform, params, 8000), FormatError);
}

TEST_CASE("encoder separates classes with disjoint bands") {
    const encoder::EncoderParams params;
    const auto& o = audio::Ontology::builtin();
    auto mean_row = [&](const std::string& cls, std::uint64_t seed) {
        const auto clip = audio::gen_clip(o, {"c", {cls}, 1.0, 20.0, seed, audio::Split::Train});
        return RowVec(encoder::encode(clip.waveform, params).layers[0].colwise().mean());
    };
    // Noise floor: same class, different seeds (different phase and noise).
    const double same = (mean_row("engine_idle", 1) - mean_row("engine_idle", 2)).norm();
    const double diff = (mean_row("engine_idle", 1) - mean_row("alarm_clock", 1)).norm();
    CHECK(diff > 5.0 * same);
}

TEST_CASE("encoder checksum is stable and sensitive") {
    const encoder::EncoderParams a, b;
    CHECK(encoder::freeze_checksum(a) == encoder::freeze_checksum(b));
    auto arrays = a.arrays();
    arrays["encoder.layer1.w"](0, 0) += 1e-6;
    const encoder::EncoderParams c(a.config(), arrays);
    CHECK(encoder::freeze_checksum(c) != encoder::freeze_checksum(a));
}

TEST_CASE("layer mix weights") {
    Rng rng(1);
    const auto stack = random_stack(rng, 4, 6, 5);
    const RowVec zero = RowVec::Zero(4);
    const RowVec w = adapter::layer_weights(zero);
    for (int l = 0; l < 4; ++l) CHECK(w(l) == doctest::Approx(0.25));
    Mat mean = Mat::Zero(6, 5);
    for (const auto& L : stack.layers) mean += L / 4.0;
    CHECK((adapter::layer_mix(stack, zero) - mean).cwiseAbs().maxCoeff() < 1e-12);

    RowVec peaked(4);
    peaked << 10, 0, 0, 0;
    const double expected = std::exp(10.0) / (std::exp(10.0) + 3.0);
    CHECK(std::abs(adapter::layer_weights(peaked)(0) - expected) < 1e-4);
    CHECK((adapter::layer_mix(stack, peaked) - stack.layers[0]).cwiseAbs().maxCoeff() < 1e-3 * 10);

    const RowVec shifted = peaked.array() + 123.0;
    CHECK((adapter::layer_mix(stack, shifted) - adapter::layer_mix(stack, peaked)).cwiseAbs().maxCoeff() < 1e-9);

    RowVec wrong = RowVec::Zero(3);
    CHECK_THROWS_AS(adapter::layer_mix(stack, wrong), ShapeError);
}

TEST_CASE("q-former shape, duplication and permutation laws") {
    adapter::AdapterConfig cfg;
    const adapter::AdapterParams params(cfg);
    Rng rng(2);
    for (int t : {50, 100, 300}) {
        const Mat out = adapter::qformer_forward(random_mat(rng, t, cfg.d_enc), params);
        CHECK(out.rows() == cfg.queries);
        CHECK(out.cols() == cfg.d_q);
    }
    const Mat x = random_mat(rng, 20, cfg.d_enc);
    Mat dup(40, cfg.d_enc);
    for (int i = 0; i < 20; ++i) dup.row(2 * i) = dup.row(2 * i + 1) = x.row(i);
    CHECK((adapter::qformer_forward(dup, params) - adapter::qformer_forward(x, params)).cwiseAbs().maxCoeff() < 1e-5);

    Mat perm(20, cfg.d_enc);
    for (int i = 0; i < 20; ++i) perm.row(i) = x.row((i * 7) % 20);
    CHECK((adapter::qformer_forward(perm, params) - adapter::qformer_forward(x, params)).cwiseAbs().maxCoeff() < 1e-9);

    adapter::AdapterConfig pos_cfg = cfg;
    pos_cfg.frame_positions = true;
    const adapter::AdapterParams pos_params(pos_cfg);
    CHECK((adapter::qformer_forward(perm, pos_params) - adapter::qformer_forward(x, pos_params)).cwiseAbs().maxCoeff() > 1e-6);

    const auto attn = adapter::qformer_attention(random_mat(rng, 1, cfg.d_enc), params);
    REQUIRE(attn.size() == static_cast<std::size_t>(cfg.blocks));
    for (const auto& a : attn) CHECK((a.array() - 1.0).abs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(adapter::qformer_forward(Mat(0, cfg.d_enc), params), EmptyInputError);
}

TEST_CASE("projection laws and matmul oracle") {
    Rng rng(3);
    const Mat q = random_mat(rng, 4, 6);
    const Mat eye = Mat::Identity(6, 6);
    CHECK((adapter::project(q, eye, Mat::Zero(1, 6)).vectors - q).cwiseAbs().maxCoeff() == 0.0);

    Mat b(1, 5);
    b << 1, 2, 3, 4, 5;
    const auto zero_out = adapter::project(Mat::Zero(3, 6), random_mat(rng, 6, 5), b);
    for (int r = 0; r < 3; ++r) CHECK((zero_out.vectors.row(r) - b).cwiseAbs().maxCoeff() == 0.0);

    const Mat w = random_mat(rng, 6, 5);
    const Mat bias = random_mat(rng, 1, 5);
    Mat expected = naive_matmul(q, w);
    for (int r = 0; r < expected.rows(); ++r) expected.row(r) += bias;
    CHECK((adapter::project(q, w, bias).vectors - expected).cwiseAbs().maxCoeff() < 1e-6);
    CHECK_THROWS_AS(adapter::project(q, random_mat(rng, 5, 5), bias), ShapeError);
}

TEST_CASE("audio prefix has K rows for every duration") {
    const encoder::EncoderParams enc;
    const adapter::AdapterParams params;
    for (double d : {0.5, 1.0, 3.0}) {
        const auto clip = audio::gen_clip(audio::Ontology::builtin(), {"c", {"rain"}, d, 20.0, 1, audio::Split::Train});
        const auto prefix = adapter::adapter_forward(encoder::encode(clip.waveform, enc), params);
        CHECK(prefix.rows() == 8);
        CHECK(prefix.vectors.cols() == 64);
    }
}

TEST_CASE("a layer with vanishing weight does not affect the output") {
    adapter::AdapterConfig cfg;
    cfg.d_enc = 8;
    cfg.layers = 4;
    cfg.d_q = 8;
    cfg.queries = 2;
    cfg.d_llm = 16;
    adapter::AdapterParams params(cfg);
    params.layer_logits.value << 3, 3, 3, -30;
    Rng rng(4);
    auto a = random_stack(rng, 4, 5, 8);
    auto b = a;
    b.layers[3] = random_mat(rng, 5, 8);
    CHECK((adapter::adapter_forward(a, params).vectors - adapter::adapter_forward(b, params).vectors)
              .cwiseAbs()
              .maxCoeff() < 1e-4);
}

TEST_CASE("checkpoint container round-trip") {
    ckpt::ArrayStore store;
    Rng rng(5);
    store.arrays["a.w"] = random_mat(rng, 3, 4);
    store.arrays["b"] = random_mat(rng, 1, 7);
    store.metadata = {{"hello", "world"}};
    const auto path = std::filesystem::temp_directory_path() / "listen_unit.ckpt";
    ckpt::save(path, store);
    const auto back = ckpt::load(path);
    CHECK(back.metadata.at("hello") == "world");
    for (const auto& [name, m] : store.arrays) {
        CHECK(back.arrays.at(name) == ckpt::to_f32_precision(m));
        CHECK(ckpt::array_digest(back.arrays.at(name)) == ckpt::array_digest(ckpt::to_f32_precision(m)));
    }
    CHECK(ckpt::sha256_hex(std::string("abc")) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    std::filesystem::remove(path);
}
