#include "listen/adapter.hpp"

#include <cmath>

#include "listen/errors.hpp"
#include "listen/rng.hpp"

namespace listen::adapter {

namespace {

Mat normal_matrix(Rng& rng, int rows, int cols, double stddev) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
    return m;
}

Param weight(Rng& rng, int fan_in, int fan_out) {
    return Param(normal_matrix(rng, fan_in, fan_out, 1.0 / std::sqrt(static_cast<double>(fan_in))));
}

Param zeros(int rows, int cols) { return Param(Mat::Zero(rows, cols)); }
Param ones(int rows, int cols) { return Param(Mat::Ones(rows, cols)); }

Var linear(Var x, Var w, Var b) { return ag::add_row(ag::matmul(x, w), b); }

}  // namespace

nlohmann::json AdapterConfig::to_json() const {
    return {{"layers", layers}, {"d_enc", d_enc},     {"d_q", d_q},         {"queries", queries},
            {"blocks", blocks}, {"d_llm", d_llm},     {"ff_mult", ff_mult}, {"frame_positions", frame_positions},
            {"seed", seed}};
}

AdapterConfig AdapterConfig::from_json(const nlohmann::json& j) {
    AdapterConfig c;
    c.layers = j.value("layers", c.layers);
    c.d_enc = j.value("d_enc", c.d_enc);
    c.d_q = j.value("d_q", c.d_q);
    c.queries = j.value("queries", c.queries);
    c.blocks = j.value("blocks", c.blocks);
    c.d_llm = j.value("d_llm", c.d_llm);
    c.ff_mult = j.value("ff_mult", c.ff_mult);
    c.frame_positions = j.value("frame_positions", c.frame_positions);
    c.seed = j.value("seed", c.seed);
    return c;
}

AdapterParams::AdapterParams(const AdapterConfig& c) : config_(c) {
    if (c.layers < 2) throw ConfigError("adapter needs at least two encoder layers to mix");
    if (c.queries < 1 || c.d_q < 1 || c.d_enc < 1 || c.d_llm < 1 || c.blocks < 1 || c.ff_mult < 1)
        throw ConfigError("adapter dimensions must be positive");
    Rng rng(c.seed);
    Rng init = rng.derive("adapter-init");
    layer_logits = zeros(1, c.layers);
    queries = Param(normal_matrix(init, c.queries, c.d_q, 1.0));
    const int hidden = c.ff_mult * c.d_q;
    for (int i = 0; i < c.blocks; ++i) {
        QFormerBlock b;
        b.norm_q_g = ones(1, c.d_q);
        b.norm_q_b = zeros(1, c.d_q);
        b.norm_kv_g = ones(1, c.d_enc);
        b.norm_kv_b = zeros(1, c.d_enc);
        b.q_w = weight(init, c.d_q, c.d_q);
        b.q_b = zeros(1, c.d_q);
        b.k_w = weight(init, c.d_enc, c.d_q);
        b.k_b = zeros(1, c.d_q);
        b.v_w = weight(init, c.d_enc, c.d_q);
        b.v_b = zeros(1, c.d_q);
        b.out_w = weight(init, c.d_q, c.d_q);
        b.out_b = zeros(1, c.d_q);
        b.norm_ff_g = ones(1, c.d_q);
        b.norm_ff_b = zeros(1, c.d_q);
        b.ff1_w = weight(init, c.d_q, hidden);
        b.ff1_b = zeros(1, hidden);
        b.ff2_w = weight(init, hidden, c.d_q);
        b.ff2_b = zeros(1, c.d_q);
        blocks.push_back(std::move(b));
    }
    norm_out_g = ones(1, c.d_q);
    norm_out_b = zeros(1, c.d_q);
    proj_w = Param(normal_matrix(init, c.d_q, c.d_llm, 0.5 / std::sqrt(static_cast<double>(c.d_q))));
    proj_b = zeros(1, c.d_llm);
}

std::vector<std::pair<std::string, Param*>> AdapterParams::named() {
    std::vector<std::pair<std::string, Param*>> out{{"adapter.layer_logits", &layer_logits},
                                                    {"adapter.queries", &queries}};
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string p = "adapter.block" + std::to_string(i) + ".";
        QFormerBlock& b = blocks[i];
        out.insert(out.end(), {{p + "norm_q.g", &b.norm_q_g},   {p + "norm_q.b", &b.norm_q_b},
                               {p + "norm_kv.g", &b.norm_kv_g}, {p + "norm_kv.b", &b.norm_kv_b},
                               {p + "q.w", &b.q_w},             {p + "q.b", &b.q_b},
                               {p + "k.w", &b.k_w},             {p + "k.b", &b.k_b},
                               {p + "v.w", &b.v_w},             {p + "v.b", &b.v_b},
                               {p + "out.w", &b.out_w},         {p + "out.b", &b.out_b},
                               {p + "norm_ff.g", &b.norm_ff_g}, {p + "norm_ff.b", &b.norm_ff_b},
                               {p + "ff1.w", &b.ff1_w},         {p + "ff1.b", &b.ff1_b},
                               {p + "ff2.w", &b.ff2_w},         {p + "ff2.b", &b.ff2_b}});
    }
    out.insert(out.end(), {{"adapter.norm_out.g", &norm_out_g},
                           {"adapter.norm_out.b", &norm_out_b},
                           {"adapter.proj.w", &proj_w},
                           {"adapter.proj.b", &proj_b}});
    return out;
}

std::vector<std::pair<std::string, const Param*>> AdapterParams::named() const {
    std::vector<std::pair<std::string, const Param*>> out;
    for (auto& [name, p] : const_cast<AdapterParams*>(this)->named()) out.emplace_back(name, p);
    return out;
}

std::map<std::string, Mat> AdapterParams::arrays() const {
    std::map<std::string, Mat> out;
    for (const auto& [name, p] : named()) out[name] = p->value;
    return out;
}

void AdapterParams::load_arrays(const std::map<std::string, Mat>& arrays) {
    for (auto& [name, p] : named()) {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw FormatError("adapter array '" + name + "' missing from checkpoint");
        if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
            throw ShapeError("adapter array '" + name + "' has the wrong shape");
        p->value = it->second;
    }
}

void AdapterParams::zero_grad() {
    for (auto& [name, p] : named()) p->zero_grad();
}

// ---------------------------------------------------------------------------

template <typename P>
void BoundAdapter::bind(P& params) {
    Tape& t = *tape_;
    layer_logits_ = t.param(params.layer_logits);
    queries_ = t.param(params.queries);
    for (auto& b : params.blocks) {
        blocks_.push_back(BlockVars{t.param(b.norm_q_g), t.param(b.norm_q_b), t.param(b.norm_kv_g),
                                    t.param(b.norm_kv_b), t.param(b.q_w),       t.param(b.q_b),
                                    t.param(b.k_w),       t.param(b.k_b),       t.param(b.v_w),
                                    t.param(b.v_b),       t.param(b.out_w),     t.param(b.out_b),
                                    t.param(b.norm_ff_g), t.param(b.norm_ff_b), t.param(b.ff1_w),
                                    t.param(b.ff1_b),     t.param(b.ff2_w),     t.param(b.ff2_b)});
    }
    norm_out_g_ = t.param(params.norm_out_g);
    norm_out_b_ = t.param(params.norm_out_b);
    proj_w_ = t.param(params.proj_w);
    proj_b_ = t.param(params.proj_b);
}

BoundAdapter::BoundAdapter(Tape& tape, AdapterParams& params) : tape_(&tape), config_(&params.config()) {
    bind(params);
}

BoundAdapter::BoundAdapter(Tape& tape, const AdapterParams& params) : tape_(&tape), config_(&params.config()) {
    bind(params);
}

Var BoundAdapter::layer_mix(const encoder::LayerStack& stack) const {
    if (stack.layer_count() != layer_logits_.cols())
        throw ShapeError("layer_mix: stack has " + std::to_string(stack.layer_count()) + " layers, logits have " +
                         std::to_string(layer_logits_.cols()));
    std::vector<const Mat*> layers;
    for (const auto& l : stack.layers) layers.push_back(&l);
    return ag::softmax_weighted_sum(layer_logits_, layers);
}

Var BoundAdapter::qformer(Var mixed, std::vector<Mat>* attention) const {
    if (mixed.rows() == 0) throw EmptyInputError("qformer: no frames");
    if (mixed.cols() != config_->d_enc) throw ShapeError("qformer: frame width differs from d_enc");
    Tape& t = *tape_;
    Var frames = mixed;
    if (config_->frame_positions)
        frames = ag::add(frames, t.constant(sinusoidal_positions(static_cast<int>(mixed.rows()), config_->d_enc)));
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config_->d_q));

    Var x = queries_;
    for (const auto& b : blocks_) {
        // Cross-attention, pre-norm, residual.
        Var kv = ag::layer_norm(frames, b.norm_kv_g, b.norm_kv_b);
        Var q = linear(ag::layer_norm(x, b.norm_q_g, b.norm_q_b), b.q_w, b.q_b);
        Var k = linear(kv, b.k_w, b.k_b);
        Var v = linear(kv, b.v_w, b.v_b);
        Var attn = ag::softmax_rows(ag::scale(ag::matmul_bt(q, k), inv_sqrt_d));
        if (attention) attention->push_back(attn.value());
        x = ag::add(x, linear(ag::matmul(attn, v), b.out_w, b.out_b));
        // Feed-forward, pre-norm, residual.
        Var h = ag::gelu(linear(ag::layer_norm(x, b.norm_ff_g, b.norm_ff_b), b.ff1_w, b.ff1_b));
        x = ag::add(x, linear(h, b.ff2_w, b.ff2_b));
    }
    return ag::layer_norm(x, norm_out_g_, norm_out_b_);
}

Var BoundAdapter::project(Var q_out) const {
    if (q_out.cols() != proj_w_.rows()) throw ShapeError("project: q_out width differs from projection input");
    return linear(q_out, proj_w_, proj_b_);
}

Var BoundAdapter::forward(const encoder::LayerStack& stack) const { return project(qformer(layer_mix(stack))); }

// ---------------------------------------------------------------------------

RowVec layer_weights(const RowVec& layer_logits) { return ag::softmax(layer_logits); }

Mat layer_mix(const encoder::LayerStack& stack, const RowVec& layer_logits) {
    if (stack.layer_count() != layer_logits.size()) throw ShapeError("layer_mix: layer count differs from logits");
    const RowVec w = layer_weights(layer_logits);
    Mat out = Mat::Zero(stack.frames(), stack.dim());
    for (int l = 0; l < stack.layer_count(); ++l) out += w(l) * stack.layers[static_cast<std::size_t>(l)];
    return out;
}

Mat qformer_forward(const Mat& mixed, const AdapterParams& params) {
    Tape tape(false);
    BoundAdapter bound(tape, params);
    return bound.qformer(tape.constant(mixed)).value();
}

std::vector<Mat> qformer_attention(const Mat& mixed, const AdapterParams& params) {
    Tape tape(false);
    BoundAdapter bound(tape, params);
    std::vector<Mat> attention;
    bound.qformer(tape.constant(mixed), &attention);
    return attention;
}

AudioPrefix project(const Mat& q_out, const Mat& proj_w, const Mat& proj_b) {
    if (q_out.cols() != proj_w.rows() || proj_b.rows() != 1 || proj_b.cols() != proj_w.cols())
        throw ShapeError("project: shape mismatch");
    Mat out = q_out * proj_w;
    out.rowwise() += RowVec(proj_b.row(0));
    return AudioPrefix{std::move(out)};
}

AudioPrefix adapter_forward(const encoder::LayerStack& stack, const AdapterParams& params) {
    Tape tape(false);
    BoundAdapter bound(tape, params);
    return AudioPrefix{bound.forward(stack).value()};
}

Mat sinusoidal_positions(int frames, int dim) {
    Mat pe(frames, dim);
    for (int t = 0; t < frames; ++t) {
        for (int i = 0; i < dim; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
            pe(t, i) = (i % 2 == 0) ? std::sin(t * rate) : std::cos(t * rate);
        }
    }
    return pe;
}

}  // namespace listen::adapter
