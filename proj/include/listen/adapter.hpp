#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "listen/autograd.hpp"
#include "listen/encoder.hpp"

namespace listen::adapter {

using ag::Mat;
using ag::Param;
using ag::RowVec;
using ag::Tape;
using ag::Var;

struct AdapterConfig {
    int layers = 4;      // L, must match the encoder
    int d_enc = 32;
    int d_q = 32;
    int queries = 8;     // K
    int blocks = 2;      // B
    int d_llm = 64;
    int ff_mult = 4;
    bool frame_positions = false;  // sinusoidal frame positions; off = permutation-invariant
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
    static AdapterConfig from_json(const nlohmann::json& j);
};

struct QFormerBlock {
    Param norm_q_g, norm_q_b;
    Param norm_kv_g, norm_kv_b;
    Param q_w, q_b, k_w, k_b, v_w, v_b, out_w, out_b;
    Param norm_ff_g, norm_ff_b;
    Param ff1_w, ff1_b, ff2_w, ff2_b;
};

// The only trainable state in the system.
//
// Init: layer_logits = 0; queries ~ N(0, 1); every weight matrix ~ N(0, 1/fan_in);
// projection ~ N(0, 0.25/d_q); biases 0; norm gains 1.
class AdapterParams {
public:
    explicit AdapterParams(const AdapterConfig& config = {});

    const AdapterConfig& config() const { return config_; }

    Param layer_logits;  // 1 x L
    Param queries;       // K x d_q
    std::vector<QFormerBlock> blocks;
    Param norm_out_g, norm_out_b;
    Param proj_w;        // d_q x d_llm
    Param proj_b;        // 1 x d_llm

    // Stable (name, param) listing used by checkpoints and the optimiser.
    std::vector<std::pair<std::string, Param*>> named();
    std::vector<std::pair<std::string, const Param*>> named() const;

    std::map<std::string, Mat> arrays() const;
    void load_arrays(const std::map<std::string, Mat>& arrays);
    void zero_grad();

private:
    AdapterConfig config_;
};

struct AudioPrefix {
    Mat vectors;  // K x d_llm
    int rows() const { return static_cast<int>(vectors.rows()); }
};

// Params bound onto a tape for one forward pass.
class BoundAdapter {
public:
    // Trainable params feed gradients back into `params`.
    BoundAdapter(Tape& tape, AdapterParams& params);
    // Read-only binding; nothing on the tape requires gradients.
    BoundAdapter(Tape& tape, const AdapterParams& params);

    Var layer_mix(const encoder::LayerStack& stack) const;
    // `attention`, when given, receives each block's K x T attention matrix.
    Var qformer(Var mixed, std::vector<Mat>* attention = nullptr) const;
    Var project(Var q_out) const;
    Var forward(const encoder::LayerStack& stack) const;

    Tape& tape() const { return *tape_; }

private:
    template <typename P>
    void bind(P& params);

    struct BlockVars {
        Var norm_q_g, norm_q_b, norm_kv_g, norm_kv_b;
        Var q_w, q_b, k_w, k_b, v_w, v_b, out_w, out_b;
        Var norm_ff_g, norm_ff_b, ff1_w, ff1_b, ff2_w, ff2_b;
    };

    Tape* tape_;
    const AdapterConfig* config_;
    Var layer_logits_, queries_, norm_out_g_, norm_out_b_, proj_w_, proj_b_;
    std::vector<BlockVars> blocks_;
};

// Plain-value entry points.
RowVec layer_weights(const RowVec& layer_logits);
Mat layer_mix(const encoder::LayerStack& stack, const RowVec& layer_logits);
Mat qformer_forward(const Mat& mixed, const AdapterParams& params);
// Attention of each query over the frames, per block (K x T each).
std::vector<Mat> qformer_attention(const Mat& mixed, const AdapterParams& params);
AudioPrefix project(const Mat& q_out, const Mat& proj_w, const Mat& proj_b);
AudioPrefix adapter_forward(const encoder::LayerStack& stack, const AdapterParams& params);

Mat sinusoidal_positions(int frames, int dim);

}  // namespace listen::adapter
