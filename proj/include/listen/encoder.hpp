#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "listen/autograd.hpp"

namespace listen::encoder {

using ag::Mat;

struct EncoderConfig {
    int d_enc = 32;        // mel bins, and width of every layer
    int layers = 4;        // L, including the log-mel layer
    int hop = 160;         // 10 ms at 16 kHz
    int n_fft = 400;       // 25 ms window
    std::uint64_t seed = 1234;

    nlohmann::json to_json() const;
    static EncoderConfig from_json(const nlohmann::json& j);
};

// Frozen weights of the feature pipeline. Construction is the only writer.
class EncoderParams {
public:
    static constexpr const char* kVersion = "listen-encoder/1";

    explicit EncoderParams(const EncoderConfig& config = {});
    // Rebuilds from stored arrays (e.g. a checkpoint); shapes must agree with config.
    EncoderParams(const EncoderConfig& config, const std::map<std::string, Mat>& arrays);

    const EncoderConfig& config() const { return config_; }
    const Mat& mel_filterbank() const { return arrays_.at("encoder.mel_fb"); }
    const Mat& layer_weight(int l) const;
    const Mat& layer_bias(int l) const;

    // Every weight, in a fixed name order.
    const std::map<std::string, Mat>& arrays() const { return arrays_; }

private:
    EncoderConfig config_;
    std::map<std::string, Mat> arrays_;
};

// Frozen-encoder output. layers[l] is T x d_enc; layer 0 is log-mel.
struct LayerStack {
    std::vector<Mat> layers;
    double frame_hop = 0.01;

    int frames() const { return layers.empty() ? 0 : static_cast<int>(layers[0].rows()); }
    int layer_count() const { return static_cast<int>(layers.size()); }
    int dim() const { return layers.empty() ? 0 : static_cast<int>(layers[0].cols()); }
    double at(int t, int l, int k) const { return layers[static_cast<std::size_t>(l)](t, k); }
};

// HTK-mel triangular filters with unit peak, n_mels x (n_fft/2 + 1).
Mat mel_filterbank(int n_mels, int n_fft, int sample_rate);

// Normalised log-mel: log10(max(power, 1e-10)), floored at (max - 8), then (x + 4) / 4.
// Frames are centred at t * hop with zero padding; T = ceil(len / hop).
Mat log_mel(std::span<const float> waveform, const EncoderParams& params);

LayerStack encode(std::span<const float> waveform, const EncoderParams& params, int sample_rate = 16000);

std::string freeze_checksum(const EncoderParams& params);

}  // namespace listen::encoder
