#include "listen/encoder.hpp"

#include <cmath>
#include <mutex>
#include <numbers>

#include "listen/audio_world.hpp"
#include "listen/checkpoint.hpp"
#include "listen/errors.hpp"
#include "listen/rng.hpp"

namespace listen::encoder {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::string layer_name(int l, const char* part) { return "encoder.layer" + std::to_string(l) + "." + part; }

// Real DFT basis with the periodic Hann window folded in: frames * [cos | sin].
struct DftBasis {
    Mat cos_part;
    Mat sin_part;
};

const DftBasis& dft_basis(int n_fft) {
    static std::mutex mu;
    static std::map<int, DftBasis> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(n_fft);
    if (it != cache.end()) return it->second;
    const int bins = n_fft / 2 + 1;
    DftBasis b{Mat(n_fft, bins), Mat(n_fft, bins)};
    for (int n = 0; n < n_fft; ++n) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / n_fft);
        for (int k = 0; k < bins; ++k) {
            const double a = 2.0 * std::numbers::pi * static_cast<double>(k) * n / n_fft;
            b.cos_part(n, k) = w * std::cos(a);
            b.sin_part(n, k) = -w * std::sin(a);
        }
    }
    return cache.emplace(n_fft, std::move(b)).first->second;
}

}  // namespace

Mat mel_filterbank(int n_mels, int n_fft, int sample_rate) {
    const int bins = n_fft / 2 + 1;
    const double mel_max = hz_to_mel(sample_rate / 2.0);
    std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
    for (int i = 0; i < n_mels + 2; ++i) edges[static_cast<std::size_t>(i)] = mel_to_hz(mel_max * i / (n_mels + 1));
    Mat fb = Mat::Zero(n_mels, bins);
    for (int m = 0; m < n_mels; ++m) {
        const double lo = edges[static_cast<std::size_t>(m)];
        const double mid = edges[static_cast<std::size_t>(m + 1)];
        const double hi = edges[static_cast<std::size_t>(m + 2)];
        for (int k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / n_fft;
            if (f > lo && f <= mid) fb(m, k) = (f - lo) / (mid - lo);
            else if (f > mid && f < hi) fb(m, k) = (hi - f) / (hi - mid);
        }
    }
    return fb;
}

nlohmann::json EncoderConfig::to_json() const {
    return {{"d_enc", d_enc}, {"layers", layers}, {"hop", hop}, {"n_fft", n_fft}, {"seed", seed}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.d_enc = j.value("d_enc", c.d_enc);
    c.layers = j.value("layers", c.layers);
    c.hop = j.value("hop", c.hop);
    c.n_fft = j.value("n_fft", c.n_fft);
    c.seed = j.value("seed", c.seed);
    return c;
}

EncoderParams::EncoderParams(const EncoderConfig& config) : config_(config) {
    if (config.layers < 2) throw ConfigError("encoder needs at least two layers");
    if (config.d_enc < 1 || config.hop < 1 || config.n_fft < 2) throw ConfigError("bad encoder dimensions");
    arrays_["encoder.mel_fb"] = encoder::mel_filterbank(config.d_enc, config.n_fft, audio::kSampleRate);
    Rng rng(config.seed);
    const double scale = 1.5 / std::sqrt(static_cast<double>(config.d_enc));
    for (int l = 1; l < config.layers; ++l) {
        Rng lr = rng.derive(static_cast<std::uint64_t>(l));
        Mat w(config.d_enc, config.d_enc);
        Mat b(1, config.d_enc);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * lr.normal();
        for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = 0.1 * lr.normal();
        arrays_[layer_name(l, "w")] = ckpt::to_f32_precision(w);
        arrays_[layer_name(l, "b")] = ckpt::to_f32_precision(b);
    }
    arrays_["encoder.mel_fb"] = ckpt::to_f32_precision(arrays_["encoder.mel_fb"]);
}

EncoderParams::EncoderParams(const EncoderConfig& config, const std::map<std::string, Mat>& arrays)
    : EncoderParams(config) {
    for (auto& [name, m] : arrays_) {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw FormatError("encoder array '" + name + "' missing");
        if (it->second.rows() != m.rows() || it->second.cols() != m.cols())
            throw ShapeError("encoder array '" + name + "' has the wrong shape");
        m = it->second;
    }
}

const Mat& EncoderParams::layer_weight(int l) const { return arrays_.at(layer_name(l, "w")); }
const Mat& EncoderParams::layer_bias(int l) const { return arrays_.at(layer_name(l, "b")); }

Mat log_mel(std::span<const float> waveform, const EncoderParams& params) {
    const auto& cfg = params.config();
    const auto n = static_cast<Eigen::Index>(waveform.size());
    const Eigen::Index frames = (n + cfg.hop - 1) / cfg.hop;
    const int half = cfg.n_fft / 2;

    Mat framed = Mat::Zero(frames, cfg.n_fft);
    for (Eigen::Index t = 0; t < frames; ++t) {
        const Eigen::Index start = t * cfg.hop - half;
        for (int i = 0; i < cfg.n_fft; ++i) {
            const Eigen::Index s = start + i;
            if (s >= 0 && s < n) framed(t, i) = waveform[static_cast<std::size_t>(s)];
        }
    }
    const DftBasis& basis = dft_basis(cfg.n_fft);
    const Mat re = framed * basis.cos_part;
    const Mat im = framed * basis.sin_part;
    const Mat power = re.cwiseProduct(re) + im.cwiseProduct(im);
    Mat mel = power * params.mel_filterbank().transpose();
    mel = mel.unaryExpr([](double v) { return std::log10(std::max(v, 1e-10)); });
    const double floor = mel.maxCoeff() - 8.0;
    mel = mel.unaryExpr([floor](double v) { return (std::max(v, floor) + 4.0) / 4.0; });
    return mel;
}

LayerStack encode(std::span<const float> waveform, const EncoderParams& params, int sample_rate) {
    if (sample_rate != audio::kSampleRate) throw FormatError("encoder expects 16 kHz audio");
    for (float v : waveform)
        if (!std::isfinite(v)) throw InputError("waveform contains NaN or Inf");
    const double duration = static_cast<double>(waveform.size()) / sample_rate;
    if (duration < audio::kMinDuration || duration > audio::kMaxDuration)
        throw InputError("waveform duration must lie in [0.5, 10] seconds");

    LayerStack stack;
    stack.frame_hop = static_cast<double>(params.config().hop) / sample_rate;
    stack.layers.push_back(log_mel(waveform, params));
    for (int l = 1; l < params.config().layers; ++l) {
        Mat h = stack.layers.back() * params.layer_weight(l);
        h.rowwise() += ag::RowVec(params.layer_bias(l).row(0));
        stack.layers.push_back(h.array().tanh().matrix());
    }
    return stack;
}

std::string freeze_checksum(const EncoderParams& params) { return ckpt::digest_all(params.arrays()); }

}  // namespace listen::encoder
