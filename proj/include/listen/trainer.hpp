#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "listen/adapter.hpp"
#include "listen/audio_world.hpp"
#include "listen/backbone.hpp"
#include "listen/datagen.hpp"
#include "listen/encoder.hpp"

namespace listen::trainer {

using ag::Mat;
using ag::Var;

enum class Optimizer { Adam, Sgd };
std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& s);

struct TrainConfig {
    std::filesystem::path data;  // dataset manifest (JSONL)
    int steps = 2000;
    int batch_size = 8;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::Adam;
    double grad_clip = 1.0;
    int checkpoint_every = 500;  // 0 disables intermediate checkpoints
    int log_every = 1;
    bool deterministic = true;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainLogRecord {
    int step = 0;
    double nll = 0.0;  // mean masked NLL of the batch, before the update
    double grad_norm = 0.0;
    std::vector<double> layer_weights;
    double wall_clock = 0.0;  // seconds since the run started

    nlohmann::json to_json() const;
    static TrainLogRecord from_json(const nlohmann::json& j);
};

// Mean over masked positions of -log softmax(logits[i])[targets[i]].
// Throws EmptyInputError when the mask selects nothing.
double masked_nll(const Mat& logits, std::span<const int> targets, std::span<const char> mask);
Var masked_nll(Var logits, std::span<const int> targets, std::span<const char> mask);

// A training sample resolved against its clip: token ids plus encoder features.
struct PreparedSample {
    std::string clip_id;
    backbone::PromptTokens prompt;
    std::vector<int> response;
    const encoder::LayerStack* features = nullptr;
};

// Owns the encoder features of every referenced clip (computed once).
struct PreparedDataset {
    std::map<std::string, encoder::LayerStack> features;
    std::vector<PreparedSample> samples;
};

// Throws DataError when a sample names a clip the corpus does not hold.
PreparedDataset prepare_dataset(const datagen::DatasetManifest& data, const audio::CorpusManifest& corpus,
                                const encoder::EncoderParams& encoder, const backbone::Vocab& vocab);

// Summed masked NLL and token count of one sample on an existing tape.
struct SampleLoss {
    Var nll_sum;
    int tokens = 0;
};
SampleLoss sample_loss(const adapter::BoundAdapter& ad, const backbone::BoundBackbone& bb, const PreparedSample& s);

// ----- frozenness ------------------------------------------------------------

// Per-array digests of everything that must stay frozen (encoder + backbone).
std::map<std::string, std::string> frozen_digests(const encoder::EncoderParams& encoder,
                                                  const backbone::Backbone& backbone);

struct FrozenReport {
    bool pass = true;
    std::vector<std::string> mismatched;  // differing digests or names present on one side only
    int compared = 0;

    nlohmann::json to_json() const;
};

// Adapter arrays are never part of the comparison.
FrozenReport verify_frozen(const std::map<std::string, std::string>& before,
                           const std::map<std::string, std::string>& after);

// ----- checkpoints ------------------------------------------------------------

inline constexpr const char* kAdapterVersion = "listen-adapter/1";

void save_adapter(const std::filesystem::path& path, const adapter::AdapterParams& params,
                  const nlohmann::json& metadata);
adapter::AdapterParams load_adapter(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

// ----- training -------------------------------------------------------------

struct TrainResult {
    adapter::AdapterParams params;
    std::vector<TrainLogRecord> log;
    FrozenReport frozen;
    std::filesystem::path checkpoint;  // empty when no out_dir was given
    std::string checkpoint_digest;     // sha256 of the final checkpoint file
};

// Optimises the adapter only; encoder and backbone gradients are never
// materialised. With a non-empty `out_dir`, writes adapter.ckpt (and
// adapter_step<N>.ckpt every checkpoint_every steps) plus train_log.jsonl.
// A non-finite loss aborts with NumericalError after writing nan_diagnostic.json.
TrainResult train_adapter(const TrainConfig& config, const PreparedDataset& data,
                          const encoder::EncoderParams& encoder, const backbone::Backbone& backbone,
                          const adapter::AdapterParams& init, const std::filesystem::path& out_dir = {},
                          const std::function<void(const TrainLogRecord&)>& on_log = {});

// Mean NLL of the first and last `fraction` of the logged steps.
std::pair<double, double> windowed_means(const std::vector<TrainLogRecord>& log, double fraction = 0.1);

}  // namespace listen::trainer
