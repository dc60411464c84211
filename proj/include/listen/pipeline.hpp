#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "listen/adapter.hpp"
#include "listen/audio_world.hpp"
#include "listen/backbone.hpp"
#include "listen/datagen.hpp"
#include "listen/encoder.hpp"
#include "listen/evalharness.hpp"
#include "listen/trainer.hpp"

namespace listen::pipeline {

// Flat configuration with dotted keys ("train.steps"). Later layers override
// earlier ones: defaults, then a config file, then command-line flags.
class RunConfig {
public:
    RunConfig() = default;
    explicit RunConfig(nlohmann::json flat);

    // Accepts flat dotted keys or nested objects; nested objects are flattened.
    static RunConfig from_file(const std::filesystem::path& path);
    void merge(const RunConfig& other);
    void set(const std::string& key, nlohmann::json value) { flat_[key] = std::move(value); }
    bool has(const std::string& key) const { return flat_.contains(key); }

    template <typename T>
    T get(const std::string& key, const T& fallback) const {
        if (!flat_.contains(key)) return fallback;
        try {
            return flat_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw_type_error(key, e.what());
        }
    }

    // Settings under a prefix, with the prefix stripped ("train." -> {"steps": ...}).
    nlohmann::json section(const std::string& prefix) const;
    const nlohmann::json& flat() const { return flat_; }

private:
    [[noreturn]] static void throw_type_error(const std::string& key, const std::string& what);
    nlohmann::json flat_ = nlohmann::json::object();
};

nlohmann::json flatten(const nlohmann::json& nested);

// Writes run_config.json: command, effective config, artifact versions and
// input digests. Every output directory gets one.
void write_run_record(const std::filesystem::path& out_dir, const std::string& command, const RunConfig& config,
                      const std::map<std::string, std::filesystem::path>& inputs);

// ----- ablation ---------------------------------------------------------------

struct AblationConfig {
    std::filesystem::path corpus;        // corpus manifest
    std::filesystem::path backbone_dir;  // pretrained toy LM
    std::filesystem::path out_dir;
    int n = 100;                         // N; every configuration gets 2N effective data points
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::string generator = "rule";      // rule | toylm
    trainer::TrainConfig train;
    adapter::AdapterConfig adapter;
    std::uint64_t probe_seed = 0;
    int max_new_tokens = 8;
};

struct AblationRow {
    std::string config;  // pos_only | pos_neg | combined
    std::string seed;    // seed value or "median"
    bool ok = true;
    std::string error;
    std::map<std::string, double> metrics;  // column name -> value in [0, 1]
    std::filesystem::path run_dir;
};

struct AblationReport {
    std::vector<AblationRow> rows;  // per-seed rows, then one median row per configuration
    nlohmann::json config;

    nlohmann::json to_json() const;
    static AblationReport from_json(const nlohmann::json& j);
    // Markdown table, metrics as percentages, columns in a fixed order.
    std::string table() const;
    const AblationRow* median(const std::string& config) const;
};

// Table columns, in order.
const std::vector<std::string>& ablation_columns();

// Builds the three datasets per seed, trains each from the same initial adapter
// and batch order, and evaluates every probe. A failing run becomes a row with
// ok = false; the rest continue.
AblationReport run_ablation(const AblationConfig& config);

// ----- plots -------------------------------------------------------------------

struct PlotResult {
    std::vector<std::filesystem::path> written;
    std::vector<std::string> notes;  // skipped plots, missing fields
};

// f1n_bar.svg, yesrate_bar.svg and loss_curves.svg next to the report.
PlotResult emit_plots(const AblationReport& report, const std::filesystem::path& out_dir);

// Plain SVG primitives (deterministic output for identical input).
std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values, double y_max);
std::string svg_line_chart(const std::string& title, const std::vector<std::string>& names,
                           const std::vector<std::vector<std::pair<double, double>>>& series);

}  // namespace listen::pipeline
