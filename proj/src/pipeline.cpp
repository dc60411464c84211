#include "listen/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "listen/checkpoint.hpp"
#include "listen/errors.hpp"
#include "listen/templates.hpp"

namespace listen::pipeline {

using json = nlohmann::json;

namespace {

void flatten_into(const json& j, const std::string& prefix, json& out) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it)
            flatten_into(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    } else {
        out[prefix] = j;
    }
}

}  // namespace

json flatten(const json& nested) {
    if (!nested.is_object()) throw ConfigError("config must be a JSON object");
    json out = json::object();
    flatten_into(nested, "", out);
    return out;
}

RunConfig::RunConfig(json flat) : flat_(flatten(flat)) {}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    try {
        return RunConfig(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void RunConfig::merge(const RunConfig& other) {
    for (auto it = other.flat_.begin(); it != other.flat_.end(); ++it) flat_[it.key()] = it.value();
}

json RunConfig::section(const std::string& prefix) const {
    json out = json::object();
    const std::string p = prefix.empty() || prefix.back() == '.' ? prefix : prefix + ".";
    for (auto it = flat_.begin(); it != flat_.end(); ++it)
        if (it.key().rfind(p, 0) == 0) out[it.key().substr(p.size())] = it.value();
    return out;
}

void RunConfig::throw_type_error(const std::string& key, const std::string& what) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + what);
}

void write_run_record(const std::filesystem::path& out_dir, const std::string& command, const RunConfig& config,
                      const std::map<std::string, std::filesystem::path>& inputs) {
    std::filesystem::create_directories(out_dir);
    json digests = json::object();
    for (const auto& [name, path] : inputs) {
        if (std::filesystem::is_regular_file(path)) digests[name] = {{"path", path.string()}, {"sha256", ckpt::sha256_file(path)}};
        else if (std::filesystem::is_directory(path)) {
            json files = json::object();
            std::vector<std::filesystem::path> entries;
            for (const auto& e : std::filesystem::directory_iterator(path))
                if (e.is_regular_file()) entries.push_back(e.path());
            std::sort(entries.begin(), entries.end());
            for (const auto& e : entries) files[e.filename().string()] = ckpt::sha256_file(e);
            digests[name] = {{"path", path.string()}, {"files", files}};
        } else {
            digests[name] = {{"path", path.string()}, {"sha256", nullptr}};
        }
    }
    const json record = {{"command", command},
                         {"config", config.flat()},
                         {"versions",
                          {{"corpus", audio::CorpusManifest::kVersion},
                           {"ontology", audio::Ontology::builtin().version()},
                           {"encoder", encoder::EncoderParams::kVersion},
                           {"backbone", backbone::Backbone::kVersion},
                           {"adapter", trainer::kAdapterVersion},
                           {"templates", std::string(templates::kVersion)}}},
                         {"inputs", digests}};
    std::ofstream out(out_dir / "run_config.json");
    if (!out) throw DataError("cannot write " + (out_dir / "run_config.json").string());
    out << record.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& ablation_columns() {
    static const std::vector<std::string> kColumns = {"Acc",     "F1(Y)",      "F1(N)",         "F1(W)",     "Yes",
                                                      "AQA-Acc", "SynHyp-Acc", "SynHyp-F1(N)", "SynHyp-Yes"};
    return kColumns;
}

json AblationReport::to_json() const {
    json rows_j = json::array();
    for (const auto& r : rows) {
        json m = json::object();
        for (const auto& [k, v] : r.metrics) m[k] = v;
        json row = {{"config", r.config}, {"seed", r.seed}, {"ok", r.ok}, {"metrics", m}, {"run_dir", r.run_dir.string()}};
        if (!r.error.empty()) row["error"] = r.error;
        rows_j.push_back(row);
    }
    return {{"columns", ablation_columns()}, {"rows", rows_j}, {"config", config}};
}

AblationReport AblationReport::from_json(const json& j) {
    AblationReport r;
    r.config = j.value("config", json::object());
    for (const auto& row : j.at("rows")) {
        AblationRow a;
        a.config = row.at("config").get<std::string>();
        a.seed = row.at("seed").get<std::string>();
        a.ok = row.value("ok", true);
        a.error = row.value("error", std::string());
        a.run_dir = row.value("run_dir", std::string());
        for (auto it = row.at("metrics").begin(); it != row.at("metrics").end(); ++it) a.metrics[it.key()] = it.value();
        r.rows.push_back(std::move(a));
    }
    return r;
}

const AblationRow* AblationReport::median(const std::string& config) const {
    for (const auto& r : rows)
        if (r.config == config && r.seed == "median") return &r;
    return nullptr;
}

std::string AblationReport::table() const {
    std::ostringstream out;
    out << "| Config | Seed |";
    for (const auto& c : ablation_columns()) out << " " << c << " |";
    out << "\n|---|---|";
    for (std::size_t i = 0; i < ablation_columns().size(); ++i) out << "---:|";
    out << "\n";
    for (const auto& r : rows) {
        out << "| " << r.config << " | " << r.seed << " |";
        for (const auto& c : ablation_columns()) {
            auto it = r.metrics.find(c);
            if (!r.ok) out << " FAILED |";
            else if (it == r.metrics.end()) out << " - |";
            else out << " " << std::fixed << std::setprecision(1) << 100.0 * it->second << " |";
        }
        out << "\n";
    }
    return out.str();
}

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::map<std::string, double> row_metrics(const eval::EvalReport& r) {
    std::map<std::string, double> m;
    if (r.binary.count("hallucination")) {
        const auto& h = r.binary.at("hallucination");
        m["Acc"] = h.acc;
        m["F1(Y)"] = h.f1_yes;
        m["F1(N)"] = h.f1_no;
        m["F1(W)"] = h.f1_weighted;
        m["Yes"] = h.yes_rate;
    }
    if (r.aqa_acc >= 0.0) m["AQA-Acc"] = r.aqa_acc;
    if (r.binary.count("synhyp")) {
        const auto& s = r.binary.at("synhyp");
        m["SynHyp-Acc"] = s.acc;
        m["SynHyp-F1(N)"] = s.f1_no;
        m["SynHyp-Yes"] = s.yes_rate;
    }
    return m;
}

}  // namespace

AblationReport run_ablation(const AblationConfig& config) {
    if (config.seeds.empty()) throw ConfigError("ablation needs at least one seed");
    if (config.generator != "rule" && config.generator != "toylm")
        throw ConfigError("ablation generator must be rule or toylm");
    const audio::CorpusManifest corpus = audio::CorpusManifest::load(config.corpus);
    const backbone::Backbone lm = backbone::Backbone::load(config.backbone_dir);
    const encoder::EncoderParams enc;
    std::filesystem::create_directories(config.out_dir);

    std::vector<datagen::ClipAnnotation> pool;
    for (const auto* spec : corpus.split(audio::Split::Train))
        pool.push_back(datagen::ClipAnnotation::from(*spec, corpus.ontology));

    // The probes are shared by every run.
    Rng probe_rng = Rng(config.probe_seed).derive("probes");
    std::vector<eval::ProbeItem> items = eval::build_hallucination_probe(corpus, probe_rng);
    for (auto& it : eval::build_synhyp_probe(corpus, corpus.ontology, probe_rng)) items.push_back(std::move(it));
    for (auto& it : eval::build_aqa_probe(corpus, probe_rng)) items.push_back(std::move(it));
    const auto clips = eval::corpus_clips(corpus);

    AblationReport report;
    std::vector<std::string> seeds_s;
    for (auto s : config.seeds) seeds_s.push_back(std::to_string(s));
    report.config = {{"corpus", config.corpus.string()},   {"backbone_dir", config.backbone_dir.string()},
                     {"n", config.n},                      {"seeds", config.seeds},
                     {"generator", config.generator},      {"train", config.train.to_json()},
                     {"adapter", config.adapter.to_json()}, {"probe_seed", config.probe_seed},
                     {"max_new_tokens", config.max_new_tokens}, {"n_probe_items", items.size()}};

    const std::vector<std::string> kinds = {"pos_only", "pos_neg", "combined"};
    for (std::uint64_t seed : config.seeds) {
        datagen::RuleGenerator rule;
        backbone::ToyLmClient toy(lm);
        datagen::LmGenerator lm_gen(toy);
        datagen::ResponseGenerator& gen = config.generator == "rule" ? static_cast<datagen::ResponseGenerator&>(rule)
                                                                     : static_cast<datagen::ResponseGenerator&>(lm_gen);
        Rng data_rng = Rng(seed).derive("ablation-data");
        std::optional<datagen::AblationSplits> splits;
        std::string split_error;
        try {
            splits = datagen::build_ablation_splits(pool, config.n, gen, data_rng, corpus.ontology);
        } catch (const std::exception& e) {
            split_error = e.what();
        }
        adapter::AdapterConfig ac = config.adapter;
        ac.seed = seed;
        const adapter::AdapterParams init(ac);

        for (const auto& kind : kinds) {
            AblationRow row;
            row.config = kind;
            row.seed = std::to_string(seed);
            row.run_dir = config.out_dir / (kind + "_seed" + std::to_string(seed));
            try {
                if (!splits) throw DataError("dataset construction failed: " + split_error);
                const datagen::DatasetManifest& data =
                    kind == "pos_only" ? splits->pos_only : (kind == "pos_neg" ? splits->pos_neg : splits->combined);
                std::filesystem::create_directories(row.run_dir);
                data.save(row.run_dir / "dataset.jsonl");
                trainer::TrainConfig tc = config.train;
                tc.seed = seed;
                tc.data = row.run_dir / "dataset.jsonl";
                const trainer::PreparedDataset prepared = trainer::prepare_dataset(data, corpus, enc, lm.vocab);
                const trainer::TrainResult tr = trainer::train_adapter(tc, prepared, enc, lm, init, row.run_dir);
                eval::PipelineEndpoint endpoint(enc, tr.params, lm);
                const auto preds = eval::run_eval(endpoint, items, clips, config.max_new_tokens);
                const eval::EvalReport er = eval::summarize(preds, {{"config", kind}, {"seed", seed}});
                std::ofstream(row.run_dir / "report.json") << er.to_json().dump(2) << "\n";
                eval::write_predictions(row.run_dir / "predictions.jsonl", preds);
                row.metrics = row_metrics(er);
            } catch (const std::exception& e) {
                row.ok = false;
                row.error = e.what();
            }
            report.rows.push_back(std::move(row));
        }
    }

    for (const auto& kind : kinds) {
        AblationRow med;
        med.config = kind;
        med.seed = "median";
        std::map<std::string, std::vector<double>> values;
        for (const auto& r : report.rows)
            if (r.config == kind && r.ok && r.seed != "median")
                for (const auto& [k, v] : r.metrics) values[k].push_back(v);
        if (values.empty()) {
            med.ok = false;
            med.error = "no successful runs";
        }
        for (const auto& [k, v] : values) med.metrics[k] = median_of(v);
        report.rows.push_back(std::move(med));
    }

    std::ofstream(config.out_dir / "ablation_report.json") << report.to_json().dump(2) << "\n";
    std::ofstream(config.out_dir / "ablation_table.md") << report.table();
    return report;
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v, int prec = 1) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#ff9da7",
                          "#9c755f"};

constexpr int kWidth = 640, kHeight = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 70;

std::string svg_open(const std::string& title) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) + "\" height=\"" +
           std::to_string(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n" +
           "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<text x=\"" + std::to_string(kWidth / 2) +
           "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) + "</text>\n";
}

std::string axes(double y_max, const std::string& y_fmt_suffix = "") {
    std::string s;
    const int plot_h = kHeight - kTop - kBottom;
    for (int i = 0; i <= 4; ++i) {
        const double v = y_max * i / 4.0;
        const int y = kTop + plot_h - static_cast<int>(plot_h * i / 4.0);
        s += "<line x1=\"" + std::to_string(kLeft) + "\" y1=\"" + std::to_string(y) + "\" x2=\"" +
             std::to_string(kWidth - kRight) + "\" y2=\"" + std::to_string(y) + "\" stroke=\"#ddd\"/>\n";
        s += "<text x=\"" + std::to_string(kLeft - 6) + "\" y=\"" + std::to_string(y + 4) +
             "\" text-anchor=\"end\">" + fmt(v, y_max < 10 ? 2 : 0) + y_fmt_suffix + "</text>\n";
    }
    s += "<line x1=\"" + std::to_string(kLeft) + "\" y1=\"" + std::to_string(kTop) + "\" x2=\"" +
         std::to_string(kLeft) + "\" y2=\"" + std::to_string(kHeight - kBottom) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + std::to_string(kLeft) + "\" y1=\"" + std::to_string(kHeight - kBottom) + "\" x2=\"" +
         std::to_string(kWidth - kRight) + "\" y2=\"" + std::to_string(kHeight - kBottom) + "\" stroke=\"black\"/>\n";
    return s;
}

}  // namespace

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values, double y_max) {
    if (labels.size() != values.size()) throw ArgumentError("bar chart labels and values differ in length");
    std::string s = svg_open(title) + axes(y_max);
    const int plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
    const double slot = labels.empty() ? 0.0 : static_cast<double>(plot_w) / labels.size();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double v = std::clamp(values[i], 0.0, y_max);
        const double h = y_max > 0 ? plot_h * v / y_max : 0.0;
        const double x = kLeft + slot * i + slot * 0.2;
        s += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(kTop + plot_h - h) + "\" width=\"" + fmt(slot * 0.6) +
             "\" height=\"" + fmt(h) + "\" fill=\"" + kPalette[i % 9] + "\"/>\n";
        s += "<text x=\"" + fmt(x + slot * 0.3) + "\" y=\"" + fmt(kTop + plot_h - h - 4) + "\" text-anchor=\"middle\">" +
             fmt(values[i], 3) + "</text>\n";
        s += "<text x=\"" + fmt(x + slot * 0.3) + "\" y=\"" + std::to_string(kHeight - kBottom + 18) +
             "\" text-anchor=\"middle\">" + escape(labels[i]) + "</text>\n";
    }
    return s + "</svg>\n";
}

std::string svg_line_chart(const std::string& title, const std::vector<std::string>& names,
                           const std::vector<std::vector<std::pair<double, double>>>& series) {
    if (names.size() != series.size()) throw ArgumentError("line chart names and series differ in length");
    double x_max = 1.0, y_max = 0.0;
    for (const auto& ser : series)
        for (const auto& [x, y] : ser) x_max = std::max(x_max, x), y_max = std::max(y_max, y);
    if (y_max <= 0.0) y_max = 1.0;
    std::string s = svg_open(title) + axes(y_max);
    const int plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
    for (std::size_t i = 0; i < series.size(); ++i) {
        std::string pts;
        for (const auto& [x, y] : series[i])
            pts += fmt(kLeft + plot_w * x / x_max) + "," + fmt(kTop + plot_h - plot_h * y / y_max) + " ";
        s += "<polyline fill=\"none\" stroke-width=\"1.2\" stroke=\"" + std::string(kPalette[i % 9]) + "\" points=\"" +
             pts + "\"/>\n";
        const int ly = kHeight - kBottom + 34 + static_cast<int>(i / 3) * 14;
        const int lx = kLeft + static_cast<int>(i % 3) * 190;
        s += "<rect x=\"" + std::to_string(lx) + "\" y=\"" + std::to_string(ly - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
             kPalette[i % 9] + "\"/><text x=\"" + std::to_string(lx + 14) + "\" y=\"" + std::to_string(ly) + "\">" +
             escape(names[i]) + "</text>\n";
    }
    s += "<text x=\"" + std::to_string(kWidth / 2) + "\" y=\"" + std::to_string(kHeight - kBottom + 18) +
         "\" text-anchor=\"middle\">step (max " + fmt(x_max, 0) + ")</text>\n";
    return s + "</svg>\n";
}

PlotResult emit_plots(const AblationReport& report, const std::filesystem::path& out_dir) {
    PlotResult result;
    std::filesystem::create_directories(out_dir);
    auto write = [&](const std::string& name, const std::string& svg) {
        const auto path = out_dir / name;
        std::ofstream(path) << svg;
        result.written.push_back(path);
    };

    for (const auto& [column, file, title] :
         std::vector<std::tuple<std::string, std::string, std::string>>{
             {"F1(N)", "f1n_bar.svg", "Hallucination probe F1(N), median over seeds"},
             {"Yes", "yesrate_bar.svg", "Hallucination probe yes-rate, median over seeds"}}) {
        std::vector<std::string> labels;
        std::vector<double> values;
        for (const auto& r : report.rows) {
            if (r.seed != "median") continue;
            auto it = r.metrics.find(column);
            if (it == r.metrics.end()) {
                result.notes.push_back("row " + r.config + "/median lacks " + column);
                continue;
            }
            labels.push_back(r.config);
            values.push_back(it->second);
        }
        if (labels.empty()) result.notes.push_back(file + " skipped: no median rows with " + column);
        else write(file, svg_bar_chart(title, labels, values, 1.0));
    }

    std::vector<std::string> names;
    std::vector<std::vector<std::pair<double, double>>> series;
    for (const auto& r : report.rows) {
        if (r.seed == "median" || r.run_dir.empty()) continue;
        std::ifstream in(r.run_dir / "train_log.jsonl");
        std::vector<std::pair<double, double>> pts;
        for (std::string line; std::getline(in, line);) {
            if (line.empty()) continue;
            try {
                const auto rec = trainer::TrainLogRecord::from_json(json::parse(line));
                pts.emplace_back(rec.step, rec.nll);
            } catch (const std::exception&) {
                result.notes.push_back("unreadable log line in " + (r.run_dir / "train_log.jsonl").string());
                break;
            }
        }
        if (pts.empty()) {
            result.notes.push_back("no training log for " + r.config + "/seed " + r.seed);
            continue;
        }
        names.push_back(r.config + " s" + r.seed);
        series.push_back(std::move(pts));
    }
    if (series.empty()) result.notes.push_back("loss_curves.svg skipped: empty logs");
    else write("loss_curves.svg", svg_line_chart("Training loss (masked NLL)", names, series));
    return result;
}

}  // namespace listen::pipeline
