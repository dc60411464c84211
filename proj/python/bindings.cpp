#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "listen/adapter.hpp"
#include "listen/audio_world.hpp"
#include "listen/datagen.hpp"
#include "listen/encoder.hpp"
#include "listen/errors.hpp"
#include "listen/evalharness.hpp"
#include "listen/trainer.hpp"

namespace py = pybind11;
using namespace listen;
using nlohmann::json;

namespace {

py::array_t<float> to_array(const std::vector<float>& v) {
    py::array_t<float> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<float> from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 1) throw ArgumentError("waveform must be one-dimensional");
    return {a.data(), a.data() + a.size()};
}

eval::Prediction binary_prediction(const std::string& gold, const std::string& raw) {
    eval::Prediction p;
    p.item.kind = eval::ProbeKind::Hallucination;
    p.item.gold = gold;
    p.raw_text = raw;
    p.extracted = eval::to_string(eval::extract_yes_no(raw));
    return p;
}

}  // namespace

PYBIND11_MODULE(_listen, m) {
    m.doc() = "Bindings for the listen core library (JSON payloads are passed as strings).";

    py::register_exception<Error>(m, "ListenError");

    m.def(
        "build_corpus",
        [](int n_train, int n_eval, int ontology_size, std::uint64_t seed, double snr_db) {
            return audio::build_corpus({n_train, n_eval, ontology_size, seed, snr_db}).to_json().dump();
        },
        py::arg("n_train") = 200, py::arg("n_eval") = 50, py::arg("ontology_size") = 8, py::arg("seed") = 0,
        py::arg("snr_db") = 20.0, "Corpus manifest as a JSON string.");

    m.def("ontology_json", [] { return audio::Ontology::builtin().to_json().dump(); });

    m.def(
        "gen_clip",
        [](const std::vector<std::string>& tags, double duration, std::uint64_t seed, double snr_db) {
            const auto clip = audio::gen_clip(audio::Ontology::builtin(),
                                              {"py", tags, duration, snr_db, seed, audio::Split::Train});
            return py::make_tuple(to_array(clip.waveform), clip.caption);
        },
        py::arg("tags"), py::arg("duration") = 1.0, py::arg("seed") = 0, py::arg("snr_db") = 20.0,
        "(waveform, caption) for a synthetic clip.");

    m.def(
        "encode",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& waveform) {
            const encoder::EncoderParams params;
            return encoder::encode(from_array(waveform), params).layers;
        },
        py::arg("waveform"), "Frozen encoder layer stack: a list of T x d_enc arrays.");

    m.def(
        "adapter_forward",
        [](const std::vector<ag::Mat>& layers, std::uint64_t seed) {
            adapter::AdapterConfig cfg;
            cfg.seed = seed;
            const adapter::AdapterParams params(cfg);
            encoder::LayerStack stack;
            stack.layers = layers;
            return adapter::adapter_forward(stack, params).vectors;
        },
        py::arg("layers"), py::arg("seed") = 0, "Audio prefix (K x d_llm) from a freshly initialised adapter.");

    m.def("layer_weights", [](const ag::RowVec& logits) { return ag::RowVec(adapter::layer_weights(logits)); });

    m.def(
        "build_final_prompt",
        [](const std::string& seed_text, const std::string& gen_text) {
            const auto fp = datagen::build_final_prompt({datagen::SeedKind::Caption, seed_text},
                                                        {datagen::GenKind::Positive, gen_text});
            return py::make_tuple(fp.text, fp.span.begin, fp.span.end);
        },
        "(final_prompt, span_begin, span_end).");

    m.def("parse_final_prompt", [](const std::string& text) {
        const auto p = datagen::parse_final_prompt(text);
        return py::make_tuple(p.begin_delim, p.seed_text, p.end_delim, p.gen_text);
    });

    m.def("rule_response", [](const std::string& kind, const std::vector<std::string>& present,
                              const std::vector<std::string>& absent) {
        return datagen::render_rule_response(datagen::gen_kind_from_string(kind), present, absent);
    });

    m.def("masked_nll", [](const ag::Mat& logits, const std::vector<int>& targets, const std::vector<int>& mask) {
        const std::vector<char> m8(mask.begin(), mask.end());
        return trainer::masked_nll(logits, targets, m8);
    });

    m.def("extract_yes_no", [](const std::string& raw) { return eval::to_string(eval::extract_yes_no(raw)); });

    m.def(
        "metrics",
        [](const std::vector<std::string>& gold, const std::vector<std::string>& answers) {
            if (gold.size() != answers.size()) throw ArgumentError("gold and answers differ in length");
            std::vector<eval::Prediction> preds;
            for (std::size_t i = 0; i < gold.size(); ++i) preds.push_back(binary_prediction(gold[i], answers[i]));
            return eval::metrics(eval::confusion(preds)).to_json().dump();
        },
        py::arg("gold"), py::arg("answers"), "Metrics JSON for raw model answers against yes/no gold labels.");
}
