#include "listen/evalharness.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "listen/errors.hpp"
#include "listen/templates.hpp"

namespace listen::eval {

using json = nlohmann::json;
namespace tpl = templates;

std::string to_string(ProbeKind k) {
    switch (k) {
        case ProbeKind::Hallucination: return "hallucination";
        case ProbeKind::SynHyp: return "synhyp";
        case ProbeKind::Aqa: return "aqa";
    }
    return "?";
}

ProbeKind probe_kind_from_string(const std::string& s) {
    if (s == "hallucination" || s == "halluc") return ProbeKind::Hallucination;
    if (s == "synhyp") return ProbeKind::SynHyp;
    if (s == "aqa") return ProbeKind::Aqa;
    throw KindError("unknown probe kind '" + s + "'");
}

std::string to_string(Answer a) {
    switch (a) {
        case Answer::Yes: return "yes";
        case Answer::No: return "no";
        case Answer::Unknown: return "unknown";
    }
    return "unknown";
}

json ProbeItem::to_json() const {
    return {{"clip_id", clip_id}, {"question", question}, {"gold", gold}, {"probe_kind", eval::to_string(kind)},
            {"queried_concept", queried_concept}};
}

json Prediction::to_json() const {
    json j = item.to_json();
    j["raw_text"] = raw_text;
    j["extracted"] = extracted;
    if (!error.empty()) j["error"] = error;
    return j;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> absent_classes(const audio::Ontology& o, const std::vector<std::string>& present) {
    std::vector<std::string> out;
    for (const auto& id : o.ids())
        if (std::find(present.begin(), present.end(), id) == present.end()) out.push_back(id);
    return out;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
    return v[static_cast<std::size_t>(rng.below(v.size()))];
}

void check_coverage(const audio::CorpusManifest& corpus) {
    const auto eval = corpus.split(audio::Split::Eval);
    if (eval.empty()) throw ConfigError("corpus has no eval clips");
    for (const auto& id : corpus.ontology.ids()) {
        bool present = false, absent = false;
        for (const auto* c : eval) {
            const bool has = std::find(c->tags.begin(), c->tags.end(), id) != c->tags.end();
            present |= has;
            absent |= !has;
        }
        if (!present || !absent)
            throw ConfigError("eval split does not have class '" + id + "' both present and absent");
    }
}

}  // namespace

std::vector<ProbeItem> build_hallucination_probe(const audio::CorpusManifest& corpus, Rng& rng) {
    check_coverage(corpus);
    const auto& o = corpus.ontology;
    std::vector<ProbeItem> items;
    for (const auto* c : corpus.split(audio::Split::Eval)) {
        const auto absent = absent_classes(o, c->tags);
        if (c->tags.empty() || absent.empty())
            throw ConfigError("clip '" + c->clip_id + "' cannot yield both a yes and a no item");
        const std::string& yes = pick(c->tags, rng);
        const std::string& no = pick(absent, rng);
        items.push_back({c->clip_id, tpl::hallucination_question(o.at(yes).display_name), "yes",
                         ProbeKind::Hallucination, yes});
        items.push_back({c->clip_id, tpl::hallucination_question(o.at(no).display_name), "no",
                         ProbeKind::Hallucination, no});
    }
    return items;
}

std::vector<ProbeItem> build_synhyp_probe(const audio::CorpusManifest& corpus, const audio::Ontology& ontology,
                                          Rng& rng, std::vector<std::string>* warnings) {
    std::vector<ProbeItem> items;
    for (const auto* c : corpus.split(audio::Split::Eval)) {
        std::set<std::string> yes_set;
        for (const auto& t : c->tags) {
            for (const auto& p : ontology.lookup(audio::Relation::Synonym, t)) yes_set.insert(p);
            for (const auto& p : ontology.lookup(audio::Relation::Hypernym, t)) yes_set.insert(p);
        }
        std::set<std::string> no_set;
        for (const auto& a : absent_classes(ontology, c->tags)) {
            for (const auto* rel : {&ontology.at(a).synonyms, &ontology.at(a).hypernyms}) {
                for (const auto& p : *rel) {
                    const auto related = ontology.classes_related_to(p);
                    const bool touches_present = std::any_of(related.begin(), related.end(), [&](const std::string& id) {
                        return std::find(c->tags.begin(), c->tags.end(), id) != c->tags.end();
                    });
                    if (!touches_present) no_set.insert(p);
                }
            }
        }
        if (yes_set.empty() || no_set.empty()) {
            if (warnings) warnings->push_back("clip '" + c->clip_id + "' skipped: no valid " +
                                              (yes_set.empty() ? "positive" : "negative") + " relation phrase");
            continue;
        }
        const std::vector<std::string> yes(yes_set.begin(), yes_set.end()), no(no_set.begin(), no_set.end());
        const std::string& y = pick(yes, rng);
        const std::string& n = pick(no, rng);
        items.push_back({c->clip_id, tpl::synhyp_question(y), "yes", ProbeKind::SynHyp, y});
        items.push_back({c->clip_id, tpl::synhyp_question(n), "no", ProbeKind::SynHyp, n});
    }
    return items;
}

std::vector<ProbeItem> build_aqa_probe(const audio::CorpusManifest& corpus, Rng& rng) {
    const auto& o = corpus.ontology;
    std::vector<ProbeItem> items;
    for (const auto* c : corpus.split(audio::Split::Eval)) {
        items.push_back({c->clip_id, std::string(tpl::kCountQuestion),
                         tpl::count_word(static_cast<int>(c->tags.size())), ProbeKind::Aqa, "count"});
        const auto absent = absent_classes(o, c->tags);
        const bool ask_present = absent.empty() || rng.below(2) == 0;
        const std::string& cls = ask_present ? pick(c->tags, rng) : pick(absent, rng);
        items.push_back({c->clip_id, tpl::hallucination_question(o.at(cls).display_name), ask_present ? "yes" : "no",
                         ProbeKind::Aqa, cls});
    }
    return items;
}

// ---------------------------------------------------------------------------

std::string PipelineEndpoint::answer(const audio::AudioClip& clip, const std::string& question, int max_new_tokens) {
    const encoder::LayerStack stack = encoder::encode(clip.waveform, *encoder_, clip.sample_rate);
    const adapter::AudioPrefix prefix = adapter::adapter_forward(stack, *adapter_);
    const auto prompt = backbone::probe_prompt_tokens(backbone_->vocab, question);
    const auto seq = backbone::embed_with_injection(*backbone_, prompt, prefix, {});
    const int room = backbone_->config.context - static_cast<int>(seq.embeddings.rows());
    if (room < 1) throw LengthError("probe prompt leaves no room in the context window");
    return backbone::greedy_decode(*backbone_, seq.embeddings, std::min(max_new_tokens, room));
}

ClipSource corpus_clips(const audio::CorpusManifest& corpus) {
    return [&corpus](const std::string& clip_id) { return audio::gen_clip(corpus.ontology, corpus.find(clip_id)); };
}

std::vector<Prediction> run_eval(ModelEndpoint& endpoint, const std::vector<ProbeItem>& items,
                                 const ClipSource& clips, int max_new_tokens) {
    std::vector<Prediction> out;
    out.reserve(items.size());
    std::string cached_id;
    audio::AudioClip cached;
    for (const auto& item : items) {
        Prediction p{item, {}, {}, {}};
        try {
            if (item.clip_id != cached_id) {
                cached = clips(item.clip_id);
                cached_id = item.clip_id;
            }
            p.raw_text = endpoint.answer(cached, item.question, max_new_tokens);
            p.extracted = item.binary() ? to_string(extract_yes_no(p.raw_text)) : normalize_answer(p.raw_text);
        } catch (const std::exception& e) {
            cached_id.clear();
            p.error = e.what();
            p.extracted = "unknown";
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::string normalize_answer(const std::string& text) {
    std::string cleaned;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::ispunct(c)) continue;
        cleaned.push_back(static_cast<char>(std::tolower(c)));
    }
    std::istringstream in(cleaned);
    std::string word, out;
    while (in >> word) out += (out.empty() ? "" : " ") + word;
    return out;
}

Answer extract_yes_no(const std::string& raw_text) {
    std::istringstream in(normalize_answer(raw_text));
    std::vector<std::string> words;
    for (std::string w; in >> w;) words.push_back(w);
    if (words.empty()) return Answer::Unknown;
    if (words[0] == "yes") return Answer::Yes;
    if (words[0] == "no") return Answer::No;
    const bool has_yes = std::find(words.begin(), words.end(), "yes") != words.end();
    const bool has_no = std::find(words.begin(), words.end(), "no") != words.end();
    if (has_yes != has_no) return has_yes ? Answer::Yes : Answer::No;
    return Answer::Unknown;
}

// ---------------------------------------------------------------------------

json ConfusionMatrix::to_json() const {
    return {{"tp_yes", tp_yes}, {"fp_yes", fp_yes},           {"fn_yes", fn_yes},
            {"tp_no", tp_no},   {"fp_no", fp_no},             {"fn_no", fn_no},
            {"unknown", unknown_count}, {"support_yes", support_yes}, {"support_no", support_no}};
}

ConfusionMatrix confusion(const std::vector<Prediction>& predictions) {
    ConfusionMatrix c;
    for (const auto& p : predictions) {
        if (!p.item.binary()) throw KindError("confusion is defined for yes/no probes only");
        const bool gold_yes = p.item.gold == "yes";
        if (!gold_yes && p.item.gold != "no") throw KindError("binary item with gold '" + p.item.gold + "'");
        (gold_yes ? c.support_yes : c.support_no) += 1;
        if (p.extracted == "yes") {
            if (gold_yes) ++c.tp_yes;
            else ++c.fn_no, ++c.fp_yes;
        } else if (p.extracted == "no") {
            if (!gold_yes) ++c.tp_no;
            else ++c.fn_yes, ++c.fp_no;
        } else {
            ++c.unknown_count;
            (gold_yes ? c.fn_yes : c.fn_no) += 1;
        }
    }
    return c;
}

namespace {

double ratio(int num, int den) { return den == 0 ? 0.0 : static_cast<double>(num) / den; }

double f1(int tp, int fp, int fn) {
    const double p = ratio(tp, tp + fp), r = ratio(tp, tp + fn);
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

}  // namespace

json MetricsReport::to_json() const {
    return {{"acc", acc},       {"f1_yes", f1_yes},     {"f1_no", f1_no}, {"f1_weighted", f1_weighted},
            {"yes_rate", yes_rate}, {"counts", counts.to_json()}, {"flags", flags}};
}

MetricsReport metrics(const ConfusionMatrix& c) {
    if (c.total() == 0) throw ArgumentError("metrics over an empty prediction set");
    MetricsReport m;
    m.counts = c;
    const int n = c.total();
    m.acc = ratio(c.tp_yes + c.tp_no, n);
    m.f1_yes = f1(c.tp_yes, c.fp_yes, c.fn_yes);
    m.f1_no = f1(c.tp_no, c.fp_no, c.fn_no);
    if (c.support_yes == 0) m.flags.push_back("f1_yes undefined: no gold-yes items");
    if (c.support_no == 0) m.flags.push_back("f1_no undefined: no gold-no items");
    m.f1_weighted = (c.support_yes * m.f1_yes + c.support_no * m.f1_no) / n;
    m.yes_rate = ratio(c.tp_yes + c.fp_yes, n);
    return m;
}

double aqa_accuracy(const std::vector<Prediction>& predictions) {
    if (predictions.empty()) throw ArgumentError("AQA accuracy over an empty prediction set");
    int correct = 0;
    for (const auto& p : predictions)
        if (p.error.empty() && p.extracted != "unknown" && normalize_answer(p.extracted) == normalize_answer(p.item.gold))
            ++correct;
    return static_cast<double>(correct) / predictions.size();
}

json EvalReport::to_json() const {
    json j;
    const MetricsReport* top = nullptr;
    if (binary.count("hallucination")) top = &binary.at("hallucination");
    else if (!binary.empty()) top = &binary.begin()->second;
    for (const char* k : {"acc", "f1_yes", "f1_no", "f1_weighted", "yes_rate"}) j[k] = nullptr;
    if (top) {
        j["acc"] = top->acc;
        j["f1_yes"] = top->f1_yes;
        j["f1_no"] = top->f1_no;
        j["f1_weighted"] = top->f1_weighted;
        j["yes_rate"] = top->yes_rate;
    }
    j["aqa_acc"] = aqa_acc < 0.0 ? json(nullptr) : json(aqa_acc);
    j["n_items"] = n_items;
    j["config"] = config;
    j["probes"] = json::object();
    for (const auto& [name, m] : binary) j["probes"][name] = m.to_json();
    return j;
}

EvalReport summarize(const std::vector<Prediction>& predictions, const json& config) {
    EvalReport r;
    r.config = config;
    r.n_items = static_cast<int>(predictions.size());
    std::map<ProbeKind, std::vector<Prediction>> by_kind;
    for (const auto& p : predictions) by_kind[p.item.kind].push_back(p);
    for (const auto& [kind, preds] : by_kind) {
        if (kind == ProbeKind::Aqa) r.aqa_acc = aqa_accuracy(preds);
        else r.binary[to_string(kind)] = metrics(confusion(preds));
    }
    return r;
}

void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& predictions) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& p : predictions) out << p.to_json().dump() << "\n";
}

}  // namespace listen::eval
