#include "listen/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "listen/errors.hpp"
#include "listen/templates.hpp"

namespace listen::datagen {

using nlohmann::json;
namespace tpl = templates;

std::string to_string(SeedKind k) { return k == SeedKind::Caption ? "caption" : "tag"; }

std::string to_string(GenKind k) {
    switch (k) {
        case GenKind::Positive: return "positive";
        case GenKind::Negative: return "negative";
        case GenKind::Combined: return "combined";
    }
    return "positive";
}

SeedKind seed_kind_from_string(const std::string& s) {
    if (s == "caption") return SeedKind::Caption;
    if (s == "tag") return SeedKind::Tag;
    throw FormatError("unknown seed kind '" + s + "'");
}

GenKind gen_kind_from_string(const std::string& s) {
    if (s == "positive" || s == "pos") return GenKind::Positive;
    if (s == "negative" || s == "neg") return GenKind::Negative;
    if (s == "combined" || s == "comb") return GenKind::Combined;
    throw FormatError("unknown generation kind '" + s + "'");
}

GenerationPrompt GenerationPrompt::standard(GenKind kind) {
    switch (kind) {
        case GenKind::Positive: return {kind, std::string(tpl::kPositivePrompt)};
        case GenKind::Negative: return {kind, std::string(tpl::kNegativePrompt)};
        case GenKind::Combined: return {kind, std::string(tpl::kCombinedPrompt)};
    }
    return {kind, std::string(tpl::kPositivePrompt)};
}

FinalPrompt build_final_prompt(const SeedPrompt& seed, const GenerationPrompt& gen) {
    if (seed.text.empty()) throw ArgumentError("seed prompt text is empty");
    if (gen.text.empty()) throw ArgumentError("generation prompt text is empty");
    FinalPrompt out;
    out.text = std::string(tpl::kBeginAudio) + " ";
    out.span.begin = out.text.size();
    out.text += seed.text;
    out.span.end = out.text.size();
    out.text += " " + std::string(tpl::kEndAudio) + " " + gen.text;
    return out;
}

ParsedPrompt parse_final_prompt(const std::string& final_prompt) {
    const std::string begin = std::string(tpl::kBeginAudio) + " ";
    const std::string end = " " + std::string(tpl::kEndAudio) + " ";
    if (final_prompt.rfind(begin, 0) != 0) throw FormatError("final prompt does not start with the begin delimiter");
    const std::size_t end_pos = final_prompt.find(end, begin.size());
    if (end_pos == std::string::npos) throw FormatError("final prompt has no end delimiter");
    ParsedPrompt p;
    p.begin_delim = std::string(tpl::kBeginAudio);
    p.seed_text = final_prompt.substr(begin.size(), end_pos - begin.size());
    p.end_delim = std::string(tpl::kEndAudio);
    p.gen_text = final_prompt.substr(end_pos + end.size());
    return p;
}

std::vector<std::string> sample_absent_events(const std::vector<std::string>& present, const audio::Ontology& ontology,
                                              int k, Rng& rng) {
    if (k < 1) throw ArgumentError("need k >= 1 absent events");
    std::vector<std::string> pool;
    for (const auto& id : ontology.ids())
        if (std::find(present.begin(), present.end(), id) == present.end()) pool.push_back(id);
    if (pool.size() < static_cast<std::size_t>(k))
        throw InsufficientNegativesError("only " + std::to_string(pool.size()) + " absent classes, need " +
                                         std::to_string(k));
    // Partial Fisher-Yates: the first k slots become a uniform k-subset.
    for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
        const std::size_t j = i + rng.below(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(k));
    return pool;
}

namespace {

std::string capitalize(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

std::string numbered(const std::vector<std::string>& names) {
    std::string out;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) out += " ";
        out += std::to_string(i + 1) + ". " + capitalize(names[i]);
    }
    return out;
}

}  // namespace

std::string render_rule_response(GenKind kind, const std::vector<std::string>& present_names,
                                 const std::vector<std::string>& absent_names) {
    const bool need_present = kind != GenKind::Negative;
    const bool need_absent = kind != GenKind::Positive;
    if (need_present && present_names.empty()) throw ArgumentError(to_string(kind) + " response needs present names");
    if (need_absent && absent_names.empty()) throw ArgumentError(to_string(kind) + " response needs absent names");
    switch (kind) {
        case GenKind::Positive: {
            std::string out = capitalize(present_names[0]) + " sounds";
            for (std::size_t i = 1; i < present_names.size(); ++i) out += ", " + present_names[i];
            return out;
        }
        case GenKind::Negative: return std::string(tpl::kNegativeHeader) + " " + numbered(absent_names);
        case GenKind::Combined:
            return std::string(tpl::kCombinedPresentHeader) + " " + numbered(present_names) + " " +
                   std::string(tpl::kCombinedAbsentHeader) + " " + numbered(absent_names);
    }
    return {};
}

std::string synthesize_with_lm(TextClient& client, const std::string& final_prompt, int max_new_tokens) {
    GenerationRequest req{final_prompt, max_new_tokens, true};
    std::string text = client.generate(req);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) throw EmptyResponseError("generator '" + client.id() + "' returned an empty response");
    const auto last = text.find_last_not_of(" \t\r\n");
    return text.substr(first, last - first + 1);
}

// ---------------------------------------------------------------------------

ClipAnnotation ClipAnnotation::from(const audio::ClipSpec& spec, const audio::Ontology& ontology) {
    return {spec.clip_id, spec.tags, audio::caption_for(ontology, spec.tags)};
}

ClipAnnotation ClipAnnotation::from(const audio::AudioClip& clip) {
    return {clip.clip_id, clip.present_tags, clip.caption};
}

SeedPrompt seed_for(const ClipAnnotation& clip, const audio::Ontology& ontology) {
    if (!clip.caption.empty()) return {SeedKind::Caption, clip.caption};
    if (clip.tags.empty()) throw DataError("clip '" + clip.clip_id + "' has neither caption nor tags");
    std::string text;
    for (std::size_t i = 0; i < clip.tags.size(); ++i) {
        if (i) text += ", ";
        text += ontology.at(clip.tags[i]).display_name;
    }
    return {SeedKind::Tag, text};
}

TrainingSample build_training_sample(const ClipAnnotation& clip, GenKind kind, ResponseGenerator& generator, Rng& rng,
                                     const audio::Ontology& ontology, int negatives) {
    TrainingSample s;
    s.clip_id = clip.clip_id;
    s.seed = seed_for(clip, ontology);
    s.gen = GenerationPrompt::standard(kind);
    const FinalPrompt fp = build_final_prompt(s.seed, s.gen);
    s.final_prompt = fp.text;
    s.placeholder_span = fp.span;

    if (kind == GenKind::Negative) {
        s.absent_tags_used = sample_absent_events(clip.tags, ontology, negatives, rng);
    } else if (kind == GenKind::Combined) {
        const int available = static_cast<int>(ontology.size()) - static_cast<int>(clip.tags.size());
        s.absent_tags_used = sample_absent_events(clip.tags, ontology, std::min(negatives, std::max(available, 1)), rng);
    }

    ResponseContext ctx{kind, s.final_prompt, {}, {}};
    for (const auto& t : clip.tags) ctx.present_names.push_back(ontology.at(t).display_name);
    for (const auto& t : s.absent_tags_used) ctx.absent_names.push_back(ontology.at(t).display_name);
    s.response = generator.respond(ctx);
    if (s.response.empty()) throw EmptyResponseError("empty response for clip '" + clip.clip_id + "'");
    s.generator_id = generator.id();
    return s;
}

json TrainingSample::to_json() const {
    return {{"clip_id", clip_id},
            {"seed", {{"kind", to_string(seed.kind)}, {"text", seed.text}}},
            {"gen", {{"kind", to_string(gen.kind)}, {"text", gen.text}}},
            {"final_prompt", final_prompt},
            {"response", response},
            {"placeholder_span", {placeholder_span.begin, placeholder_span.end}},
            {"generator_id", generator_id},
            {"absent_tags_used", absent_tags_used}};
}

TrainingSample TrainingSample::from_json(const json& j) {
    TrainingSample s;
    s.clip_id = j.at("clip_id").get<std::string>();
    s.seed = {seed_kind_from_string(j.at("seed").at("kind").get<std::string>()),
              j.at("seed").at("text").get<std::string>()};
    s.gen = {gen_kind_from_string(j.at("gen").at("kind").get<std::string>()), j.at("gen").at("text").get<std::string>()};
    s.final_prompt = j.at("final_prompt").get<std::string>();
    s.response = j.at("response").get<std::string>();
    s.placeholder_span = {j.at("placeholder_span").at(0).get<std::size_t>(),
                          j.at("placeholder_span").at(1).get<std::size_t>()};
    s.generator_id = j.at("generator_id").get<std::string>();
    s.absent_tags_used = j.value("absent_tags_used", std::vector<std::string>{});
    if (s.placeholder_span.end > s.final_prompt.size() || s.placeholder_span.begin > s.placeholder_span.end ||
        s.final_prompt.substr(s.placeholder_span.begin, s.placeholder_span.end - s.placeholder_span.begin) !=
            s.seed.text)
        throw FormatError("sample for '" + s.clip_id + "': placeholder span does not cover the seed text");
    return s;
}

std::string to_string(ConfigKind k) {
    switch (k) {
        case ConfigKind::PosOnly: return "pos_only";
        case ConfigKind::PosNeg: return "pos_neg";
        case ConfigKind::Combined: return "combined";
        case ConfigKind::Custom: return "custom";
    }
    return "custom";
}

ConfigKind config_kind_from_string(const std::string& s) {
    if (s == "pos_only") return ConfigKind::PosOnly;
    if (s == "pos_neg") return ConfigKind::PosNeg;
    if (s == "combined") return ConfigKind::Combined;
    if (s == "custom") return ConfigKind::Custom;
    throw FormatError("unknown dataset config kind '" + s + "'");
}

int effective_count(const std::vector<TrainingSample>& samples) {
    int n = 0;
    for (const auto& s : samples) n += s.gen.kind == GenKind::Combined ? 2 : 1;
    return n;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& s : samples) out << s.to_json().dump() << "\n";
    std::ofstream meta(path.string() + ".meta.json");
    meta << json{{"name", name},
                 {"config_kind", to_string(config_kind)},
                 {"effective_count", effective_count},
                 {"n_samples", samples.size()},
                 {"clip_policy", clip_policy}}
                .dump(2)
         << "\n";
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read dataset " + path.string());
    DatasetManifest m;
    m.name = path.stem().string();
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            m.samples.push_back(TrainingSample::from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    m.effective_count = datagen::effective_count(m.samples);
    std::ifstream meta_in(path.string() + ".meta.json");
    if (meta_in) {
        const json meta = json::parse(meta_in);
        m.name = meta.value("name", m.name);
        m.config_kind = config_kind_from_string(meta.value("config_kind", std::string("custom")));
        m.clip_policy = meta.value("clip_policy", std::string());
    }
    return m;
}

DatasetManifest build_dataset(const std::vector<ClipAnnotation>& clips, GenKind kind, ResponseGenerator& generator,
                              Rng& rng, const audio::Ontology& ontology, const std::string& name) {
    DatasetManifest m;
    m.name = name;
    for (const auto& c : clips) {
        Rng sample_rng = rng.derive(c.clip_id + "/" + to_string(kind));
        m.samples.push_back(build_training_sample(c, kind, generator, sample_rng, ontology));
    }
    m.effective_count = effective_count(m.samples);
    return m;
}

AblationSplits build_ablation_splits(const std::vector<ClipAnnotation>& pool, int n, ResponseGenerator& generator,
                                     Rng& rng, const audio::Ontology& ontology) {
    if (n < 1) throw ConfigError("ablation needs N >= 1");
    if (pool.size() < static_cast<std::size_t>(n))
        throw ConfigError("ablation with N=" + std::to_string(n) + " needs at least " + std::to_string(n) +
                          " pool clips, have " + std::to_string(pool.size()));
    const bool distinct = pool.size() >= static_cast<std::size_t>(2 * n);

    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    auto slice = [&](std::size_t from, std::size_t to) {
        std::vector<ClipAnnotation> out;
        for (std::size_t i = from; i < to; ++i) out.push_back(pool[order[i]]);
        return out;
    };
    const auto un = static_cast<std::size_t>(n);
    const auto first = slice(0, un);
    const auto second = distinct ? slice(un, 2 * un) : first;

    AblationSplits s;
    s.pos_only = build_dataset(first, GenKind::Positive, generator, rng, ontology, "pos_only");
    // A reused clip draws its second sample from a separate stream so it can differ from the first.
    Rng repeat_rng = rng.derive("repeat");
    auto more = build_dataset(second, GenKind::Positive, generator, distinct ? rng : repeat_rng, ontology, "pos_only");
    s.pos_only.samples.insert(s.pos_only.samples.end(), more.samples.begin(), more.samples.end());
    s.pos_only.effective_count = effective_count(s.pos_only.samples);
    s.pos_only.config_kind = ConfigKind::PosOnly;

    s.pos_neg = build_dataset(first, GenKind::Positive, generator, rng, ontology, "pos_neg");
    auto neg = build_dataset(second, GenKind::Negative, generator, rng, ontology, "pos_neg");
    s.pos_neg.samples.insert(s.pos_neg.samples.end(), neg.samples.begin(), neg.samples.end());
    s.pos_neg.effective_count = effective_count(s.pos_neg.samples);
    s.pos_neg.config_kind = ConfigKind::PosNeg;

    s.combined = build_dataset(first, GenKind::Combined, generator, rng, ontology, "combined");
    s.combined.config_kind = ConfigKind::Combined;
    for (auto* m : {&s.pos_only, &s.pos_neg, &s.combined}) m->clip_policy = distinct ? "distinct" : "two_per_clip";
    return s;
}

}  // namespace listen::datagen
