#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "listen/datagen.hpp"
#include "listen/errors.hpp"
#include "listen/templates.hpp"

using namespace listen;
using namespace listen::datagen;

namespace {

audio::Ontology sub_ontology(const std::vector<std::string>& ids) {
    std::vector<audio::EventClass> classes;
    for (const auto& id : ids) classes.push_back(audio::Ontology::builtin().at(id));
    return audio::Ontology(classes);
}

std::vector<ClipAnnotation> pool_of(const audio::CorpusManifest& corpus) {
    std::vector<ClipAnnotation> pool;
    for (const auto* spec : corpus.split(audio::Split::Train)) pool.push_back(ClipAnnotation::from(*spec, corpus.ontology));
    return pool;
}

}  // namespace

TEST_CASE("final prompt composition and span") {
    const SeedPrompt seed{SeedKind::Caption, "A woman talks nearby as water pours."};
    const FinalPrompt fp = build_final_prompt(seed, {GenKind::Positive, "Replay the audio."});
    CHECK(fp.text == "[Begin of audio] A woman talks nearby as water pours. [End of audio] Replay the audio.");
    CHECK(fp.text.substr(fp.span.begin, fp.span.end - fp.span.begin) == seed.text);

    const FinalPrompt neg = build_final_prompt({SeedKind::Tag, "dog barking, rain"}, GenerationPrompt::standard(GenKind::Negative));
    const auto b = neg.text.find("[Begin of audio]"), s = neg.text.find("dog barking, rain"), e = neg.text.find("[End of audio]");
    CHECK(b < s);
    CHECK(s < e);
    CHECK_THROWS_AS(build_final_prompt({SeedKind::Tag, ""}, GenerationPrompt::standard(GenKind::Positive)), ArgumentError);
    CHECK_THROWS_AS(build_final_prompt(seed, {GenKind::Positive, ""}), ArgumentError);

    const ParsedPrompt p = parse_final_prompt(fp.text);
    CHECK(p.begin_delim == "[Begin of audio]");
    CHECK(p.seed_text == seed.text);
    CHECK(p.end_delim == "[End of audio]");
    CHECK(p.gen_text == "Replay the audio.");
}

TEST_CASE("absent-event sampling") {
    const auto o3 = sub_ontology({"dog_bark", "rain", "siren"});
    Rng rng(1);
    auto two = sample_absent_events({"dog_bark"}, o3, 2, rng);
    std::sort(two.begin(), two.end());
    CHECK(two == std::vector<std::string>{"rain", "siren"});
    CHECK_THROWS_AS(sample_absent_events(o3.ids(), o3, 1, rng), InsufficientNegativesError);
    CHECK_THROWS_AS(sample_absent_events({"dog_bark"}, o3, 3, rng), InsufficientNegativesError);

    // Uniformity: |complement| = 4, k = 1, 10000 draws -> each class 25% +- 2%.
    const auto o5 = sub_ontology({"dog_bark", "rain", "siren", "car_horn", "bird_chirp"});
    std::map<std::string, int> counts;
    Rng r(2024);
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) counts[sample_absent_events({"dog_bark"}, o5, 1, r)[0]]++;
    CHECK(counts.size() == 4);
    CHECK(counts.count("dog_bark") == 0);
    for (const auto& [id, n] : counts) CHECK(std::abs(n / static_cast<double>(draws) - 0.25) <= 0.02);
}

TEST_CASE("rule responses follow the templates") {
    CHECK(render_rule_response(GenKind::Positive, {"water pouring", "woman talking"}, {}) ==
          "Water pouring sounds, woman talking");
    CHECK(render_rule_response(GenKind::Positive, {"water pouring"}, {}) == "Water pouring sounds");
    const std::string neg =
        render_rule_response(GenKind::Negative, {}, {"a car driving by", "birds chirping", "a dog barking"});
    CHECK(neg.find("not present in the audio") != std::string::npos);
    CHECK(neg.find("1. A car driving by 2. Birds chirping 3. A dog barking") != std::string::npos);
    const std::string comb = render_rule_response(GenKind::Combined, {"a woman's voice"}, {"a dog barking"});
    const auto present = comb.find("A woman's voice"), absent = comb.find("A dog barking");
    CHECK(present != std::string::npos);
    CHECK(absent != std::string::npos);
    CHECK(present < absent);
    CHECK(comb.find("Contrastive examples of specific sound") != std::string::npos);
    CHECK_THROWS_AS(render_rule_response(GenKind::Negative, {"x"}, {}), ArgumentError);
    CHECK_THROWS_AS(render_rule_response(GenKind::Combined, {}, {"x"}), ArgumentError);
    CHECK_THROWS_AS(render_rule_response(GenKind::Positive, {}, {}), ArgumentError);
}

TEST_CASE("language-model synthesis contract") {
    MockClient echo("  canned answer \n");
    CHECK(synthesize_with_lm(echo, "prompt") == "canned answer");
    MockClient empty("");
    CHECK_THROWS_AS(synthesize_with_lm(empty, "prompt"), EmptyResponseError);
    MockClient blank("   ");
    CHECK_THROWS_AS(synthesize_with_lm(blank, "prompt"), EmptyResponseError);
    CHECK_THROWS_AS(HttpClient("https://example.invalid"), ConfigError);
    // Nothing listens on this port; the failure must carry the prompt.
    HttpClient dead("http://127.0.0.1:9/generate", "LISTEN_LLM_TOKEN", std::chrono::seconds(1));
    try {
        dead.generate({"the prompt", 8, true});
        FAIL("expected a generation error");
    } catch (const GenerationError& e) {
        CHECK(e.prompt() == "the prompt");
    }
}

TEST_CASE("training samples") {
    const auto& o = audio::Ontology::builtin();
    RuleGenerator rule;
    Rng rng(3);
    const ClipAnnotation captioned{"c1", {"water_pour", "woman_talk"}, "The sound of water pouring and woman talking."};
    const auto pos = build_training_sample(captioned, GenKind::Positive, rule, rng, o);
    CHECK(pos.seed.kind == SeedKind::Caption);
    CHECK(pos.response == "Water pouring sounds, woman talking");
    CHECK(pos.absent_tags_used.empty());
    CHECK(pos.final_prompt.substr(pos.placeholder_span.begin, pos.placeholder_span.end - pos.placeholder_span.begin) ==
          pos.seed.text);

    const ClipAnnotation tagged{"c2", {"dog_bark"}, ""};
    const auto neg = build_training_sample(tagged, GenKind::Negative, rule, rng, o);
    CHECK(neg.seed.kind == SeedKind::Tag);
    CHECK(neg.seed.text == "dog barking");
    CHECK(neg.absent_tags_used.size() == 3);
    CHECK(std::find(neg.absent_tags_used.begin(), neg.absent_tags_used.end(), "dog_bark") == neg.absent_tags_used.end());

    const auto comb = build_training_sample(captioned, GenKind::Combined, rule, rng, o);
    CHECK(comb.response.find(std::string(templates::kCombinedPresentHeader)) != std::string::npos);
    CHECK(comb.response.find(std::string(templates::kCombinedAbsentHeader)) != std::string::npos);
    CHECK(TrainingSample::from_json(comb.to_json()).to_json() == comb.to_json());

    // Swapping the generator changes only the response and generator id.
    MockClient mock("Something else entirely.");
    LmGenerator lm(mock);
    Rng a(9), b(9);
    const auto s1 = build_training_sample(tagged, GenKind::Negative, rule, a, o);
    const auto s2 = build_training_sample(tagged, GenKind::Negative, lm, b, o);
    CHECK(s1.final_prompt == s2.final_prompt);
    CHECK(s1.placeholder_span == s2.placeholder_span);
    CHECK(s2.response == "Something else entirely.");
    CHECK(s2.generator_id == "mock");
}

TEST_CASE("rule responses are sound with respect to clip metadata") {
    const auto corpus = audio::build_corpus({40, 10, 8, 1, 20.0});
    RuleGenerator rule;
    Rng rng(5);
    for (const auto& clip : pool_of(corpus)) {
        for (GenKind kind : {GenKind::Positive, GenKind::Negative, GenKind::Combined}) {
            const auto s = build_training_sample(clip, kind, rule, rng, corpus.ontology);
            for (const auto& a : s.absent_tags_used)
                CHECK(std::find(clip.tags.begin(), clip.tags.end(), a) == clip.tags.end());
            // Every class named anywhere in the response is either present (and in a present
            // section) or one of the sampled absent classes.
            for (const auto& c : corpus.ontology.classes()) {
                std::string cap = c.display_name;
                cap[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(cap[0])));
                const bool named = s.response.find(c.display_name) != std::string::npos ||
                                   s.response.find(cap) != std::string::npos;
                const bool present = std::find(clip.tags.begin(), clip.tags.end(), c.id) != clip.tags.end();
                const bool absent_used =
                    std::find(s.absent_tags_used.begin(), s.absent_tags_used.end(), c.id) != s.absent_tags_used.end();
                if (kind == GenKind::Positive) CHECK(named == present);
                if (kind == GenKind::Negative) CHECK(named == absent_used);
                if (kind == GenKind::Combined) CHECK(named == (present || absent_used));
            }
        }
    }
}

TEST_CASE("ablation splits account for 2N data points") {
    const auto corpus = audio::build_corpus({40, 10, 8, 2, 20.0});
    const auto pool = pool_of(corpus);
    std::set<std::string> pool_ids;
    for (const auto& c : pool) pool_ids.insert(c.clip_id);
    RuleGenerator rule;
    for (int n : {1, 4, 7, 20}) {
        Rng rng(static_cast<std::uint64_t>(n));
        const auto s = build_ablation_splits(pool, n, rule, rng, corpus.ontology);
        CHECK(s.pos_only.samples.size() == static_cast<std::size_t>(2 * n));
        CHECK(s.pos_neg.samples.size() == static_cast<std::size_t>(2 * n));
        CHECK(s.combined.samples.size() == static_cast<std::size_t>(n));
        for (const auto* m : {&s.pos_only, &s.pos_neg, &s.combined}) {
            CHECK(m->effective_count == 2 * n);
            CHECK(effective_count(m->samples) == 2 * n);
            for (const auto& smp : m->samples) CHECK(pool_ids.count(smp.clip_id) == 1);
        }
        const auto positives = std::count_if(s.pos_neg.samples.begin(), s.pos_neg.samples.end(),
                                             [](const TrainingSample& t) { return t.gen.kind == GenKind::Positive; });
        CHECK(positives == n);
    }
    // A pool smaller than 2N reuses clips [0, N) twice and says so.
    Rng small_rng(3);
    const auto reuse = build_ablation_splits(pool, 30, rule, small_rng, corpus.ontology);
    CHECK(reuse.pos_only.clip_policy == "two_per_clip");
    std::set<std::string> reused_ids;
    for (const auto* m : {&reuse.pos_only, &reuse.pos_neg, &reuse.combined}) {
        CHECK(m->effective_count == 60);
        for (const auto& smp : m->samples) reused_ids.insert(smp.clip_id);
    }
    CHECK(reused_ids.size() == 30);
    Rng rng(0);
    CHECK(build_ablation_splits(pool, 20, rule, rng, corpus.ontology).pos_neg.clip_policy == "distinct");
    CHECK_THROWS_AS(build_ablation_splits(pool, 0, rule, rng, corpus.ontology), ConfigError);
    CHECK_THROWS_AS(build_ablation_splits(pool, 41, rule, rng, corpus.ontology), ConfigError);
}

TEST_CASE("dataset manifests round-trip through JSONL") {
    const auto corpus = audio::build_corpus({12, 10, 8, 3, 20.0});
    RuleGenerator rule;
    Rng rng(4);
    const auto m = build_dataset(pool_of(corpus), GenKind::Combined, rule, rng, corpus.ontology, "comb");
    const auto path = std::filesystem::temp_directory_path() / "listen_unit_dataset.jsonl";
    m.save(path);
    const auto back = DatasetManifest::load(path);
    CHECK(back.samples.size() == m.samples.size());
    CHECK(back.effective_count == 24);
    for (std::size_t i = 0; i < m.samples.size(); ++i) CHECK(back.samples[i].to_json() == m.samples[i].to_json());
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".meta.json");
}
