#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "doctest.h"
#include "listen/audio_world.hpp"
#include "listen/errors.hpp"

using namespace listen;
using namespace listen::audio;

namespace {

// Magnitude of a single DFT bin, computed directly from the definition.
double dft_magnitude(const std::vector<float>& x, int bin) {
    std::complex<double> acc = 0.0;
    const double n = static_cast<double>(x.size());
    for (std::size_t t = 0; t < x.size(); ++t)
        acc += static_cast<double>(x[t]) * std::polar(1.0, -2.0 * std::numbers::pi * bin * static_cast<double>(t) / n);
    return std::abs(acc);
}

double energy(const std::vector<float>& x) {
    double e = 0.0;
    for (float v : x) e += static_cast<double>(v) * v;
    return e;
}

}  // namespace

TEST_CASE("builtin ontology relations") {
    const Ontology& o = Ontology::builtin();
    CHECK(o.size() == 12);
    CHECK(ontology_lookup(o, Relation::Hypernym, "dog_bark") == std::vector<std::string>{"animal sound"});
    CHECK(ontology_lookup(o, Relation::Synonym, "car_horn") == std::vector<std::string>{"vehicle honk"});
    CHECK_THROWS_AS(ontology_lookup(o, Relation::Hypernym, "unknown_id"), LookupError);
    std::set<std::string> ids;
    for (const auto& c : o.classes()) {
        ids.insert(c.id);
        CHECK(!c.synonyms.empty());
        CHECK(!c.hypernyms.empty());
    }
    CHECK(ids.size() == o.size());
    CHECK(Ontology::from_json(o.to_json()).ids() == o.ids());
}

TEST_CASE("event waveform length, determinism and peak") {
    const Ontology& o = Ontology::builtin();
    const auto a = gen_event_waveform(o, "car_horn", 1.0, 7);
    const auto b = gen_event_waveform(o, "car_horn", 1.0, 7);
    CHECK(a.size() == 16000);
    CHECK(a == b);
    for (const auto& id : o.ids()) {
        const auto w = gen_event_waveform(o, id, 1.5, 3);
        float peak = 0.0f;
        for (float v : w) peak = std::max(peak, std::abs(v));
        CHECK(peak <= kMaxSignaturePeak + 1e-7);
    }
    CHECK_THROWS_AS(gen_event_waveform(o, "nope", 1.0, 0), LookupError);
    CHECK_THROWS_AS(gen_event_waveform(o, "car_horn", 0.0, 0), ArgumentError);
}

TEST_CASE("440 Hz tone class has its dominant DFT bin at 440 Hz") {
    const auto w = gen_event_waveform(Ontology::builtin(), "car_horn", 1.0, 7);
    // 1 s at 16 kHz: bin k is k Hz. Scan the audible range coarsely, then the neighbourhood.
    int best = 0;
    double best_mag = -1.0;
    for (int bin = 20; bin < 8000; bin += 20) {
        const double m = dft_magnitude(w, bin);
        if (m > best_mag) best_mag = m, best = bin;
    }
    for (int bin = best - 19; bin <= best + 19; ++bin) {
        const double m = dft_magnitude(w, bin);
        if (m > best_mag) best_mag = m, best = bin;
    }
    CHECK(best == 440);
}

TEST_CASE("clip SNR is 20 dB within 1 dB") {
    const Ontology& o = Ontology::builtin();
    for (const auto& tags : std::vector<std::vector<std::string>>{{"dog_bark"}, {"dog_bark", "rain"}, {"siren", "car_horn", "rain"}}) {
        ClipSpec spec{"c", tags, 2.0, 20.0, 3, Split::Train};
        const auto clean = render_clean_mix(o, spec);
        const auto clip = gen_clip(o, spec);
        REQUIRE(clean.size() == clip.waveform.size());
        std::vector<float> noise(clean.size());
        for (std::size_t i = 0; i < clean.size(); ++i) noise[i] = clip.waveform[i] - clean[i];
        const double snr = 10.0 * std::log10(energy(clean) / energy(noise));
        CHECK(std::abs(snr - 20.0) <= 1.0);
    }
}

TEST_CASE("clip captions name every present tag exactly once") {
    const Ontology& o = Ontology::builtin();
    const auto one = gen_clip(o, {"c1", {"dog_bark"}, 1.0, 20.0, 3, Split::Train});
    CHECK(one.present_tags == std::vector<std::string>{"dog_bark"});
    CHECK(one.caption.find("dog barking") != std::string::npos);
    CHECK(one.waveform.size() == 16000);
    const auto two = gen_clip(o, {"c2", {"dog_bark", "rain"}, 1.0, 20.0, 3, Split::Train});
    CHECK(two.caption.find("dog barking") != std::string::npos);
    CHECK(two.caption.find("rain") != std::string::npos);
    CHECK_THROWS_AS(gen_clip(o, {"c3", {}, 1.0, 20.0, 3, Split::Train}), ArgumentError);
    for (float v : two.waveform) CHECK((v >= -1.0f && v <= 1.0f));
}

TEST_CASE("corpus determinism, disjoint splits and eval coverage") {
    const CorpusConfig cfg{200, 50, 8, 0, 20.0};
    const auto a = build_corpus(cfg);
    const auto b = build_corpus(cfg);
    CHECK(a.to_json() == b.to_json());
    CHECK(a.split(Split::Train).size() == 200);
    CHECK(a.split(Split::Eval).size() == 50);

    std::set<std::string> train_ids, eval_ids;
    for (const auto* c : a.split(Split::Train)) train_ids.insert(c->clip_id);
    for (const auto* c : a.split(Split::Eval)) eval_ids.insert(c->clip_id);
    for (const auto& id : eval_ids) CHECK(train_ids.count(id) == 0);

    for (const auto& id : a.ontology.ids()) {
        bool present = false, absent = false;
        for (const auto* c : a.split(Split::Eval)) {
            const bool has = std::find(c->tags.begin(), c->tags.end(), id) != c->tags.end();
            present |= has;
            absent |= !has;
        }
        CHECK(present);
        CHECK(absent);
    }
    // Caption/tag consistency: the display names found in each caption are exactly the tags'.
    for (const auto& spec : a.clips) {
        const std::string caption = caption_for(a.ontology, spec.tags);
        CHECK((spec.tags.size() >= 1 && spec.tags.size() <= 3));
        for (const auto& c : a.ontology.classes()) {
            const bool tagged = std::find(spec.tags.begin(), spec.tags.end(), c.id) != spec.tags.end();
            CHECK((caption.find(c.display_name) != std::string::npos) == tagged);
        }
    }
    CHECK_THROWS_AS(build_corpus({200, 1, 8, 0, 20.0}), ConfigError);
}

TEST_CASE("corpus manifest round-trips through disk") {
    const auto m = build_corpus({20, 10, 8, 5, 20.0});
    const auto path = std::filesystem::temp_directory_path() / "listen_unit_corpus.json";
    m.save(path);
    const auto back = CorpusManifest::load(path);
    CHECK(back.to_json() == m.to_json());
    const auto clips = materialize(back, Split::Eval);
    CHECK(clips.size() == 10);
    CHECK(clips[0].waveform == gen_clip(m.ontology, m.find(clips[0].clip_id)).waveform);
    std::filesystem::remove(path);
}

TEST_CASE("wav round-trip and manifest ingestion") {
    const auto dir = std::filesystem::temp_directory_path() / "listen_unit_ingest";
    std::filesystem::create_directories(dir);
    const Ontology& o = Ontology::builtin();
    const auto clip = gen_clip(o, {"x", {"siren"}, 0.5, 20.0, 1, Split::Train});
    write_wav(dir / "x.wav", clip.waveform);
    int sr = 0;
    CHECK(read_wav(dir / "x.wav", &sr) == clip.waveform);
    CHECK(sr == 16000);
    {
        std::ofstream m(dir / "m.jsonl");
        m << R"({"clip_id":"a","audio_path":"x.wav","tags":["siren"],"split":"train"})" << "\n";
        m << R"({"clip_id":"b","audio_path":"x.wav","caption":"A siren and a dog barking nearby.","split":"eval"})" << "\n";
    }
    const auto clips = ingest_manifest(dir / "m.jsonl", o);
    REQUIRE(clips.size() == 2);
    CHECK(clips[0].present_tags == std::vector<std::string>{"siren"});
    CHECK(clips[1].split == Split::Eval);
    CHECK(clips[1].caption == "A siren and a dog barking nearby.");
    {
        std::ofstream m(dir / "bad.jsonl");
        m << R"({"clip_id":"a","audio_path":"x.wav","split":"train"})" << "\n";
    }
    CHECK_THROWS_AS(ingest_manifest(dir / "bad.jsonl", o), FormatError);
    std::filesystem::remove_all(dir);
}
