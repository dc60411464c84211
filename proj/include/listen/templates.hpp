#pragma once

#include <string>
#include <string_view>

// Fixed, versioned text templates shared by data synthesis, the toy LM's
// pretraining corpus and the probes.
namespace listen::templates {

inline constexpr std::string_view kVersion = "listen-templates/1";

inline constexpr std::string_view kBeginAudio = "[Begin of audio]";
inline constexpr std::string_view kEndAudio = "[End of audio]";

inline constexpr std::string_view kPositivePrompt = "Replay the audio.";
inline constexpr std::string_view kNegativePrompt = "Identify sounds that are absent as contrasting examples.";
inline constexpr std::string_view kCombinedPrompt =
    "Replay the audio and identify sounds that are absent as contrasting examples.";

inline constexpr std::string_view kNegativeHeader =
    "Based on the provided audio, here are some specific sound events that are not present in the audio:";
inline constexpr std::string_view kCombinedPresentHeader = "Specific sound events detected in the provided audio:";
inline constexpr std::string_view kCombinedAbsentHeader =
    "Contrastive examples of specific sound events not present in the provided audio:";

inline constexpr std::string_view kAnswerYesNo = "Answer yes or no.";
inline constexpr std::string_view kCountQuestion = "How many distinct sound events occur?";

inline std::string hallucination_question(const std::string& display_name) {
    return "Is there a " + display_name + " sound in the audio? " + std::string(kAnswerYesNo);
}

inline std::string synhyp_question(const std::string& phrase) {
    return "Is the sound from an object that is " + phrase + "? " + std::string(kAnswerYesNo);
}

inline std::string count_word(int n) {
    static constexpr const char* kWords[] = {"zero", "one", "two", "three", "four", "five"};
    return (n >= 0 && n <= 5) ? kWords[n] : std::to_string(n);
}

}  // namespace listen::templates
