#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace aiive {

enum class SonificationMode { AccuracyBoth, Split, LossBoth };

enum class SignalSource { Accuracy, Loss, LearningRate, Momentum };

enum class FrequencyScale { Linear, LogDomain };

std::string_view to_string(SonificationMode mode);
std::string_view to_string(SignalSource source);
std::string_view to_string(FrequencyScale scale);
// InvalidArgument on unknown names.
SonificationMode parse_sonification_mode(std::string_view name);

inline constexpr double kMinAudibleHz = 20.0;
inline constexpr double kMaxAudibleHz = 8000.0;

struct FrequencyMapping {
    SignalSource source = SignalSource::Accuracy;
    double f_min = 220.0;
    double f_max = 880.0;
    double domain_min = 0.0;
    double domain_max = 1.0;
    FrequencyScale scale = FrequencyScale::Linear;

    void validate() const;
    friend bool operator==(const FrequencyMapping&, const FrequencyMapping&) = default;
};

// Default mapping for each signal. The loss domain is [0, 1.5 ln C].
FrequencyMapping default_mapping(SignalSource source, std::size_t num_classes = 7);

struct SonificationConfig {
    SonificationMode mode = SonificationMode::AccuracyBoth;
    FrequencyMapping accuracy = default_mapping(SignalSource::Accuracy);
    FrequencyMapping loss = default_mapping(SignalSource::Loss);
    FrequencyMapping learning_rate = default_mapping(SignalSource::LearningRate);
    FrequencyMapping momentum = default_mapping(SignalSource::Momentum);

    static SonificationConfig defaults(std::size_t num_classes);
    void validate() const;
    friend bool operator==(const SonificationConfig&, const SonificationConfig&) = default;
};

// Value is clamped into the domain first. NumericError on non-finite input.
double map_to_freq(const FrequencyMapping& mapping, double value);

// (left, right)
std::pair<double, double> route(SonificationMode mode, double freq_accuracy, double freq_loss);

// Frequencies sounding on each channel from `start` until the next segment.
// A channel may carry several voices; silence is an empty list.
struct ToneSegment {
    double start = 0.0; // seconds
    std::vector<double> left;
    std::vector<double> right;
};

struct AudioFrame {
    std::uint32_t sample_rate = 44100;
    std::vector<float> left;
    std::vector<float> right;

    std::size_t frames() const { return left.size(); }
};

inline constexpr double kToneAmplitude = 0.5;
inline constexpr double kRampSeconds = 0.005;
inline constexpr std::size_t kMaxVoices = 4;

// Phase-continuous sine synthesis. Voice gains slew over kRampSeconds when the
// voice count changes; the whole clip fades in and out over the same ramp.
// Segments must have non-decreasing, non-negative start times.
AudioFrame render(const std::vector<ToneSegment>& timeline, std::uint32_t sample_rate,
                  double duration);

// RIFF PCM, 16-bit little-endian, stereo.
void write_wav(const std::filesystem::path& path, const AudioFrame& frame);
AudioFrame read_wav(const std::filesystem::path& path);

} // namespace aiive
