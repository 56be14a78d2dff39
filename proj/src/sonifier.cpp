#include "aiive/sonifier.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include "aiive/error.hpp"

namespace aiive {

std::string_view to_string(SonificationMode mode)
{
    switch (mode) {
    case SonificationMode::AccuracyBoth: return "accuracy_both";
    case SonificationMode::Split: return "split";
    case SonificationMode::LossBoth: return "loss_both";
    }
    return "?";
}

std::string_view to_string(SignalSource source)
{
    switch (source) {
    case SignalSource::Accuracy: return "accuracy";
    case SignalSource::Loss: return "loss";
    case SignalSource::LearningRate: return "learning_rate";
    case SignalSource::Momentum: return "momentum";
    }
    return "?";
}

std::string_view to_string(FrequencyScale scale)
{
    return scale == FrequencyScale::Linear ? "linear" : "log";
}

SonificationMode parse_sonification_mode(std::string_view name)
{
    for (auto m : {SonificationMode::AccuracyBoth, SonificationMode::Split, SonificationMode::LossBoth})
        if (to_string(m) == name)
            return m;
    throw InvalidArgument("unknown sonification mode '" + std::string(name) + "'");
}

void FrequencyMapping::validate() const
{
    if (!(std::isfinite(f_min) && std::isfinite(f_max) && kMinAudibleHz <= f_min && f_min < f_max &&
          f_max <= kMaxAudibleHz))
        throw InvalidArgument("frequency range must satisfy 20 <= f_min < f_max <= 8000");
    if (!(std::isfinite(domain_min) && std::isfinite(domain_max) && domain_min < domain_max))
        throw InvalidArgument("mapping domain must satisfy domain_min < domain_max");
    if (scale == FrequencyScale::LogDomain && domain_min <= 0.0)
        throw InvalidArgument("log-domain mapping needs a positive domain");
}

FrequencyMapping default_mapping(SignalSource source, std::size_t num_classes)
{
    FrequencyMapping m;
    m.source = source;
    switch (source) {
    case SignalSource::Accuracy:
        break;
    case SignalSource::Loss:
        if (num_classes < 2)
            throw InvalidArgument("loss mapping needs at least two classes");
        m.domain_max = 1.5 * std::log(static_cast<double>(num_classes));
        break;
    case SignalSource::LearningRate:
        m.domain_min = 1e-4;
        m.domain_max = 1.0;
        m.scale = FrequencyScale::LogDomain;
        break;
    case SignalSource::Momentum:
        m.domain_max = 0.999;
        break;
    }
    return m;
}

SonificationConfig SonificationConfig::defaults(std::size_t num_classes)
{
    SonificationConfig c;
    c.loss = default_mapping(SignalSource::Loss, num_classes);
    return c;
}

void SonificationConfig::validate() const
{
    accuracy.validate();
    loss.validate();
    learning_rate.validate();
    momentum.validate();
}

double map_to_freq(const FrequencyMapping& mapping, double value)
{
    if (!std::isfinite(value))
        throw NumericError("cannot sonify non-finite " + std::string(to_string(mapping.source)));
    mapping.validate();
    double v = std::clamp(value, mapping.domain_min, mapping.domain_max);
    double lo = mapping.domain_min;
    double hi = mapping.domain_max;
    if (mapping.scale == FrequencyScale::LogDomain) {
        v = std::log(v);
        lo = std::log(lo);
        hi = std::log(hi);
    }
    const double f = mapping.f_min + (mapping.f_max - mapping.f_min) * (v - lo) / (hi - lo);
    return std::clamp(f, mapping.f_min, mapping.f_max);
}

std::pair<double, double> route(SonificationMode mode, double freq_accuracy, double freq_loss)
{
    switch (mode) {
    case SonificationMode::AccuracyBoth: return {freq_accuracy, freq_accuracy};
    case SonificationMode::Split: return {freq_loss, freq_accuracy};
    case SonificationMode::LossBoth: return {freq_loss, freq_loss};
    }
    throw InvalidArgument("unknown sonification mode");
}

namespace {

struct Voice {
    double phase = 0.0;
    double gain = 0.0;
};

void check_voices(const std::vector<double>& freqs)
{
    if (freqs.size() > kMaxVoices)
        throw InvalidArgument("too many voices on one channel");
    for (double f : freqs)
        if (!(f >= kMinAudibleHz && f <= kMaxAudibleHz))
            throw InvalidArgument("tone frequency " + std::to_string(f) + " Hz outside [20, 8000]");
}

class Channel {
public:
    float sample(const std::vector<double>& freqs, double sample_rate, double slew)
    {
        const double target = freqs.empty() ? 0.0 : kToneAmplitude / static_cast<double>(freqs.size());
        double s = 0.0;
        for (std::size_t k = 0; k < kMaxVoices; ++k) {
            Voice& v = voices_[k];
            const double want = k < freqs.size() ? target : 0.0;
            if (v.gain < want)
                v.gain = std::min(want, v.gain + slew);
            else if (v.gain > want)
                v.gain = std::max(want, v.gain - slew);
            if (v.gain > 0.0)
                s += v.gain * std::sin(v.phase);
            if (k < freqs.size()) {
                v.phase += 2.0 * std::numbers::pi * freqs[k] / sample_rate;
                if (v.phase >= 2.0 * std::numbers::pi)
                    v.phase -= 2.0 * std::numbers::pi;
            }
        }
        return static_cast<float>(s);
    }

private:
    std::array<Voice, kMaxVoices> voices_{};
};

} // namespace

AudioFrame render(const std::vector<ToneSegment>& timeline, std::uint32_t sample_rate, double duration)
{
    if (sample_rate == 0)
        throw InvalidArgument("sample rate must be positive");
    if (!std::isfinite(duration) || duration < 0.0)
        throw InvalidArgument("duration must be finite and non-negative");
    double prev = 0.0;
    for (const ToneSegment& seg : timeline) {
        if (!std::isfinite(seg.start) || seg.start < prev)
            throw InvalidArgument("timeline start times must be non-negative and non-decreasing");
        prev = seg.start;
        check_voices(seg.left);
        check_voices(seg.right);
    }

    AudioFrame out;
    out.sample_rate = sample_rate;
    if (timeline.empty())
        return out;

    const double rate = static_cast<double>(sample_rate);
    const auto n = static_cast<std::size_t>(std::llround(duration * rate));
    out.left.resize(n);
    out.right.resize(n);

    const double ramp = kRampSeconds * rate;
    // Full-scale gain change over one ramp.
    const double slew = kToneAmplitude / std::max(1.0, ramp);
    static const std::vector<double> silence;
    Channel left, right;
    std::size_t seg = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        while (seg + 1 < timeline.size() && timeline[seg + 1].start <= t)
            ++seg;
        const bool started = timeline[seg].start <= t;
        const auto& fl = started ? timeline[seg].left : silence;
        const auto& fr = started ? timeline[seg].right : silence;
        const double edge = std::min(static_cast<double>(i), static_cast<double>(n - 1 - i));
        const double env = std::min(1.0, edge / std::max(1.0, ramp));
        out.left[i] = std::clamp(static_cast<float>(env) * left.sample(fl, rate, slew), -1.0f, 1.0f);
        out.right[i] = std::clamp(static_cast<float>(env) * right.sample(fr, rate, slew), -1.0f, 1.0f);
    }
    return out;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v)
{
    const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 24)};
    os.write(b, 4);
}

void put_u16(std::ostream& os, std::uint16_t v)
{
    const char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
    os.write(b, 2);
}

std::uint32_t get_u32(const unsigned char* p)
{
    return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p)
{
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::int16_t to_pcm(float s)
{
    return static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0f, 1.0f) * 32767.0f));
}

} // namespace

void write_wav(const std::filesystem::path& path, const AudioFrame& frame)
{
    if (frame.left.size() != frame.right.size())
        throw InvalidArgument("audio channels differ in length");
    const std::uint64_t data_bytes = static_cast<std::uint64_t>(frame.frames()) * 4;
    if (data_bytes > 0xFFFFFFFFull - 36)
        throw InvalidArgument("audio too long for a WAV file");
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw IoError("cannot open " + path.string() + " for writing");
    os.write("RIFF", 4);
    put_u32(os, static_cast<std::uint32_t>(36 + data_bytes));
    os.write("WAVEfmt ", 8);
    put_u32(os, 16);
    put_u16(os, 1); // PCM
    put_u16(os, 2);
    put_u32(os, frame.sample_rate);
    put_u32(os, frame.sample_rate * 4);
    put_u16(os, 4);
    put_u16(os, 16);
    os.write("data", 4);
    put_u32(os, static_cast<std::uint32_t>(data_bytes));
    std::vector<char> buf(static_cast<std::size_t>(data_bytes));
    for (std::size_t i = 0; i < frame.frames(); ++i) {
        const auto l = static_cast<std::uint16_t>(to_pcm(frame.left[i]));
        const auto r = static_cast<std::uint16_t>(to_pcm(frame.right[i]));
        buf[4 * i] = static_cast<char>(l);
        buf[4 * i + 1] = static_cast<char>(l >> 8);
        buf[4 * i + 2] = static_cast<char>(r);
        buf[4 * i + 3] = static_cast<char>(r >> 8);
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os)
        throw IoError("failed writing " + path.string());
}

AudioFrame read_wav(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != "RIFF" ||
        std::string_view(reinterpret_cast<const char*>(bytes.data() + 8), 4) != "WAVE")
        throw IoError(path.string() + ": not a RIFF/WAVE file");

    AudioFrame out;
    bool have_fmt = false;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::string_view id(reinterpret_cast<const char*>(bytes.data() + pos), 4);
        const std::uint32_t len = get_u32(bytes.data() + pos + 4);
        const std::size_t body = pos + 8;
        if (len > bytes.size() - body)
            throw IoError(path.string() + ": truncated chunk");
        if (id == "fmt ") {
            if (len < 16)
                throw IoError(path.string() + ": short fmt chunk");
            const unsigned char* p = bytes.data() + body;
            if (get_u16(p) != 1 || get_u16(p + 2) != 2 || get_u16(p + 14) != 16)
                throw IoError(path.string() + ": only 16-bit stereo PCM is supported");
            out.sample_rate = get_u32(p + 4);
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt)
                throw IoError(path.string() + ": data before fmt");
            const std::size_t n = len / 4;
            out.left.resize(n);
            out.right.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const unsigned char* p = bytes.data() + body + 4 * i;
                out.left[i] = static_cast<float>(static_cast<std::int16_t>(get_u16(p))) / 32767.0f;
                out.right[i] = static_cast<float>(static_cast<std::int16_t>(get_u16(p + 2))) / 32767.0f;
            }
            return out;
        }
        pos = body + len + (len & 1);
    }
    throw IoError(path.string() + ": no data chunk");
}

} // namespace aiive
