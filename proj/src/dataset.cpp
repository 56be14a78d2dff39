#include "aiive/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "aiive/error.hpp"
#include "aiive/rng.hpp"

namespace aiive {

Dataset::Dataset(BasicMatrix<float> images, std::vector<int> labels, std::size_t num_classes,
                 std::array<std::size_t, 3> split_counts)
    : images_(std::move(images)), labels_(std::move(labels)), classes_(num_classes),
      counts_(split_counts)
{
    if (images_.rows() != labels_.size())
        throw ShapeError("dataset: " + std::to_string(images_.rows()) + " images but " +
                         std::to_string(labels_.size()) + " labels");
    if (counts_[0] + counts_[1] + counts_[2] != labels_.size())
        throw InvalidArgument("dataset: split counts do not add up to N");
    if (classes_ < 1)
        throw InvalidArgument("dataset: need at least one class");
    for (int l : labels_)
        if (l < 0 || static_cast<std::size_t>(l) >= classes_)
            throw InvalidArgument("dataset: label " + std::to_string(l) + " out of range");
}

std::size_t Dataset::split_offset(Split s) const
{
    switch (s) {
    case Split::Train:
        return 0;
    case Split::Validation:
        return counts_[0];
    case Split::Test:
        return counts_[0] + counts_[1];
    }
    return 0;
}

std::vector<std::size_t> Dataset::indices(Split s) const
{
    std::vector<std::size_t> idx(split_size(s));
    const std::size_t off = split_offset(s);
    for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = off + i;
    return idx;
}

void Dataset::gather(std::span<const std::size_t> rows, Matrix& x, std::vector<int>& labels) const
{
    if (x.rows() != rows.size() || x.cols() != input_dim())
        x = Matrix(rows.size(), input_dim());
    labels.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = images_.row(rows[i]);
        std::copy(src.begin(), src.end(), x.row(i).begin());
        labels[i] = labels_[rows[i]];
    }
}

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix)
{
    return std::filesystem::path(prefix.string() + suffix);
}

} // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& prefix)
{
    {
        std::ofstream meta(with_suffix(prefix, ".meta"));
        if (!meta)
            throw IoError("cannot write " + with_suffix(prefix, ".meta").string());
        const auto& c = ds.split_counts();
        meta << kDatasetMagic << "\n"
             << "N " << ds.size() << "\n"
             << "D " << ds.input_dim() << "\n"
             << "C " << ds.num_classes() << "\n"
             << "SPLIT " << c[0] << " " << c[1] << " " << c[2] << "\n";
    }

    std::ofstream bin(with_suffix(prefix, ".bin"), std::ios::binary);
    if (!bin)
        throw IoError("cannot write " + with_suffix(prefix, ".bin").string());
    std::vector<char> buf;
    buf.reserve(ds.images().size() * 4 + ds.size());
    for (float v : ds.images().flat()) {
        const auto bits = std::bit_cast<std::uint32_t>(v);
        for (int b = 0; b < 4; ++b)
            buf.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
    }
    for (int l : ds.labels())
        buf.push_back(static_cast<char>(static_cast<std::uint8_t>(l)));
    bin.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!bin)
        throw IoError("short write to " + with_suffix(prefix, ".bin").string());
}

Dataset load_dataset(const std::filesystem::path& prefix)
{
    const auto meta_path = with_suffix(prefix, ".meta");
    std::ifstream meta(meta_path);
    if (!meta)
        throw IoError("cannot open " + meta_path.string());

    std::string magic;
    std::getline(meta, magic);
    if (magic != kDatasetMagic)
        throw IoError(meta_path.string() + ": bad magic '" + magic + "'");

    std::size_t n = 0, d = 0, c = 0;
    std::array<std::size_t, 3> counts{};
    bool have_n = false, have_d = false, have_c = false, have_split = false;
    std::string line;
    while (std::getline(meta, line)) {
        std::istringstream in(line);
        std::string key;
        if (!(in >> key))
            continue;
        if (key == "N")
            have_n = static_cast<bool>(in >> n);
        else if (key == "D")
            have_d = static_cast<bool>(in >> d);
        else if (key == "C")
            have_c = static_cast<bool>(in >> c);
        else if (key == "SPLIT")
            have_split = static_cast<bool>(in >> counts[0] >> counts[1] >> counts[2]);
        else
            throw IoError(meta_path.string() + ": unknown key '" + key + "'");
    }
    if (!(have_n && have_d && have_c && have_split))
        throw IoError(meta_path.string() + ": missing N, D, C or SPLIT");
    if (c > 256)
        throw IoError(meta_path.string() + ": labels are uint8, C must be <= 256");

    const auto bin_path = with_suffix(prefix, ".bin");
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin)
        throw IoError("cannot open " + bin_path.string());
    const std::size_t expected = n * d * 4 + n;
    std::vector<char> buf(expected);
    bin.read(buf.data(), static_cast<std::streamsize>(expected));
    if (static_cast<std::size_t>(bin.gcount()) != expected || bin.peek() != EOF)
        throw IoError(bin_path.string() + ": size does not match " + meta_path.string());

    BasicMatrix<float> images(n, d);
    auto flat = images.flat();
    for (std::size_t i = 0; i < n * d; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[i * 4 + b])) << (8 * b);
        flat[i] = std::bit_cast<float>(bits);
    }
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i)
        labels[i] = static_cast<unsigned char>(buf[n * d * 4 + i]);

    try {
        return Dataset(std::move(images), std::move(labels), c, counts);
    } catch (const std::exception& e) {
        throw IoError(meta_path.string() + ": " + e.what());
    }
}

namespace {

// Per-sample jitter: integer translation and brightness gain.
constexpr std::ptrdiff_t kMaxShift = 10;
constexpr double kMinGain = 0.6;
constexpr double kMaxGain = 1.2;

// Blob geometry; sigmas are fractions of the image side.
constexpr int kBlobsPerClass = 3;
constexpr double kMinSigma = 0.04;
constexpr double kMaxSigma = 0.08;
constexpr double kMinAmplitude = 0.3;
constexpr double kMaxAmplitude = 0.8;

struct Blob {
    double cx, cy, sigma, amplitude;
};

std::vector<Blob> random_blobs(int count, double side, double min_sigma, double max_sigma,
                               double min_amp, double max_amp, Rng& rng)
{
    std::vector<Blob> blobs;
    for (int i = 0; i < count; ++i)
        blobs.push_back({rng.uniform(0.15 * side, 0.85 * side), rng.uniform(0.15 * side, 0.85 * side),
                         rng.uniform(min_sigma * side, max_sigma * side), rng.uniform(min_amp, max_amp)});
    return blobs;
}

std::vector<double> render_template(std::size_t side, const std::vector<Blob>& blobs)
{
    std::vector<double> t(side * side);
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
            double v = 0.0;
            for (const Blob& b : blobs) {
                const double dx = static_cast<double>(x) - b.cx;
                const double dy = static_cast<double>(y) - b.cy;
                v += b.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
            }
            t[y * side + x] = std::clamp(v, 0.0, 1.0);
        }
    return t;
}

} // namespace

Dataset generate_synthetic(const SyntheticConfig& cfg)
{
    if (cfg.num_classes < 1 || cfg.num_classes > 256)
        throw InvalidArgument("synthetic: num_classes must be in [1, 256]");
    if (cfg.side < 1)
        throw InvalidArgument("synthetic: side must be >= 1");
    const std::size_t d = cfg.side * cfg.side;
    const std::size_t n = cfg.counts[0] + cfg.counts[1] + cfg.counts[2];

    Rng template_rng(Rng::derive(cfg.seed, 0));
    const auto side_d = static_cast<double>(cfg.side);
    std::vector<std::vector<double>> templates;
    for (std::size_t c = 0; c < cfg.num_classes; ++c)
        templates.push_back(render_template(
            cfg.side, random_blobs(kBlobsPerClass, side_d, kMinSigma, kMaxSigma, kMinAmplitude,
                                   kMaxAmplitude, template_rng)));

    Rng label_rng(Rng::derive(cfg.seed, 1));
    std::vector<int> labels;
    labels.reserve(n);
    for (std::size_t count : cfg.counts) {
        std::vector<int> split(count);
        for (std::size_t i = 0; i < count; ++i)
            split[i] = static_cast<int>(i % cfg.num_classes);
        for (std::size_t i = count; i > 1; --i)
            std::swap(split[i - 1], split[label_rng.below(i)]);
        labels.insert(labels.end(), split.begin(), split.end());
    }

    Rng pixel_rng(Rng::derive(cfg.seed, 2));
    const auto side = static_cast<std::ptrdiff_t>(cfg.side);
    BasicMatrix<float> images(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = templates[static_cast<std::size_t>(labels[i])];
        const auto dx = static_cast<std::ptrdiff_t>(pixel_rng.below(2 * kMaxShift + 1)) - kMaxShift;
        const auto dy = static_cast<std::ptrdiff_t>(pixel_rng.below(2 * kMaxShift + 1)) - kMaxShift;
        const double gain = pixel_rng.uniform(kMinGain, kMaxGain);
        auto row = images.row(i);
        for (std::ptrdiff_t y = 0; y < side; ++y)
            for (std::ptrdiff_t x = 0; x < side; ++x) {
                const std::ptrdiff_t sx = x - dx;
                const std::ptrdiff_t sy = y - dy;
                double v = 0.0;
                if (sx >= 0 && sx < side && sy >= 0 && sy < side)
                    v = gain * t[static_cast<std::size_t>(sy * side + sx)];
                v += cfg.noise_sigma * pixel_rng.normal();
                row[static_cast<std::size_t>(y * side + x)] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
    }
    return Dataset(std::move(images), std::move(labels), cfg.num_classes, cfg.counts);
}

} // namespace aiive
