#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "aiive/matrix.hpp"

namespace aiive {

enum class Split { Train, Validation, Test };

inline constexpr std::size_t kImageSide = 48;
inline constexpr std::size_t kDefaultInputDim = kImageSide * kImageSide;
inline constexpr std::size_t kDefaultClasses = 7;
inline constexpr std::array<std::size_t, 3> kDefaultSplitCounts{3374, 419, 385};

// Images stored row-major as float32 in [0, 1]. Rows are laid out
// train | validation | test.
class Dataset {
public:
    Dataset(BasicMatrix<float> images, std::vector<int> labels, std::size_t num_classes,
            std::array<std::size_t, 3> split_counts);

    std::size_t size() const { return labels_.size(); }
    std::size_t input_dim() const { return images_.cols(); }
    std::size_t num_classes() const { return classes_; }
    std::size_t split_size(Split s) const { return counts_[static_cast<std::size_t>(s)]; }
    std::size_t split_offset(Split s) const;
    const std::array<std::size_t, 3>& split_counts() const { return counts_; }

    const BasicMatrix<float>& images() const { return images_; }
    const std::vector<int>& labels() const { return labels_; }

    // Copies the given global rows into a double batch matrix and label list.
    void gather(std::span<const std::size_t> rows, Matrix& x, std::vector<int>& labels) const;

    // Global row indices of a split, in storage order.
    std::vector<std::size_t> indices(Split s) const;

private:
    BasicMatrix<float> images_;
    std::vector<int> labels_;
    std::size_t classes_;
    std::array<std::size_t, 3> counts_;
};

// File pair <prefix>.meta / <prefix>.bin. The meta file is text:
//   AIIVE-DS/1
//   N <count>
//   D <input dim>
//   C <classes>
//   SPLIT <train> <validation> <test>
// The bin file is N*D little-endian float32 (row-major) followed by N uint8 labels.
void save_dataset(const Dataset& ds, const std::filesystem::path& prefix);
Dataset load_dataset(const std::filesystem::path& prefix);

inline constexpr const char* kDatasetMagic = "AIIVE-DS/1";

struct SyntheticConfig {
    std::array<std::size_t, 3> counts = kDefaultSplitCounts;
    std::size_t num_classes = kDefaultClasses;
    std::size_t side = kImageSide;
    double noise_sigma = 0.15;
    std::uint64_t seed = 1;
};

// Seven (by default) smooth class templates built from Gaussian blobs; each
// sample is its class template, randomly shifted and scaled, plus i.i.d.
// pixel noise, clamped to [0, 1].
// Labels are balanced within each split.
Dataset generate_synthetic(const SyntheticConfig& cfg);

} // namespace aiive
