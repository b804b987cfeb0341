#ifndef IBGAP_DATA_HPP
#define IBGAP_DATA_HPP

#include "ibgap/common.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace ibgap {

/// Labelled images, one flattened (row-major) image per column, pixels in [0, 1].
struct LabeledDataset {
    MatrixXd images; // d x n
    std::vector<int> labels;
    Index rows = 0;
    Index cols = 0;
    int label_count = 10;
    std::string provenance = "clean";

    Index size() const { return images.cols(); }
    Index dim() const { return images.rows(); }
    bool empty() const { return images.cols() == 0; }

    /// Shape, range and label checks. Throws ConfigError.
    void validate() const;

    LabeledDataset select(const std::vector<Index>& indices) const;
    std::vector<double> label_frequencies() const;
};

/// Builds a dataset from arbitrary feature columns (rows = dim, cols = 1).
LabeledDataset make_dataset(MatrixXd features, std::vector<int> labels, int label_count);

enum class PerturbOrder { rotate_then_translate, translate_then_rotate };

struct PerturbSpec {
    int max_translation = 5;
    double angle_range = 0.78539816339744830962; // pi/4
    std::uint64_t rng_seed = 0;
    PerturbOrder order = PerturbOrder::rotate_then_translate;

    void validate() const;
};

/// Reads an IDX image/label pair (optionally gzip-compressed). Pixels are scaled by 1/255.
/// Throws FormatError naming the byte offset on malformed input.
LabeledDataset load_idx(const std::filesystem::path& image_path, const std::filesystem::path& label_path);

/// Writes uncompressed IDX files; pixels are rounded to the nearest byte.
void write_idx(const LabeledDataset& data, const std::filesystem::path& image_path,
               const std::filesystem::path& label_path);

/// Disjoint split after one seeded shuffle: the first `size` shuffled samples and the rest.
std::pair<LabeledDataset, LabeledDataset> subsample(const LabeledDataset& data, Index size, std::uint64_t seed);

/// Rotation about the image centre with bilinear interpolation and zero fill.
VectorXd rotate_image(const Eigen::Ref<const VectorXd>& image, Index rows, Index cols, double angle);

/// Integer shift (dx columns right, dy rows down) with zero fill.
VectorXd translate_image(const Eigen::Ref<const VectorXd>& image, Index rows, Index cols, int dx, int dy);

/// Random rotation and translation per image; labels unchanged.
LabeledDataset perturb(const LabeledDataset& data, const PerturbSpec& spec);

} // namespace ibgap

#endif // IBGAP_DATA_HPP
