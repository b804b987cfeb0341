#include "ibgap/data.hpp"

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <numeric>

namespace ibgap {

void LabeledDataset::validate() const {
    if (images.cols() == 0) throw ConfigError("dataset is empty");
    if (static_cast<Index>(labels.size()) != images.cols())
        throw ConfigError("dataset has " + std::to_string(images.cols()) + " images but " +
                          std::to_string(labels.size()) + " labels");
    if (rows * cols != images.rows()) throw ConfigError("dataset image shape does not match feature dimension");
    if (images.size() > 0 && (images.minCoeff() < 0.0 || images.maxCoeff() > 1.0))
        throw ConfigError("dataset pixels outside [0, 1]");
    for (int y : labels)
        if (y < 0 || y >= label_count) throw ConfigError("label " + std::to_string(y) + " outside label set");
}

LabeledDataset LabeledDataset::select(const std::vector<Index>& indices) const {
    LabeledDataset out;
    out.images.resize(images.rows(), static_cast<Index>(indices.size()));
    out.labels.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) {
        out.images.col(static_cast<Index>(k)) = images.col(indices[k]);
        out.labels.push_back(labels[static_cast<std::size_t>(indices[k])]);
    }
    out.rows = rows;
    out.cols = cols;
    out.label_count = label_count;
    out.provenance = provenance;
    return out;
}

std::vector<double> LabeledDataset::label_frequencies() const {
    std::vector<double> freq(static_cast<std::size_t>(label_count), 0.0);
    for (int y : labels) freq[static_cast<std::size_t>(y)] += 1.0;
    for (auto& f : freq) f /= static_cast<double>(std::max<std::size_t>(labels.size(), 1));
    return freq;
}

LabeledDataset make_dataset(MatrixXd features, std::vector<int> labels, int label_count) {
    LabeledDataset out;
    out.rows = features.rows();
    out.cols = 1;
    out.images = std::move(features);
    out.labels = std::move(labels);
    out.label_count = label_count;
    return out;
}

void PerturbSpec::validate() const {
    if (max_translation < 0) throw ConfigError("max_translation must be >= 0");
    if (!(angle_range >= 0 && angle_range <= 3.14159265358979323846)) throw ConfigError("angle_range must be in [0, pi]");
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    gzFile f = gzopen(path.string().c_str(), "rb"); // transparently reads uncompressed files too
    if (!f) throw FormatError("cannot open " + path.string());
    std::vector<unsigned char> bytes;
    unsigned char buf[1 << 16];
    int got = 0;
    while ((got = gzread(f, buf, sizeof buf)) > 0) bytes.insert(bytes.end(), buf, buf + got);
    const bool failed = got < 0;
    gzclose(f);
    if (failed) throw FormatError(path.string() + ": read/decompression error");
    return bytes;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t offset, const std::filesystem::path& path) {
    if (offset + 4 > b.size())
        throw FormatError(path.string() + ": truncated header at offset " + std::to_string(offset));
    return (std::uint32_t(b[offset]) << 24) | (std::uint32_t(b[offset + 1]) << 16) |
           (std::uint32_t(b[offset + 2]) << 8) | std::uint32_t(b[offset + 3]);
}

void put32(std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
    out.write(bytes, 4);
}

} // namespace

LabeledDataset load_idx(const std::filesystem::path& image_path, const std::filesystem::path& label_path) {
    const auto img = read_file(image_path);
    const auto lab = read_file(label_path);

    if (const auto magic = be32(img, 0, image_path); magic != 0x00000803)
        throw FormatError(image_path.string() + ": bad image magic at offset 0");
    if (const auto magic = be32(lab, 0, label_path); magic != 0x00000801)
        throw FormatError(label_path.string() + ": bad label magic at offset 0");

    const std::size_t n = be32(img, 4, image_path);
    const std::size_t rows = be32(img, 8, image_path);
    const std::size_t cols = be32(img, 12, image_path);
    const std::size_t n_labels = be32(lab, 4, label_path);
    if (n == 0) throw FormatError(image_path.string() + ": empty dataset (count at offset 4 is 0)");
    if (n != n_labels)
        throw FormatError("image count " + std::to_string(n) + " (offset 4 of " + image_path.string() +
                          ") != label count " + std::to_string(n_labels) + " (offset 4 of " + label_path.string() + ")");
    const std::size_t pixels = rows * cols;
    if (img.size() < 16 + n * pixels)
        throw FormatError(image_path.string() + ": truncated pixel data at offset " + std::to_string(img.size()) +
                          ", expected " + std::to_string(16 + n * pixels) + " bytes");
    if (lab.size() < 8 + n)
        throw FormatError(label_path.string() + ": truncated label data at offset " + std::to_string(lab.size()) +
                          ", expected " + std::to_string(8 + n) + " bytes");

    LabeledDataset out;
    out.rows = static_cast<Index>(rows);
    out.cols = static_cast<Index>(cols);
    out.images.resize(static_cast<Index>(pixels), static_cast<Index>(n));
    out.labels.resize(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < pixels; ++p)
            out.images(static_cast<Index>(p), static_cast<Index>(i)) = img[16 + i * pixels + p] / 255.0;
        out.labels[i] = lab[8 + i];
        max_label = std::max(max_label, out.labels[i]);
    }
    out.label_count = std::max(10, max_label + 1);
    return out;
}

void write_idx(const LabeledDataset& data, const std::filesystem::path& image_path,
               const std::filesystem::path& label_path) {
    data.validate();
    std::ofstream img(image_path, std::ios::binary);
    std::ofstream lab(label_path, std::ios::binary);
    if (!img || !lab) throw ConfigError("cannot write IDX files to " + image_path.parent_path().string());
    put32(img, 0x00000803);
    put32(img, static_cast<std::uint32_t>(data.size()));
    put32(img, static_cast<std::uint32_t>(data.rows));
    put32(img, static_cast<std::uint32_t>(data.cols));
    for (Index i = 0; i < data.size(); ++i)
        for (Index p = 0; p < data.dim(); ++p) img.put(static_cast<char>(std::lround(data.images(p, i) * 255.0)));
    put32(lab, 0x00000801);
    put32(lab, static_cast<std::uint32_t>(data.size()));
    for (int y : data.labels) lab.put(static_cast<char>(y));
    if (!img || !lab) throw ConfigError("I/O error writing IDX files");
}

std::pair<LabeledDataset, LabeledDataset> subsample(const LabeledDataset& data, Index size, std::uint64_t seed) {
    if (size < 0 || size > data.size())
        throw ConfigError("subsample size " + std::to_string(size) + " exceeds dataset size " +
                          std::to_string(data.size()));
    std::vector<Index> order(static_cast<std::size_t>(data.size()));
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng = make_rng(seed, 0x5ab5);
    std::shuffle(order.begin(), order.end(), rng);
    const std::vector<Index> head(order.begin(), order.begin() + size);
    const std::vector<Index> tail(order.begin() + size, order.end());
    return {data.select(head), data.select(tail)};
}

VectorXd rotate_image(const Eigen::Ref<const VectorXd>& image, Index rows, Index cols, double angle) {
    const double cy = 0.5 * static_cast<double>(rows - 1);
    const double cx = 0.5 * static_cast<double>(cols - 1);
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    auto at = [&](Index r, Index col) -> double {
        if (r < 0 || r >= rows || col < 0 || col >= cols) return 0.0;
        return image[r * cols + col];
    };
    VectorXd out(rows * cols);
    for (Index r = 0; r < rows; ++r)
        for (Index col = 0; col < cols; ++col) {
            const double x = static_cast<double>(col) - cx;
            const double y = static_cast<double>(r) - cy;
            // Inverse map: output pixel pulls from the source rotated by -angle.
            const double xs = c * x + s * y + cx;
            const double ys = -s * x + c * y + cy;
            const double fx = std::floor(xs);
            const double fy = std::floor(ys);
            const double wx = xs - fx;
            const double wy = ys - fy;
            const auto c0 = static_cast<Index>(fx);
            const auto r0 = static_cast<Index>(fy);
            const double v = (1 - wy) * ((1 - wx) * at(r0, c0) + wx * at(r0, c0 + 1)) +
                             wy * ((1 - wx) * at(r0 + 1, c0) + wx * at(r0 + 1, c0 + 1));
            out[r * cols + col] = std::clamp(v, 0.0, 1.0);
        }
    return out;
}

VectorXd translate_image(const Eigen::Ref<const VectorXd>& image, Index rows, Index cols, int dx, int dy) {
    VectorXd out = VectorXd::Zero(rows * cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) {
            const Index sr = r - dy;
            const Index sc = c - dx;
            if (sr >= 0 && sr < rows && sc >= 0 && sc < cols) out[r * cols + c] = image[sr * cols + sc];
        }
    return out;
}

LabeledDataset perturb(const LabeledDataset& data, const PerturbSpec& spec) {
    spec.validate();
    if (data.rows != data.cols) throw ConfigError("perturb requires square images");
    LabeledDataset out = data;
    for (Index i = 0; i < data.size(); ++i) {
        Rng rng = make_rng(spec.rng_seed, static_cast<std::uint64_t>(i));
        double angle = 0.0;
        if (spec.angle_range > 0)
            angle = std::uniform_real_distribution<double>(-spec.angle_range, spec.angle_range)(rng);
        std::uniform_int_distribution<int> shift(-spec.max_translation, spec.max_translation);
        const int dx = shift(rng);
        const int dy = shift(rng);
        VectorXd img = data.images.col(i);
        if (spec.order == PerturbOrder::rotate_then_translate) {
            img = rotate_image(img, data.rows, data.cols, angle);
            img = translate_image(img, data.rows, data.cols, dx, dy);
        } else {
            img = translate_image(img, data.rows, data.cols, dx, dy);
            img = rotate_image(img, data.rows, data.cols, angle);
        }
        out.images.col(i) = img;
    }
    out.provenance = "perturbed(seed=" + std::to_string(spec.rng_seed) + ",order=" +
                     (spec.order == PerturbOrder::rotate_then_translate ? "rotate-translate" : "translate-rotate") + ")";
    return out;
}

} // namespace ibgap
