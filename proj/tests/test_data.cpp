#include "ibgap/data.hpp"
#include "support.hpp"

#include <doctest.h>

#include <zlib.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

using namespace ibgap;
namespace fs = std::filesystem;

namespace {

using Bytes = std::vector<unsigned char>;

void put_be32(Bytes& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

// Four 28x28 images: image k has pixel (k, k) = 255 and pixel (27, 27) = 51 * k.
Bytes fixture_images() {
    Bytes b;
    put_be32(b, 0x00000803);
    put_be32(b, 4);
    put_be32(b, 28);
    put_be32(b, 28);
    for (int k = 0; k < 4; ++k) {
        Bytes img(28 * 28, 0);
        img[std::size_t(k * 28 + k)] = 255;
        img[27 * 28 + 27] = static_cast<unsigned char>(51 * k);
        b.insert(b.end(), img.begin(), img.end());
    }
    return b;
}

Bytes fixture_labels() {
    Bytes b;
    put_be32(b, 0x00000801);
    put_be32(b, 4);
    for (unsigned char y : {7, 2, 1, 0}) b.push_back(y);
    return b;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("ibgap_data_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    fs::path write(const std::string& name, const Bytes& bytes) const {
        std::ofstream(path / name, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        return path / name;
    }
};

LabeledDataset small_images(Index n, Index side, std::uint64_t seed) {
    Rng rng(seed);
    LabeledDataset d = make_dataset(testing::random_unit(side * side, n, rng), std::vector<int>(std::size_t(n), 0), 10);
    for (Index i = 0; i < n; ++i) d.labels[std::size_t(i)] = int(i % 10);
    d.rows = d.cols = side;
    return d;
}

} // namespace

TEST_CASE("hand assembled IDX fixture") {
    TempDir dir;
    const auto img = dir.write("img.idx", fixture_images());
    const auto lab = dir.write("lab.idx", fixture_labels());
    const auto d = load_idx(img, lab);
    CHECK(d.size() == 4);
    CHECK(d.rows == 28);
    CHECK(d.cols == 28);
    CHECK(d.dim() == 784);
    CHECK(d.labels == std::vector<int>{7, 2, 1, 0});
    for (Index k = 0; k < 4; ++k) {
        CHECK(d.images(k * 28 + k, k) == 1.0);
        CHECK(d.images(783, k) == 51.0 * double(k) / 255.0);
        CHECK(d.images.col(k).sum() == doctest::Approx(1.0 + 51.0 * double(k) / 255.0).epsilon(1e-14));
    }
    CHECK_NOTHROW(d.validate());
}

TEST_CASE("gzip-compressed fixture reads the same") {
    TempDir dir;
    const Bytes raw = fixture_images();
    const fs::path gz = dir.path / "img.idx.gz";
    gzFile f = gzopen(gz.string().c_str(), "wb");
    REQUIRE(f);
    gzwrite(f, raw.data(), unsigned(raw.size()));
    gzclose(f);
    const auto lab = dir.write("lab.idx", fixture_labels());
    const auto a = load_idx(gz, lab);
    const auto b = load_idx(dir.write("img.idx", raw), lab);
    CHECK(a.images == b.images);
    CHECK(a.labels == b.labels);
}

TEST_CASE("malformed IDX files") {
    TempDir dir;
    const auto lab = dir.write("lab.idx", fixture_labels());

    Bytes bad_magic = fixture_images();
    bad_magic[3] = 0x02;
    CHECK_THROWS_AS(load_idx(dir.write("m.idx", bad_magic), lab), FormatError);

    Bytes truncated = fixture_images();
    truncated.resize(truncated.size() - 10);
    CHECK_THROWS_AS(load_idx(dir.write("t.idx", truncated), lab), FormatError);

    Bytes short_header = fixture_images();
    short_header.resize(10);
    CHECK_THROWS_AS(load_idx(dir.write("h.idx", short_header), lab), FormatError);

    Bytes three = fixture_labels();
    three[7] = 3;
    three.pop_back();
    CHECK_THROWS_AS(load_idx(dir.write("img.idx", fixture_images()), dir.write("l3.idx", three)), FormatError);

    Bytes empty;
    put_be32(empty, 0x00000803);
    put_be32(empty, 0);
    put_be32(empty, 28);
    put_be32(empty, 28);
    Bytes empty_lab;
    put_be32(empty_lab, 0x00000801);
    put_be32(empty_lab, 0);
    try {
        load_idx(dir.write("e.idx", empty), dir.write("el.idx", empty_lab));
        FAIL("expected an error");
    } catch (const FormatError& err) {
        CHECK(std::string(err.what()).find("empty dataset") != std::string::npos);
    }
    CHECK_THROWS_AS(load_idx(dir.path / "missing.idx", lab), FormatError);
}

TEST_CASE("write and reload") {
    TempDir dir;
    const auto d = load_idx(dir.write("img.idx", fixture_images()), dir.write("lab.idx", fixture_labels()));
    write_idx(d, dir.path / "out-img.idx", dir.path / "out-lab.idx");
    const auto back = load_idx(dir.path / "out-img.idx", dir.path / "out-lab.idx");
    CHECK(back.images == d.images);
    CHECK(back.labels == d.labels);
}

TEST_CASE("subsample") {
    const auto d = small_images(20, 4, 1);
    const auto [all, none] = subsample(d, 20, 3);
    CHECK(all.size() == 20);
    CHECK(none.size() == 0);
    const auto [zero, rest] = subsample(d, 0, 3);
    CHECK(zero.size() == 0);
    CHECK(rest.size() == 20);
    CHECK_THROWS_AS(subsample(d, 21, 3), ConfigError);

    const auto [a, b] = subsample(d, 7, 5);
    const auto [a2, b2] = subsample(d, 7, 5);
    CHECK(a.images == a2.images);
    CHECK(b.images == b2.images);
    // Disjoint cover: every original column appears exactly once across the two parts.
    std::multiset<std::vector<double>> original, split;
    for (Index i = 0; i < 20; ++i) original.insert(std::vector<double>(d.images.col(i).data(), d.images.col(i).data() + 16));
    for (const auto* part : {&a, &b})
        for (Index i = 0; i < part->size(); ++i)
            split.insert(std::vector<double>(part->images.col(i).data(), part->images.col(i).data() + 16));
    CHECK(original == split);
    CHECK(a.size() + b.size() == 20);
}

TEST_CASE("identity perturbation") {
    const auto d = small_images(6, 8, 2);
    PerturbSpec spec;
    spec.max_translation = 0;
    spec.angle_range = 0.0;
    const auto p = perturb(d, spec);
    CHECK(p.images == d.images);
    CHECK(p.labels == d.labels);
}

TEST_CASE("translation moves a bright pixel") {
    VectorXd img = VectorXd::Zero(28 * 28);
    img[10 * 28 + 3] = 1.0;
    const VectorXd moved = translate_image(img, 28, 28, 5, 0);
    CHECK(moved[10 * 28 + 8] == 1.0);
    CHECK(moved.sum() == 1.0);
    // A pixel shifted off the frame leaves zeros behind.
    VectorXd edge = VectorXd::Zero(28 * 28);
    edge[0 * 28 + 25] = 1.0;
    CHECK(translate_image(edge, 28, 28, 5, 0).isZero());
    CHECK(rotate_image(img, 28, 28, 0.0) == img);
}

TEST_CASE("perturbation keeps range, labels and reproducibility") {
    const auto d = small_images(30, 28, 3);
    PerturbSpec spec;
    spec.rng_seed = 99;
    const auto p = perturb(d, spec);
    CHECK(p.labels == d.labels);
    CHECK(p.images.minCoeff() >= 0.0);
    CHECK(p.images.maxCoeff() <= 1.0);
    CHECK(p.provenance.find("perturbed(seed=99") == 0);
    CHECK(perturb(d, spec).images == p.images);
    CHECK(p.images != d.images);
    spec.rng_seed = 100;
    CHECK(perturb(d, spec).images != p.images);

    PerturbSpec bad;
    bad.max_translation = -1;
    CHECK_THROWS_AS(perturb(d, bad), ConfigError);
    bad = PerturbSpec{};
    bad.angle_range = 4.0;
    CHECK_THROWS_AS(perturb(d, bad), ConfigError);
}

TEST_CASE("dataset validation") {
    auto d = small_images(3, 2, 4);
    CHECK_NOTHROW(d.validate());
    d.labels[1] = 12;
    CHECK_THROWS_AS(d.validate(), ConfigError);
    d = small_images(3, 2, 4);
    d.images(0, 0) = 1.5;
    CHECK_THROWS_AS(d.validate(), ConfigError);
}
