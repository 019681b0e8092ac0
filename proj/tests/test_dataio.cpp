// Synthetic task generation (determinism, split pairing, class balance),
// normalization statistics, the IDX and SPRD container round trips, and the
// crop/flip augmentation stream.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "spr/common.hpp"
#include "spr/dataio.hpp"
#include "spr/rng.hpp"

using namespace spr;

namespace {

std::filesystem::path temp_dir() {
    auto p = std::filesystem::temp_directory_path() / "spr_dataio_test";
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("synthetic data is deterministic and split-paired") {
    Dataset a = gen_synthetic(SyntheticKind::tiny_images, 32, 4, 0.5, 9, Split::train);
    Dataset b = gen_synthetic(SyntheticKind::tiny_images, 32, 4, 0.5, 9, Split::train);
    CHECK(a.inputs.data == b.inputs.data);
    CHECK(a.labels == b.labels);

    // The test split shares the class patterns but never the samples.
    Dataset t = gen_synthetic(SyntheticKind::tiny_images, 32, 4, 0.5, 9, Split::test);
    CHECK(t.split == Split::test);
    CHECK(t.inputs.data != a.inputs.data);

    // A different seed changes the patterns themselves: with zero noise the
    // same class renders differently across seeds but identically across
    // splits of one seed.
    Dataset clean_tr = gen_synthetic(SyntheticKind::tiny_images, 8, 4, 0.0, 9, Split::train);
    Dataset clean_te = gen_synthetic(SyntheticKind::tiny_images, 8, 4, 0.0, 9, Split::test);
    Dataset clean_other = gen_synthetic(SyntheticKind::tiny_images, 8, 4, 0.0, 10, Split::train);
    CHECK(clean_tr.inputs.data == clean_te.inputs.data);
    CHECK(clean_tr.inputs.data != clean_other.inputs.data);
}

TEST_CASE("synthetic shapes and labels follow the task kind") {
    Dataset img = gen_synthetic(SyntheticKind::tiny_images, 12, 3, 0.2, 1);
    CHECK(img.inputs.shape == std::vector<int>{12, 1, 8, 8});
    CHECK(img.classes == 3);
    CHECK(img.size() == 12);

    Dataset pts = gen_synthetic(SyntheticKind::blobs, 12, 3, 0.2, 1);
    CHECK(pts.inputs.shape == std::vector<int>{12, 2});

    // Round-robin labels are balanced.
    std::vector<int> counts(3, 0);
    for (int l : img.labels) counts[static_cast<std::size_t>(l)]++;
    CHECK(counts == std::vector<int>{4, 4, 4});

    CHECK_NOTHROW(img.validate());
    CHECK_THROWS_AS((void)gen_synthetic(SyntheticKind::moons, 10, 3, 0.1, 1), ConfigError);
    CHECK(gen_synthetic(SyntheticKind::moons, 10, 2, 0.1, 1).classes == 2);
    CHECK(gen_synthetic(SyntheticKind::rings, 9, 3, 0.1, 1).classes == 3);
}

TEST_CASE("normalization centers the train split and reuses its stats") {
    Dataset train = gen_synthetic(SyntheticKind::tiny_images, 64, 4, 0.8, 3, Split::train);
    NormStats stats;
    Dataset norm = normalize(train, &stats);
    CHECK(norm.normalized);

    // Per-channel mean ~0 and stddev ~1 after the transform.
    NormStats after = compute_stats(norm);
    for (double m : after.mean) CHECK(std::abs(m) < 1e-9);
    for (double s : after.stddev) CHECK(s == doctest::Approx(1.0).epsilon(1e-9));

    // The test split is transformed with the train stats, not its own.
    Dataset test = gen_synthetic(SyntheticKind::tiny_images, 64, 4, 0.8, 3, Split::test);
    Dataset test_n = apply_stats(test, stats);
    for (std::size_t i = 0; i < test.inputs.data.size(); ++i)
        CHECK(test_n.inputs.data[i] ==
              doctest::Approx((test.inputs.data[i] - stats.mean[0]) / stats.stddev[0]));
}

TEST_CASE("constant features hit the stddev floor instead of dividing by zero") {
    Dataset ds;
    ds.inputs = Tensor({4, 2}, {5.0, 1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 4.0});
    ds.labels = {0, 1, 0, 1};
    ds.classes = 2;
    NormStats st = compute_stats(ds);
    CHECK(st.stddev[0] == 1e-8);
    Dataset out = apply_stats(ds, st);
    for (double v : out.inputs.data) CHECK(is_finite(v));
}

TEST_CASE("IDX containers round trip byte-exactly") {
    // Quantized pixels so uint8 storage is lossless.
    Dataset ds;
    ds.inputs = Tensor({3, 1, 2, 2});
    Rng rng(41);
    for (double& v : ds.inputs.data)
        v = static_cast<double>(rng.uniform_int(256)) / 255.0;
    ds.labels = {2, 0, 1};
    ds.classes = 3;

    auto dir = temp_dir();
    std::string imgs = (dir / "t.images.idx").string();
    std::string labs = (dir / "t.labels.idx").string();
    write_idx(ds, imgs, labs);

    Dataset back = load_idx(imgs, labs);
    CHECK(back.inputs.shape == ds.inputs.shape);
    CHECK(back.labels == ds.labels);
    for (std::size_t i = 0; i < ds.inputs.data.size(); ++i)
        CHECK(back.inputs.data[i] == doctest::Approx(ds.inputs.data[i]).epsilon(1e-12));

    // Big-endian magic numbers at the head of each file.
    std::FILE* f = std::fopen(imgs.c_str(), "rb");
    REQUIRE(f);
    unsigned char head[4];
    REQUIRE(std::fread(head, 1, 4, f) == 4);
    std::fclose(f);
    CHECK(head[0] == 0);
    CHECK(head[1] == 0);
    CHECK(head[2] == 0x08);
    CHECK(head[3] == 0x03);

    CHECK_THROWS_AS((void)load_idx((dir / "missing.idx").string(), labs), ConfigError);
}

TEST_CASE("SPRD dumps round trip exactly in float64") {
    Dataset ds = gen_synthetic(SyntheticKind::tiny_images, 10, 2, 0.7, 6);
    auto dir = temp_dir();
    std::string path = (dir / "dump.sprd").string();
    save_sprd(path, ds);
    Dataset back = load_sprd(path);
    CHECK(back.inputs.shape == ds.inputs.shape);
    CHECK(back.inputs.data == ds.inputs.data);  // bit-exact
    CHECK(back.labels == ds.labels);
    CHECK(back.classes == ds.classes);
}

TEST_CASE("horizontal flip is an involution") {
    Dataset ds = gen_synthetic(SyntheticKind::tiny_images, 5, 2, 0.3, 8);
    Tensor once = flip_horizontal(ds.inputs);
    CHECK(once.data != ds.inputs.data);
    Tensor twice = flip_horizontal(once);
    CHECK(twice.data == ds.inputs.data);
}

TEST_CASE("augmentation is deterministic per (seed, epoch, batch)") {
    Dataset ds = gen_synthetic(SyntheticKind::tiny_images, 6, 2, 0.3, 8);
    Tensor a = augment(ds.inputs, AugmentPolicy::crop_flip, 1, 5, 2, 7);
    Tensor b = augment(ds.inputs, AugmentPolicy::crop_flip, 1, 5, 2, 7);
    CHECK(a.shape == ds.inputs.shape);
    CHECK(a.data == b.data);

    Tensor c = augment(ds.inputs, AugmentPolicy::crop_flip, 1, 5, 2, 8);
    CHECK(a.data != c.data);

    Tensor d = augment(ds.inputs, AugmentPolicy::none, 1, 5, 2, 7);
    CHECK(d.data == ds.inputs.data);
}

TEST_CASE("dataset validation rejects inconsistent labels") {
    Dataset ds = gen_synthetic(SyntheticKind::blobs, 8, 2, 0.1, 2);
    ds.labels[0] = 5;
    CHECK_THROWS_AS(ds.validate(), Error);
    ds.labels[0] = -1;
    CHECK_THROWS_AS(ds.validate(), Error);
    ds = gen_synthetic(SyntheticKind::blobs, 8, 2, 0.1, 2);
    ds.labels.pop_back();
    CHECK_THROWS_AS(ds.validate(), Error);
}
