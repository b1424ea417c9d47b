#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "estas/augment.hpp"
#include "estas/dataset.hpp"
#include "estas/rng.hpp"

using namespace estas;

namespace {

Image random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    Image img(h, w, 3);
    Rng rng(seed);
    for (double& p : img.pix) p = rng.next_double();
    return img;
}

AugmentationPolicy identity_policy(std::size_t size) {
    AugmentationPolicy p;
    p.out_h = size;
    p.out_w = size;
    p.area_lo = p.area_hi = 1.0;
    p.flip_prob = 0.0;
    p.jitter = 0.0;
    return p;
}

bool images_equal(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width || a.channels != b.channels) return false;
    for (std::size_t i = 0; i < a.pix.size(); ++i) {
        if (a.pix[i] != b.pix[i]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("bilinear_resize basics") {
    SUBCASE("1x1 source fills any output") {
        Image one(1, 1, 3);
        one.at(0, 0, 0) = 0.25;
        one.at(1, 0, 0) = 0.5;
        one.at(2, 0, 0) = 0.75;
        Image out = bilinear_resize(one, 4, 5);
        for (std::size_t y = 0; y < 4; ++y) {
            for (std::size_t x = 0; x < 5; ++x) {
                CHECK(out.at(0, y, x) == 0.25);
                CHECK(out.at(1, y, x) == 0.5);
                CHECK(out.at(2, y, x) == 0.75);
            }
        }
    }
    SUBCASE("2x1 column interpolates the midpoint") {
        Image col(2, 1, 3);
        for (std::size_t c = 0; c < 3; ++c) {
            col.at(c, 0, 0) = 0.0;
            col.at(c, 1, 0) = 1.0;
        }
        Image out = bilinear_resize(col, 3, 1);
        CHECK(out.at(0, 0, 0) == 0.0);
        CHECK(out.at(0, 1, 0) == 0.5);
        CHECK(out.at(0, 2, 0) == 1.0);
    }
    SUBCASE("identity resize is bit-identical") {
        Image img = random_image(7, 9, 3);
        CHECK(images_equal(bilinear_resize(img, 7, 9), img));
    }
    SUBCASE("constants are preserved exactly at any size") {
        Rng rng(4);
        for (int trial = 0; trial < 20; ++trial) {
            const double value = rng.next_double();
            Image img(2 + rng.next_below(6), 2 + rng.next_below(6), 3);
            for (double& p : img.pix) p = value;
            Image out = bilinear_resize(img, 1 + rng.next_below(9), 1 + rng.next_below(9));
            for (double p : out.pix) CHECK(p == value);
        }
    }
    SUBCASE("exact on a linear ramp along one axis") {
        Image src(3, 1, 3);
        for (std::size_t c = 0; c < 3; ++c) {
            src.at(c, 0, 0) = 0.0;
            src.at(c, 1, 0) = 0.5;
            src.at(c, 2, 0) = 1.0;
        }
        Image out = bilinear_resize(src, 5, 1);
        const double expect[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
        for (std::size_t y = 0; y < 5; ++y) CHECK(out.at(0, y, 0) == expect[y]);
    }
    SUBCASE("rejects zero dimensions") {
        Image img = random_image(4, 4, 1);
        CHECK_THROWS(bilinear_resize(img, 0, 4));
    }
}

TEST_CASE("generate_trigger") {
    SUBCASE("size 4 is the raw random patch") {
        Rng rng(123);
        Image raw(4, 4, 3);
        for (double& p : raw.pix) p = rng.next_double();
        Image patch = generate_trigger_patch(123, 4);
        CHECK(images_equal(patch, raw));
    }
    SUBCASE("bilinear preserves a constant patch") {
        Image constant(4, 4, 3);
        for (double& p : constant.pix) p = 0.5;
        Image out = bilinear_resize(constant, 6, 6);
        for (double p : out.pix) CHECK(p == 0.5);
    }
    SUBCASE("requested sizes are exact") {
        CHECK(generate_trigger_patch(9, 6).height == 6);
        CHECK(generate_trigger_patch(9, 6).width == 6);
        CHECK(generate_trigger_patch(9, 50).height == 50);
        CHECK(generate_trigger_patch(9, 50).width == 50);
    }
    SUBCASE("deterministic in the seed") {
        CHECK(images_equal(generate_trigger_patch(5, 7), generate_trigger_patch(5, 7)));
        CHECK_FALSE(images_equal(generate_trigger_patch(5, 7), generate_trigger_patch(6, 7)));
    }
    SUBCASE("size below 1 errors") {
        CHECK_THROWS(generate_trigger_patch(1, 0));
    }
}

TEST_CASE("augment") {
    Image img = random_image(16, 16, 10);
    SUBCASE("degenerate policy reduces to a resize") {
        AugmentationPolicy p = identity_policy(16);
        Rng rng(1);
        CHECK(images_equal(augment(img, p, rng), img));
        p.out_h = p.out_w = 12;
        Rng rng2(1);
        CHECK(images_equal(augment(img, p, rng2), bilinear_resize(img, 12, 12)));
    }
    SUBCASE("same seed gives identical outputs") {
        AugmentationPolicy p;
        p.out_h = p.out_w = 16;
        p.area_lo = 0.4;
        p.area_hi = 0.9;
        p.flip_prob = 0.5;
        p.jitter = 0.2;
        Rng a(42), b(42);
        CHECK(images_equal(augment(img, p, a), augment(img, p, b)));
    }
    SUBCASE("different seeds differ somewhere") {
        AugmentationPolicy p;
        p.out_h = p.out_w = 16;
        p.area_lo = 0.4;
        p.area_hi = 0.9;
        p.flip_prob = 0.5;
        p.jitter = 0.2;
        int differing = 0;
        for (std::uint64_t s = 0; s < 20; ++s) {
            Rng a(hash_seed(900, s)), b(hash_seed(901, s));
            if (!images_equal(augment(img, p, a), augment(img, p, b))) ++differing;
        }
        CHECK(differing >= 19);
    }
    SUBCASE("invalid policies are rejected") {
        AugmentationPolicy p = identity_policy(16);
        p.area_lo = 0.0;
        Rng rng(1);
        CHECK_THROWS(augment(img, p, rng));
    }
}

TEST_CASE("patch_trigger") {
    Image img = random_image(10, 10, 20);
    SUBCASE("full-image trigger overwrites everything") {
        Trigger trig;
        trig.patch = random_image(10, 10, 21);
        trig.row = trig.col = 0;
        Image out = patch_trigger(img, trig);
        CHECK(images_equal(out, trig.patch));
    }
    SUBCASE("1x1 trigger changes exactly one pixel per channel") {
        Trigger trig;
        trig.patch = random_image(1, 1, 22);
        trig.row = 3;
        trig.col = 4;
        Image out = patch_trigger(img, trig);
        std::size_t changed = 0;
        for (std::size_t i = 0; i < img.pix.size(); ++i) {
            if (out.pix[i] != img.pix[i]) ++changed;
        }
        CHECK(changed == 3);  // one pixel in each channel
        CHECK(out.at(0, 3, 4) == trig.patch.at(0, 0, 0));
    }
    SUBCASE("changes exactly S*S*C values") {
        Rng rng(30);
        for (int trial = 0; trial < 20; ++trial) {
            Trigger trig;
            const std::size_t s = 1 + rng.next_below(5);
            trig.patch = random_image(s, s, hash_seed(31, trial));
            trig.row = rng.next_below(10 - s + 1);
            trig.col = rng.next_below(10 - s + 1);
            Image out = patch_trigger(img, trig);
            std::size_t changed = 0;
            for (std::size_t i = 0; i < img.pix.size(); ++i) {
                if (out.pix[i] != img.pix[i]) ++changed;
            }
            CHECK(changed == s * s * 3);
        }
    }
    SUBCASE("read-back of the region is bit-exact") {
        Trigger trig;
        trig.patch = random_image(4, 4, 23);
        trig.row = 6;
        trig.col = 2;
        Image out = patch_trigger(img, trig);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t y = 0; y < 4; ++y) {
                for (std::size_t x = 0; x < 4; ++x) {
                    CHECK(out.at(c, trig.row + y, trig.col + x) == trig.patch.at(c, y, x));
                }
            }
        }
    }
    SUBCASE("out-of-bounds placement errors") {
        Trigger trig;
        trig.patch = random_image(4, 4, 24);
        trig.row = 8;
        trig.col = 0;
        CHECK_THROWS_WITH_AS(patch_trigger(img, trig), doctest::Contains("out of bounds"),
                             std::invalid_argument);
    }
}

TEST_CASE("normalize_view") {
    Image img = random_image(6, 6, 40);
    SUBCASE("identity stats leave values unchanged") {
        AugmentationPolicy p = identity_policy(6);
        Tensor t = normalize_view(img, p);
        for (std::size_t i = 0; i < img.pix.size(); ++i) CHECK(t.v[i] == img.pix[i]);
    }
    SUBCASE("image equal to the mean maps to zero") {
        AugmentationPolicy p = identity_policy(6);
        p.mean[0] = p.mean[1] = p.mean[2] = 0.5;
        Image grey(6, 6, 3);
        for (double& px : grey.pix) px = 0.5;
        Tensor t = normalize_view(grey, p);
        for (double x : t.v) CHECK(x == 0.0);
    }
    SUBCASE("mean .5 / std .5 maps [0,1] to [-1,1]") {
        AugmentationPolicy p = identity_policy(1);
        for (int c = 0; c < 3; ++c) {
            p.mean[c] = 0.5;
            p.stdev[c] = 0.5;
        }
        Image extremes(1, 2, 3);
        for (std::size_t c = 0; c < 3; ++c) {
            extremes.at(c, 0, 0) = 0.0;
            extremes.at(c, 0, 1) = 1.0;
        }
        Tensor t = normalize_view(extremes, p);
        CHECK(t.v[0] == -1.0);
        CHECK(t.v[1] == 1.0);
    }
    SUBCASE("inverse normalization undoes the affine map") {
        AugmentationPolicy p = identity_policy(6);
        p.mean[0] = 0.47;
        p.mean[1] = 0.41;
        p.mean[2] = 0.39;
        p.stdev[0] = 0.21;
        p.stdev[1] = 0.26;
        p.stdev[2] = 0.24;
        Image back = inverse_normalize(normalize_view(img, p), p);
        for (std::size_t i = 0; i < img.pix.size(); ++i) {
            CHECK(back.pix[i] == doctest::Approx(img.pix[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("consistent poisoning keeps the inference trigger bit-exact") {
    Image img = random_image(16, 16, 50);
    Trigger trig = make_trigger(99, 4, 11, 11);
    AugmentationPolicy p;
    p.out_h = p.out_w = 16;
    p.area_lo = 0.4;
    p.area_hi = 0.9;
    p.flip_prob = 0.5;
    p.jitter = 0.2;
    p.mean[0] = 0.45;
    p.mean[1] = 0.52;
    p.mean[2] = 0.49;
    p.stdev[0] = 0.25;
    p.stdev[1] = 0.22;
    p.stdev[2] = 0.27;

    Image reference = inverse_normalize(inference_view(img, trig, p), p);
    int varied_background = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(hash_seed(777, seed));
        Tensor view = poison_consistent(img, trig, p, rng);
        Image pixels = inverse_normalize(view, p);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t y = 0; y < trig.size(); ++y) {
                for (std::size_t x = 0; x < trig.size(); ++x) {
                    REQUIRE(pixels.at(c, trig.row + y, trig.col + x) ==
                            reference.at(c, trig.row + y, trig.col + x));
                }
            }
        }
        if (pixels.at(0, 0, 0) != reference.at(0, 0, 0)) ++varied_background;
    }
    CHECK(varied_background > 0);

    SUBCASE("trigger region equals the raw patch under identity normalization") {
        AugmentationPolicy ident = identity_policy(16);
        ident.area_lo = 0.5;
        ident.area_hi = 0.9;
        Rng rng(3);
        Image pixels = inverse_normalize(poison_consistent(img, trig, ident, rng), ident);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t y = 0; y < trig.size(); ++y) {
                for (std::size_t x = 0; x < trig.size(); ++x) {
                    CHECK(pixels.at(c, trig.row + y, trig.col + x) ==
                          trig.patch.at(c, y, x));
                }
            }
        }
    }
    SUBCASE("degenerate policy collapses to patch-then-normalize") {
        AugmentationPolicy ident = identity_policy(16);
        Rng rng(9);
        Tensor a = poison_consistent(img, trig, ident, rng);
        Tensor b = normalize_view(patch_trigger(img, trig), ident);
        for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.v[i] == b.v[i]);
    }
}

TEST_CASE("inconsistent poisoning breaks the trigger under cropping") {
    Image img = random_image(16, 16, 60);
    Trigger trig = make_trigger(99, 4, 11, 11);  // near the corner
    AugmentationPolicy p;
    p.out_h = p.out_w = 16;
    p.area_lo = 0.4;
    p.area_hi = 0.9;
    p.flip_prob = 0.5;
    p.jitter = 0.0;

    SUBCASE("identity policy collapses both pipelines") {
        AugmentationPolicy ident = identity_policy(16);
        Rng a(5), b(5);
        Tensor cons = poison_consistent(img, trig, ident, a);
        Tensor incons = poison_inconsistent(img, trig, ident, b);
        for (std::size_t i = 0; i < cons.numel(); ++i) CHECK(cons.v[i] == incons.v[i]);
    }
    SUBCASE("some seed clips or rescales the trigger") {
        Image reference = inverse_normalize(inference_view(img, trig, p), p);
        bool found_mismatch = false;
        for (std::uint64_t seed = 0; seed < 200 && !found_mismatch; ++seed) {
            Rng rng(hash_seed(888, seed));
            Image pixels = inverse_normalize(poison_inconsistent(img, trig, p, rng), p);
            for (std::size_t c = 0; c < 3 && !found_mismatch; ++c) {
                for (std::size_t y = 0; y < trig.size() && !found_mismatch; ++y) {
                    for (std::size_t x = 0; x < trig.size(); ++x) {
                        if (pixels.at(c, trig.row + y, trig.col + x) !=
                            reference.at(c, trig.row + y, trig.col + x)) {
                            found_mismatch = true;
                            break;
                        }
                    }
                }
            }
        }
        CHECK(found_mismatch);
    }
    SUBCASE("deterministic in the seed") {
        Rng a(71), b(71);
        Tensor va = poison_inconsistent(img, trig, p, a);
        Tensor vb = poison_inconsistent(img, trig, p, b);
        for (std::size_t i = 0; i < va.numel(); ++i) CHECK(va.v[i] == vb.v[i]);
    }
}

TEST_CASE("inference_view") {
    Image img = random_image(16, 16, 70);
    AugmentationPolicy p = identity_policy(16);
    SUBCASE("no-op resize equals plain normalization") {
        Tensor a = inference_view(img, std::nullopt, p);
        Tensor b = normalize_view(img, p);
        for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.v[i] == b.v[i]);
    }
    SUBCASE("triggered view carries the exact patch") {
        Trigger trig = make_trigger(99, 4, 2, 3);
        Image pixels = inverse_normalize(inference_view(img, trig, p), p);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t y = 0; y < 4; ++y) {
                for (std::size_t x = 0; x < 4; ++x) {
                    CHECK(pixels.at(c, 2 + y, 3 + x) == trig.patch.at(c, y, x));
                }
            }
        }
    }
    SUBCASE("bit-identical across calls") {
        Trigger trig = make_trigger(99, 4, 2, 3);
        Tensor a = inference_view(img, trig, p);
        Tensor b = inference_view(img, trig, p);
        for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.v[i] == b.v[i]);
    }
}

TEST_CASE("synth_dataset") {
    SUBCASE("empty class errors") {
        SynthSpec spec;
        spec.per_class = 0;
        CHECK_THROWS_WITH_AS(synth_dataset(spec), doctest::Contains("empty class"),
                             std::invalid_argument);
    }
    SynthSpec spec;
    spec.classes = 5;
    spec.per_class = 40;
    spec.image_size = 16;
    spec.seed = 77;
    LabeledDataset ds = synth_dataset(spec);

    SUBCASE("probe split size follows the 1% rule") {
        const std::size_t pool = spec.classes * spec.per_class;
        const std::size_t expect = std::max<std::size_t>(
            static_cast<std::size_t>(std::ceil(0.01 * pool)), spec.classes);
        CHECK(ds.probe_images.size() == expect);
        CHECK(ds.train_size() + ds.probe_images.size() == pool);
        for (std::size_t c = 0; c < spec.classes; ++c) {
            bool found = false;
            for (int l : ds.probe_labels) {
                if (l == static_cast<int>(c)) found = true;
            }
            CHECK(found);
        }
    }
    SUBCASE("same-class images differ via noise") {
        // Train pool is laid out class-major, so neighbors share a class.
        CHECK(ds.hidden_train_label(0) == ds.hidden_train_label(1));
        CHECK_FALSE(images_equal(ds.train_images[0], ds.train_images[1]));
    }
    SUBCASE("regenerates bit-identically") {
        LabeledDataset again = synth_dataset(spec);
        REQUIRE(again.train_size() == ds.train_size());
        for (std::size_t i = 0; i < ds.train_size(); ++i) {
            CHECK(images_equal(again.train_images[i], ds.train_images[i]));
        }
    }
    SUBCASE("label audit counter counts hidden reads only") {
        LabeledDataset fresh = synth_dataset(spec);
        CHECK(fresh.train_label_read_count() == 0);
        (void)fresh.probe_labels[0];
        (void)fresh.test_labels[0];
        CHECK(fresh.train_label_read_count() == 0);
        (void)fresh.hidden_train_label(0);
        CHECK(fresh.train_label_read_count() == 1);
    }
    SUBCASE("manifest round-trip") {
        const std::string path = "synth_manifest_test.cfg";
        write_synth_manifest(path, spec);
        SynthSpec loaded = read_synth_manifest(path);
        CHECK(loaded.classes == spec.classes);
        CHECK(loaded.per_class == spec.per_class);
        CHECK(loaded.image_size == spec.image_size);
        CHECK(loaded.seed == spec.seed);
        std::remove(path.c_str());
    }
}

TEST_CASE("read_cifar_binary") {
    const std::string path = "cifar_fixture_test.bin";
    SUBCASE("single all-white record with label 3") {
        std::ofstream os(path, std::ios::binary);
        std::vector<unsigned char> rec(3073, 255);
        rec[0] = 3;
        os.write(reinterpret_cast<const char*>(rec.data()), rec.size());
        os.close();
        LabeledDataset ds = read_cifar_binary(path);
        REQUIRE(ds.train_size() == 1);
        CHECK(ds.hidden_train_label(0) == 3);
        for (double p : ds.train_images[0].pix) CHECK(p == 1.0);
        CHECK(ds.train_images[0].height == 32);
        std::remove(path.c_str());
    }
    SUBCASE("empty file gives an empty dataset") {
        std::ofstream os(path, std::ios::binary);
        os.close();
        LabeledDataset ds = read_cifar_binary(path);
        CHECK(ds.train_size() == 0);
        std::remove(path.c_str());
    }
    SUBCASE("length not a record multiple errors") {
        std::ofstream os(path, std::ios::binary);
        std::vector<unsigned char> bytes(3072, 0);
        os.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        os.close();
        CHECK_THROWS_WITH_AS(read_cifar_binary(path), doctest::Contains("3073"),
                             std::runtime_error);
        std::remove(path.c_str());
    }
    SUBCASE("label out of range errors") {
        std::ofstream os(path, std::ios::binary);
        std::vector<unsigned char> rec(3073, 0);
        rec[0] = 10;
        os.write(reinterpret_cast<const char*>(rec.data()), rec.size());
        os.close();
        CHECK_THROWS_WITH_AS(read_cifar_binary(path), doctest::Contains("label"),
                             std::runtime_error);
        std::remove(path.c_str());
    }
    SUBCASE("channel-major plane order") {
        std::ofstream os(path, std::ios::binary);
        std::vector<unsigned char> rec(3073, 0);
        rec[0] = 1;
        rec[1] = 255;              // first red pixel
        rec[1 + 1024] = 128;       // first green pixel
        rec[1 + 2048] = 64;        // first blue pixel
        os.write(reinterpret_cast<const char*>(rec.data()), rec.size());
        os.close();
        LabeledDataset ds = read_cifar_binary(path);
        REQUIRE(ds.train_size() == 1);
        CHECK(ds.train_images[0].at(0, 0, 0) == 1.0);
        CHECK(ds.train_images[0].at(1, 0, 0) == doctest::Approx(128.0 / 255.0));
        CHECK(ds.train_images[0].at(2, 0, 0) == doctest::Approx(64.0 / 255.0));
        std::remove(path.c_str());
    }
}

TEST_CASE("norm stats over the train split") {
    SynthSpec spec;
    spec.classes = 3;
    spec.per_class = 10;
    spec.image_size = 12;
    LabeledDataset ds = synth_dataset(spec);
    double mean[3], stdev[3];
    compute_norm_stats(ds, mean, stdev);
    for (int c = 0; c < 3; ++c) {
        CHECK(mean[c] > 0.0);
        CHECK(mean[c] < 1.0);
        CHECK(stdev[c] > 0.0);
    }
}
