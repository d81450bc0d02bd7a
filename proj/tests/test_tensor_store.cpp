#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "bib/error.hpp"
#include "bib/kvtext.hpp"
#include "bib/quant_scheme.hpp"
#include "bib/synthetic.hpp"
#include "bib/tensor_store.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace bib;
using bib::test::TempDir;

namespace {

ActivationTensor ramp(int layer, int sample, Shape shape, float offset) {
    ActivationTensor t;
    t.layer_id = layer;
    t.sample_id = sample;
    t.shape = shape;
    for (std::size_t i = 0; i < shape.numel(); ++i) t.values.push_back(offset + 0.25f * static_cast<float>(i));
    return t;
}

DatasetManifest small_dataset(const std::filesystem::path& root) {
    const std::vector<Shape> shapes{{4, 4, 2}, {2, 2, 4}};
    DatasetWriter w(root, 3, shapes);
    for (int l = 1; l <= 2; ++l) {
        for (int i = 1; i <= 3; ++i) w.write_tensor(ramp(l, i, shapes[static_cast<std::size_t>(l - 1)], float(10 * l + i)));
    }
    return w.finish();
}

QuantScheme powers_of_two_scheme() {
    QuantScheme s;
    s.layer_id = 1;
    s.spec = InitQuantizerSpec::make(QuantizerKind::clip_scale, 8, 0.0, 255.0);
    s.alpha.alpha = {1, 2, 4, 8, 16, 32, 64, 128};
    s.alpha.support = support_of(s.alpha.alpha);
    s.effective_rate = 8;
    s.threshold_db = 24.0;
    return s;
}

}  // namespace

TEST_CASE("manifest with two layers and correctly sized files is accepted") {
    TempDir dir;
    small_dataset(dir.path());
    const auto m = load_dataset(dir.path());
    CHECK(m.num_layers == 2);
    CHECK(m.num_samples == 3);
    CHECK(m.layer(1).shape == Shape{4, 4, 2});
    CHECK(m.layer(2).shape == Shape{2, 2, 4});
    // manifest path itself works too
    CHECK(load_dataset(dir / kManifestName).num_layers == 2);
}

TEST_CASE("file one float short is reported with layer and byte counts") {
    TempDir dir;
    small_dataset(dir.path());
    std::filesystem::resize_file(dir / "layer_2.f32", 3 * 16 * 4 - 4);
    try {
        load_dataset(dir.path());
        FAIL("expected DatasetError");
    } catch (const DatasetError& e) {
        REQUIRE(e.layer_id().has_value());
        CHECK(*e.layer_id() == 2);
        const std::string what = e.what();
        CHECK(what.find("188") != std::string::npos);
        CHECK(what.find("192") != std::string::npos);
    }
}

TEST_CASE("manifest validation errors") {
    TempDir dir;
    small_dataset(dir.path());
    const auto manifest = dir / kManifestName;
    const auto original = bib::test::slurp(manifest);

    SUBCASE("missing manifest") { CHECK_THROWS_AS(load_dataset(dir / "nope"), DatasetError); }
    SUBCASE("missing layer file") {
        std::filesystem::remove(dir / "layer_1.f32");
        try {
            load_dataset(dir.path());
            FAIL("expected error");
        } catch (const DatasetError& e) {
            CHECK(e.layer_id() == 1);
        }
    }
    SUBCASE("unsupported dtype") {
        auto text = original;
        text.replace(text.find("f32le"), 5, "f64le");
        bib::test::spit(manifest, text);
        CHECK_THROWS_WITH_AS(load_dataset(dir.path()), doctest::Contains("dtype"), DatasetError);
    }
    SUBCASE("non-contiguous layer indices") {
        auto text = original;
        text.replace(text.find("shape_2"), 7, "shape_3");
        bib::test::spit(manifest, text);
        try {
            load_dataset(dir.path());
            FAIL("expected error");
        } catch (const DatasetError& e) {
            CHECK(e.layer_id() == 3);
        }
    }
    SUBCASE("wrong version") {
        auto text = original;
        text.replace(text.find("version = 1"), 11, "version = 7");
        bib::test::spit(manifest, text);
        CHECK_THROWS_AS(load_dataset(dir.path()), SchemaVersionError);
    }
}

TEST_CASE("read_tensor round-trips bit-exactly and checks indices") {
    TempDir dir;
    const auto m = small_dataset(dir.path());
    const auto t = read_tensor(m, 1, 1);
    const auto expect = ramp(1, 1, {4, 4, 2}, 11.0f);
    REQUIRE(t.values.size() == expect.values.size());
    CHECK(std::memcmp(t.values.data(), expect.values.data(), 4 * t.values.size()) == 0);
    CHECK(read_tensor(m, 2, 3).values.front() == 23.0f);

    CHECK_THROWS_AS(read_tensor(m, 1, 4), IndexError);
    CHECK_THROWS_AS(read_tensor(m, 0, 1), IndexError);
    CHECK_THROWS_AS(read_tensor(m, 3, 1), IndexError);
}

TEST_CASE("NaN in a stored tensor is reported with its flat index") {
    TempDir dir;
    small_dataset(dir.path());
    {
        std::fstream f(dir / "layer_1.f32", std::ios::binary | std::ios::in | std::ios::out);
        const float nan = std::numeric_limits<float>::quiet_NaN();
        f.seekp(7 * 4);
        f.write(reinterpret_cast<const char*>(&nan), 4);
    }
    const auto m = load_dataset(dir.path());
    try {
        read_tensor(m, 1, 1);
        FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
        CHECK(e.flat_index() == 7);
        CHECK(std::string(e.what()).find("7") != std::string::npos);
    }
    CHECK_NOTHROW(read_tensor(m, 1, 2));
}

TEST_CASE("every accepted manifest admits read_tensor for all indices") {
    TempDir dir;
    auto spec = SyntheticSpec::default_four_layer(3, 11);
    const auto m = write_synthetic_dataset(spec, dir.path());
    for (int l = 1; l <= m.num_layers; ++l) {
        for (int i = 1; i <= m.num_samples; ++i) CHECK_NOTHROW(read_tensor(m, l, i));
    }
}

TEST_CASE("NPY v1.0 float32 files") {
    TempDir dir;
    const std::vector<float> data{0.f, 1.5f, -2.f, 3.25f, 4.f, 5.f};
    const std::vector<std::size_t> shape{1, 2, 3};
    write_npy(dir / "x.npy", data, shape);

    const auto raw = bib::test::slurp(dir / "x.npy");
    CHECK(raw.substr(0, 6) == "\x93NUMPY");
    CHECK(raw[6] == 1);
    CHECK(raw[7] == 0);
    CHECK((raw.size() - data.size() * 4) % 64 == 0);

    const auto t = tensor_from_npy(dir / "x.npy", 2, 5);
    CHECK(t.shape == Shape{1, 2, 3});
    CHECK(t.layer_id == 2);
    CHECK(t.values == data);

    SUBCASE("npy layer file inside a manifest") {
        std::vector<float> stacked(2 * 6);
        for (std::size_t i = 0; i < stacked.size(); ++i) stacked[i] = static_cast<float>(i) * 0.5f;
        const std::vector<std::size_t> s4{2, 1, 2, 3};
        write_npy(dir / "layer.npy", stacked, s4);
        bib::test::spit(dir / kManifestName,
                        "version = 1\nnum_layers = 1\nnum_samples = 2\ndtype = f32le\norder = c\n"
                        "shape_1 = 1,2,3\nfile_1 = layer.npy\n");
        const auto m = load_dataset(dir.path());
        CHECK(m.layer(1).storage == StorageKind::npy);
        CHECK(read_tensor(m, 1, 2).values.front() == 3.0f);
    }
    SUBCASE("fortran order rejected") {
        auto text = raw;
        text.replace(text.find("False"), 5, "True ");
        bib::test::spit(dir / "f.npy", text);
        CHECK_THROWS_AS(read_npy(dir / "f.npy"), DatasetError);
    }
    SUBCASE("other dtypes rejected") {
        auto text = raw;
        text.replace(text.find("<f4"), 3, "<f8");
        bib::test::spit(dir / "d.npy", text);
        CHECK_THROWS_AS(read_npy(dir / "d.npy"), DatasetError);
    }
}

TEST_CASE("scheme files round-trip exactly") {
    TempDir dir;
    SUBCASE("powers of two") {
        const auto s = powers_of_two_scheme();
        write_scheme(s, dir / "s.txt");
        const auto r = read_scheme(dir / "s.txt");
        CHECK(r.alpha.alpha == s.alpha.alpha);
        CHECK(r.effective_rate == 8);
        CHECK(r.spec == s.spec);
    }
    SUBCASE("float-nearest 0.1 keeps its bit pattern") {
        auto s = powers_of_two_scheme();
        s.alpha.alpha[0] = static_cast<double>(0.1f);
        CHECK(s.alpha.alpha[0] == doctest::Approx(0.1000000014901161).epsilon(1e-16));
        s.lambda = 1.0 / 3.0;
        s.t_per_sample = {-0.5, 2.0 / 3.0, 0.125};
        s.psnr_loss_db = 2.0 / 3.0;
        s.psnr_db = std::numeric_limits<double>::infinity();
        write_scheme(s, dir / "s.txt");
        const auto r = read_scheme(dir / "s.txt");
        CHECK(std::bit_cast<std::uint64_t>(r.alpha.alpha[0]) == std::bit_cast<std::uint64_t>(s.alpha.alpha[0]));
        CHECK(std::bit_cast<std::uint64_t>(r.lambda) == std::bit_cast<std::uint64_t>(s.lambda));
        CHECK(r.t_per_sample == s.t_per_sample);
        CHECK(std::isinf(r.psnr_db));
        CHECK(scheme_to_string(r) == scheme_to_string(s));
    }
    SUBCASE("unknown schema version") {
        auto text = scheme_to_string(powers_of_two_scheme());
        text.replace(text.find("schema_version = 1"), 18, "schema_version = 99");
        bib::test::spit(dir / "v.txt", text);
        CHECK_THROWS_AS(read_scheme(dir / "v.txt"), SchemaVersionError);
    }
    SUBCASE("inconsistent support is rejected on write") {
        auto s = powers_of_two_scheme();
        s.alpha.support.pop_back();
        CHECK_THROWS_AS(write_scheme(s, dir / "bad.txt"), DatasetError);
    }
}

TEST_CASE("hex-float formatting round-trips random doubles") {
    SplitRng rng(3);
    for (int i = 0; i < 2000; ++i) {
        const double v = (rng.uniform() - 0.5) * std::ldexp(1.0, static_cast<int>(rng.uniform() * 200) - 100);
        const auto text = format_hex(v);
        CHECK(std::bit_cast<std::uint64_t>(parse_real(text, "v")) == std::bit_cast<std::uint64_t>(v));
        CHECK(parse_real(format_real(v), "v") == v);
    }
}

TEST_CASE("key/value documents") {
    const auto doc = KeyValueDoc::parse("# comment\na = 1\n\nb =  x y \n");
    CHECK(doc.require("b") == "x y");
    CHECK(doc.require_int("a") == 1);
    CHECK_THROWS_AS(KeyValueDoc::parse("a = 1\na = 2\n"), DatasetError);
    CHECK_THROWS_AS(KeyValueDoc::parse("novalue\n"), DatasetError);
    CHECK_THROWS_AS(doc.require("c"), DatasetError);
}
