#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "fedaaw/errors.hpp"
#include "fedaaw/synthdata.hpp"

using namespace fedaaw;
namespace fs = std::filesystem;

namespace {

CenterSpec plain_spec(std::int64_t n = 6) {
    CenterSpec s;
    s.name = "C";
    s.sample_count = n;
    s.seed = 17;
    return s;
}

double mean_foreground(const std::vector<Sample>& samples) {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples)
        for (std::size_t i = 0; i < s.volume.size(); ++i)
            if (s.mask.data[i]) {
                acc += s.volume[i];
                ++n;
            }
    return acc / static_cast<double>(n);
}

fs::path scratch_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("fedaaw_test_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("noiseless generator reproduces base intensities") {
    const VolumeGeometry g;
    const auto samples = generate_center(plain_spec(), g);
    REQUIRE(samples.size() == 6);
    for (const auto& s : samples) {
        CHECK(s.mask.dims == g.dims);
        CHECK(s.mask.spacing == g.spacing);
        for (std::size_t i = 0; i < s.volume.size(); ++i)
            CHECK(s.volume[i] == (s.mask.data[i] ? g.foreground_intensity : g.background_intensity));
    }
}

TEST_CASE("masks are non-empty and strictly inside the grid") {
    for (const auto& spec : default_seven_centers(0.2, 3)) {
        for (const auto& s : generate_center(spec)) {
            const auto& d = s.mask.dims;
            CHECK(s.mask.foreground_count() > 0);
            for (std::size_t z = 0; z < d.z; ++z)
                for (std::size_t y = 0; y < d.y; ++y)
                    for (std::size_t x = 0; x < d.x; ++x) {
                        const bool border = z == 0 || y == 0 || x == 0 || z + 1 == d.z || y + 1 == d.y || x + 1 == d.x;
                        if (border) CHECK(s.mask.at(z, y, x) == 0);
                    }
            for (double v : s.volume) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }
}

TEST_CASE("generation is deterministic and seed sensitive") {
    auto spec = default_seven_centers(0.1, 1)[0];
    CHECK(generate_center(spec) == generate_center(spec));
    auto other = spec;
    other.seed += 1;
    CHECK(generate_center(spec) != generate_center(other));
}

TEST_CASE("domain shift separates foreground intensity") {
    auto centers = default_seven_centers(0.1, 1);
    std::vector<double> means;
    for (auto c : centers) {
        c.noise_sigma = 0.0;
        means.push_back(mean_foreground(generate_center(c)));
    }
    for (std::size_t i = 0; i < centers.size(); ++i)
        for (std::size_t j = i + 1; j < centers.size(); ++j) {
            const double configured = std::abs(centers[i].intensity_shift - centers[j].intensity_shift);
            CHECK(std::abs(means[i] - means[j]) >= configured - 1e-12);
        }
}

TEST_CASE("center spec validation") {
    auto s = plain_spec();
    s.sample_count = 2;
    CHECK_THROWS_AS(generate_center(s), InvalidInput);
    s = plain_spec();
    s.noise_sigma = -1;
    CHECK_THROWS_AS(generate_center(s), InvalidInput);
    s = plain_spec();
    s.blob_scale = 0;
    CHECK_THROWS_AS(generate_center(s), InvalidInput);
    s = plain_spec();
    s.blob_scale = 5.0;  // cannot fit inside the grid
    CHECK_THROWS_AS(generate_center(s), InvalidInput);
}

TEST_CASE("split sizes") {
    auto a = split_indices(10, 0.6, 0.2, 1);
    CHECK(a.train.size() == 6);
    CHECK(a.validation.size() == 2);
    CHECK(a.test.size() == 2);

    auto b = split_indices(17, 0.64, 0.16, 1);
    CHECK(b.train.size() == 11);
    CHECK(b.validation.size() == 2);
    CHECK(b.test.size() == 4);

    // The smallest allowed center still gets one validation sample.
    auto c = split_indices(5, 0.64, 0.16, 1);
    CHECK(c.train.size() == 3);
    CHECK(c.validation.size() == 1);
    CHECK(c.test.size() == 1);

    CHECK(split_indices(17, 0.64, 0.16, 1).train == b.train);
    CHECK_THROWS_AS(split_indices(2, 0.6, 0.2, 1), InvalidInput);
    CHECK_THROWS_AS(split_indices(10, 0.8, 0.2, 1), InvalidInput);
    CHECK_THROWS_AS(split_indices(10, 0.0, 0.2, 1), InvalidInput);
}

TEST_CASE("splits are disjoint and exhaustive") {
    for (std::size_t n = 5; n < 80; n += 3) {
        const auto s = split_indices(n, 0.6, 0.2, n);
        std::set<std::size_t> all;
        for (auto i : s.train) all.insert(i);
        for (auto i : s.validation) all.insert(i);
        for (auto i : s.test) all.insert(i);
        CHECK(all.size() == n);
        CHECK(s.train.size() + s.validation.size() + s.test.size() == n);
        CHECK(*all.rbegin() == n - 1);
    }
}

TEST_CASE("split_dataset keeps the samples") {
    const auto samples = generate_center(plain_spec(10));
    const auto ds = split_dataset(samples, 0.6, 0.2, 4);
    const auto idx = split_indices(10, 0.6, 0.2, 4);
    REQUIRE(ds.train.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(ds.train[i] == samples[idx.train[i]]);
    for (std::size_t i = 0; i < 2; ++i) CHECK(ds.test[i] == samples[idx.test[i]]);
}

TEST_CASE("seven-center roster") {
    const auto c = default_seven_centers(0.1);
    REQUIRE(c.size() == 7);
    const std::vector<std::string> names{"NYU", "MCF", "NU", "AHN", "MCA", "IU", "EMC"};
    const std::vector<std::int64_t> counts{16, 15, 21, 5, 5, 7, 9};
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(c[i].name == names[i]);
        CHECK(c[i].sample_count == counts[i]);
    }
    std::set<std::uint64_t> seeds;
    for (const auto& s : c) seeds.insert(s.seed);
    CHECK(seeds.size() == 7);

    const auto h = homogeneous_seven_centers(0.1);
    for (const auto& s : h) {
        CHECK(s.intensity_shift == h[0].intensity_shift);
        CHECK(s.noise_sigma == h[0].noise_sigma);
        CHECK(s.blob_scale == h[0].blob_scale);
    }
}

TEST_CASE("sample files round-trip") {
    const auto dir = scratch_dir("sample");
    fs::create_directories(dir);
    const auto s = generate_center(default_seven_centers(0.1, 2)[3])[0];
    write_sample(dir / "s.bin", s);
    CHECK(read_sample(dir / "s.bin") == s);

    // Truncated and foreign files are rejected.
    fs::resize_file(dir / "s.bin", 40);
    CHECK_THROWS(read_sample(dir / "s.bin"));
    fs::remove_all(dir);
}

TEST_CASE("dataset export and load") {
    const auto dir = scratch_dir("export");
    DatasetBundle b;
    for (auto spec : default_seven_centers(0.1, 5)) {
        b.centers.push_back(spec);
        auto ds = split_dataset(generate_center(spec, b.geometry), 0.6, 0.2, spec.seed);
        ds.name = spec.name;
        b.clients.push_back(std::move(ds));
    }
    export_dataset(dir, b);
    CHECK(fs::exists(dir / "manifest.json"));
    const auto loaded = load_dataset(dir / "manifest.json");
    REQUIRE(loaded.clients.size() == 7);
    CHECK(loaded.centers == b.centers);
    for (std::size_t i = 0; i < 7; ++i) {
        CHECK(loaded.clients[i].name == b.clients[i].name);
        CHECK(loaded.clients[i].train == b.clients[i].train);
        CHECK(loaded.clients[i].validation == b.clients[i].validation);
        CHECK(loaded.clients[i].test == b.clients[i].test);
    }
    fs::remove_all(dir);
}

TEST_CASE("center spec json round-trip") {
    const auto spec = default_seven_centers(0.3, 8)[4];
    CHECK(center_spec_from_json(center_spec_to_json(spec)) == spec);
    CHECK_THROWS_AS(center_spec_from_json(nlohmann::json{{"name", "X"}}), InvalidInput);
}
