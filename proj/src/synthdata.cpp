#include "fedaaw/synthdata.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "fedaaw/errors.hpp"
#include "fedaaw/random.hpp"

namespace fedaaw {
namespace {

constexpr int kMaxBlobAttempts = 64;
constexpr std::uint32_t kSampleFormatVersion = 1;

// Domain-shift table for the seven-center roster.
struct CenterDefaults {
    const char* name;
    std::int64_t t1_count;
    double intensity_shift;
    double noise_sigma;
    double blob_scale;
    double blob_eccentricity;
    double position_jitter;
};

constexpr std::array<CenterDefaults, 7> kSevenCenters{{
    {"NYU", 162, 0.00, 0.05, 1.00, 1.00, 0.3},
    {"MCF", 148, 0.20, 0.05, 0.75, 1.50, 0.3},
    {"NU", 206, -0.20, 0.05, 1.25, 0.70, 0.3},
    {"AHN", 17, 0.40, 0.05, 0.70, 1.60, 0.5},
    {"MCA", 25, -0.35, 0.05, 1.30, 0.65, 0.5},
    {"IU", 74, 0.30, 0.05, 0.80, 1.40, 0.4},
    {"EMC", 91, -0.25, 0.05, 1.20, 0.70, 0.4},
}};

struct Blob {
    double cz, cy, cx;
    double rz, ry, rx;
};

// Rasterizes the blob; returns false when it is empty or touches the grid
// border.
bool rasterize(const Blob& b, const Dims3& d, std::vector<std::uint8_t>& mask) {
    mask.assign(d.count(), 0);
    bool any = false;
    std::size_t i = 0;
    for (std::size_t z = 0; z < d.z; ++z) {
        for (std::size_t y = 0; y < d.y; ++y) {
            for (std::size_t x = 0; x < d.x; ++x, ++i) {
                const double dz = (static_cast<double>(z) - b.cz) / b.rz;
                const double dy = (static_cast<double>(y) - b.cy) / b.ry;
                const double dx = (static_cast<double>(x) - b.cx) / b.rx;
                if (dz * dz + dy * dy + dx * dx > 1.0) continue;
                if (z == 0 || y == 0 || x == 0 || z + 1 == d.z || y + 1 == d.y || x + 1 == d.x) return false;
                mask[i] = 1;
                any = true;
            }
        }
    }
    return any;
}

double centered(std::size_t extent, double jitter, Rng& rng) {
    const double mid = (static_cast<double>(extent) - 1.0) / 2.0;
    return mid + jitter * (static_cast<double>(extent) / 4.0) * rng.uniform(-1.0, 1.0);
}

}  // namespace

void validate_center_spec(const CenterSpec& spec) {
    auto fail = [&](const std::string& why) { throw InvalidInput(fmt::format("center '{}': {}", spec.name, why)); };
    if (spec.name.empty()) fail("empty name");
    if (spec.sample_count < 3) fail(fmt::format("sample_count {} < 3", spec.sample_count));
    if (!std::isfinite(spec.intensity_shift)) fail("intensity_shift must be finite");
    if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) fail("noise_sigma must be >= 0");
    if (!(spec.blob_scale > 0.0) || !std::isfinite(spec.blob_scale)) fail("blob_scale must be > 0");
    if (!(spec.blob_eccentricity > 0.0) || !std::isfinite(spec.blob_eccentricity)) fail("blob_eccentricity must be > 0");
    if (!(spec.position_jitter >= 0.0) || !std::isfinite(spec.position_jitter)) fail("position_jitter must be >= 0");
}

std::vector<Sample> generate_center(const CenterSpec& spec, const VolumeGeometry& geometry) {
    validate_center_spec(spec);
    const Dims3& d = geometry.dims;
    if (d.z < 3 || d.y < 3 || d.x < 3) throw InvalidInput("generate_center: every grid extent must be at least 3");

    Rng rng(spec.seed);
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(spec.sample_count));
    std::vector<std::uint8_t> mask;

    for (std::int64_t n = 0; n < spec.sample_count; ++n) {
        bool ok = false;
        for (int attempt = 0; attempt < kMaxBlobAttempts && !ok; ++attempt) {
            Blob b;
            b.ry = spec.blob_scale * (static_cast<double>(d.y) / 4.0) * rng.uniform(0.85, 1.15);
            b.rx = b.ry * spec.blob_eccentricity;
            b.rz = spec.blob_scale * (static_cast<double>(d.z) / 4.0) * rng.uniform(0.85, 1.15);
            b.cz = centered(d.z, spec.position_jitter, rng);
            b.cy = centered(d.y, spec.position_jitter, rng);
            b.cx = centered(d.x, spec.position_jitter, rng);
            ok = rasterize(b, d, mask);
        }
        if (!ok) {
            throw InvalidInput(fmt::format("center '{}': could not place a blob inside the grid after {} attempts",
                                           spec.name, kMaxBlobAttempts));
        }

        std::vector<double> volume(d.count());
        for (std::size_t i = 0; i < volume.size(); ++i) {
            double v = (mask[i] ? geometry.foreground_intensity : geometry.background_intensity) + spec.intensity_shift;
            if (spec.noise_sigma > 0.0) v += spec.noise_sigma * rng.normal();
            volume[i] = std::clamp(v, 0.0, 1.0);
        }
        samples.push_back({std::move(volume), VoxelMask(d, mask, geometry.spacing)});
    }
    return samples;
}

SplitIndices split_indices(std::size_t n, double train_frac, double val_frac, std::uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0) || !(val_frac > 0.0 && val_frac < 1.0) ||
        !(train_frac + val_frac < 1.0)) {
        throw InvalidInput(fmt::format("split: fractions train={} val={} must lie in (0,1) with sum < 1", train_frac,
                                       val_frac));
    }
    // The epsilon absorbs representation error in products such as 10 * 0.8.
    constexpr double kFloorSlack = 1e-9;
    const double dn = static_cast<double>(n);
    const auto pool = static_cast<std::size_t>(std::floor(dn * (train_frac + val_frac) + kFloorSlack));
    // Validation gets at least one sample, taken from train, so that tiny
    // centers still have a loss gap to report.
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(dn * val_frac + kFloorSlack)));
    const std::size_t n_test = n - std::min(pool, n);
    const std::size_t n_train = pool > n_val ? pool - n_val : 0;
    if (n_train == 0 || n_test == 0) {
        throw InvalidInput(fmt::format("split: {} samples give an empty split ({} train / {} val / {} test)", n,
                                       n_train, n_val, n_test));
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));

    SplitIndices out;
    out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                          order.begin() + static_cast<std::ptrdiff_t>(pool));
    out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(pool), order.end());
    return out;
}

ClientDataset split_dataset(std::vector<Sample> samples, double train_frac, double val_frac, std::uint64_t seed) {
    const auto idx = split_indices(samples.size(), train_frac, val_frac, seed);
    ClientDataset out;
    auto take = [&](const std::vector<std::size_t>& which, std::vector<Sample>& into) {
        into.reserve(which.size());
        for (const auto i : which) into.push_back(std::move(samples[i]));
    };
    take(idx.train, out.train);
    take(idx.validation, out.validation);
    take(idx.test, out.test);
    return out;
}

std::vector<CenterSpec> default_seven_centers(double scale, std::uint64_t seed) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidInput("default_seven_centers: scale must be positive");
    std::vector<CenterSpec> out;
    for (std::size_t i = 0; i < kSevenCenters.size(); ++i) {
        const auto& c = kSevenCenters[i];
        CenterSpec s;
        s.name = c.name;
        s.sample_count = std::max<std::int64_t>(5, std::llround(scale * static_cast<double>(c.t1_count)));
        s.intensity_shift = c.intensity_shift;
        s.noise_sigma = c.noise_sigma;
        s.blob_scale = c.blob_scale;
        s.blob_eccentricity = c.blob_eccentricity;
        s.position_jitter = c.position_jitter;
        s.seed = mix_seed(seed, i);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<CenterSpec> homogeneous_seven_centers(double scale, std::uint64_t seed) {
    auto out = default_seven_centers(scale, seed);
    const auto& ref = kSevenCenters.front();
    for (auto& s : out) {
        s.intensity_shift = ref.intensity_shift;
        s.noise_sigma = ref.noise_sigma;
        s.blob_scale = ref.blob_scale;
        s.blob_eccentricity = ref.blob_eccentricity;
        s.position_jitter = ref.position_jitter;
    }
    return out;
}

nlohmann::json center_spec_to_json(const CenterSpec& s) {
    return {{"name", s.name},
            {"sample_count", s.sample_count},
            {"intensity_shift", s.intensity_shift},
            {"noise_sigma", s.noise_sigma},
            {"blob_scale", s.blob_scale},
            {"blob_eccentricity", s.blob_eccentricity},
            {"position_jitter", s.position_jitter},
            {"seed", s.seed}};
}

CenterSpec center_spec_from_json(const nlohmann::json& j) {
    static constexpr std::array<std::string_view, 8> kKeys{"name", "sample_count", "intensity_shift", "noise_sigma",
                                                           "blob_scale", "blob_eccentricity", "position_jitter", "seed"};
    if (!j.is_object()) throw InvalidInput("center spec: expected an object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
            throw InvalidInput(fmt::format("center spec: unknown field '{}'", key));
        }
    }
    CenterSpec s;
    try {
        s.name = j.at("name").get<std::string>();
        s.sample_count = j.at("sample_count").get<std::int64_t>();
        s.intensity_shift = j.value("intensity_shift", s.intensity_shift);
        s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
        s.blob_scale = j.value("blob_scale", s.blob_scale);
        s.blob_eccentricity = j.value("blob_eccentricity", s.blob_eccentricity);
        s.position_jitter = j.value("position_jitter", s.position_jitter);
        s.seed = j.value("seed", s.seed);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(fmt::format("center spec: {}", e.what()));
    }
    return s;
}

void write_sample(const std::filesystem::path& file, const Sample& sample) {
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    if (!os) throw InvalidInput("cannot write sample file " + file.string());
    const auto& m = sample.mask;
    os.write("FAWS", 4);
    io::write_u32(os, kSampleFormatVersion);
    io::write_u64(os, m.dims.z);
    io::write_u64(os, m.dims.y);
    io::write_u64(os, m.dims.x);
    io::write_f64(os, m.spacing.z);
    io::write_f64(os, m.spacing.y);
    io::write_f64(os, m.spacing.x);
    for (const double v : sample.volume) io::write_f64(os, v);
    os.write(reinterpret_cast<const char*>(m.data.data()), static_cast<std::streamsize>(m.data.size()));
    if (!os) throw InvalidInput("failed writing sample file " + file.string());
}

Sample read_sample(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw InvalidInput("cannot open sample file " + file.string());
    io::expect_magic(is, "FAWS", "sample");
    const auto version = io::read_u32(is);
    if (version != kSampleFormatVersion) throw InvalidInput(fmt::format("unsupported sample format version {}", version));
    Dims3 d;
    d.z = io::read_u64(is);
    d.y = io::read_u64(is);
    d.x = io::read_u64(is);
    Spacing3 sp;
    sp.z = io::read_f64(is);
    sp.y = io::read_f64(is);
    sp.x = io::read_f64(is);
    if (d.count() == 0 || d.count() > (std::size_t{1} << 30)) throw InvalidInput("sample file has invalid dims");
    std::vector<double> volume(d.count());
    for (auto& v : volume) v = io::read_f64(is);
    std::vector<std::uint8_t> mask(d.count());
    if (!is.read(reinterpret_cast<char*>(mask.data()), static_cast<std::streamsize>(mask.size()))) {
        throw InvalidInput("sample file truncated: " + file.string());
    }
    return {std::move(volume), VoxelMask(d, std::move(mask), sp)};
}

void export_dataset(const std::filesystem::path& dir, const DatasetBundle& bundle) {
    if (bundle.centers.size() != bundle.clients.size()) throw InvalidInput("export_dataset: centers/clients mismatch");
    std::filesystem::create_directories(dir);
    const auto& g = bundle.geometry;
    nlohmann::json manifest = {
        {"format", "fedaaw-dataset"},
        {"version", 1},
        {"geometry",
         {{"dims", {g.dims.z, g.dims.y, g.dims.x}},
          {"spacing", {g.spacing.z, g.spacing.y, g.spacing.x}},
          {"background_intensity", g.background_intensity},
          {"foreground_intensity", g.foreground_intensity}}},
        {"centers", nlohmann::json::array()},
    };
    for (std::size_t c = 0; c < bundle.clients.size(); ++c) {
        const auto& client = bundle.clients[c];
        const auto sub = std::filesystem::path(bundle.centers[c].name);
        std::filesystem::create_directories(dir / sub);
        nlohmann::json entry = center_spec_to_json(bundle.centers[c]);
        auto write_split = [&](const char* split, const std::vector<Sample>& samples) {
            auto files = nlohmann::json::array();
            for (std::size_t i = 0; i < samples.size(); ++i) {
                const auto rel = sub / fmt::format("{}_{:04d}.bin", split, i);
                write_sample(dir / rel, samples[i]);
                files.push_back(rel.generic_string());
            }
            entry["splits"][split] = std::move(files);
        };
        write_split("train", client.train);
        write_split("validation", client.validation);
        write_split("test", client.test);
        manifest["centers"].push_back(std::move(entry));
    }
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    os << manifest.dump(2) << '\n';
    if (!os) throw InvalidInput("failed writing manifest in " + dir.string());
}

DatasetBundle load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw InvalidInput("cannot open dataset manifest " + manifest_path.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(fmt::format("manifest {}: {}", manifest_path.string(), e.what()));
    }
    if (manifest.value("format", "") != "fedaaw-dataset") throw InvalidInput("manifest has an unknown format tag");
    const auto base = manifest_path.parent_path();

    DatasetBundle bundle;
    const auto& g = manifest.at("geometry");
    const auto dims = g.at("dims").get<std::vector<std::size_t>>();
    const auto spacing = g.at("spacing").get<std::vector<double>>();
    if (dims.size() != 3 || spacing.size() != 3) throw InvalidInput("manifest geometry needs 3 dims and 3 spacings");
    bundle.geometry.dims = {dims[0], dims[1], dims[2]};
    bundle.geometry.spacing = {spacing[0], spacing[1], spacing[2]};
    bundle.geometry.background_intensity = g.at("background_intensity").get<double>();
    bundle.geometry.foreground_intensity = g.at("foreground_intensity").get<double>();

    for (const auto& entry : manifest.at("centers")) {
        nlohmann::json spec = entry;
        spec.erase("splits");
        bundle.centers.push_back(center_spec_from_json(spec));
        ClientDataset client;
        client.name = bundle.centers.back().name;
        auto read_split = [&](const char* split, std::vector<Sample>& into) {
            for (const auto& rel : entry.at("splits").at(split)) {
                into.push_back(read_sample(base / rel.get<std::string>()));
                if (!(into.back().mask.dims == bundle.geometry.dims)) {
                    throw InvalidInput("sample dims disagree with manifest geometry: " + rel.get<std::string>());
                }
            }
        };
        read_split("train", client.train);
        read_split("validation", client.validation);
        read_split("test", client.test);
        bundle.clients.push_back(std::move(client));
    }
    return bundle;
}

}  // namespace fedaaw
