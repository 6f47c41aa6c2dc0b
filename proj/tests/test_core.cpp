#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cardiopulm/errors.hpp"
#include "cardiopulm/kernels.hpp"
#include "cardiopulm/nifti_io.hpp"
#include "cardiopulm/rng.hpp"
#include "cardiopulm/volume.hpp"

using namespace cardiopulm;
namespace fs = std::filesystem;

namespace {

std::vector<float> random_field(std::size_t n, std::uint64_t seed) {
    std::vector<float> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = static_cast<float>(3000.0 * rng::uniform01(rng::combine(seed, i)) - 1500.0);
    return v;
}

fs::path temp_dir() {
    const fs::path p = fs::temp_directory_path() / "cardiopulm_core_tests";
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_SUITE("kernels") {
    TEST_CASE("parallel kernels match the serial reference bitwise") {
        const auto v = random_field(300000, 42);
        using kernels::Exec;

        {
            auto a = v, b = v;
            kernels::clamp_inplace(a, -1000, 1000, Exec::serial);
            kernels::clamp_inplace(b, -1000, 1000, Exec::parallel);
            CHECK(a == b);
        }
        {
            auto a = v, b = v;
            kernels::affine_inplace(a, 0.0005f, 0.5f, Exec::serial);
            kernels::affine_inplace(b, 0.0005f, 0.5f, Exec::parallel);
            CHECK(a == b);
        }
        {
            const auto ms = kernels::moment_sums(v, Exec::serial);
            const auto mp = kernels::moment_sums(v, Exec::parallel);
            CHECK(ms.n == mp.n);
            CHECK(ms.s1 == mp.s1);
            CHECK(ms.s2 == mp.s2);
            CHECK(ms.s3 == mp.s3);
        }
        {
            CHECK(kernels::histogram16(v, -1000, 1000, Exec::serial) ==
                  kernels::histogram16(v, -1000, 1000, Exec::parallel));
            CHECK(kernels::count_in_range(v, -190, -30, Exec::serial) ==
                  kernels::count_in_range(v, -190, -30, Exec::parallel));
        }
        {
            std::vector<std::uint8_t> a(v.size()), b(v.size());
            kernels::threshold_above(v, -500, a, Exec::serial);
            kernels::threshold_above(v, -500, b, Exec::parallel);
            CHECK(a == b);
        }
        {
            const std::array<int, 3> sdims = {40, 50, 30};
            const std::array<double, 3> sspacing = {0.7, 0.7, 1.25};
            const auto src = random_field(static_cast<std::size_t>(40) * 50 * 30, 7);
            const std::array<int, 3> ddims = {28, 35, 38};
            std::vector<float> a(static_cast<std::size_t>(28) * 35 * 38), b(a.size());
            kernels::resample_trilinear(src.data(), sdims, sspacing, a.data(), ddims, 1.0,
                                        Exec::serial);
            kernels::resample_trilinear(src.data(), sdims, sspacing, b.data(), ddims, 1.0,
                                        Exec::parallel);
            CHECK(a == b);
        }
    }

    TEST_CASE("pairwise_sum equals sequential sum on exact-representable data") {
        std::vector<double> terms(1000);
        for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = static_cast<double>(i);
        CHECK(kernels::pairwise_sum(terms) == 999.0 * 1000.0 / 2);
    }

    TEST_CASE("histogram mass sums to one") {
        const auto v = random_field(100001, 9);
        const auto h = kernels::histogram16(v, -1000, 1000, kernels::Exec::parallel);
        double total = 0;
        for (double x : h) total += x;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_SUITE("volume ops") {
    TEST_CASE("clip clamps into [-1000, 1000] and is idempotent") {
        CtVolume v = make_volume({8, 8, 8}, {1, 1, 1}, 0.0f, IntensityState::raw_hu);
        v.voxels[0] = 1500.0f;
        v.voxels[1] = -2000.0f;
        v.voxels[2] = 350.0f;
        const CtVolume c = clip_hu(v);
        CHECK(c.voxels[0] == 1000.0f);
        CHECK(c.voxels[1] == -1000.0f);
        CHECK(c.voxels[2] == 350.0f);
        CHECK(c.intensity_state == IntensityState::clipped_hu);
        CHECK(c.dims == v.dims);

        // idempotence on the already-clipped payload
        CtVolume again = c;
        again.intensity_state = IntensityState::raw_hu;
        CHECK(clip_hu(again).voxels == c.voxels);

        CHECK_THROWS_AS((void)clip_hu(c), ValidationError);  // wrong state
    }

    TEST_CASE("normalize maps the clip range onto [0,1] monotonically") {
        CtVolume v = make_volume({8, 8, 8}, {1, 1, 1}, 0.0f, IntensityState::clipped_hu);
        v.voxels[0] = -1000.0f;
        v.voxels[1] = 0.0f;
        v.voxels[2] = 1000.0f;
        v.voxels[3] = -999.0f;
        const CtVolume n = normalize_intensity(v);
        CHECK(n.voxels[0] == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(n.voxels[1] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(n.voxels[2] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(n.voxels[0] < n.voxels[3]);  // strict monotonicity
        CHECK(n.intensity_state == IntensityState::normalized);
        CHECK_THROWS_AS((void)normalize_intensity(n), ValidationError);
    }

    TEST_CASE("resample: constant field stays exactly constant") {
        const CtVolume v = make_volume({10, 12, 9}, {1.3, 0.8, 2.0}, 123.25f);
        const CtVolume r = resample_isotropic(v, 1.0);
        for (float x : r.voxels) CHECK(x == 123.25f);
        CHECK(r.intensity_state == v.intensity_state);
    }

    TEST_CASE("resample: identity spacing changes nothing beyond 1e-6") {
        CtVolume v = make_volume({12, 12, 12}, {1, 1, 1});
        for (std::size_t i = 0; i < v.voxels.size(); ++i)
            v.voxels[i] = static_cast<float>(rng::uniform01(rng::combine(3, i)));
        const CtVolume r = resample_isotropic(v, 1.0);
        REQUIRE(r.dims == v.dims);
        for (std::size_t i = 0; i < v.voxels.size(); ++i)
            CHECK(std::fabs(r.voxels[i] - v.voxels[i]) <= 1e-6f);
    }

    TEST_CASE("resample: linear ramp reproduced within 1e-5") {
        CtVolume v = make_volume({16, 8, 8}, {1, 1, 1});
        for (int k = 0; k < 8; ++k)
            for (int j = 0; j < 8; ++j)
                for (int i = 0; i < 16; ++i) v.at(i, j, k) = static_cast<float>(i);
        const CtVolume r = resample_isotropic(v, 1.0);
        for (int k = 0; k < 8; ++k)
            for (int j = 0; j < 8; ++j)
                for (int i = 0; i < 16; ++i)
                    CHECK(std::fabs(r.at(i, j, k) - static_cast<float>(i)) <= 1e-5f);
    }

    TEST_CASE("resample: 4^3 at spacing 2 onto 1mm gives 8^3") {
        const CtVolume v = make_volume({4, 4, 4}, {2, 2, 2}, 5.0f);
        const CtVolume r = resample_isotropic(v, 1.0);
        CHECK(r.dims == std::array<int, 3>{8, 8, 8});
        CHECK(r.spacing == std::array<double, 3>{1.0, 1.0, 1.0});
        CHECK_THROWS_AS((void)resample_isotropic(v, 0.0), ValidationError);
    }

    TEST_CASE("resample: fractional-spacing interior ramp within 1e-5") {
        // spacing 0.5 -> 1.0: output value at x should be 2x in input index units
        CtVolume v = make_volume({32, 8, 8}, {0.5, 1, 1});
        for (int k = 0; k < 8; ++k)
            for (int j = 0; j < 8; ++j)
                for (int i = 0; i < 32; ++i) v.at(i, j, k) = static_cast<float>(i) * 0.5f;
        const CtVolume r = resample_isotropic(v, 1.0);
        REQUIRE(r.dims[0] == 16);
        for (int i = 0; i < 15; ++i)  // interior of the ramp axis
            CHECK(std::fabs(r.at(i, 4, 4) - static_cast<float>(i)) <= 1e-5f);
    }

    TEST_CASE("crop: full-volume box is the identity") {
        CtVolume v = make_volume({8, 8, 8}, {1, 1, 1});
        for (std::size_t i = 0; i < v.voxels.size(); ++i) v.voxels[i] = static_cast<float>(i);
        const CtVolume c = crop_roi(v, {{0, 0, 0}, {8, 8, 8}});
        CHECK(c.voxels == v.voxels);
    }

    TEST_CASE("crop: offset box indexes the source") {
        CtVolume v = make_volume({8, 8, 8}, {1, 1, 1});
        for (std::size_t i = 0; i < v.voxels.size(); ++i) v.voxels[i] = static_cast<float>(i);
        const CtVolume c = crop_roi(v, {{2, 2, 2}, {4, 4, 4}});
        CHECK(c.dims == std::array<int, 3>{4, 4, 4});
        CHECK(c.at(0, 0, 0) == v.at(2, 2, 2));
        CHECK(c.at(3, 3, 3) == v.at(5, 5, 5));

        CHECK_THROWS_AS((void)crop_roi(v, {{6, 6, 6}, {4, 4, 4}}), ValidationError);
    }

    TEST_CASE("crop composes: crop of crop equals crop of translated box") {
        CtVolume v = make_volume({12, 12, 12}, {1, 1, 1});
        for (std::size_t i = 0; i < v.voxels.size(); ++i)
            v.voxels[i] = static_cast<float>(rng::uniform01(rng::combine(17, i)));
        const CtVolume c1 = crop_roi(v, {{2, 1, 3}, {8, 9, 7}});
        const CtVolume c2 = crop_roi(c1, {{1, 2, 1}, {4, 4, 4}});
        const CtVolume direct = crop_roi(v, {{3, 3, 4}, {4, 4, 4}});
        CHECK(c2.voxels == direct.voxels);
    }
}

TEST_SUITE("volume io") {
    TEST_CASE("nifti round trip is exact") {
        const fs::path dir = temp_dir();
        CtVolume v = make_volume({16, 16, 16}, {0.7, 0.7, 1.25}, 0.0f,
                                 IntensityState::clipped_hu);
        for (std::size_t i = 0; i < v.voxels.size(); ++i)
            v.voxels[i] = static_cast<float>(2000.0 * rng::uniform01(rng::combine(5, i)) - 1000.0);
        v.subject_id = "s01";
        v.scan_id = "scanA";
        const std::string path = (dir / "s01_scanA.nii").string();
        save_volume(v, path);

        const CtVolume r = load_volume(path);
        CHECK(r.dims == v.dims);
        CHECK(r.spacing[0] == doctest::Approx(0.7).epsilon(1e-7));
        CHECK(r.spacing[2] == doctest::Approx(1.25).epsilon(1e-7));
        CHECK(r.voxels == v.voxels);  // bit identical
        CHECK(r.subject_id == "s01");
        CHECK(r.scan_id == "scanA");
        CHECK(r.intensity_state == IntensityState::clipped_hu);
    }

    TEST_CASE("all-zero 16^3 volume loads as written") {
        const fs::path dir = temp_dir();
        const CtVolume v = make_volume({16, 16, 16}, {1, 1, 1}, 0.0f);
        const std::string path = (dir / "zero.nii").string();
        save_volume(v, path);
        const CtVolume r = load_volume(path);
        CHECK(r.dims == std::array<int, 3>{16, 16, 16});
        for (float x : r.voxels) CHECK(x == 0.0f);
    }

    TEST_CASE("payload shorter than header dims is a dim mismatch") {
        const fs::path dir = temp_dir();
        const CtVolume v = make_volume({16, 16, 16}, {1, 1, 1}, 0.0f);
        const std::string path = (dir / "trunc.nii").string();
        save_volume(v, path);
        fs::resize_file(path, 352 + 4095 * 4);
        CHECK_THROWS_WITH_AS((void)load_volume(path),
                             doctest::Contains("dim mismatch"), ValidationError);
    }

    TEST_CASE("int16 payloads honor scl_slope and scl_inter") {
        const fs::path dir = temp_dir();
        const CtVolume v = make_volume({8, 8, 8}, {1, 1, 1}, 0.0f);
        const std::string path = (dir / "short.nii").string();
        save_volume(v, path);
        // rewrite header fields: datatype int16, slope 2, inter -100
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        const std::int16_t dt = 4, bp = 16;
        f.seekp(70);
        f.write(reinterpret_cast<const char*>(&dt), 2);
        f.write(reinterpret_cast<const char*>(&bp), 2);
        const float slope = 2.0f, inter = -100.0f;
        f.seekp(112);
        f.write(reinterpret_cast<const char*>(&slope), 4);
        f.write(reinterpret_cast<const char*>(&inter), 4);
        f.seekp(352);
        std::vector<std::int16_t> payload(8 * 8 * 8, 25);
        f.write(reinterpret_cast<const char*>(payload.data()),
                static_cast<std::streamsize>(payload.size() * 2));
        f.close();
        fs::resize_file(path, 352 + payload.size() * 2);
        const CtVolume r = load_volume(path);
        for (float x : r.voxels) CHECK(x == doctest::Approx(-50.0f));  // 25*2 - 100
    }

    TEST_CASE("unsupported datatype is rejected") {
        const fs::path dir = temp_dir();
        const CtVolume v = make_volume({8, 8, 8}, {1, 1, 1}, 0.0f);
        const std::string path = (dir / "f64.nii").string();
        save_volume(v, path);
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        const std::int16_t dt = 64;  // float64
        f.seekp(70);
        f.write(reinterpret_cast<const char*>(&dt), 2);
        f.close();
        CHECK_THROWS_AS((void)load_volume(path), ValidationError);
    }

    TEST_CASE("oblique sform is rejected") {
        const fs::path dir = temp_dir();
        const CtVolume v = make_volume({8, 8, 8}, {1, 1, 1}, 0.0f);
        const std::string path = (dir / "oblique.nii").string();
        save_volume(v, path);
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        const float off_diag = 0.3f;
        f.seekp(280 + 4);  // srow_x[1]
        f.write(reinterpret_cast<const char*>(&off_diag), 4);
        f.close();
        CHECK_THROWS_WITH_AS((void)load_volume(path), doctest::Contains("oblique"),
                             ValidationError);
    }

    TEST_CASE("raw+sidecar round trip carries metadata") {
        const fs::path dir = temp_dir();
        CtVolume v = make_volume({9, 10, 11}, {1.5, 1.5, 1.5}, -3.25f,
                                 IntensityState::raw_hu);
        v.subject_id = "subj7";
        v.scan_id = "subj7_s0";
        const std::string path = (dir / "vol.raw").string();
        save_volume(v, path);
        CHECK(fs::exists(dir / "vol.json"));
        const CtVolume r = load_volume(path);
        CHECK(r.voxels == v.voxels);
        CHECK(r.subject_id == "subj7");
        CHECK(r.spacing[1] == 1.5);
    }

    TEST_CASE("missing file and unwritable target raise IoError") {
        CHECK_THROWS_AS((void)load_volume("/nonexistent/file.nii"), IoError);
        const CtVolume v = make_volume({8, 8, 8}, {1, 1, 1}, 0.0f);
        CHECK_THROWS_AS(save_volume(v, "/nonexistent-dir/file.nii"), IoError);
    }

    TEST_CASE("volumes below the 8-voxel floor are rejected at the file boundary") {
        const fs::path dir = temp_dir();
        const CtVolume v = make_volume({4, 8, 8}, {1, 1, 1}, 0.0f);
        const std::string path = (dir / "small.nii").string();
        save_volume(v, path);  // writing is permitted; loading validates
        CHECK_THROWS_AS((void)load_volume(path), ValidationError);
    }
}
