#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cardiopulm/errors.hpp"
#include "cardiopulm/lung_risk.hpp"

using namespace cardiopulm;
namespace fs = std::filesystem;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string write_csv(const std::string& name, const std::string& body) {
    const fs::path dir = fs::temp_directory_path() / "cardiopulm_lungrisk_tests";
    fs::create_directories(dir);
    const std::string path = (dir / name).string();
    std::ofstream out(path, std::ios::trunc);
    out << body;
    return path;
}

}  // namespace

TEST_SUITE("trajectory surrogate") {
    TEST_CASE("zero scores give the baseline curve") {
        const FindingSet fs = filter_findings({});
        const RiskTrajectory t = estimate_trajectory(fs);
        const LungSurrogate& s = builtin_lung_surrogate();
        for (int y = 0; y < kTrajectoryYears; ++y)
            CHECK(t.values[static_cast<std::size_t>(y)] ==
                  doctest::Approx(sigmoid(s.bias + s.delta * y)).epsilon(1e-12));
        for (int y = 1; y < kTrajectoryYears; ++y)
            CHECK(t.values[static_cast<std::size_t>(y)] > t.values[static_cast<std::size_t>(y - 1)]);
    }

    TEST_CASE("output has six horizons") {
        const RiskTrajectory t = estimate_trajectory(filter_findings({}));
        CHECK(t.values.size() == 6);
        CHECK(t.source == TrajectorySource::surrogate);
    }

    TEST_CASE("a nodule raises every year strictly") {
        const RiskTrajectory lo = estimate_trajectory(filter_findings({{Finding::nodule, 0.0}}));
        const RiskTrajectory hi = estimate_trajectory(filter_findings({{Finding::nodule, 1.0}}));
        for (int y = 0; y < kTrajectoryYears; ++y)
            CHECK(hi.values[static_cast<std::size_t>(y)] > lo.values[static_cast<std::size_t>(y)]);
    }

    TEST_CASE("every surrogate coefficient is monotone") {
        for (Finding f : {Finding::nodule, Finding::opacity, Finding::fibrosis,
                          Finding::emphysema}) {
            const RiskTrajectory lo = estimate_trajectory(filter_findings({{f, 0.2}}));
            const RiskTrajectory hi = estimate_trajectory(filter_findings({{f, 0.9}}));
            CHECK(hi.values[5] > lo.values[5]);
        }
    }

    TEST_CASE("data/lung_surrogate.json matches the built-in constants") {
        std::ifstream in(std::string(CARDIOPULM_SOURCE_DIR) + "/data/lung_surrogate.json");
        REQUIRE(bool(in));
        std::stringstream ss;
        ss << in.rdbuf();
        const LungSurrogate file_s = lung_surrogate_from_json(ss.str());
        const LungSurrogate& builtin = builtin_lung_surrogate();
        CHECK(file_s.version == builtin.version);
        CHECK(file_s.bias == builtin.bias);
        CHECK(file_s.delta == builtin.delta);
        CHECK(file_s.coeff == builtin.coeff);
    }

    TEST_CASE("surrogate JSON round trip") {
        const LungSurrogate& s = builtin_lung_surrogate();
        const LungSurrogate r = lung_surrogate_from_json(lung_surrogate_to_json(s));
        CHECK(r.bias == s.bias);
        CHECK(r.delta == s.delta);
        CHECK(r.coeff == s.coeff);
    }
}

TEST_SUITE("trajectory CSV bridge") {
    TEST_CASE("a valid row loads as given") {
        const std::string path = write_csv("ok.csv",
                                           "scan_id,y1,y2,y3,y4,y5,y6\n"
                                           "s1,0.01,0.02,0.03,0.05,0.07,0.10\n");
        const RiskTrajectory t = load_trajectory_file(path, "s1");
        CHECK(t.values[0] == 0.01);
        CHECK(t.values[5] == 0.10);
        CHECK(t.source == TrajectorySource::file);
    }

    TEST_CASE("non-monotone rows fail unless the repair flag is set") {
        const std::string path = write_csv("mono.csv",
                                           "scan_id,y1,y2,y3,y4,y5,y6\n"
                                           "s1,0.01,0.02,0.05,0.03,0.07,0.10\n");
        CHECK_THROWS_WITH_AS((void)load_trajectory_file(path, "s1"),
                             doctest::Contains("non-monotone"), ValidationError);
        const RiskTrajectory t = load_trajectory_file(path, "s1", /*repair=*/true);
        CHECK(t.values[3] == 0.05);  // cumulative max
        CHECK(t.values[4] == 0.07);
    }

    TEST_CASE("out-of-range values are rejected") {
        const std::string path = write_csv("range.csv",
                                           "scan_id,y1,y2,y3,y4,y5,y6\n"
                                           "s1,0.01,1.5,0.03,0.05,0.07,0.10\n");
        CHECK_THROWS_AS((void)load_trajectory_file(path, "s1"), ValidationError);
    }

    TEST_CASE("a missing scan id is an error") {
        const std::string path = write_csv("missing.csv",
                                           "scan_id,y1,y2,y3,y4,y5,y6\n"
                                           "other,0.01,0.02,0.03,0.05,0.07,0.10\n");
        CHECK_THROWS_AS((void)load_trajectory_file(path, "s1"), ValidationError);
        CHECK_THROWS_AS((void)load_trajectory_file("/no/such/file.csv", "s1"), IoError);
    }
}
