#include "cardiopulm/lung_risk.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "cardiopulm/errors.hpp"

namespace cardiopulm {

using nlohmann::json;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

const LungSurrogate& builtin_lung_surrogate() {
    // Mirrors data/lung_surrogate.json; a unit test keeps them in sync.
    static const LungSurrogate s = [] {
        LungSurrogate t;
        t.version = "lung-surrogate-v1";
        t.bias = -3.9;
        t.delta = 0.32;
        t.coeff[static_cast<int>(Finding::nodule)] = 2.2;
        t.coeff[static_cast<int>(Finding::opacity)] = 0.8;
        t.coeff[static_cast<int>(Finding::fibrosis)] = 0.6;
        t.coeff[static_cast<int>(Finding::emphysema)] = 0.9;
        return t;
    }();
    return s;
}

LungSurrogate lung_surrogate_from_json(const std::string& text) {
    LungSurrogate s;
    try {
        const json j = json::parse(text);
        s.version = j.at("version").get<std::string>();
        s.bias = j.at("bias").get<double>();
        s.delta = j.at("delta").get<double>();
        const json& c = j.at("coeff");
        for (Finding f : kAllFindings)
            if (c.contains(to_string(f)))
                s.coeff[static_cast<int>(f)] = c.at(to_string(f)).get<double>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad lung surrogate JSON: ") + e.what());
    }
    if (!(s.delta > 0.0)) throw ValidationError("lung surrogate delta must be > 0");
    return s;
}

std::string lung_surrogate_to_json(const LungSurrogate& s) {
    json j;
    j["version"] = s.version;
    j["bias"] = s.bias;
    j["delta"] = s.delta;
    json c;
    c[to_string(Finding::nodule)] = s.coeff[static_cast<int>(Finding::nodule)];
    c[to_string(Finding::opacity)] = s.coeff[static_cast<int>(Finding::opacity)];
    c[to_string(Finding::fibrosis)] = s.coeff[static_cast<int>(Finding::fibrosis)];
    c[to_string(Finding::emphysema)] = s.coeff[static_cast<int>(Finding::emphysema)];
    j["coeff"] = c;
    return j.dump(2);
}

RiskTrajectory estimate_trajectory(const FindingSet& findings, const LungSurrogate& s) {
    if (!(s.delta > 0.0)) throw ValidationError("lung surrogate delta must be > 0");
    double logit = s.bias;
    for (Finding f : kAllFindings)
        logit += s.coeff[static_cast<int>(f)] * findings.score_of(f);
    RiskTrajectory t;
    t.source = TrajectorySource::surrogate;
    for (int year = 0; year < kTrajectoryYears; ++year)
        t.values[static_cast<std::size_t>(year)] = sigmoid(logit + s.delta * year);
    validate(t);
    return t;
}

RiskTrajectory load_trajectory_file(const std::string& path, const std::string& scan_id,
                                    bool repair_monotone) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open trajectory CSV '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty trajectory CSV '" + path + "'");

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.empty() || cells[0] != scan_id) continue;
        if (cells.size() != 1 + kTrajectoryYears)
            throw ValidationError("trajectory row for '" + scan_id + "' has " +
                                  std::to_string(cells.size() - 1) + " values, want 6");
        RiskTrajectory t;
        t.source = TrajectorySource::file;
        for (int y = 0; y < kTrajectoryYears; ++y) {
            double v;
            try {
                v = std::stod(cells[static_cast<std::size_t>(y + 1)]);
            } catch (const std::exception&) {
                throw ValidationError("non-numeric trajectory value for '" + scan_id + "'");
            }
            if (!(v >= 0.0 && v <= 1.0))
                throw ValidationError("trajectory value outside [0,1] for '" + scan_id +
                                      "': " + cells[static_cast<std::size_t>(y + 1)]);
            t.values[static_cast<std::size_t>(y)] = v;
        }
        for (int y = 1; y < kTrajectoryYears; ++y) {
            if (t.values[static_cast<std::size_t>(y)] < t.values[static_cast<std::size_t>(y - 1)]) {
                if (!repair_monotone)
                    throw ValidationError("non-monotone trajectory for '" + scan_id +
                                          "' at year " + std::to_string(y + 1) +
                                          " (pass repair flag to apply cumulative max)");
                t.values[static_cast<std::size_t>(y)] = t.values[static_cast<std::size_t>(y - 1)];
            }
        }
        validate(t);
        return t;
    }
    throw ValidationError("scan '" + scan_id + "' not found in trajectory CSV '" + path + "'");
}

void validate(const RiskTrajectory& t) {
    for (int y = 0; y < kTrajectoryYears; ++y) {
        const double v = t.values[static_cast<std::size_t>(y)];
        if (!(v >= 0.0 && v <= 1.0))
            throw ValidationError("trajectory value outside [0,1]");
        if (y > 0 && v < t.values[static_cast<std::size_t>(y - 1)])
            throw ValidationError("trajectory must be non-decreasing");
    }
}

}  // namespace cardiopulm
