#include "cardiopulm/nifti_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cardiopulm/errors.hpp"

namespace cardiopulm {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;

#pragma pack(push, 1)
struct Nifti1Header {
    std::int32_t sizeof_hdr;     // 348
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code;
    std::int16_t sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)

static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string sidecar_path(const std::string& raw_path) {
    fs::path p(raw_path);
    p.replace_extension(".json");
    return p.string();
}

void ids_from_filename(const std::string& path, std::string& subject_id, std::string& scan_id) {
    const std::string stem = fs::path(path).stem().string();
    const auto us = stem.find('_');
    if (us == std::string::npos) {
        subject_id = stem;
        scan_id = stem;
    } else {
        subject_id = stem.substr(0, us);
        scan_id = stem.substr(us + 1);
    }
}

// descrip format: "state=<s>;subject=<id>;scan=<id>" truncated to 79 chars.
void parse_descrip(const char* descrip, CtVolume& v) {
    std::string d(descrip, strnlen(descrip, 80));
    std::size_t pos = 0;
    while (pos < d.size()) {
        const auto semi = d.find(';', pos);
        const std::string field = d.substr(pos, semi == std::string::npos ? std::string::npos : semi - pos);
        const auto eq = field.find('=');
        if (eq != std::string::npos) {
            const std::string key = field.substr(0, eq);
            const std::string val = field.substr(eq + 1);
            if (key == "state") {
                try {
                    v.intensity_state = intensity_state_from_string(val);
                } catch (const ValidationError&) {
                    // foreign descrip text, ignore
                }
            } else if (key == "subject" && !val.empty()) {
                v.subject_id = val;
            } else if (key == "scan" && !val.empty()) {
                v.scan_id = val;
            }
        }
        if (semi == std::string::npos) break;
        pos = semi + 1;
    }
}

CtVolume load_nifti(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open volume file '" + path + "'");

    Nifti1Header hdr{};
    in.read(reinterpret_cast<char*>(&hdr), sizeof(hdr));
    if (!in) throw IoError("truncated NIfTI header in '" + path + "'");
    if (hdr.sizeof_hdr != 348) {
        // 1543569408 is 348 byte swapped
        if (hdr.sizeof_hdr == 1543569408)
            throw ValidationError("big-endian NIfTI not supported: '" + path + "'");
        throw ValidationError("not a NIfTI-1 file (sizeof_hdr != 348): '" + path + "'");
    }
    if (std::strncmp(hdr.magic, "n+1", 3) != 0)
        throw ValidationError("unsupported NIfTI magic (expect single-file n+1): '" + path + "'");
    if (hdr.dim[0] != 3)
        throw ValidationError("expected 3-dimensional NIfTI, got dim[0]=" +
                              std::to_string(hdr.dim[0]));
    if (hdr.datatype != kDtInt16 && hdr.datatype != kDtFloat32)
        throw ValidationError("unsupported NIfTI datatype " + std::to_string(hdr.datatype) +
                              " (int16 and float32 only)");

    char ext_flag[4] = {0, 0, 0, 0};
    in.read(ext_flag, 4);
    if (in && ext_flag[0] != 0)
        throw ValidationError("NIfTI extensions not supported: '" + path + "'");
    in.clear();

    CtVolume v;
    for (int a = 0; a < 3; ++a) {
        v.dims[a] = hdr.dim[a + 1];
        v.spacing[a] = hdr.pixdim[a + 1];
        if (v.dims[a] < 1) throw ValidationError("non-positive NIfTI dim");
        if (!(v.spacing[a] > 0.0)) throw ValidationError("non-positive NIfTI voxel spacing");
    }

    // Axis-aligned orientation only: the sform rotation part, when present,
    // must be diagonal with positive entries.
    if (hdr.sform_code > 0) {
        const float* rows[3] = {hdr.srow_x, hdr.srow_y, hdr.srow_z};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) {
                const float e = rows[r][c];
                if (r == c ? e <= 0.0f : std::fabs(e) > 1e-5f)
                    throw ValidationError("oblique or flipped orientation not supported: '" +
                                          path + "'");
            }
    }
    if (hdr.qform_code > 0) {
        if (std::fabs(hdr.quatern_b) > 1e-5f || std::fabs(hdr.quatern_c) > 1e-5f ||
            std::fabs(hdr.quatern_d) > 1e-5f)
            throw ValidationError("oblique qform orientation not supported: '" + path + "'");
    }

    const std::size_t n = v.size();
    const std::size_t bytes_per = hdr.datatype == kDtInt16 ? 2 : 4;
    const auto file_size = fs::file_size(path);
    const std::size_t offset = static_cast<std::size_t>(hdr.vox_offset);
    if (offset < 352) throw ValidationError("invalid vox_offset in '" + path + "'");
    if (file_size != offset + n * bytes_per)
        throw ValidationError("dim mismatch: '" + path + "' declares " + std::to_string(n) +
                              " voxels but payload holds " +
                              std::to_string((file_size - offset) / bytes_per));

    in.seekg(static_cast<std::streamoff>(offset));
    v.voxels.resize(n);
    const float slope = hdr.scl_slope == 0.0f ? 1.0f : hdr.scl_slope;
    const float inter = hdr.scl_slope == 0.0f ? 0.0f : hdr.scl_inter;
    if (hdr.datatype == kDtInt16) {
        std::vector<std::int16_t> buf(n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 2));
        if (!in) throw IoError("truncated NIfTI payload in '" + path + "'");
        for (std::size_t i = 0; i < n; ++i)
            v.voxels[i] = static_cast<float>(buf[i]) * slope + inter;
    } else {
        in.read(reinterpret_cast<char*>(v.voxels.data()), static_cast<std::streamsize>(n * 4));
        if (!in) throw IoError("truncated NIfTI payload in '" + path + "'");
        if (slope != 1.0f || inter != 0.0f)
            for (std::size_t i = 0; i < n; ++i) v.voxels[i] = v.voxels[i] * slope + inter;
    }

    v.intensity_state = IntensityState::raw_hu;
    ids_from_filename(path, v.subject_id, v.scan_id);
    parse_descrip(hdr.descrip, v);
    validate_standard(v);
    return v;
}

CtVolume load_raw_sidecar(const std::string& path) {
    const std::string side = sidecar_path(path);
    std::ifstream sj(side);
    if (!sj) throw IoError("missing sidecar '" + side + "' for raw volume '" + path + "'");
    json j;
    try {
        sj >> j;
    } catch (const json::exception& e) {
        throw ValidationError("bad sidecar JSON '" + side + "': " + e.what());
    }

    CtVolume v;
    try {
        const auto dims = j.at("dims");
        const auto sp = j.at("spacing_mm");
        for (int a = 0; a < 3; ++a) {
            v.dims[a] = dims.at(a).get<int>();
            v.spacing[a] = sp.at(a).get<double>();
        }
        v.subject_id = j.at("subject_id").get<std::string>();
        v.scan_id = j.at("scan_id").get<std::string>();
        v.intensity_state = intensity_state_from_string(j.at("intensity_state").get<std::string>());
    } catch (const json::exception& e) {
        throw ValidationError("sidecar schema violation in '" + side + "': " + e.what());
    }

    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open volume file '" + path + "'");
    const std::size_t n = static_cast<std::size_t>(v.dims[0]) * v.dims[1] * v.dims[2];
    if (fs::file_size(path) != n * 4)
        throw ValidationError("dim mismatch: '" + path + "' sidecar declares " +
                              std::to_string(n) + " voxels but payload holds " +
                              std::to_string(fs::file_size(path) / 4));
    v.voxels.resize(n);
    in.read(reinterpret_cast<char*>(v.voxels.data()), static_cast<std::streamsize>(n * 4));
    if (!in) throw IoError("truncated raw payload in '" + path + "'");
    validate_standard(v);
    return v;
}

void save_nifti(const CtVolume& v, const std::string& path) {
    Nifti1Header hdr{};
    hdr.sizeof_hdr = 348;
    hdr.regular = 'r';
    hdr.dim[0] = 3;
    for (int a = 0; a < 3; ++a) {
        hdr.dim[a + 1] = static_cast<std::int16_t>(v.dims[a]);
        hdr.pixdim[a + 1] = static_cast<float>(v.spacing[a]);
    }
    for (int a = 4; a < 8; ++a) hdr.dim[a] = 1;
    hdr.pixdim[0] = 1.0f;
    hdr.datatype = kDtFloat32;
    hdr.bitpix = 32;
    hdr.vox_offset = 352.0f;
    hdr.scl_slope = 1.0f;
    hdr.scl_inter = 0.0f;
    hdr.xyzt_units = 2;  // millimeters
    hdr.sform_code = 1;
    hdr.srow_x[0] = static_cast<float>(v.spacing[0]);
    hdr.srow_y[1] = static_cast<float>(v.spacing[1]);
    hdr.srow_z[2] = static_cast<float>(v.spacing[2]);
    std::snprintf(hdr.descrip, sizeof(hdr.descrip), "state=%s;subject=%s;scan=%s",
                  to_string(v.intensity_state), v.subject_id.c_str(), v.scan_id.c_str());
    std::memcpy(hdr.magic, "n+1\0", 4);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write volume file '" + path + "'");
    out.write(reinterpret_cast<const char*>(&hdr), sizeof(hdr));
    const char ext_flag[4] = {0, 0, 0, 0};
    out.write(ext_flag, 4);
    out.write(reinterpret_cast<const char*>(v.voxels.data()),
              static_cast<std::streamsize>(v.voxels.size() * 4));
    if (!out) throw IoError("I/O failure writing '" + path + "'");
}

void save_raw_sidecar(const CtVolume& v, const std::string& path) {
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write volume file '" + path + "'");
        out.write(reinterpret_cast<const char*>(v.voxels.data()),
                  static_cast<std::streamsize>(v.voxels.size() * 4));
        if (!out) throw IoError("I/O failure writing '" + path + "'");
    }
    json j;
    j["dims"] = v.dims;
    j["spacing_mm"] = v.spacing;
    j["subject_id"] = v.subject_id;
    j["scan_id"] = v.scan_id;
    j["intensity_state"] = to_string(v.intensity_state);
    std::ofstream sj(sidecar_path(path), std::ios::trunc);
    if (!sj) throw IoError("cannot write sidecar for '" + path + "'");
    sj << j.dump(2) << "\n";
    if (!sj) throw IoError("I/O failure writing sidecar for '" + path + "'");
}

}  // namespace

CtVolume load_volume(const std::string& path) {
    if (!fs::exists(path)) throw IoError("volume file does not exist: '" + path + "'");
    if (has_suffix(path, ".nii")) return load_nifti(path);
    if (has_suffix(path, ".raw")) return load_raw_sidecar(path);
    throw ValidationError("unsupported volume extension (want .nii or .raw): '" + path + "'");
}

void save_volume(const CtVolume& v, const std::string& path) {
    validate_geometry(v);
    if (has_suffix(path, ".nii")) return save_nifti(v, path);
    if (has_suffix(path, ".raw")) return save_raw_sidecar(v, path);
    throw ValidationError("unsupported volume extension (want .nii or .raw): '" + path + "'");
}

}  // namespace cardiopulm
