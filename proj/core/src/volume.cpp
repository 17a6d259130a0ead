#include "ivlm/volume.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ivlm {

namespace {

const char* kModalityNames[] = {"CT", "MRI", "Ultrasound", "PET", "X-ray", "Angiography", "Other"};

std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// source coordinate for corner-aligned interpolation; a single-sample target
// axis pins to the origin so identity resizes stay exact
double src_coord(std::size_t out_idx, std::size_t out_len, std::size_t in_len) {
    if (out_len <= 1) return 0.0;
    return static_cast<double>(out_idx) * static_cast<double>(in_len - 1) /
           static_cast<double>(out_len - 1);
}

}  // namespace

const char* modality_name(Modality m) { return kModalityNames[static_cast<int>(m)]; }

Modality modality_from_name(const std::string& s) {
    const std::string l = lower(s);
    for (int i = 0; i < 7; ++i) {
        if (l == lower(kModalityNames[i])) return static_cast<Modality>(i);
    }
    if (l == "xray") return Modality::XRay;
    throw std::invalid_argument("volume: unknown modality '" + s + "'");
}

void Volume::validate() const {
    if (height < 1 || width < 1 || depth < 1 || channels < 1) {
        throw std::invalid_argument("volume: all dims must be >= 1");
    }
    if (voxels.size() != voxel_count()) {
        throw std::invalid_argument("volume: voxel count " + std::to_string(voxels.size()) +
                                    " does not match dims " + std::to_string(height) + "x" +
                                    std::to_string(width) + "x" + std::to_string(depth) + "x" +
                                    std::to_string(channels));
    }
}

Volume min_max_normalize(const Volume& v) {
    v.validate();
    Volume out = v;
    const auto [mn_it, mx_it] = std::minmax_element(v.voxels.begin(), v.voxels.end());
    const double mn = *mn_it, mx = *mx_it;
    if (mx == mn) {
        std::fill(out.voxels.begin(), out.voxels.end(), 0.0);
        return out;
    }
    const double inv = 1.0 / (mx - mn);
    for (double& x : out.voxels) x = (x - mn) * inv;
    return out;
}

Volume expand_2d(const Volume& v) {
    v.validate();
    if (v.depth != 1) {
        throw std::invalid_argument("expand_2d: volume is already 3D (depth " + std::to_string(v.depth) + ")");
    }
    constexpr std::size_t kPatchDepth = 4;
    Volume out;
    out.height = v.height;
    out.width = v.width;
    out.depth = kPatchDepth;
    out.channels = v.channels;
    out.modality = v.modality;
    out.is_native_2d = v.is_native_2d;
    out.voxels.resize(out.voxel_count());
    for (std::size_t h = 0; h < v.height; ++h)
        for (std::size_t w = 0; w < v.width; ++w)
            for (std::size_t d = 0; d < kPatchDepth; ++d)
                for (std::size_t c = 0; c < v.channels; ++c)
                    out.at(h, w, d, c) = v.at(h, w, 0, c);
    return out;
}

int round_depth(int d) {
    if (d < 1) throw std::invalid_argument("round_depth: depth must be >= 1, got " + std::to_string(d));
    const int nearest = 4 * ((d + 2) / 4);  // ties round up
    return std::clamp(nearest, 4, 64);
}

Volume resize(const Volume& v, std::size_t target_h, std::size_t target_w, std::size_t target_d) {
    v.validate();
    if (target_h < 1 || target_w < 1 || target_d < 1) {
        throw std::invalid_argument("resize: targets must be >= 1");
    }
    Volume out;
    out.height = target_h;
    out.width = target_w;
    out.depth = target_d;
    out.channels = v.channels;
    out.modality = v.modality;
    out.is_native_2d = v.is_native_2d;
    out.voxels.resize(out.voxel_count());

    for (std::size_t oh = 0; oh < target_h; ++oh) {
        const double fh = src_coord(oh, target_h, v.height);
        const std::size_t h0 = static_cast<std::size_t>(fh);
        const std::size_t h1 = std::min(h0 + 1, v.height - 1);
        const double th = fh - static_cast<double>(h0);
        for (std::size_t ow = 0; ow < target_w; ++ow) {
            const double fw = src_coord(ow, target_w, v.width);
            const std::size_t w0 = static_cast<std::size_t>(fw);
            const std::size_t w1 = std::min(w0 + 1, v.width - 1);
            const double tw = fw - static_cast<double>(w0);
            for (std::size_t od = 0; od < target_d; ++od) {
                const double fd = src_coord(od, target_d, v.depth);
                const std::size_t d0 = static_cast<std::size_t>(fd);
                const std::size_t d1 = std::min(d0 + 1, v.depth - 1);
                const double td = fd - static_cast<double>(d0);
                for (std::size_t c = 0; c < v.channels; ++c) {
                    const double c000 = v.at(h0, w0, d0, c), c001 = v.at(h0, w0, d1, c);
                    const double c010 = v.at(h0, w1, d0, c), c011 = v.at(h0, w1, d1, c);
                    const double c100 = v.at(h1, w0, d0, c), c101 = v.at(h1, w0, d1, c);
                    const double c110 = v.at(h1, w1, d0, c), c111 = v.at(h1, w1, d1, c);
                    const double c00 = c000 + (c001 - c000) * td;
                    const double c01 = c010 + (c011 - c010) * td;
                    const double c10 = c100 + (c101 - c100) * td;
                    const double c11 = c110 + (c111 - c110) * td;
                    const double c0 = c00 + (c01 - c00) * tw;
                    const double c1 = c10 + (c11 - c10) * tw;
                    out.at(oh, ow, od, c) = c0 + (c1 - c0) * th;
                }
            }
        }
    }
    return out;
}

Volume preprocess(const Volume& v) {
    Volume work = min_max_normalize(v);
    if (work.is_native_2d && work.depth == 1) {
        work = expand_2d(work);
    }
    if (work.is_native_2d) {
        work = resize(work, 512, 512, 4);
    } else {
        work = resize(work, 256, 256, static_cast<std::size_t>(round_depth(static_cast<int>(work.depth))));
    }
    // interpolation can land the extremes strictly inside (0,1); renormalize
    // so the output range is exact and the pipeline is a fixed point
    return min_max_normalize(work);
}

void save_volume(const std::string& path, const Volume& v) {
    v.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("volume: cannot open '" + path + "' for writing");
    os << "IVLM-VOL v1 " << v.height << " " << v.width << " " << v.depth << " " << v.channels << " "
       << modality_name(v.modality) << " " << (v.is_native_2d ? 1 : 0) << "\n";
    static_assert(sizeof(double) == 8);
    for (double x : v.voxels) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, 8);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
        os.write(reinterpret_cast<const char*>(b), 8);
    }
    if (!os) throw std::runtime_error("volume: write failed for '" + path + "'");
}

Volume load_volume(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("volume: cannot open '" + path + "'");
    std::string header;
    if (!std::getline(is, header)) throw std::runtime_error("volume: missing header in '" + path + "'");
    std::istringstream hs(header);
    std::string magic, version, modality;
    std::size_t h = 0, w = 0, d = 0, c = 0;
    int native2d = 0;
    if (!(hs >> magic >> version >> h >> w >> d >> c >> modality >> native2d) || magic != "IVLM-VOL" ||
        version != "v1") {
        throw std::runtime_error("volume: bad header in '" + path + "'");
    }
    Volume v;
    v.height = h;
    v.width = w;
    v.depth = d;
    v.channels = c;
    v.modality = modality_from_name(modality);
    v.is_native_2d = native2d != 0;
    v.voxels.resize(v.voxel_count());
    for (double& x : v.voxels) {
        unsigned char b[8];
        if (!is.read(reinterpret_cast<char*>(b), 8)) {
            throw std::runtime_error("volume: truncated payload in '" + path + "'");
        }
        std::uint64_t bits = 0;
        for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
        std::memcpy(&x, &bits, 8);
    }
    v.validate();
    return v;
}

}  // namespace ivlm
