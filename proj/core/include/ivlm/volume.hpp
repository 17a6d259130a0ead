#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace ivlm {

enum class Modality { CT, MRI, Ultrasound, PET, XRay, Angiography, Other };

const char* modality_name(Modality m);            // canonical display name, e.g. "X-ray"
Modality modality_from_name(const std::string& s);  // case-insensitive

// Dense H x W x D x C intensity grid, row-major in that order.
struct Volume {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t depth = 0;
    std::size_t channels = 1;
    std::vector<double> voxels;
    Modality modality = Modality::Other;
    bool is_native_2d = false;

    std::size_t voxel_count() const { return height * width * depth * channels; }
    double& at(std::size_t h, std::size_t w, std::size_t d, std::size_t c) {
        return voxels[((h * width + w) * depth + d) * channels + c];
    }
    double at(std::size_t h, std::size_t w, std::size_t d, std::size_t c) const {
        return voxels[((h * width + w) * depth + d) * channels + c];
    }
    void validate() const;  // throws if dims/voxel count disagree
};

// Linear map of the intensity range onto [0,1]; a zero-range volume maps to
// all zeros.
Volume min_max_normalize(const Volume& v);

// Replicate a single-depth volume to the patch depth (4 slices). Errors on
// inputs that are already 3D.
Volume expand_2d(const Volume& v);

// Multiple of 4 nearest to d, ties rounded up, clamped to [4, 64].
int round_depth(int d);

// Trilinear, corner-aligned resampling to the target grid.
Volume resize(const Volume& v, std::size_t target_h, std::size_t target_w, std::size_t target_d);

// Full pipeline: normalize, expand native-2D inputs, resize (512x512x4 for
// 2D-origin, 256x256xround_depth(d) for 3D), then renormalize so the output
// range is exactly [0,1]. Idempotent.
Volume preprocess(const Volume& v);

// Volume file: ASCII header line "IVLM-VOL v1 H W D C MODALITY NATIVE2D\n"
// followed by raw little-endian f64 voxels.
void save_volume(const std::string& path, const Volume& v);
Volume load_volume(const std::string& path);

}  // namespace ivlm
