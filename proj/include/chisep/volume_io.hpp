// volume_io.hpp - file I/O for ScalarVolume, BinaryMask and LabelVolume.
//
// Two formats are supported:
//   * NIfTI-1, single-file .nii (magic "n+1") or .hdr/.img pair (magic "ni1").
//     float32 and int16 (with scl_slope/scl_inter) payloads are honored.
//     The unit tag is carried in intent_name. Orientation matrices are read
//     but volumes are never resampled; the pipeline assumes co-registered
//     inputs.
//   * Raw little-endian float32 ("<name>.f32", x-fastest) with a JSON
//     sidecar "<name>.json" holding {dims, voxel_size_mm, unit}.
#pragma once

#include <string>

#include "chisep/types.hpp"

namespace chisep {

// Dispatches on extension: .nii/.hdr -> NIfTI, .f32 -> raw+sidecar.
ScalarVolume load_volume(const std::string& path);
void save_volume(const ScalarVolume& vol, const std::string& path);

BinaryMask load_mask(const std::string& path);           // nonzero -> true
void save_mask(const BinaryMask& mask, const std::string& path,
               const Vec3& voxel_mm);

// Labels are stored as an integer-valued volume; names come from an optional
// JSON table {"1": "Caudate", ...}. Labels without a table entry are named
// "label_<id>".
LabelVolume load_labels(const std::string& path, const std::string& names_json = "");
void save_labels(const LabelVolume& labels, const std::string& path,
                 const Vec3& voxel_mm, const std::string& names_json = "");

// NIfTI-1 specific entry points (used by the dispatchers above).
ScalarVolume load_nifti(const std::string& path);
void save_nifti(const ScalarVolume& vol, const std::string& path);

// Raw + sidecar entry points.
ScalarVolume load_raw(const std::string& path_f32);
void save_raw(const ScalarVolume& vol, const std::string& path_f32);

// Multi-echo GRE dataset manifest: JSON file with te_s, tr_s, b0_tesla,
// b0_dir and per-echo magnitude/phase volume paths (relative to the
// manifest's directory).
MultiEchoGre load_gre(const std::string& manifest_path);
void save_gre(const MultiEchoGre& gre, const std::string& manifest_path);

}  // namespace chisep
