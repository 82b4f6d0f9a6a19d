// Copyright Contributors to the mvg-eval Project
// SPDX-License-Identifier: Apache-2.0
//
#ifndef MVG_PLY_H
#define MVG_PLY_H

#include <mvg/splat.h>

#include <filesystem>

namespace mvg {

/// Zeroth-order SH basis constant; color = 0.5 + kShC0 * f_dc.
inline constexpr double kShC0 = 0.28209479177387814;

/// Reads a binary little-endian 3DGS-style PLY. Unknown vertex properties
/// (f_rest_*, normals, extras) are skipped. Throws ParseError on malformed input.
GaussianSplat load_ply(const std::filesystem::path &path);

/// Writes x,y,z,nx,ny,nz,f_dc_0..2,opacity,scale_0..2,rot_0..3 as float32 with
/// log scales, logit opacity and zero normals.
void save_ply(const GaussianSplat &splat, const std::filesystem::path &path);

} // namespace mvg

#endif // MVG_PLY_H
