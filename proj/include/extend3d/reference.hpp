#pragma once

#include <span>
#include <vector>

#include "extend3d/decode.hpp"
#include "extend3d/flowcore.hpp"
#include "extend3d/patchwork.hpp"
#include "extend3d/priors.hpp"

// Serial scatter-form versions of the parallel kernels. Tests compare the
// production kernels against these; the benchmark times both.
namespace extend3d::reference {

DenseLatent merge_vectors(std::span<const DenseLatent> patches, const PatchGrid& grid);
SparseLatent merge_vectors(std::span<const SparseLatent> patches, const PatchGrid& grid,
                           std::span<const Coord> global_coords, Extent extent);

/// Direct per-window SSIM with the gradient scattered window by window.
double ssim(const Image& a, const Image& b, std::span<double> grad_a);

SdfGrid merge_sdf_patches(std::span<const SdfGrid> patches, const PatchGrid& grid);

/// Windows evaluated one after another, merged with the scatter reference.
DenseLatent extended_field(const DenseLatent& z, double t, const FieldContext& ctx);

}  // namespace extend3d::reference
