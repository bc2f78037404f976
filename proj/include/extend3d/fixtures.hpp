#pragma once

#include <cstdint>

#include "extend3d/lattice.hpp"
#include "extend3d/priors.hpp"

namespace extend3d {

/// Synthetic scene with a known completion, seen from straight above.
///
/// The target is a union of block-aligned solids on a ground slab (block =
/// r^3 voxels, r = M/N), including one wide box whose interior is the hidden
/// cavity. The prior holds one pixel per lattice column: the colour of the
/// column and the centre of its topmost occupied voxel. Everything below the
/// roofs is therefore hidden. Target features carry the column colour in
/// channels 0..2 and a depth-dependent negative value in the rest.
struct SyntheticScene {
    Dims dims;
    ScenePrior prior;
    NormalizationBox box;      // [0, aM] x [0, bM] x [0, M]
    OccupancyGrid target;      // complete occupancy
    OccupancyGrid visible;     // voxelized prior
    OccupancyGrid hidden;      // target minus visible
    DenseLatent ss_target;     // ToyCodec encoding of target
    SparseLatent slat_target;  // features on every target voxel
};

SyntheticScene occluded_cavity_scene(const Dims& dims, std::uint64_t seed);

}  // namespace extend3d
