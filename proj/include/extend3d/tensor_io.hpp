#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "extend3d/lattice.hpp"

namespace extend3d {

/// Raw tensor as stored in XLT1 files: 8-byte magic "XLT1\0\0\0\0", u32 rank,
/// rank u32 dims, then the row-major f32 payload, all little-endian.
struct Tensor {
    std::vector<std::uint32_t> shape;
    std::vector<float> data;

    std::size_t element_count() const noexcept;
    friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::vector<std::uint8_t> encode_xlt(const Tensor& tensor);
Tensor decode_xlt(std::span<const std::uint8_t> bytes);

void write_xlt(const std::string& path, const Tensor& tensor);
Tensor read_xlt(const std::string& path);

Tensor to_tensor(const DenseLatent& latent);      // (X, Y, Z, C)
Tensor to_tensor(const OccupancyGrid& grid);      // (X, Y, Z), 0/1
Tensor to_tensor(const SparseLatent& latent);     // (count, 3 + width); coords stored as floats

DenseLatent dense_from_tensor(const Tensor& tensor);
OccupancyGrid occupancy_from_tensor(const Tensor& tensor);  // any value > 0.5 is occupied
SparseLatent sparse_from_tensor(const Tensor& tensor, Extent extent);

}  // namespace extend3d
