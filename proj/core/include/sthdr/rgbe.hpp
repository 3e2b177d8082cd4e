#pragma once

#include "sthdr/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace sthdr {

// Radiance RGBE (.hdr) codec. Images are 3×H×W linear radiance.
// Reading accepts flat and new-style run-length scanlines; writing is flat.

std::vector<std::uint8_t> encode_rgbe(const Tensor& image);
Tensor decode_rgbe(const std::vector<std::uint8_t>& bytes);

Tensor read_hdr(const std::filesystem::path& path);
void write_hdr(const std::filesystem::path& path, const Tensor& image);

// Shared-exponent pixel packing.
std::array<std::uint8_t, 4> pack_rgbe(Real r, Real g, Real b);
std::array<Real, 3> unpack_rgbe(const std::array<std::uint8_t, 4>& px);

} // namespace sthdr
