#pragma once

#include <string>
#include <vector>

#include "mvtri/image.hpp"

namespace mvtri {

// Minimal 8-bit RGB PNG codec over zlib. The writer emits a fixed,
// deterministic byte stream (byte-exact dataset regeneration is a contract);
// the reader handles non-interlaced 8-bit RGB/RGBA files with any of the
// five standard scanline filters.
std::vector<uint8_t> encode_png(const ImageU8& img);
ImageU8 decode_png(const std::vector<uint8_t>& bytes);

void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);

}  // namespace mvtri
