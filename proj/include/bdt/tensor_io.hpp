#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bdt/core.hpp"

namespace bdt {

// BDT1 raw tensor layout: "BDT1" magic, u8 version (1), u32 LE height,
// width, channels, then height*width*channels f32 LE values row-major.

std::vector<std::byte> encode_bdt1(const ImageTensor& image);
ImageTensor decode_bdt1(std::span<const std::byte> bytes);

void write_bdt1(const std::filesystem::path& path, const ImageTensor& image);
ImageTensor read_bdt1(const std::filesystem::path& path);

/// 8-bit PNG, values divided by 255. Gray, gray+alpha, RGB and RGBA keep their
/// channel count; palette images expand to RGB.
ImageTensor read_png(const std::filesystem::path& path);

/// Dispatches on the file's magic bytes (BDT1 or PNG).
ImageTensor load_image(const std::filesystem::path& path);

}  // namespace bdt
