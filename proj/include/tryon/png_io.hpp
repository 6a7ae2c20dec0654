#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tryon/image.hpp"

namespace tryon {

/// Lossless 8-bit PNG. Gray files load as 1 channel, RGB as 3, RGBA as 4.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);
void write_png(const std::filesystem::path& path, const SoftMask& mask);
SoftMask read_mask_png(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(std::span<const std::uint8_t> bytes);

/// Rounds every value to the nearest multiple of 1/255, i.e. what a PNG round trip keeps.
Image quantize_8bit(const Image& img);

/// Six-channel tensors persist as `<stem>_vm.png` (channels 0-2) and `<stem>_sdp.png`
/// (channels 3-5).
void write_split_representation(const std::filesystem::path& dir, const std::string& stem,
                                const Image& six_channel);
Image read_split_representation(const std::filesystem::path& dir, const std::string& stem);

}  // namespace tryon
