#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace expforce {

/// Encodes a width x height RGB image of a single color as PNG bytes.
std::string solid_color_png(std::uint8_t r, std::uint8_t g, std::uint8_t b,
                            unsigned width = 8, unsigned height = 8);

/// "image/png", "image/jpeg", or "application/octet-stream" by magic bytes.
std::string_view sniff_media_type(std::string_view bytes);

}  // namespace expforce
