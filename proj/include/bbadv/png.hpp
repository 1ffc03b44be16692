#ifndef BBADV_PNG_HPP
#define BBADV_PNG_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace bbadv {

/// Encode an 8-bit grayscale (channels=1) or RGB (channels=3) image as a
/// PNG byte stream. pixels is row-major top-to-bottom, channels interleaved
/// per pixel, length = width * height * channels.
std::vector<std::uint8_t> encode_png(int width, int height, int channels,
                                     const std::vector<std::uint8_t>& pixels);

void write_png(const std::string& path, int width, int height, int channels,
               const std::vector<std::uint8_t>& pixels);

}  // namespace bbadv

#endif
