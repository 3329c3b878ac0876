#pragma once

#include <string>
#include <vector>

namespace mccl {

// Interleaved 8-bit image, 1 (gray) or 3 (RGB) channels.
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<unsigned char> pixels;

  std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
};

// PNG or JPEG, decided by file magic. Gray stays 1-channel, everything else
// is decoded to RGB.
ImageU8 read_image(const std::string& path);

// 8-bit PNG with fixed settings; byte-identical across runs.
void write_png(const std::string& path, const ImageU8& img);

}  // namespace mccl
