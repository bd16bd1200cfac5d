#pragma once

#include <cstdint>
#include <vector>

namespace aco {

// One H×W×3 image in [0,1], channel-interleaved (y, x, c), plus its
// episode/time identity. Pixels are f32 to match the on-disk format.
struct Frame {
  uint16_t height = 32;
  uint16_t width = 32;
  uint32_t episode_id = 0;
  uint32_t time_index = 0;
  std::vector<float> pixels;  // height*width*3

  float at(int y, int x, int c) const {
    return pixels[(size_t(y) * width + x) * 3 + size_t(c)];
  }
  float& at(int y, int x, int c) {
    return pixels[(size_t(y) * width + x) * 3 + size_t(c)];
  }
  uint64_t image_uid() const {
    return (uint64_t(episode_id) << 32) | time_index;
  }
};

enum class LabelSource : uint8_t { ground_truth = 0, pseudo = 1 };

struct ActionLabel {
  uint32_t episode_id = 0;
  uint32_t time_index = 0;
  float steering = 0.5f;  // [0,1], 0.5 = straight
  LabelSource source = LabelSource::ground_truth;
};

}  // namespace aco
