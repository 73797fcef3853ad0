#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace iplforge {

// One utterance's pseudo-acoustic features, row-major T x F.
struct Features {
  std::int32_t frames = 0;
  std::int32_t dim = 0;
  std::vector<float> data;

  std::span<const float> frame(std::int32_t t) const {
    return {data.data() + static_cast<std::size_t>(t) * dim,
            static_cast<std::size_t>(dim)};
  }
  float& at(std::int32_t t, std::int32_t f) {
    return data[static_cast<std::size_t>(t) * dim + f];
  }
  float at(std::int32_t t, std::int32_t f) const {
    return data[static_cast<std::size_t>(t) * dim + f];
  }

  bool operator==(const Features&) const = default;
};

// Binary, one utterance per file: T and F as little-endian 32-bit signed
// integers, then T*F little-endian 32-bit floats in row-major order.
void save_features(const std::filesystem::path& path, const Features& features);
Features load_features(const std::filesystem::path& path);

}  // namespace iplforge
