#include "iplforge/features.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "iplforge/error.hpp"

namespace iplforge {

static_assert(std::endian::native == std::endian::little,
              "feature files are little-endian; byte swapping not implemented");

void save_features(const std::filesystem::path& path, const Features& features) {
  if (features.frames < 0 || features.dim <= 0 ||
      features.data.size() != static_cast<std::size_t>(features.frames) *
                                  static_cast<std::size_t>(features.dim)) {
    throw DataError("save_features: inconsistent shape for " + path.string());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file: " + path.string());
  out.write(reinterpret_cast<const char*>(&features.frames), 4);
  out.write(reinterpret_cast<const char*>(&features.dim), 4);
  out.write(reinterpret_cast<const char*>(features.data.data()),
            static_cast<std::streamsize>(features.data.size() * 4));
  if (!out.flush()) throw DataError("write failed: " + path.string());
}

Features load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read feature file: " + path.string());
  Features features;
  in.read(reinterpret_cast<char*>(&features.frames), 4);
  in.read(reinterpret_cast<char*>(&features.dim), 4);
  if (!in || features.frames < 0 || features.dim <= 0) {
    throw DataError("corrupt feature header: " + path.string());
  }
  std::size_t count = static_cast<std::size_t>(features.frames) *
                      static_cast<std::size_t>(features.dim);
  features.data.resize(count);
  in.read(reinterpret_cast<char*>(features.data.data()),
          static_cast<std::streamsize>(count * 4));
  if (!in) throw DataError("truncated feature file: " + path.string());
  return features;
}

}  // namespace iplforge
