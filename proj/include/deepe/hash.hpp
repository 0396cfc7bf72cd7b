#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace deepe {

// 64-bit FNV-1a. Stable across platforms, used for vocab fingerprints,
// data-file hashes and checkpoint checksums.
class Fnv1a {
 public:
  void update(std::span<const unsigned char> bytes) noexcept {
    for (unsigned char b : bytes) {
      state_ ^= b;
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view text) noexcept {
    update({reinterpret_cast<const unsigned char*>(text.data()), text.size()});
  }
  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a64(std::string_view text) noexcept {
  Fnv1a h;
  h.update(text);
  return h.digest();
}

// Throws std::runtime_error if the file cannot be read.
std::uint64_t hash_file(const std::filesystem::path& path);

std::string hex64(std::uint64_t value);

}  // namespace deepe
