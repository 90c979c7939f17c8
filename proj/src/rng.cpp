#include "gmml/rng.hpp"

#include <cmath>
#include <numbers>

#include "gmml/error.hpp"

namespace gmml {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t hash_tag(std::string_view tag) noexcept {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

Rng::Rng(std::uint64_t seed, std::string_view purpose)
    : key_(mix64(mix64(seed + kGolden) ^ hash_tag(purpose))) {}

std::uint64_t Rng::next() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

Rng Rng::substream(std::uint64_t index) const {
  return Rng(mix64(key_ ^ mix64(index + 0x632be59bd9b4e019ULL)), 0, 0);
}

double Rng::uniform() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::index(std::uint64_t bound) {
  if (bound == 0) throw Error(ErrorCode::invalid_argument, "Rng::index bound must be positive");
  // Lemire's multiply-shift with rejection.
  unsigned __int128 m = static_cast<unsigned __int128>(next()) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(next()) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace gmml
