#include "sceneforge/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sceneforge {

namespace {

void check_dims(int width, int height) {
    if (width < 0 || height < 0) {
        throw ConfigError("negative raster dimensions");
    }
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

ImageBuffer::ImageBuffer(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels) {
    check_dims(width, height);
    if (channels != 1 && channels != 3) {
        throw ConfigError("image channels must be 1 or 3, got " + std::to_string(channels));
    }
    samples_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

ImageBuffer::ImageBuffer(int width, int height, int channels, std::vector<std::uint8_t> samples)
    : width_(width), height_(height), channels_(channels), samples_(std::move(samples)) {
    check_dims(width, height);
    if (channels != 1 && channels != 3) {
        throw ConfigError("image channels must be 1 or 3, got " + std::to_string(channels));
    }
    if (samples_.size() != static_cast<std::size_t>(width) * height * channels) {
        throw ConfigError("image sample count does not match dimensions");
    }
}

RealMap::RealMap(int width, int height, double fill) : width_(width), height_(height) {
    check_dims(width, height);
    values_.assign(static_cast<std::size_t>(width) * height, fill);
}

LatentTensor::LatentTensor(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
    check_dims(width, height);
    if (channels < 1) {
        throw ConfigError("latent channels must be positive");
    }
    samples_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

LatentTensor::LatentTensor(int height, int width, int channels, std::vector<double> samples)
    : height_(height), width_(width), channels_(channels), samples_(std::move(samples)) {
    check_dims(width, height);
    if (channels < 1) {
        throw ConfigError("latent channels must be positive");
    }
    if (samples_.size() != static_cast<std::size_t>(height) * width * channels) {
        throw ConfigError("latent sample count does not match shape");
    }
}

bool LatentTensor::all_finite() const {
    return std::all_of(samples_.begin(), samples_.end(), [](double v) { return std::isfinite(v); });
}

BinaryMask::BinaryMask(int height, int width, bool fill) : height_(height), width_(width) {
    check_dims(width, height);
    bits_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& word : s_) {
        word = splitmix64(sm);
    }
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::standard_normal() {
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::randint(int lo, int hi) {
    if (hi < lo) {
        throw ConfigError("randint: empty range");
    }
    const auto span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo + 1);
    const auto offset = static_cast<std::uint64_t>(uniform() * static_cast<double>(span));
    return lo + static_cast<int>(std::min(offset, span - 1));
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t state = seed ^ (0xd1b54a32d192ed03ULL * (stream + 1));
    return splitmix64(state);
}

}  // namespace sceneforge
