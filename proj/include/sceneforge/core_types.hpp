#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sceneforge {

// Error taxonomy. The CLI maps these onto exit codes 1/2/3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class BackendError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// 8-bit raster with 1 or 3 interleaved channels, row-major.
class ImageBuffer {
public:
    ImageBuffer() = default;
    ImageBuffer(int width, int height, int channels, std::uint8_t fill = 0);
    ImageBuffer(int width, int height, int channels, std::vector<std::uint8_t> samples);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return samples_.empty(); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

    std::uint8_t& at(int x, int y, int c = 0) { return samples_[index(x, y, c)]; }
    std::uint8_t at(int x, int y, int c = 0) const { return samples_[index(x, y, c)]; }

    std::span<std::uint8_t> samples() { return samples_; }
    std::span<const std::uint8_t> samples() const { return samples_; }

    bool operator==(const ImageBuffer&) const = default;

private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<std::uint8_t> samples_;
};

/// Single-channel real-valued map (blurred edge maps, probability maps, resampling planes).
class RealMap {
public:
    RealMap() = default;
    RealMap(int width, int height, double fill = 0.0);

    int width() const { return width_; }
    int height() const { return height_; }

    double& at(int x, int y) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    bool operator==(const RealMap&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> values_;
};

/// H_z x W_z x C_z latent, channel-last row-major.
class LatentTensor {
public:
    LatentTensor() = default;
    LatentTensor(int height, int width, int channels, double fill = 0.0);
    LatentTensor(int height, int width, int channels, std::vector<double> samples);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return samples_.size(); }

    double& at(int h, int w, int c) { return samples_[index(h, w, c)]; }
    double at(int h, int w, int c) const { return samples_[index(h, w, c)]; }

    std::span<double> samples() { return samples_; }
    std::span<const double> samples() const { return samples_; }

    bool same_shape(const LatentTensor& other) const {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }
    bool all_finite() const;

    bool operator==(const LatentTensor&) const = default;

private:
    std::size_t index(int h, int w, int c) const {
        return (static_cast<std::size_t>(h) * width_ + w) * channels_ + c;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> samples_;
};

/// Binary mask on an arbitrary grid (latent masks and pixel masks share it).
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int height, int width, bool fill = false);

    int height() const { return height_; }
    int width() const { return width_; }

    bool at(int h, int w) const { return bits_[static_cast<std::size_t>(h) * width_ + w] != 0; }
    void set(int h, int w, bool v = true) { bits_[static_cast<std::size_t>(h) * width_ + w] = v ? 1 : 0; }

    std::size_t count() const;
    std::span<const std::uint8_t> bits() const { return bits_; }

    bool operator==(const BinaryMask&) const = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> bits_;
};

using LatentMask = BinaryMask;

/// xoshiro256** seeded through splitmix64. Bit-reproducible on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();
    /// Uniform in [0,1) with 53 bits of resolution. One draw.
    double uniform();
    /// Box-Muller, cosine branch only: exactly two uniform draws per sample.
    double standard_normal();
    /// Integer in [lo, hi] inclusive. One draw.
    int randint(int lo, int hi);

    /// Deterministic sub-seed for an independent stream (per stage, per instance, per worker).
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
};

}  // namespace sceneforge
