#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace wsciss {

/// Dense channel-major (C, H, W) tensor of doubles.
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(int channels, int height, int width, double fill = 0.0);

    int channels() const noexcept { return c_; }
    int height() const noexcept { return h_; }
    int width() const noexcept { return w_; }
    int plane() const noexcept { return h_ * w_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(int c, int y, int x) noexcept {
        return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x];
    }
    double operator()(int c, int y, int x) const noexcept {
        return data_[(static_cast<std::size_t>(c) * h_ + y) * w_ + x];
    }

    std::span<double> channel(int c) noexcept {
        return {data_.data() + static_cast<std::size_t>(c) * plane(), static_cast<std::size_t>(plane())};
    }
    std::span<const double> channel(int c) const noexcept {
        return {data_.data() + static_cast<std::size_t>(c) * plane(), static_cast<std::size_t>(plane())};
    }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::vector<double>& values() & noexcept { return data_; }
    const std::vector<double>& values() const& noexcept { return data_; }
    std::vector<double> values() && { return std::move(data_); }

    bool same_shape(const Tensor3& other) const noexcept {
        return c_ == other.c_ && h_ == other.h_ && w_ == other.w_;
    }
    bool all_finite() const noexcept;

    /// First `n` channels as a new tensor.
    Tensor3 leading_channels(int n) const;

    bool operator==(const Tensor3&) const = default;

private:
    int c_ = 0;
    int h_ = 0;
    int w_ = 0;
    std::vector<double> data_;
};

}  // namespace wsciss
