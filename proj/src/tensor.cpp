#include "wsciss/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "wsciss/errors.hpp"

namespace wsciss {

Tensor3::Tensor3(int channels, int height, int width, double fill)
    : c_(channels), h_(height), w_(width) {
    if (channels < 0 || height < 0 || width < 0) {
        throw ValidationError("tensor dimensions must be non-negative");
    }
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

bool Tensor3::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor3 Tensor3::leading_channels(int n) const {
    if (n < 0 || n > c_) throw ValidationError("leading_channels: channel count out of range");
    Tensor3 out(n, h_, w_);
    std::copy_n(data_.begin(), out.size(), out.data_.begin());
    return out;
}

}  // namespace wsciss
