#pragma once

#include <string>
#include <vector>

#include "wsciss/rng.hpp"
#include "wsciss/tensor.hpp"

namespace wsciss::nn {

/// Named parameter blob with its gradient accumulator.
struct Parameter {
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;

    void zero_grad() { grad.assign(value.size(), 0.0); }
};

/// 2-D convolution, square kernel, zero padding k/2. Weight layout is
/// (out, in, k, k) row-major.
class Conv2d {
public:
    struct Cache {
        std::vector<double> cols;  // (in*k*k) x (Ho*Wo), row-major
        int in_h = 0;
        int in_w = 0;
    };

    Conv2d() = default;
    Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride);

    void init_he(Rng& rng);
    void init_normal(Rng& rng, double weight_std, double bias);
    Tensor3 forward(const Tensor3& x, Cache* cache) const;
    /// Accumulates parameter gradients and returns dL/dx.
    Tensor3 backward(const Tensor3& dy, const Cache& cache);

    /// Appends output channels with N(0, std) weights and the given bias.
    void grow_outputs(int new_out, double weight_std, double bias, Rng& rng);

    int in_channels() const noexcept { return in_; }
    int out_channels() const noexcept { return out_; }
    int kernel() const noexcept { return k_; }
    int stride() const noexcept { return stride_; }
    Parameter& weight() noexcept { return weight_; }
    Parameter& bias() noexcept { return bias_; }
    const Parameter& weight() const noexcept { return weight_; }
    const Parameter& bias() const noexcept { return bias_; }

    int out_size(int n) const noexcept { return (n + 2 * (k_ / 2) - k_) / stride_ + 1; }

private:
    int in_ = 0;
    int out_ = 0;
    int k_ = 1;
    int stride_ = 1;
    Parameter weight_;
    Parameter bias_;
};

/// In-place ReLU. relu_backward masks dy by the activated output.
void relu_inplace(Tensor3& x);
void relu_backward(Tensor3& dy, const Tensor3& activated);

/// Bilinear resize with half-pixel centers (align_corners = false).
Tensor3 resize_bilinear(const Tensor3& x, int height, int width);
/// Adjoint of resize_bilinear: maps a gradient at (height, width) back to
/// the (in_h, in_w) grid.
Tensor3 resize_bilinear_backward(const Tensor3& dy, int in_h, int in_w);

}  // namespace wsciss::nn
