#pragma once

// Differentiable operations over NCHW tensors. Convolutions zero-pad; there is
// no implicit broadcasting apart from scale_channels.

#include "tsrcan/tensor.hpp"

namespace tsr {

enum class NormMode { Train, Eval };

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b,
                      int stride = 1, int pad = 0);

// w is [Cin, Cout, kh, kw]; output side is (H-1)*stride - 2*pad + kh.
template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& x, const BasicTensor<T>& w,
                                const BasicTensor<T>& b, int stride = 1, int pad = 0);

// Padding cells never win the max. Ties resolve to the first element in scan order.
template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& x, int size, int stride, int pad = 0);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Train mode normalises with biased batch statistics and blends the unbiased
// variance into running_var; Eval mode uses the running statistics.
template <typename T>
BasicTensor<T> batchnorm2d(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta, BasicTensor<T>& running_mean,
                           BasicTensor<T>& running_var, NormMode mode);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& x, const BasicTensor<T>& y);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& x, const BasicTensor<T>& y);

// x[N,C,H,W] * s[N,C,1,1], broadcast over H and W.
template <typename T>
BasicTensor<T> scale_channels(const BasicTensor<T>& x, const BasicTensor<T>& s);

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Channels [begin, end) of x.
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin, std::size_t end);

// [N, C*f*f, H, W] -> [N, C, H*f, W*f] (sub-pixel shuffle).
template <typename T>
BasicTensor<T> depth_to_space(const BasicTensor<T>& x, int factor);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);

// Mean over all elements of 0.5*d^2 (|d| < 1) or |d| - 0.5, d = pred - target.
template <typename T>
BasicTensor<T> smooth_l1(const BasicTensor<T>& pred, const BasicTensor<T>& target);

}  // namespace tsr
