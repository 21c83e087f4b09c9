#pragma once

#include <vector>

#include "vitalsynth/autograd.hpp"
#include "vitalsynth/rng.hpp"
#include "vitalsynth/tensor.hpp"

namespace vitalsynth {

// Elementwise arithmetic. Shapes must match, or one operand's shape must be
// a suffix of the other's; the smaller operand is then broadcast over the
// leading dimensions. A rank-0 scalar broadcasts with anything.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Guarded: any zero in the divisor is a DomainError.
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);

// Structure.
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]·[k,n] -> [m,n]
Tensor transpose(const Tensor& a);                // rank 2
Tensor concat(const std::vector<Tensor>& parts, size_t axis);
Tensor slice(const Tensor& t, size_t axis, size_t start, size_t stop);
Tensor reshape(const Tensor& t, Shape shape);

// Reductions.
Tensor sum(const Tensor& t);   // -> rank-0 scalar
Tensor mean(const Tensor& t);  // -> rank-0 scalar
Tensor row_sum(const Tensor& t);      // [r,c] -> [r]
Tensor sum_trailing(const Tensor& t); // [d0,...] -> [d0]
// Adjoint of broadcasting: reduces g over leading dims down to `target`.
Tensor sum_to(const Tensor& g, const Shape& target);

// Elementwise nonlinearities. sqrt requires non-negative input and log
// requires positive input (DomainError otherwise) so NaN-free inputs yield
// NaN-free outputs.
Tensor sqrt(const Tensor& t);
Tensor exp(const Tensor& t);
Tensor log(const Tensor& t);
Tensor tanh(const Tensor& t);
Tensor sigmoid(const Tensor& t);
Tensor leaky_relu(const Tensor& t, double slope);

// Structured 1-d operations. Inputs are rank-1 [time] or rank-3
// [batch, time, channels]; time is axis 0 or 1 respectively.
Tensor replicate_pad1d(const Tensor& t, size_t amount);
// Kernel 2, stride 2; time length must be even.
Tensor avg_pool1d(const Tensor& t);
// Doubles the time length. Half-pixel convention with edge clamping:
// out[i] interpolates the input at position (i + 0.5)/2 - 0.5.
Tensor upsample_linear1d(const Tensor& t);
// Kernel [out_ch, in_ch, 3], bias [out_ch]; stride 1, replicate padding 1,
// so the time length is preserved. Rank-1 input convolves as one channel
// with a rank-1 kernel [3] and a scalar bias.
Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias);

// In training mode zeroes each element with probability `rate` and scales
// survivors by 1/(1-rate); identity otherwise. The mask is drawn from `rng`.
Tensor dropout(const Tensor& t, double rate, bool training, Rng& rng);

// Constants.
Tensor ones(Shape shape);
Tensor one_hot(const std::vector<int>& labels, size_t classes);

// Operators.
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
inline Tensor operator+(double a, const Tensor& b) { return add(Tensor::scalar(a), b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
inline Tensor operator-(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
inline Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
inline Tensor operator/(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }

}  // namespace vitalsynth
