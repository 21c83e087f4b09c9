#include "vitalsynth/ops.hpp"

#include <cmath>
#include <utility>

#include "vitalsynth/errors.hpp"

namespace vitalsynth {

namespace {

// True when `small` equals the trailing dims of `big` (rank-0 always fits).
bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  const size_t off = big.size() - small.size();
  for (size_t i = 0; i < small.size(); ++i) {
    if (small[i] != big[off + i]) return false;
  }
  return true;
}

// Resolves elementwise operands: returns the output shape and flags telling
// which operand broadcasts (repeats over leading dims).
struct BinaryPlan {
  Shape out_shape;
  size_t a_period;  // a's index advances modulo this
  size_t b_period;
};

BinaryPlan plan_binary(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    return {a.shape(), a.numel(), b.numel()};
  }
  if (is_suffix(b.shape(), a.shape())) {
    return {a.shape(), a.numel(), b.numel()};
  }
  if (is_suffix(a.shape(), b.shape())) {
    return {b.shape(), a.numel(), b.numel()};
  }
  throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                   " and " + shape_str(b.shape()) + " do not conform");
}

template <typename F>
Tensor binary_forward(const char* op, const Tensor& a, const Tensor& b, F f) {
  BinaryPlan plan = plan_binary(op, a, b);
  const size_t n = shape_numel(plan.out_shape);
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  if (plan.a_period == n && plan.b_period == n) {
    for (size_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
  } else {
    for (size_t i = 0; i < n; ++i) {
      out[i] = f(av[i % plan.a_period], bv[i % plan.b_period]);
    }
  }
  return Tensor::from(std::move(plan.out_shape), std::move(out));
}

template <typename F>
Tensor unary_forward(const Tensor& t, F f) {
  std::vector<double> out(t.numel());
  const auto& v = t.values();
  for (size_t i = 0; i < v.size(); ++i) out[i] = f(v[i]);
  return Tensor::from(t.shape(), std::move(out));
}

size_t axis_stride(const Shape& shape, size_t axis) {
  size_t stride = 1;
  for (size_t i = axis + 1; i < shape.size(); ++i) stride *= shape[i];
  return stride;
}

}  // namespace

Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1.0); }

Tensor one_hot(const std::vector<int>& labels, size_t classes) {
  std::vector<double> v(labels.size() * classes, 0.0);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<size_t>(labels[i]) >= classes) {
      throw DomainError("label " + std::to_string(labels[i]) +
                        " outside [0, " + std::to_string(classes) + ")");
    }
    v[i * classes + static_cast<size_t>(labels[i])] = 1.0;
  }
  return Tensor::from({labels.size(), classes}, std::move(v));
}

Tensor sum_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  if (target.empty()) return sum(g);
  const size_t tail = shape_numel(target);
  const size_t lead = g.numel() / tail;
  Tensor folded = reshape(g, {lead, tail});
  Tensor reduced = matmul(ones({1, lead}), folded);
  return reshape(reduced, target);
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = binary_forward("add", a, b, [](double x, double y) { return x + y; });
  const Shape as = a.shape(), bs = b.shape();
  detail::record(out, "add", {a, b}, [as, bs](const Tensor& g) {
    return std::vector<Tensor>{sum_to(g, as), sum_to(g, bs)};
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor out = binary_forward("sub", a, b, [](double x, double y) { return x - y; });
  const Shape as = a.shape(), bs = b.shape();
  detail::record(out, "sub", {a, b}, [as, bs](const Tensor& g) {
    return std::vector<Tensor>{sum_to(g, as), sum_to(neg(g), bs)};
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out = binary_forward("mul", a, b, [](double x, double y) { return x * y; });
  detail::record(out, "mul", {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{sum_to(mul(g, b), a.shape()),
                               sum_to(mul(g, a), b.shape())};
  });
  return out;
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double y : b.values()) {
    if (y == 0.0) throw DomainError("div: zero divisor");
  }
  Tensor out = binary_forward("div", a, b, [](double x, double y) { return x / y; });
  detail::record(out, "div", {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{sum_to(div(g, b), a.shape()),
                               sum_to(neg(div(mul(g, a), mul(b, b))), b.shape())};
  });
  return out;
}

Tensor neg(const Tensor& a) {
  Tensor out = unary_forward(a, [](double x) { return -x; });
  detail::record(out, "neg", {a}, [](const Tensor& g) {
    return std::vector<Tensor>{neg(g)};
  });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " do not conform");
  }
  const size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    const double* arow = av + i * k;
    for (size_t kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = bv + kk * n;
      for (size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  Tensor t = Tensor::from({m, n}, std::move(out));
  detail::record(t, "matmul", {a, b}, [a, b](const Tensor& g) {
    return std::vector<Tensor>{matmul(g, transpose(b)), matmul(transpose(a), g)};
  });
  return t;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError("transpose: rank-2 tensor required, got " + shape_str(a.shape()));
  }
  const size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  const auto& v = a.values();
  for (size_t i = 0; i < r; ++i) {
    for (size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  }
  Tensor t = Tensor::from({c, r}, std::move(out));
  detail::record(t, "transpose", {a}, [](const Tensor& g) {
    return std::vector<Tensor>{transpose(g)};
  });
  return t;
}

Tensor concat(const std::vector<Tensor>& parts, size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& base = parts[0].shape();
  if (axis >= base.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(base));
  }
  size_t axis_total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != base.size()) {
      throw ShapeError("concat: ranks differ: " + shape_str(base) + " vs " +
                       shape_str(p.shape()));
    }
    for (size_t d = 0; d < base.size(); ++d) {
      if (d != axis && p.shape()[d] != base[d]) {
        throw ShapeError("concat: shapes " + shape_str(base) + " and " +
                         shape_str(p.shape()) + " differ off-axis");
      }
    }
    axis_total += p.shape()[axis];
  }

  Shape out_shape = base;
  out_shape[axis] = axis_total;
  const size_t inner = axis_stride(base, axis);
  size_t outer = 1;
  for (size_t d = 0; d < axis; ++d) outer *= base[d];

  std::vector<double> out(shape_numel(out_shape));
  const size_t out_row = axis_total * inner;
  size_t offset = 0;
  for (const Tensor& p : parts) {
    const size_t p_axis = p.shape()[axis];
    const size_t p_row = p_axis * inner;
    const auto& v = p.values();
    for (size_t o = 0; o < outer; ++o) {
      std::copy(v.begin() + o * p_row, v.begin() + (o + 1) * p_row,
                out.begin() + o * out_row + offset * inner);
    }
    offset += p_axis;
  }

  Tensor t = Tensor::from(std::move(out_shape), std::move(out));
  std::vector<size_t> extents;
  extents.reserve(parts.size());
  for (const Tensor& p : parts) extents.push_back(p.shape()[axis]);
  detail::record(t, "concat", parts, [axis, extents](const Tensor& g) {
    std::vector<Tensor> grads;
    grads.reserve(extents.size());
    size_t start = 0;
    for (size_t e : extents) {
      grads.push_back(slice(g, axis, start, start + e));
      start += e;
    }
    return grads;
  });
  return t;
}

Tensor slice(const Tensor& t, size_t axis, size_t start, size_t stop) {
  if (axis >= t.rank()) {
    throw ShapeError("slice: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(t.shape()));
  }
  const size_t extent = t.shape()[axis];
  if (start >= stop || stop > extent) {
    throw ContractError("slice: range [" + std::to_string(start) + ", " +
                        std::to_string(stop) + ") invalid for extent " +
                        std::to_string(extent));
  }
  Shape out_shape = t.shape();
  out_shape[axis] = stop - start;
  const size_t inner = axis_stride(t.shape(), axis);
  size_t outer = 1;
  for (size_t d = 0; d < axis; ++d) outer *= t.shape()[d];

  std::vector<double> out(shape_numel(out_shape));
  const auto& v = t.values();
  const size_t in_row = extent * inner;
  const size_t out_row = (stop - start) * inner;
  for (size_t o = 0; o < outer; ++o) {
    std::copy(v.begin() + o * in_row + start * inner,
              v.begin() + o * in_row + stop * inner, out.begin() + o * out_row);
  }

  Tensor r = Tensor::from(std::move(out_shape), std::move(out));
  const Shape in_shape = t.shape();
  detail::record(r, "slice", {t}, [axis, start, stop, in_shape](const Tensor& g) {
    // Zero-pad the gradient back to the input extent.
    std::vector<Tensor> parts;
    if (start > 0) {
      Shape s = in_shape;
      s[axis] = start;
      parts.push_back(Tensor::zeros(s));
    }
    parts.push_back(g);
    if (stop < in_shape[axis]) {
      Shape s = in_shape;
      s[axis] = in_shape[axis] - stop;
      parts.push_back(Tensor::zeros(s));
    }
    return std::vector<Tensor>{parts.size() == 1 ? g : concat(parts, axis)};
  });
  return r;
}

Tensor reshape(const Tensor& t, Shape shape) {
  if (shape_numel(shape) != t.numel()) {
    throw ShapeError("reshape: " + shape_str(t.shape()) + " to " +
                     shape_str(shape) + " changes the element count");
  }
  Tensor r = Tensor::from(std::move(shape), t.values());
  const Shape in_shape = t.shape();
  detail::record(r, "reshape", {t}, [in_shape](const Tensor& g) {
    return std::vector<Tensor>{reshape(g, in_shape)};
  });
  return r;
}

Tensor sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  Tensor out = Tensor::scalar(s);
  const Shape in_shape = t.shape();
  detail::record(out, "sum", {t}, [in_shape](const Tensor& g) {
    return std::vector<Tensor>{mul(ones(in_shape), g)};
  });
  return out;
}

Tensor mean(const Tensor& t) {
  if (t.numel() == 0) throw ContractError("mean of an empty tensor");
  return mul(sum(t), Tensor::scalar(1.0 / static_cast<double>(t.numel())));
}

Tensor row_sum(const Tensor& t) {
  if (t.rank() != 2) {
    throw ShapeError("row_sum: rank-2 tensor required, got " + shape_str(t.shape()));
  }
  return reshape(matmul(t, ones({t.dim(1), 1})), {t.dim(0)});
}

Tensor sum_trailing(const Tensor& t) {
  if (t.rank() == 0) return t;
  const size_t d0 = t.dim(0);
  return row_sum(reshape(t, {d0, t.numel() / d0}));
}

Tensor sqrt(const Tensor& t) {
  for (double v : t.values()) {
    if (v < 0.0) throw DomainError("sqrt: negative input");
  }
  Tensor out = unary_forward(t, [](double x) { return std::sqrt(x); });
  detail::record(out, "sqrt", {t}, [t](const Tensor& g) {
    return std::vector<Tensor>{div(mul(g, Tensor::scalar(0.5)), sqrt(t))};
  });
  return out;
}

Tensor exp(const Tensor& t) {
  Tensor out = unary_forward(t, [](double x) { return std::exp(x); });
  detail::record(out, "exp", {t}, [t](const Tensor& g) {
    return std::vector<Tensor>{mul(g, exp(t))};
  });
  return out;
}

Tensor log(const Tensor& t) {
  for (double v : t.values()) {
    if (v <= 0.0) throw DomainError("log: non-positive input");
  }
  Tensor out = unary_forward(t, [](double x) { return std::log(x); });
  detail::record(out, "log", {t}, [t](const Tensor& g) {
    return std::vector<Tensor>{div(g, t)};
  });
  return out;
}

Tensor tanh(const Tensor& t) {
  Tensor out = unary_forward(t, [](double x) { return std::tanh(x); });
  detail::record(out, "tanh", {t}, [t](const Tensor& g) {
    Tensor th = tanh(t);
    return std::vector<Tensor>{mul(g, sub(Tensor::scalar(1.0), mul(th, th)))};
  });
  return out;
}

Tensor sigmoid(const Tensor& t) {
  auto sig = [](double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
  };
  Tensor out = unary_forward(t, sig);
  detail::record(out, "sigmoid", {t}, [t](const Tensor& g) {
    Tensor s = sigmoid(t);
    return std::vector<Tensor>{mul(g, mul(s, sub(Tensor::scalar(1.0), s)))};
  });
  return out;
}

Tensor leaky_relu(const Tensor& t, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) {
    throw ContractError("leaky_relu: slope must lie in (0,1)");
  }
  Tensor out = unary_forward(t, [slope](double x) { return x >= 0.0 ? x : slope * x; });
  // The local derivative is piecewise constant, so the mask is a constant.
  std::vector<double> mask(t.numel());
  for (size_t i = 0; i < mask.size(); ++i) {
    mask[i] = t.at(i) >= 0.0 ? 1.0 : slope;
  }
  Tensor mask_t = Tensor::from(t.shape(), std::move(mask));
  detail::record(out, "leaky_relu", {t}, [mask_t](const Tensor& g) {
    return std::vector<Tensor>{mul(g, mask_t)};
  });
  return out;
}

Tensor dropout(const Tensor& t, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ContractError("dropout: rate must lie in [0,1)");
  }
  if (!training || rate == 0.0) return t;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(t.numel());
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  return mul(t, Tensor::from(t.shape(), std::move(mask)));
}

namespace {

// Views a rank-1 [T] tensor as [1,T,1] so the rank-3 kernels apply.
Tensor as_batched(const Tensor& t, bool& was_rank1) {
  if (t.rank() == 3) {
    was_rank1 = false;
    return t;
  }
  if (t.rank() == 1) {
    was_rank1 = true;
    return reshape(t, {1, t.dim(0), 1});
  }
  throw ShapeError("expected rank-1 or rank-3 input, got " + shape_str(t.shape()));
}

Tensor unbatch(const Tensor& t, bool was_rank1) {
  return was_rank1 ? reshape(t, {t.dim(1)}) : t;
}

Tensor interleave_time(const Tensor& even, const Tensor& odd) {
  const size_t b = even.dim(0), len = even.dim(1), ch = even.dim(2);
  Tensor e4 = reshape(even, {b, len, 1, ch});
  Tensor o4 = reshape(odd, {b, len, 1, ch});
  return reshape(concat({e4, o4}, 2), {b, 2 * len, ch});
}

}  // namespace

Tensor replicate_pad1d(const Tensor& t, size_t amount) {
  if (amount == 0) return t;
  bool rank1 = false;
  Tensor x = as_batched(t, rank1);
  const size_t len = x.dim(1);
  Tensor first = slice(x, 1, 0, 1);
  Tensor last = slice(x, 1, len - 1, len);
  std::vector<Tensor> parts;
  parts.reserve(2 * amount + 1);
  for (size_t i = 0; i < amount; ++i) parts.push_back(first);
  parts.push_back(x);
  for (size_t i = 0; i < amount; ++i) parts.push_back(last);
  return unbatch(concat(parts, 1), rank1);
}

Tensor avg_pool1d(const Tensor& t) {
  bool rank1 = false;
  Tensor x = as_batched(t, rank1);
  const size_t b = x.dim(0), len = x.dim(1), ch = x.dim(2);
  if (len == 0 || len % 2 != 0) {
    throw ContractError("avg_pool1d: even time length required, got " +
                        std::to_string(len));
  }
  // Pairs of adjacent steps are contiguous in memory, so folding the time
  // axis in half exposes them as the two channel halves.
  Tensor folded = reshape(x, {b, len / 2, 2 * ch});
  Tensor a = slice(folded, 2, 0, ch);
  Tensor bb = slice(folded, 2, ch, 2 * ch);
  return unbatch(mul(add(a, bb), Tensor::scalar(0.5)), rank1);
}

Tensor upsample_linear1d(const Tensor& t) {
  bool rank1 = false;
  Tensor x = as_batched(t, rank1);
  const size_t len = x.dim(1);
  if (len == 0) throw ContractError("upsample_linear1d: empty input");
  if (len == 1) {
    return unbatch(interleave_time(x, x), rank1);
  }
  Tensor head = slice(x, 1, 0, len - 1);
  Tensor tail = slice(x, 1, 1, len);
  // out[2j]   samples position j - 0.25; out[2j+1] samples j + 0.25.
  Tensor even = concat({slice(x, 1, 0, 1),
                        add(mul(head, Tensor::scalar(0.25)), mul(tail, Tensor::scalar(0.75)))},
                       1);
  Tensor odd = concat({add(mul(head, Tensor::scalar(0.75)), mul(tail, Tensor::scalar(0.25))),
                       slice(x, 1, len - 1, len)},
                      1);
  return unbatch(interleave_time(even, odd), rank1);
}

Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias) {
  bool rank1 = false;
  Tensor x = as_batched(input, rank1);
  Tensor k = kernel;
  Tensor b = bias;
  if (rank1 && kernel.rank() == 1) k = reshape(kernel, {1, 1, kernel.dim(0)});
  if (rank1 && bias.rank() == 0) b = reshape(bias, {1});
  if (k.rank() != 3 || k.dim(2) != 3) {
    throw ContractError("conv1d: kernel must be [out_ch, in_ch, 3], got " +
                        shape_str(k.shape()));
  }
  const size_t batch = x.dim(0), len = x.dim(1), in_ch = x.dim(2);
  const size_t out_ch = k.dim(0);
  if (k.dim(1) != in_ch) {
    throw ShapeError("conv1d: input channels " + shape_str(x.shape()) +
                     " do not match kernel " + shape_str(k.shape()));
  }
  if (b.rank() != 1 || b.dim(0) != out_ch) {
    throw ShapeError("conv1d: bias " + shape_str(b.shape()) +
                     " does not match kernel " + shape_str(k.shape()));
  }

  Tensor padded = replicate_pad1d(x, 1);
  Tensor acc;
  for (size_t tap = 0; tap < 3; ++tap) {
    Tensor window = reshape(slice(padded, 1, tap, tap + len), {batch * len, in_ch});
    Tensor w = transpose(reshape(slice(k, 2, tap, tap + 1), {out_ch, in_ch}));
    Tensor term = matmul(window, w);
    acc = acc.defined() ? add(acc, term) : term;
  }
  Tensor out = add(reshape(acc, {batch, len, out_ch}), b);
  return unbatch(out, rank1);
}

}  // namespace vitalsynth
