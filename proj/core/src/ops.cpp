#include "mccl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace mccl {

namespace {

template <typename S>
Tensor<S> out_like(Shape shape, bool rec) {
  auto t = Tensor<S>::zeros(std::move(shape));
  if (rec) t.set_requires_grad(true);
  return t;
}

template <typename S>
bool rec_for(const Tensor<S>& a) {
  return detail::grad_active<S>(a.requires_grad());
}

template <typename S>
bool rec_for(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::grad_active<S>(a.requires_grad() || b.requires_grad());
}

template <typename S>
void check_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()) + " differ");
  }
}

// C[M,N] (+)= op(A) * op(B), accumulating in double.
template <typename S>
void matmul_acc(const S* a, const S* b, double* c, int m, int k, int n,
                bool trans_a, bool trans_b) {
  if (!trans_a && !trans_b) {
    for (int i = 0; i < m; ++i) {
      double* crow = c + static_cast<std::size_t>(i) * n;
      for (int p = 0; p < k; ++p) {
        const double av = a[static_cast<std::size_t>(i) * k + p];
        const S* brow = b + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {  // B is [N,K]
    for (int i = 0; i < m; ++i) {
      const S* arow = a + static_cast<std::size_t>(i) * k;
      double* crow = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) {
        const S* brow = b + static_cast<std::size_t>(j) * k;
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += static_cast<double>(arow[p]) * brow[p];
        crow[j] += acc;
      }
    }
  } else {  // trans_a, !trans_b: A is [K,M]
    for (int p = 0; p < k; ++p) {
      const S* arow = a + static_cast<std::size_t>(p) * m;
      const S* brow = b + static_cast<std::size_t>(p) * n;
      for (int i = 0; i < m; ++i) {
        const double av = arow[i];
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

template <typename S>
void add_into(std::vector<S>& dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += static_cast<S>(src[i]);
}

struct ConvDims {
  int batch, cin, h, w, cout, k, oh, ow, stride, pad;
};

template <typename S>
ConvDims conv_dims(const Tensor<S>& x, const Tensor<S>& w, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4) {
    throw ShapeError("conv2d: need 4-D input and kernel, got " +
                     shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  ConvDims d;
  d.batch = x.dim(0);
  d.cin = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.cout = w.dim(0);
  d.k = w.dim(2);
  d.stride = stride;
  d.pad = pad;
  if (w.dim(1) != d.cin) {
    throw ShapeError("conv2d: kernel channels " + shape_str(w.shape()) +
                     " do not match input " + shape_str(x.shape()));
  }
  if (w.dim(3) != d.k) {
    throw ShapeError("conv2d: kernel must be square, got " + shape_str(w.shape()));
  }
  if (d.k != 1 && d.k != 3 && d.k != 4) {
    throw ShapeError("conv2d: kernel size " + std::to_string(d.k) +
                     " unsupported (1, 3 or 4)");
  }
  if (pad < 0 || stride < 1) {
    throw ShapeError("conv2d: bad stride/pad");
  }
  const int hh = d.h + 2 * pad - d.k;
  const int ww = d.w + 2 * pad - d.k;
  if (hh < 0 || ww < 0 || hh % stride != 0 || ww % stride != 0) {
    throw ShapeError("conv2d: non-integral output size for input " +
                     shape_str(x.shape()) + ", kernel " + shape_str(w.shape()) +
                     ", stride " + std::to_string(stride) + ", pad " +
                     std::to_string(pad));
  }
  d.oh = hh / stride + 1;
  d.ow = ww / stride + 1;
  return d;
}

// valid output range [lo, hi) so that o*stride + kk - pad lands inside [0, n)
inline void conv_range(int n_in, int n_out, int stride, int pad, int kk,
                       int& lo, int& hi) {
  lo = 0;
  while (lo < n_out && lo * stride + kk - pad < 0) ++lo;
  hi = n_out;
  while (hi > lo && (hi - 1) * stride + kk - pad >= n_in) --hi;
}

}  // namespace

// ---------------------------------------------------------------- elementwise

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape("add", a, b);
  const bool rec = rec_for(a, b);
  auto out = out_like<S>(a.shape(), rec);
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  if (rec) {
    Tape<S>::active()->record(out, [a = a, b = b, out]() mutable {
      const S* g = out.grad();
      if (a.requires_grad())
        for (std::int64_t i = 0; i < a.numel(); ++i) a.grad_vec()[i] += g[i];
      if (b.requires_grad())
        for (std::int64_t i = 0; i < b.numel(); ++i) b.grad_vec()[i] += g[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape("sub", a, b);
  const bool rec = rec_for(a, b);
  auto out = out_like<S>(a.shape(), rec);
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
  if (rec) {
    Tape<S>::active()->record(out, [a = a, b = b, out]() mutable {
      const S* g = out.grad();
      if (a.requires_grad())
        for (std::int64_t i = 0; i < a.numel(); ++i) a.grad_vec()[i] += g[i];
      if (b.requires_grad())
        for (std::int64_t i = 0; i < b.numel(); ++i) b.grad_vec()[i] -= g[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape("mul", a, b);
  const bool rec = rec_for(a, b);
  auto out = out_like<S>(a.shape(), rec);
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  if (rec) {
    Tape<S>::active()->record(out, [a = a, b = b, out]() mutable {
      const S* g = out.grad();
      if (a.requires_grad())
        for (std::int64_t i = 0; i < a.numel(); ++i) a.grad_vec()[i] += g[i] * b[i];
      if (b.requires_grad())
        for (std::int64_t i = 0; i < b.numel(); ++i) b.grad_vec()[i] += g[i] * a[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape("div", a, b);
  const bool rec = rec_for(a, b);
  auto out = out_like<S>(a.shape(), rec);
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] / b[i];
  if (rec) {
    Tape<S>::active()->record(out, [a = a, b = b, out]() mutable {
      const S* g = out.grad();
      if (a.requires_grad())
        for (std::int64_t i = 0; i < a.numel(); ++i) a.grad_vec()[i] += g[i] / b[i];
      if (b.requires_grad())
        for (std::int64_t i = 0; i < b.numel(); ++i)
          b.grad_vec()[i] -= g[i] * a[i] / (b[i] * b[i]);
    });
  }
  return out;
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, double c) {
  const bool rec = rec_for(a);
  auto out = out_like<S>(a.shape(), rec);
  const S cs = static_cast<S>(c);
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + cs;
  if (rec) {
    Tape<S>::active()->record(out, [a = a, out]() mutable {
      const S* g = out.grad();
      for (std::int64_t i = 0; i < a.numel(); ++i) a.grad_vec()[i] += g[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> mul_scalar(const Tensor<S>& a, double c) {
  const bool rec = rec_for(a);
  auto out = out_like<S>(a.shape(), rec);
  const S cs = static_cast<S>(c);
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * cs;
  if (rec) {
    Tape<S>::active()->record(out, [a = a, out, cs]() mutable {
      const S* g = out.grad();
      for (std::int64_t i = 0; i < a.numel(); ++i) a.grad_vec()[i] += g[i] * cs;
    });
  }
  return out;
}

// ---------------------------------------------------------------- activations

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  const bool rec = rec_for(x);
  auto out = out_like<S>(x.shape(), rec);
  for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] > S(0) ? x[i] : S(0);
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out]() mutable {
      const S* g = out.grad();
      for (std::int64_t i = 0; i < x.numel(); ++i)
        if (x[i] > S(0)) x.grad_vec()[i] += g[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, double slope) {
  const bool rec = rec_for(x);
  auto out = out_like<S>(x.shape(), rec);
  const S a = static_cast<S>(slope);
  for (std::int64_t i = 0; i < x.numel(); ++i)
    out[i] = x[i] > S(0) ? x[i] : a * x[i];
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out, a = a]() mutable {
      const S* g = out.grad();
      for (std::int64_t i = 0; i < x.numel(); ++i)
        x.grad_vec()[i] += x[i] > S(0) ? g[i] : a * g[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  const bool rec = rec_for(x);
  auto out = out_like<S>(x.shape(), rec);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double v = x[i];
    const double y = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                              : std::exp(v) / (1.0 + std::exp(v));
    out[i] = static_cast<S>(y);
  }
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out]() mutable {
      const S* g = out.grad();
      for (std::int64_t i = 0; i < x.numel(); ++i) {
        const double y = out[i];
        x.grad_vec()[i] += static_cast<S>(g[i] * y * (1.0 - y));
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> log_clamped(const Tensor<S>& x) {
  constexpr double kFloor = 1e-7;
  const bool rec = rec_for(x);
  auto out = out_like<S>(x.shape(), rec);
  for (std::int64_t i = 0; i < x.numel(); ++i)
    out[i] = static_cast<S>(std::log(std::max(static_cast<double>(x[i]), kFloor)));
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out]() mutable {
      const S* g = out.grad();
      for (std::int64_t i = 0; i < x.numel(); ++i)
        if (static_cast<double>(x[i]) > kFloor)
          x.grad_vec()[i] += static_cast<S>(g[i] / x[i]);
    });
  }
  return out;
}

template <typename S>
Tensor<S> clamp(const Tensor<S>& x, double lo, double hi) {
  const bool rec = rec_for(x);
  auto out = out_like<S>(x.shape(), rec);
  for (std::int64_t i = 0; i < x.numel(); ++i)
    out[i] = static_cast<S>(std::min(std::max(static_cast<double>(x[i]), lo), hi));
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out, lo, hi]() mutable {
      const S* g = out.grad();
      for (std::int64_t i = 0; i < x.numel(); ++i) {
        const double v = x[i];
        if (v >= lo && v <= hi) x.grad_vec()[i] += g[i];
      }
    });
  }
  return out;
}

// ------------------------------------------------------------------ structure

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " +
                     shape_str(shape) + " changes element count");
  }
  const bool rec = rec_for(x);
  auto out = out_like<S>(std::move(shape), rec);
  std::copy(x.data(), x.data() + x.numel(), out.data());
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out]() mutable {
      const S* g = out.grad();
      for (std::int64_t i = 0; i < x.numel(); ++i) x.grad_vec()[i] += g[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> transpose2d(const Tensor<S>& x) {
  if (x.rank() != 2) {
    throw ShapeError("transpose2d: need rank-2, got " + shape_str(x.shape()));
  }
  const int m = x.dim(0), n = x.dim(1);
  const bool rec = rec_for(x);
  auto out = out_like<S>({n, m}, rec);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = x.at(i, j);
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out, m, n]() mutable {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) x.grad_vec()[static_cast<std::size_t>(i) * n + j] +=
            out.grad()[static_cast<std::size_t>(j) * m + i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int rank = parts[0].rank();
  if (axis < 0 || axis >= rank) throw ShapeError("concat: bad axis");
  Shape out_shape = parts[0].shape();
  bool any_grad = parts[0].requires_grad();
  for (std::size_t p = 1; p < parts.size(); ++p) {
    if (parts[p].rank() != rank)
      throw ShapeError("concat: rank mismatch");
    for (int d = 0; d < rank; ++d) {
      if (d == axis) continue;
      if (parts[p].dim(d) != out_shape[static_cast<std::size_t>(d)])
        throw ShapeError("concat: " + shape_str(parts[p].shape()) +
                         " incompatible with " + shape_str(parts[0].shape()));
    }
    out_shape[static_cast<std::size_t>(axis)] += parts[p].dim(axis);
    any_grad = any_grad || parts[p].requires_grad();
  }
  const bool rec = detail::grad_active<S>(any_grad);
  auto out = out_like<S>(out_shape, rec);

  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= out_shape[static_cast<std::size_t>(d)];
  for (int d = axis + 1; d < rank; ++d) inner *= out_shape[static_cast<std::size_t>(d)];
  const std::int64_t out_axis = out_shape[static_cast<std::size_t>(axis)];

  std::int64_t offset = 0;
  for (const auto& part : parts) {
    const std::int64_t pa = part.dim(axis);
    for (std::int64_t o = 0; o < outer; ++o) {
      const S* src = part.data() + o * pa * inner;
      S* dst = out.data() + (o * out_axis + offset) * inner;
      std::copy(src, src + pa * inner, dst);
    }
    offset += pa;
  }
  if (rec) {
    auto parts_copy = parts;
    Tape<S>::active()->record(out, [parts_copy, out, outer, inner, out_axis, axis]() mutable {
      std::int64_t offset = 0;
      for (auto& part : parts_copy) {
        const std::int64_t pa = part.dim(axis);
        if (part.requires_grad()) {
          for (std::int64_t o = 0; o < outer; ++o) {
            const S* g = out.grad() + (o * out_axis + offset) * inner;
            S* dst = part.grad_vec().data() + o * pa * inner;
            for (std::int64_t i = 0; i < pa * inner; ++i) dst[i] += g[i];
          }
        }
        offset += pa;
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> slice(const Tensor<S>& x, int axis, int start, int len) {
  const int rank = x.rank();
  if (axis < 0 || axis >= rank) throw ShapeError("slice: bad axis");
  const int ax = x.dim(axis);
  if (start < 0 || len < 1 || start + len > ax) {
    throw ShapeError("slice: [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of bounds for " +
                     shape_str(x.shape()) + " axis " + std::to_string(axis));
  }
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  const bool rec = rec_for(x);
  auto out = out_like<S>(out_shape, rec);

  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < rank; ++d) inner *= x.dim(d);
  for (std::int64_t o = 0; o < outer; ++o) {
    const S* src = x.data() + (o * ax + start) * inner;
    std::copy(src, src + static_cast<std::int64_t>(len) * inner,
              out.data() + o * len * inner);
  }
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out, outer, inner, ax, start, len]() mutable {
      for (std::int64_t o = 0; o < outer; ++o) {
        const S* g = out.grad() + o * len * inner;
        S* dst = x.grad_vec().data() + (o * ax + start) * inner;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(len) * inner; ++i)
          dst[i] += g[i];
      }
    });
  }
  return out;
}

template <typename S>
std::vector<Tensor<S>> split(const Tensor<S>& x, int axis, int parts) {
  if (parts < 1 || x.dim(axis) % parts != 0) {
    throw ShapeError("split: axis size " + std::to_string(x.dim(axis)) +
                     " not divisible into " + std::to_string(parts));
  }
  const int step = x.dim(axis) / parts;
  std::vector<Tensor<S>> out;
  out.reserve(static_cast<std::size_t>(parts));
  for (int p = 0; p < parts; ++p) out.push_back(slice(x, axis, p * step, step));
  return out;
}

template <typename S>
Tensor<S> permute_batch(const Tensor<S>& x, const std::vector<int>& perm) {
  const int b = x.dim(0);
  if (static_cast<int>(perm.size()) != b) {
    throw ShapeError("permute_batch: permutation size " +
                     std::to_string(perm.size()) + " vs batch " + std::to_string(b));
  }
  std::vector<char> seen(static_cast<std::size_t>(b), 0);
  for (int p : perm) {
    if (p < 0 || p >= b || seen[static_cast<std::size_t>(p)])
      throw ContractError("permute_batch: not a permutation");
    seen[static_cast<std::size_t>(p)] = 1;
  }
  const std::int64_t row = x.numel() / b;
  const bool rec = rec_for(x);
  auto out = out_like<S>(x.shape(), rec);
  for (int i = 0; i < b; ++i) {
    const S* src = x.data() + static_cast<std::int64_t>(perm[static_cast<std::size_t>(i)]) * row;
    std::copy(src, src + row, out.data() + static_cast<std::int64_t>(i) * row);
  }
  if (rec) {
    auto perm_copy = perm;
    Tape<S>::active()->record(out, [x = x, out, perm_copy, row, b = b]() mutable {
      for (int i = 0; i < b; ++i) {
        const S* g = out.grad() + static_cast<std::int64_t>(i) * row;
        S* dst = x.grad_vec().data() +
                 static_cast<std::int64_t>(perm_copy[static_cast<std::size_t>(i)]) * row;
        for (std::int64_t j = 0; j < row; ++j) dst[j] += g[j];
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> flatten_positions(const Tensor<S>& x) {
  if (x.rank() != 4) {
    throw ShapeError("flatten_positions: need [B,C,H,W], got " + shape_str(x.shape()));
  }
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const bool rec = rec_for(x);
  auto out = out_like<S>({b * h * w, c}, rec);
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          out.at(bi * h * w + y * w + xx, ci) = x.at(bi, ci, y, xx);
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out, b = b, c, h, w = w]() mutable {
      for (int bi = 0; bi < b; ++bi)
        for (int ci = 0; ci < c; ++ci)
          for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
              x.grad_vec()[((static_cast<std::size_t>(bi) * c + ci) * h + y) * w + xx] +=
                  out.grad()[(static_cast<std::size_t>(bi) * h * w + y * w + xx) * c + ci];
    });
  }
  return out;
}

template <typename S>
Tensor<S> unflatten_positions(const Tensor<S>& x, int b, int h, int w) {
  if (x.rank() != 2 || x.dim(0) != b * h * w) {
    throw ShapeError("unflatten_positions: " + shape_str(x.shape()) +
                     " does not cover " + std::to_string(b * h * w) + " positions");
  }
  const int c = x.dim(1);
  const bool rec = rec_for(x);
  auto out = out_like<S>({b, c, h, w}, rec);
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          out.at(bi, ci, y, xx) = x.at(bi * h * w + y * w + xx, ci);
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out, b = b, c, h, w = w]() mutable {
      for (int bi = 0; bi < b; ++bi)
        for (int ci = 0; ci < c; ++ci)
          for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
              x.grad_vec()[(static_cast<std::size_t>(bi) * h * w + y * w + xx) * c + ci] +=
                  out.grad()[((static_cast<std::size_t>(bi) * c + ci) * h + y) * w + xx];
    });
  }
  return out;
}

// ------------------------------------------------------------- linear algebra

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + " invalid");
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const bool rec = rec_for(a, b);
  auto out = out_like<S>({m, n}, rec);
  std::vector<double> acc(static_cast<std::size_t>(m) * n, 0.0);
  matmul_acc(a.data(), b.data(), acc.data(), m, k, n, false, false);
  for (std::size_t i = 0; i < acc.size(); ++i) out[static_cast<std::int64_t>(i)] = static_cast<S>(acc[i]);
  if (rec) {
    Tape<S>::active()->record(out, [a = a, b = b, out, m, k = k, n]() mutable {
      if (a.requires_grad()) {
        std::vector<double> ga(static_cast<std::size_t>(m) * k, 0.0);
        matmul_acc(out.grad(), b.data(), ga.data(), m, n, k, false, true);
        add_into(a.grad_vec(), ga);
      }
      if (b.requires_grad()) {
        std::vector<double> gb(static_cast<std::size_t>(k) * n, 0.0);
        matmul_acc(a.data(), out.grad(), gb.data(), k, m, n, true, false);
        add_into(b.grad_vec(), gb);
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                 int stride, int pad) {
  const ConvDims d = conv_dims(x, w, stride, pad);
  if (bias.defined() && bias.numel() != d.cout) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " vs cout " +
                     std::to_string(d.cout));
  }
  const bool rec = detail::grad_active<S>(x.requires_grad() || w.requires_grad() ||
                                          (bias.defined() && bias.requires_grad()));
  auto out = out_like<S>({d.batch, d.cout, d.oh, d.ow}, rec);

  const std::int64_t in_plane = static_cast<std::int64_t>(d.h) * d.w;
  const std::int64_t out_plane = static_cast<std::int64_t>(d.oh) * d.ow;
  std::vector<double> acc(static_cast<std::size_t>(out_plane));
  for (int b = 0; b < d.batch; ++b) {
    for (int co = 0; co < d.cout; ++co) {
      std::fill(acc.begin(), acc.end(),
                bias.defined() ? static_cast<double>(bias[co]) : 0.0);
      for (int ci = 0; ci < d.cin; ++ci) {
        const S* xp = x.data() + (static_cast<std::int64_t>(b) * d.cin + ci) * in_plane;
        const S* wp = w.data() + (static_cast<std::int64_t>(co) * d.cin + ci) * d.k * d.k;
        for (int kh = 0; kh < d.k; ++kh) {
          int oh_lo, oh_hi;
          conv_range(d.h, d.oh, d.stride, d.pad, kh, oh_lo, oh_hi);
          for (int kw = 0; kw < d.k; ++kw) {
            const double wv = wp[kh * d.k + kw];
            if (wv == 0.0) continue;
            int ow_lo, ow_hi;
            conv_range(d.w, d.ow, d.stride, d.pad, kw, ow_lo, ow_hi);
            for (int oh = oh_lo; oh < oh_hi; ++oh) {
              const int ih = oh * d.stride + kh - d.pad;
              const S* xrow = xp + static_cast<std::int64_t>(ih) * d.w + (ow_lo * d.stride + kw - d.pad);
              double* arow = acc.data() + static_cast<std::int64_t>(oh) * d.ow;
              if (d.stride == 1) {
                for (int ow = ow_lo; ow < ow_hi; ++ow)
                  arow[ow] += wv * xrow[ow - ow_lo];
              } else {
                for (int ow = ow_lo; ow < ow_hi; ++ow)
                  arow[ow] += wv * xrow[static_cast<std::int64_t>(ow - ow_lo) * d.stride];
              }
            }
          }
        }
      }
      S* op = out.data() + (static_cast<std::int64_t>(b) * d.cout + co) * out_plane;
      for (std::int64_t i = 0; i < out_plane; ++i) op[i] = static_cast<S>(acc[static_cast<std::size_t>(i)]);
    }
  }

  if (rec) {
    Tape<S>::active()->record(out, [x = x, w = w, bias = bias, out, d]() mutable {
      const std::int64_t in_plane = static_cast<std::int64_t>(d.h) * d.w;
      const std::int64_t out_plane = static_cast<std::int64_t>(d.oh) * d.ow;
      const S* g = out.grad();
      if (bias.defined() && bias.requires_grad()) {
        for (int b = 0; b < d.batch; ++b)
          for (int co = 0; co < d.cout; ++co) {
            double acc = 0.0;
            const S* gp = g + (static_cast<std::int64_t>(b) * d.cout + co) * out_plane;
            for (std::int64_t i = 0; i < out_plane; ++i) acc += gp[i];
            bias.grad_vec()[static_cast<std::size_t>(co)] += static_cast<S>(acc);
          }
      }
      for (int b = 0; b < d.batch; ++b) {
        for (int co = 0; co < d.cout; ++co) {
          const S* gp = g + (static_cast<std::int64_t>(b) * d.cout + co) * out_plane;
          for (int ci = 0; ci < d.cin; ++ci) {
            const S* xp = x.data() + (static_cast<std::int64_t>(b) * d.cin + ci) * in_plane;
            S* dxp = x.requires_grad()
                         ? x.grad_vec().data() + (static_cast<std::int64_t>(b) * d.cin + ci) * in_plane
                         : nullptr;
            S* dwp = w.requires_grad()
                         ? w.grad_vec().data() + (static_cast<std::int64_t>(co) * d.cin + ci) * d.k * d.k
                         : nullptr;
            const S* wp = w.data() + (static_cast<std::int64_t>(co) * d.cin + ci) * d.k * d.k;
            for (int kh = 0; kh < d.k; ++kh) {
              int oh_lo, oh_hi;
              conv_range(d.h, d.oh, d.stride, d.pad, kh, oh_lo, oh_hi);
              for (int kw = 0; kw < d.k; ++kw) {
                int ow_lo, ow_hi;
                conv_range(d.w, d.ow, d.stride, d.pad, kw, ow_lo, ow_hi);
                const double wv = wp[kh * d.k + kw];
                double wacc = 0.0;
                for (int oh = oh_lo; oh < oh_hi; ++oh) {
                  const int ih = oh * d.stride + kh - d.pad;
                  const std::int64_t xbase = static_cast<std::int64_t>(ih) * d.w + kw - d.pad;
                  const S* grow = gp + static_cast<std::int64_t>(oh) * d.ow;
                  for (int ow = ow_lo; ow < ow_hi; ++ow) {
                    const std::int64_t xi = xbase + static_cast<std::int64_t>(ow) * d.stride;
                    const double gv = grow[ow];
                    wacc += gv * xp[xi];
                    if (dxp) dxp[xi] += static_cast<S>(wv * gv);
                  }
                }
                if (dwp) dwp[kh * d.k + kw] += static_cast<S>(wacc);
              }
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> depthwise_conv2d(const Tensor<S>& x, const Tensor<S>& k) {
  if (x.rank() != 4) {
    throw ShapeError("depthwise_conv2d: need [B,C,H,W], got " + shape_str(x.shape()));
  }
  const int c = x.dim(1);
  if (k.numel() != c) {
    throw ShapeError("depthwise_conv2d: kernel " + shape_str(k.shape()) +
                     " vs channels " + std::to_string(c));
  }
  const int b = x.dim(0);
  const std::int64_t plane = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  const bool rec = rec_for(x, k);
  auto out = out_like<S>(x.shape(), rec);
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const S kv = k[ci];
      const S* xp = x.data() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
      S* op = out.data() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
      for (std::int64_t i = 0; i < plane; ++i) op[i] = kv * xp[i];
    }
  if (rec) {
    Tape<S>::active()->record(out, [x = x, k = k, out, b = b, c, plane]() mutable {
      for (int bi = 0; bi < b; ++bi)
        for (int ci = 0; ci < c; ++ci) {
          const std::int64_t base = (static_cast<std::int64_t>(bi) * c + ci) * plane;
          const S* g = out.grad() + base;
          if (x.requires_grad()) {
            const S kv = k[ci];
            S* dx = x.grad_vec().data() + base;
            for (std::int64_t i = 0; i < plane; ++i) dx[i] += kv * g[i];
          }
          if (k.requires_grad()) {
            const S* xp = x.data() + base;
            double acc = 0.0;
            for (std::int64_t i = 0; i < plane; ++i)
              acc += static_cast<double>(g[i]) * xp[i];
            k.grad_vec()[static_cast<std::size_t>(ci)] += static_cast<S>(acc);
          }
        }
    });
  }
  return out;
}

// ----------------------------------------------------- normalization, pooling

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
  if (axis < 0 || axis >= x.rank()) throw ShapeError("softmax: bad axis");
  const int n = x.dim(axis);
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= x.dim(d);
  for (int d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
  const bool rec = rec_for(x);
  auto out = out_like<S>(x.shape(), rec);
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * n * inner + in;
      double mx = -1e300;
      for (int i = 0; i < n; ++i)
        mx = std::max(mx, static_cast<double>(x[base + i * inner]));
      double denom = 0.0;
      for (int i = 0; i < n; ++i)
        denom += std::exp(static_cast<double>(x[base + i * inner]) - mx);
      for (int i = 0; i < n; ++i)
        out[base + i * inner] =
            static_cast<S>(std::exp(static_cast<double>(x[base + i * inner]) - mx) / denom);
    }
  }
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out, outer, inner, n]() mutable {
      const S* g = out.grad();
      for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
          const std::int64_t base = o * n * inner + in;
          double dot = 0.0;
          for (int i = 0; i < n; ++i)
            dot += static_cast<double>(g[base + i * inner]) * out[base + i * inner];
          for (int i = 0; i < n; ++i) {
            const double y = out[base + i * inner];
            x.grad_vec()[static_cast<std::size_t>(base + i * inner)] +=
                static_cast<S>(y * (static_cast<double>(g[base + i * inner]) - dot));
          }
        }
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     Tensor<S>& running_mean, Tensor<S>& running_var, bool training,
                     double momentum, double eps) {
  if (x.rank() != 4) {
    throw ShapeError("batch_norm: need [B,C,H,W], got " + shape_str(x.shape()));
  }
  const int b = x.dim(0), c = x.dim(1);
  const std::int64_t plane = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  const std::int64_t m = static_cast<std::int64_t>(b) * plane;  // per-channel count
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
      running_var.numel() != c) {
    throw ShapeError("batch_norm: parameter size mismatch for C=" + std::to_string(c));
  }
  const bool rec = detail::grad_active<S>(x.requires_grad() || gamma.requires_grad() ||
                                          beta.requires_grad());
  auto out = out_like<S>(x.shape(), rec);

  std::vector<double> mu(static_cast<std::size_t>(c), 0.0);
  std::vector<double> invstd(static_cast<std::size_t>(c), 0.0);
  if (training) {
    for (int ci = 0; ci < c; ++ci) {
      double s = 0.0;
      for (int bi = 0; bi < b; ++bi) {
        const S* xp = x.data() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
        for (std::int64_t i = 0; i < plane; ++i) s += xp[i];
      }
      const double mean_c = s / static_cast<double>(m);
      double v = 0.0;
      for (int bi = 0; bi < b; ++bi) {
        const S* xp = x.data() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const double d = xp[i] - mean_c;
          v += d * d;
        }
      }
      v /= static_cast<double>(m);
      mu[static_cast<std::size_t>(ci)] = mean_c;
      invstd[static_cast<std::size_t>(ci)] = 1.0 / std::sqrt(v + eps);
      // unbiased variance in the running estimate
      const double rv = m > 1 ? v * static_cast<double>(m) / static_cast<double>(m - 1) : v;
      running_mean[ci] = static_cast<S>((1.0 - momentum) * running_mean[ci] + momentum * mean_c);
      running_var[ci] = static_cast<S>((1.0 - momentum) * running_var[ci] + momentum * rv);
    }
  } else {
    for (int ci = 0; ci < c; ++ci) {
      mu[static_cast<std::size_t>(ci)] = running_mean[ci];
      invstd[static_cast<std::size_t>(ci)] =
          1.0 / std::sqrt(static_cast<double>(running_var[ci]) + eps);
    }
  }

  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const S* xp = x.data() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
      S* op = out.data() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
      const double gm = gamma[ci], bt = beta[ci];
      const double mc = mu[static_cast<std::size_t>(ci)], is = invstd[static_cast<std::size_t>(ci)];
      for (std::int64_t i = 0; i < plane; ++i)
        op[i] = static_cast<S>(gm * (xp[i] - mc) * is + bt);
    }

  if (rec) {
    Tape<S>::active()->record(out, [x = x, gamma = gamma, beta = beta, out, mu, invstd, training, b = b, c, plane, m]() mutable {
      const S* g = out.grad();
      for (int ci = 0; ci < c; ++ci) {
        const double mc = mu[static_cast<std::size_t>(ci)];
        const double is = invstd[static_cast<std::size_t>(ci)];
        const double gm = gamma[ci];
        double sum_g = 0.0, sum_gx = 0.0;
        for (int bi = 0; bi < b; ++bi) {
          const std::int64_t base = (static_cast<std::int64_t>(bi) * c + ci) * plane;
          const S* gp = g + base;
          const S* xp = x.data() + base;
          for (std::int64_t i = 0; i < plane; ++i) {
            sum_g += gp[i];
            sum_gx += static_cast<double>(gp[i]) * (xp[i] - mc) * is;
          }
        }
        if (gamma.requires_grad())
          gamma.grad_vec()[static_cast<std::size_t>(ci)] += static_cast<S>(sum_gx);
        if (beta.requires_grad())
          beta.grad_vec()[static_cast<std::size_t>(ci)] += static_cast<S>(sum_g);
        if (x.requires_grad()) {
          const double mean_g = sum_g / static_cast<double>(m);
          const double mean_gx = sum_gx / static_cast<double>(m);
          for (int bi = 0; bi < b; ++bi) {
            const std::int64_t base = (static_cast<std::int64_t>(bi) * c + ci) * plane;
            const S* gp = g + base;
            const S* xp = x.data() + base;
            S* dx = x.grad_vec().data() + base;
            if (training) {
              for (std::int64_t i = 0; i < plane; ++i) {
                const double xhat = (xp[i] - mc) * is;
                dx[i] += static_cast<S>(gm * is * (gp[i] - mean_g - xhat * mean_gx));
              }
            } else {
              for (std::int64_t i = 0; i < plane; ++i)
                dx[i] += static_cast<S>(gm * is * gp[i]);
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  if (x.rank() != 4) {
    throw ShapeError("global_avg_pool: need [B,C,H,W], got " + shape_str(x.shape()));
  }
  const int b = x.dim(0), c = x.dim(1);
  const std::int64_t plane = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  const bool rec = rec_for(x);
  auto out = out_like<S>({b, c}, rec);
  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const S* xp = x.data() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
      double acc = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) acc += xp[i];
      out.at(bi, ci) = static_cast<S>(acc / static_cast<double>(plane));
    }
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out, b = b, c, plane]() mutable {
      for (int bi = 0; bi < b; ++bi)
        for (int ci = 0; ci < c; ++ci) {
          const S gv = static_cast<S>(out.grad()[static_cast<std::size_t>(bi) * c + ci] /
                                      static_cast<double>(plane));
          S* dx = x.grad_vec().data() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
          for (std::int64_t i = 0; i < plane; ++i) dx[i] += gv;
        }
    });
  }
  return out;
}

template <typename S>
Tensor<S> mean_axis0(const Tensor<S>& x) {
  if (x.rank() != 2) {
    throw ShapeError("mean_axis0: need rank-2, got " + shape_str(x.shape()));
  }
  const int r = x.dim(0), c = x.dim(1);
  const bool rec = rec_for(x);
  auto out = out_like<S>({c}, rec);
  for (int j = 0; j < c; ++j) {
    double acc = 0.0;
    for (int i = 0; i < r; ++i) acc += x.at(i, j);
    out[j] = static_cast<S>(acc / r);
  }
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out, r, c]() mutable {
      for (int j = 0; j < c; ++j) {
        const S gv = static_cast<S>(out.grad()[static_cast<std::size_t>(j)] / r);
        for (int i = 0; i < r; ++i)
          x.grad_vec()[static_cast<std::size_t>(i) * c + j] += gv;
      }
    });
  }
  return out;
}

namespace {

struct LinearTap {
  int i0, i1;
  double f;  // weight of i1; i0 gets (1-f)
};

inline LinearTap resize_tap(int out_i, int in_n, int out_n) {
  const double scale = static_cast<double>(in_n) / out_n;
  double src = (out_i + 0.5) * scale - 0.5;
  src = std::max(0.0, std::min(src, static_cast<double>(in_n - 1)));
  LinearTap t;
  t.i0 = static_cast<int>(src);
  t.i1 = std::min(t.i0 + 1, in_n - 1);
  t.f = src - t.i0;
  return t;
}

}  // namespace

template <typename S>
Tensor<S> bilinear_resize(const Tensor<S>& x, int out_h, int out_w) {
  if (x.rank() != 4) {
    throw ShapeError("bilinear_resize: need [B,C,H,W], got " + shape_str(x.shape()));
  }
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: bad output size");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const bool rec = rec_for(x);
  auto out = out_like<S>({b, c, out_h, out_w}, rec);

  std::vector<LinearTap> ty(static_cast<std::size_t>(out_h));
  std::vector<LinearTap> tx(static_cast<std::size_t>(out_w));
  for (int i = 0; i < out_h; ++i) ty[static_cast<std::size_t>(i)] = resize_tap(i, h, out_h);
  for (int i = 0; i < out_w; ++i) tx[static_cast<std::size_t>(i)] = resize_tap(i, w, out_w);

  for (int bi = 0; bi < b; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      const S* xp = x.data() + (static_cast<std::int64_t>(bi) * c + ci) * h * w;
      S* op = out.data() + (static_cast<std::int64_t>(bi) * c + ci) * out_h * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        const LinearTap& a = ty[static_cast<std::size_t>(oy)];
        for (int ox = 0; ox < out_w; ++ox) {
          const LinearTap& d = tx[static_cast<std::size_t>(ox)];
          const double v00 = xp[static_cast<std::int64_t>(a.i0) * w + d.i0];
          const double v01 = xp[static_cast<std::int64_t>(a.i0) * w + d.i1];
          const double v10 = xp[static_cast<std::int64_t>(a.i1) * w + d.i0];
          const double v11 = xp[static_cast<std::int64_t>(a.i1) * w + d.i1];
          op[static_cast<std::int64_t>(oy) * out_w + ox] = static_cast<S>(
              (1 - a.f) * ((1 - d.f) * v00 + d.f * v01) + a.f * ((1 - d.f) * v10 + d.f * v11));
        }
      }
    }

  if (rec) {
    Tape<S>::active()->record(out, [x = x, out, ty, tx, b = b, c, h, w = w, out_h, out_w]() mutable {
      for (int bi = 0; bi < b; ++bi)
        for (int ci = 0; ci < c; ++ci) {
          S* dx = x.grad_vec().data() + (static_cast<std::int64_t>(bi) * c + ci) * h * w;
          const S* g = out.grad() + (static_cast<std::int64_t>(bi) * c + ci) * out_h * out_w;
          for (int oy = 0; oy < out_h; ++oy) {
            const LinearTap& a = ty[static_cast<std::size_t>(oy)];
            for (int ox = 0; ox < out_w; ++ox) {
              const LinearTap& d = tx[static_cast<std::size_t>(ox)];
              const double gv = g[static_cast<std::int64_t>(oy) * out_w + ox];
              dx[static_cast<std::int64_t>(a.i0) * w + d.i0] += static_cast<S>((1 - a.f) * (1 - d.f) * gv);
              dx[static_cast<std::int64_t>(a.i0) * w + d.i1] += static_cast<S>((1 - a.f) * d.f * gv);
              dx[static_cast<std::int64_t>(a.i1) * w + d.i0] += static_cast<S>(a.f * (1 - d.f) * gv);
              dx[static_cast<std::int64_t>(a.i1) * w + d.i1] += static_cast<S>(a.f * d.f * gv);
            }
          }
        }
    });
  }
  return out;
}

// ------------------------------------------------------------------ reductions

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  const bool rec = rec_for(x);
  auto out = out_like<S>({}, rec);
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) acc += x[i];
  out[0] = static_cast<S>(acc);
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out]() mutable {
      const S g = out.grad()[0];
      for (std::int64_t i = 0; i < x.numel(); ++i) x.grad_vec()[static_cast<std::size_t>(i)] += g;
    });
  }
  return out;
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  const bool rec = rec_for(x);
  auto out = out_like<S>({}, rec);
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) acc += x[i];
  out[0] = static_cast<S>(acc / static_cast<double>(x.numel()));
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out]() mutable {
      const S g = static_cast<S>(out.grad()[0] / static_cast<double>(x.numel()));
      for (std::int64_t i = 0; i < x.numel(); ++i) x.grad_vec()[static_cast<std::size_t>(i)] += g;
    });
  }
  return out;
}

template <typename S>
Tensor<S> l2_norm(const Tensor<S>& x) {
  const bool rec = rec_for(x);
  auto out = out_like<S>({}, rec);
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i)
    acc += static_cast<double>(x[i]) * x[i];
  const double norm = std::sqrt(acc);
  out[0] = static_cast<S>(norm);
  if (rec) {
    Tape<S>::active()->record(out, [x = x, out, norm]() mutable {
      if (norm < 1e-12) return;  // subgradient 0 at the origin
      const double g = out.grad()[0];
      for (std::int64_t i = 0; i < x.numel(); ++i)
        x.grad_vec()[static_cast<std::size_t>(i)] += static_cast<S>(g * x[i] / norm);
    });
  }
  return out;
}

template <typename S>
Tensor<S> detach(const Tensor<S>& x) {
  return x.clone();
}

// ------------------------------------------------------------- instantiations

#define MCCL_INSTANTIATE_OPS(S)                                                        \
  template Tensor<S> add<S>(const Tensor<S>&, const Tensor<S>&);                       \
  template Tensor<S> sub<S>(const Tensor<S>&, const Tensor<S>&);                       \
  template Tensor<S> mul<S>(const Tensor<S>&, const Tensor<S>&);                       \
  template Tensor<S> div<S>(const Tensor<S>&, const Tensor<S>&);                       \
  template Tensor<S> add_scalar<S>(const Tensor<S>&, double);                          \
  template Tensor<S> mul_scalar<S>(const Tensor<S>&, double);                          \
  template Tensor<S> relu<S>(const Tensor<S>&);                                        \
  template Tensor<S> leaky_relu<S>(const Tensor<S>&, double);                          \
  template Tensor<S> sigmoid<S>(const Tensor<S>&);                                     \
  template Tensor<S> log_clamped<S>(const Tensor<S>&);                                 \
  template Tensor<S> clamp<S>(const Tensor<S>&, double, double);                       \
  template Tensor<S> reshape<S>(const Tensor<S>&, Shape);                              \
  template Tensor<S> transpose2d<S>(const Tensor<S>&);                                 \
  template Tensor<S> concat<S>(const std::vector<Tensor<S>>&, int);                    \
  template Tensor<S> slice<S>(const Tensor<S>&, int, int, int);                        \
  template std::vector<Tensor<S>> split<S>(const Tensor<S>&, int, int);                \
  template Tensor<S> permute_batch<S>(const Tensor<S>&, const std::vector<int>&);      \
  template Tensor<S> flatten_positions<S>(const Tensor<S>&);                           \
  template Tensor<S> unflatten_positions<S>(const Tensor<S>&, int, int, int);          \
  template Tensor<S> matmul<S>(const Tensor<S>&, const Tensor<S>&);                    \
  template Tensor<S> conv2d<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,   \
                               int, int);                                              \
  template Tensor<S> depthwise_conv2d<S>(const Tensor<S>&, const Tensor<S>&);          \
  template Tensor<S> softmax<S>(const Tensor<S>&, int);                                \
  template Tensor<S> batch_norm<S>(const Tensor<S>&, const Tensor<S>&,                 \
                                   const Tensor<S>&, Tensor<S>&, Tensor<S>&, bool,     \
                                   double, double);                                    \
  template Tensor<S> global_avg_pool<S>(const Tensor<S>&);                             \
  template Tensor<S> mean_axis0<S>(const Tensor<S>&);                                  \
  template Tensor<S> bilinear_resize<S>(const Tensor<S>&, int, int);                   \
  template Tensor<S> sum<S>(const Tensor<S>&);                                         \
  template Tensor<S> mean<S>(const Tensor<S>&);                                        \
  template Tensor<S> l2_norm<S>(const Tensor<S>&);                                     \
  template Tensor<S> detach<S>(const Tensor<S>&);

MCCL_INSTANTIATE_OPS(float)
MCCL_INSTANTIATE_OPS(double)

#undef MCCL_INSTANTIATE_OPS

}  // namespace mccl
