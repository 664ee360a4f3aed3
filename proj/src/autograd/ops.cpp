#include "wsr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>
#include <utility>

#include "wsr/error.hpp"
#include "gemm.hpp"

namespace wsr::ag {

namespace {

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op, const char* arg) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace

template <typename T>
void check_finite(std::span<const T> values, const char* what) {
  for (T v : values)
    if (!std::isfinite(v)) throw NonFiniteError(std::string(what) + ": non-finite value");
}

template <typename T>
void softmax_rows(std::span<const T> logits, std::span<T> out, std::size_t classes) {
  const std::size_t rows = classes ? logits.size() / classes : 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = logits.data() + r * classes;
    T* y = out.data() + r * classes;
    const T m = *std::max_element(z, z + classes);
    T s = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      y[c] = std::exp(z[c] - m);
      s += y[c];
    }
    for (std::size_t c = 0; c < classes; ++c) y[c] /= s;
  }
}

template <typename T>
Tensor<T> conv1d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, Padding padding) {
  require_rank(input, 3, "conv1d", "input");
  require_rank(weight, 3, "conv1d", "weight");
  require_rank(bias, 1, "conv1d", "bias");
  const std::size_t batch = input.dim(0), cin = input.dim(1), len = input.dim(2);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin)
    throw ShapeError("conv1d: weight expects " + std::to_string(weight.dim(1)) +
                     " input channels, input has " + std::to_string(cin));
  if (bias.dim(0) != cout)
    throw ShapeError("conv1d: bias has " + std::to_string(bias.dim(0)) + " entries for " +
                     std::to_string(cout) + " filters");
  const std::size_t pad_total = padding == Padding::Same ? k - 1 : 0;
  const std::ptrdiff_t pad_left = static_cast<std::ptrdiff_t>(pad_total / 2);
  if (k == 0 || k > len + pad_total)
    throw ShapeError("conv1d: kernel " + std::to_string(k) + " does not fit length " +
                     std::to_string(len));
  const std::size_t out_len = padding == Padding::Same ? len : len - k + 1;

  Tensor<T> out({batch, cout, out_len});
  const std::size_t kk = cin * k;
  const T* x = input.data().data();
  const T* w = weight.data().data();
  const T* bv = bias.data().data();
  T* y = out.data().data();

  // cols[(ci * k + t) * out_len + l] = x[ci][l + t - pad_left], zero outside.
  auto im2col = [cin, k, len, out_len, pad_left](const T* xs, T* cols) {
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t t = 0; t < k; ++t) {
        T* row = cols + (ci * k + t) * out_len;
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(t) - pad_left;
        for (std::size_t l = 0; l < out_len; ++l) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l) + off;
          row[l] = src >= 0 && src < static_cast<std::ptrdiff_t>(len) ? xs[ci * len + src] : T(0);
        }
      }
  };

  std::vector<T> cols(kk * out_len);
  for (std::size_t b = 0; b < batch; ++b) {
    T* yb = y + b * cout * out_len;
    for (std::size_t co = 0; co < cout; ++co) std::fill(yb + co * out_len, yb + (co + 1) * out_len, bv[co]);
    im2col(x + b * cin * len, cols.data());
    detail::gemm_acc<false>(cout, out_len, kk, w, cols.data(), yb);
  }

  if (should_record(tape, {&input, &weight, &bias})) {
    tape->record(out, {input, weight, bias},
                 [input, weight, bias, batch, cin, cout, k, len, out_len, kk, pad_left,
                  im2col](Tensor<T>& o) {
                   const T* g = o.grad().data();
                   const T* xd = input.data().data();
                   const T* wd = weight.data().data();
                   auto gx = input.grad_for_accumulation();
                   auto gw = weight.grad_for_accumulation();
                   auto gb = bias.grad_for_accumulation();
                   std::vector<T> buf(kk * out_len);
                   for (std::size_t b = 0; b < batch; ++b) {
                     const T* gb_rows = g + b * cout * out_len;
                     if (!gb.empty())
                       for (std::size_t co = 0; co < cout; ++co) {
                         T s = 0;
                         for (std::size_t l = 0; l < out_len; ++l) s += gb_rows[co * out_len + l];
                         gb[co] += s;
                       }
                     if (!gw.empty()) {
                       im2col(xd + b * cin * len, buf.data());
                       detail::gemm_nt_acc(cout, kk, out_len, gb_rows, buf.data(), gw.data());
                     }
                     if (!gx.empty()) {
                       // Column grads W^T g, then scattered back onto the input.
                       std::fill(buf.begin(), buf.end(), T(0));
                       detail::gemm_acc<true>(kk, out_len, cout, wd, gb_rows, buf.data());
                       T* gxb = gx.data() + b * cin * len;
                       for (std::size_t ci = 0; ci < cin; ++ci)
                         for (std::size_t t = 0; t < k; ++t) {
                           const T* row = buf.data() + (ci * k + t) * out_len;
                           const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(t) - pad_left;
                           for (std::size_t l = 0; l < out_len; ++l) {
                             const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l) + off;
                             if (src >= 0 && src < static_cast<std::ptrdiff_t>(len))
                               gxb[ci * len + src] += row[l];
                           }
                         }
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
Tensor<T> linear(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  require_rank(input, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  require_rank(bias, 1, "linear", "bias");
  const std::size_t batch = input.dim(0), n = input.dim(1), m = weight.dim(0);
  if (weight.dim(1) != n)
    throw ShapeError("linear: input width " + std::to_string(n) + " vs weight " +
                     shape_str(weight.shape()));
  if (bias.dim(0) != m)
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " vs weight " +
                     shape_str(weight.shape()));

  Tensor<T> out({batch, m});
  const T* x = input.data().data();
  const T* w = weight.data().data();
  const T* bv = bias.data().data();
  T* y = out.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const T* xr = x + b * n;
    for (std::size_t i = 0; i < m; ++i) {
      y[b * m + i] = detail::dot(xr, w + i * n, n) + bv[i];
    }
  }

  if (should_record(tape, {&input, &weight, &bias})) {
    tape->record(out, {input, weight, bias}, [input, weight, bias, batch, n, m](Tensor<T>& o) mutable {
      const T* g = o.grad().data();
      const T* x = input.data().data();
      const T* w = weight.data().data();
      auto gx = input.grad_for_accumulation();
      auto gw = weight.grad_for_accumulation();
      auto gb = bias.grad_for_accumulation();
      for (std::size_t b = 0; b < batch; ++b) {
        const T* gr = g + b * m;
        const T* xr = x + b * n;
        for (std::size_t i = 0; i < m; ++i) {
          const T gi = gr[i];
          if (!gb.empty()) gb[i] += gi;
          if (!gw.empty()) {
            T* gwr = gw.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) gwr[j] += gi * xr[j];
          }
          if (!gx.empty()) {
            T* gxr = gx.data() + b * n;
            const T* wr = w + i * n;
            for (std::size_t j = 0; j < n; ++j) gxr[j] += gi * wr[j];
          }
        }
      }
    });
  }
  return out;
}

namespace {

// Elementwise unary op with a backward rule expressed through the input
// value x, the output value y and the incoming grad g.
template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary(Tape<T>* tape, const Tensor<T>& x, Fwd fwd, Bwd bwd) {
  Tensor<T> out(x.shape());
  auto xs = x.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = fwd(xs[i]);
  if (should_record(tape, {&x})) {
    tape->record(out, {x}, [x, bwd](Tensor<T>& o) mutable {
      auto gx = x.grad_for_accumulation();
      auto g = o.grad();
      auto xs = x.data();
      auto ys = std::as_const(o).data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += bwd(xs[i], ys[i], g[i]);
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& x) {
  return unary(
      tape, x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T, T g) { return v > T(0) ? g : T(0); });
}

template <typename T>
Tensor<T> sigmoid(Tape<T>* tape, const Tensor<T>& x) {
  return unary(
      tape, x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y, T g) { return g * y * (T(1) - y); });
}

template <typename T>
Tensor<T> abs(Tape<T>* tape, const Tensor<T>& x) {
  // d|x|/dx taken as 0 at x = 0.
  return unary(
      tape, x, [](T v) { return std::abs(v); },
      [](T v, T, T g) { return v > T(0) ? g : (v < T(0) ? -g : T(0)); });
}

template <typename T>
Tensor<T> square(Tape<T>* tape, const Tensor<T>& x) {
  return unary(
      tape, x, [](T v) { return v * v; }, [](T v, T, T g) { return T(2) * v * g; });
}

template <typename T>
Tensor<T> scale(Tape<T>* tape, const Tensor<T>& x, T factor) {
  return unary(
      tape, x, [factor](T v) { return v * factor; },
      [factor](T, T, T g) { return g * factor; });
}

template <typename T>
Tensor<T> maxpool1d(Tape<T>* tape, const Tensor<T>& x) {
  require_rank(x, 3, "maxpool1d", "input");
  const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2);
  if (len < 2) throw ShapeError("maxpool1d: spatial length must be >= 2, got " + std::to_string(len));
  const std::size_t half = len / 2;
  Tensor<T> out({x.dim(0), x.dim(1), half});
  std::vector<unsigned char> pick(rows * half);
  const T* xs = x.data().data();
  T* ys = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t l = 0; l < half; ++l) {
      const T a = xs[r * len + 2 * l], b = xs[r * len + 2 * l + 1];
      const bool second = b > a;
      pick[r * half + l] = second;
      ys[r * half + l] = second ? b : a;
    }
  }
  if (should_record(tape, {&x})) {
    tape->record(out, {x}, [x, pick = std::move(pick), rows, len, half](Tensor<T>& o) mutable {
      auto gx = x.grad_for_accumulation();
      auto g = o.grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t l = 0; l < half; ++l)
          gx[r * len + 2 * l + pick[r * half + l]] += g[r * half + l];
    });
  }
  return out;
}

template <typename T>
Tensor<T> gap(Tape<T>* tape, const Tensor<T>& x) {
  require_rank(x, 3, "gap", "input");
  const std::size_t rows = x.dim(0) * x.dim(1), len = x.dim(2);
  if (len == 0) throw ShapeError("gap: empty spatial axis");
  Tensor<T> out({x.dim(0), x.dim(1)});
  const T* xs = x.data().data();
  T* ys = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T s = 0;
    for (std::size_t l = 0; l < len; ++l) s += xs[r * len + l];
    ys[r] = s / static_cast<T>(len);
  }
  if (should_record(tape, {&x})) {
    tape->record(out, {x}, [x, rows, len](Tensor<T>& o) mutable {
      auto gx = x.grad_for_accumulation();
      auto g = o.grad();
      const T inv = T(1) / static_cast<T>(len);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t l = 0; l < len; ++l) gx[r * len + l] += g[r] * inv;
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax(Tape<T>* tape, const Tensor<T>& logits) {
  require_rank(logits, 2, "softmax", "logits");
  const std::size_t classes = logits.dim(1);
  check_finite<T>(logits.data(), "softmax logits");
  Tensor<T> out(logits.shape());
  softmax_rows<T>(logits.data(), out.data(), classes);
  if (should_record(tape, {&logits})) {
    tape->record(out, {logits}, [logits, classes](Tensor<T>& o) mutable {
      auto gz = logits.grad_for_accumulation();
      auto g = o.grad();
      auto y = std::as_const(o).data();
      const std::size_t rows = classes ? y.size() / classes : 0;
      for (std::size_t r = 0; r < rows; ++r) {
        T dot = 0;
        for (std::size_t c = 0; c < classes; ++c) dot += g[r * classes + c] * y[r * classes + c];
        for (std::size_t c = 0; c < classes; ++c)
          gz[r * classes + c] += y[r * classes + c] * (g[r * classes + c] - dot);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax_cross_entropy(Tape<T>* tape, const Tensor<T>& logits, const Tensor<T>& targets) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  require_same_shape(logits, targets, "softmax_cross_entropy");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (classes < 2) throw ShapeError("softmax_cross_entropy: need at least 2 classes");
  if (batch == 0) throw ShapeError("softmax_cross_entropy: empty batch");
  check_finite<T>(logits.data(), "softmax_cross_entropy logits");
  auto t = targets.data();
  for (std::size_t b = 0; b < batch; ++b) {
    double s = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const T v = t[b * classes + c];
      if (!(v >= T(0))) throw InvalidArgument("softmax_cross_entropy: negative target entry");
      s += static_cast<double>(v);
    }
    if (std::abs(s - 1.0) > 1e-6)
      throw InvalidArgument("softmax_cross_entropy: target row " + std::to_string(b) +
                            " sums to " + std::to_string(s) + ", not 1");
  }

  std::vector<T> probs(batch * classes);
  softmax_rows<T>(logits.data(), probs, classes);
  const T* z = logits.data().data();
  T total = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* zr = z + b * classes;
    const T m = *std::max_element(zr, zr + classes);
    T se = 0;
    for (std::size_t c = 0; c < classes; ++c) se += std::exp(zr[c] - m);
    const T lse = m + std::log(se);
    T row = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const T tc = t[b * classes + c];
      if (tc != T(0)) row -= tc * (zr[c] - lse);
    }
    total += row;
  }
  Tensor<T> out = Tensor<T>::scalar(total / static_cast<T>(batch));

  if (should_record(tape, {&logits})) {
    tape->record(out, {logits},
                 [logits, targets, probs = std::move(probs), batch](Tensor<T>& o) mutable {
                   auto gz = logits.grad_for_accumulation();
                   auto t = targets.data();
                   const T g = o.grad()[0] / static_cast<T>(batch);
                   for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += g * (probs[i] - t[i]);
                 });
  }
  return out;
}

namespace {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b, const char* name, Fwd fwd,
                 Bwd bwd) {
  require_same_shape(a, b, name);
  Tensor<T> out(a.shape());
  auto as = a.data();
  auto bs = b.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = fwd(as[i], bs[i]);
  if (should_record(tape, {&a, &b})) {
    tape->record(out, {a, b}, [a, b, bwd](Tensor<T>& o) mutable {
      auto ga = a.grad_for_accumulation();
      auto gb = b.grad_for_accumulation();
      auto g = o.grad();
      auto as = a.data();
      auto bs = b.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const auto [da, db] = bwd(as[i], bs[i], g[i]);
        if (!ga.empty()) ga[i] += da;
        if (!gb.empty()) gb[i] += db;
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      tape, a, b, "add", [](T x, T y) { return x + y; },
      [](T, T, T g) { return std::pair{g, g}; });
}

template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      tape, a, b, "sub", [](T x, T y) { return x - y; },
      [](T, T, T g) { return std::pair{g, -g}; });
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      tape, a, b, "mul", [](T x, T y) { return x * y; },
      [](T x, T y, T g) { return std::pair{g * y, g * x}; });
}

template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& a) {
  T s = 0;
  for (T v : a.data()) s += v;
  Tensor<T> out = Tensor<T>::scalar(s);
  if (should_record(tape, {&a})) {
    tape->record(out, {a}, [a](Tensor<T>& o) mutable {
      auto ga = a.grad_for_accumulation();
      const T g = o.grad()[0];
      for (T& v : ga) v += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(Tape<T>* tape, const Tensor<T>& a) {
  if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
  return scale(tape, sum(tape, a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> reshape(Tape<T>* tape, const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  auto src = a.data();
  Tensor<T> out(std::move(shape), std::vector<T>(src.begin(), src.end()));
  if (should_record(tape, {&a})) {
    tape->record(out, {a}, [a](Tensor<T>& o) mutable {
      auto ga = a.grad_for_accumulation();
      auto g = o.grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

#define WSR_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv1d(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                            Padding);                                                       \
  template Tensor<T> linear(Tape<T>*, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> relu(Tape<T>*, const Tensor<T>&);                                      \
  template Tensor<T> sigmoid(Tape<T>*, const Tensor<T>&);                                   \
  template Tensor<T> abs(Tape<T>*, const Tensor<T>&);                                       \
  template Tensor<T> maxpool1d(Tape<T>*, const Tensor<T>&);                                 \
  template Tensor<T> gap(Tape<T>*, const Tensor<T>&);                                       \
  template Tensor<T> softmax(Tape<T>*, const Tensor<T>&);                                   \
  template Tensor<T> softmax_cross_entropy(Tape<T>*, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> add(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> sub(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> mul(Tape<T>*, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> scale(Tape<T>*, const Tensor<T>&, T);                                  \
  template Tensor<T> square(Tape<T>*, const Tensor<T>&);                                    \
  template Tensor<T> sum(Tape<T>*, const Tensor<T>&);                                       \
  template Tensor<T> mean(Tape<T>*, const Tensor<T>&);                                      \
  template Tensor<T> reshape(Tape<T>*, const Tensor<T>&, Shape);                            \
  template void softmax_rows(std::span<const T>, std::span<T>, std::size_t);                \
  template void check_finite(std::span<const T>, const char*);

WSR_INSTANTIATE_OPS(float)
WSR_INSTANTIATE_OPS(double)

}  // namespace wsr::ag
