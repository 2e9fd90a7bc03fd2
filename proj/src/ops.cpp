// Copyright 2026 The hhft-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hhft/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <string>

#include "hhft/kernels.hpp"

namespace hhft {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::uint64_t& MultiplyCounter::value() {
  thread_local std::uint64_t count = 0;
  return count;
}

namespace {

void count_mults(std::uint64_t n) { MultiplyCounter::value() += n; }

[[noreturn]] void shape_fail(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.ptr();
  const T* s = src.ptr();
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += s[i];
}

// Row count / width of a tensor viewed as [rows x last].
inline std::size_t rows_of(const Shape& s) { return s.empty() ? 1 : shape_size(s) / s.back(); }

}  // namespace

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) shape_fail("matmul", av.shape(), bv.shape());
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out({m, n});
  kernels::gemm_nn(m, n, k, av.ptr(), bv.ptr(), out.ptr());
  count_mults(m * k * n);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(ia)) kernels::gemm_nt(m, k, n, g.ptr(), t.value(ib).ptr(), t.grad_slot(ia).ptr());
    if (t.requires_grad(ib)) kernels::gemm_tn(k, n, m, t.value(ia).ptr(), g.ptr(), t.grad_slot(ib).ptr());
  });
}

template <class T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  if (xv.rank() < 1 || wv.rank() != 2 || xv.shape().back() != wv.dim(0)) shape_fail("linear", xv.shape(), wv.shape());
  const std::size_t rows = rows_of(xv.shape()), in = wv.dim(0), out_dim = wv.dim(1);
  Shape out_shape = xv.shape();
  out_shape.back() = out_dim;
  Var<T> flat = reshape(x, Shape{rows, in});
  Var<T> y = matmul(flat, w);
  if (b.valid()) y = add_bias(y, b);
  return reshape(y, out_shape);
}

template <class T>
Var<T> blockwise_linear(Var<T> x, Var<T> w, Var<T> b) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  if (xv.rank() != 3 || wv.rank() != 3 || xv.dim(2) != wv.dim(1) || (wv.dim(0) != 1 && wv.dim(0) != xv.dim(1)))
    shape_fail("blockwise_linear", xv.shape(), wv.shape());
  const std::size_t batch = xv.dim(0), tokens = xv.dim(1), in = xv.dim(2), out_dim = wv.dim(2);
  const std::size_t groups = wv.dim(0);
  if (b.valid()) {
    const Shape& bs = b.value().shape();
    if (bs != Shape{groups, out_dim}) shape_fail("blockwise_linear bias", bs, Shape{groups, out_dim});
  }
  Tensor<T> out({batch, tokens, out_dim});
  if (groups == 1) {
    kernels::gemm_nn(batch * tokens, out_dim, in, xv.ptr(), wv.ptr(), out.ptr());
  } else {
    std::vector<T> xs(batch * in), ys(batch * out_dim);
    for (std::size_t k = 0; k < tokens; ++k) {
      for (std::size_t r = 0; r < batch; ++r)
        std::copy_n(xv.ptr() + (r * tokens + k) * in, in, xs.data() + r * in);
      std::fill(ys.begin(), ys.end(), T(0));
      kernels::gemm_nn(batch, out_dim, in, xs.data(), wv.ptr() + k * in * out_dim, ys.data());
      for (std::size_t r = 0; r < batch; ++r)
        std::copy_n(ys.data() + r * out_dim, out_dim, out.ptr() + (r * tokens + k) * out_dim);
    }
  }
  count_mults(batch * tokens * in * out_dim);
  if (b.valid()) {
    const T* bp = b.value().ptr();
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t k = 0; k < tokens; ++k) {
        const T* bk = bp + (groups == 1 ? 0 : k) * out_dim;
        T* o = out.ptr() + (r * tokens + k) * out_dim;
        for (std::size_t j = 0; j < out_dim; ++j) o[j] += bk[j];
      }
  }
  const auto ix = x.id(), iw = w.id();
  const bool has_b = b.valid();
  const auto ib = has_b ? b.id() : 0u;
  std::vector<Var<T>> parents{x, w};
  if (has_b) parents.push_back(b);
  return x.tape().record(
      std::move(out), parents,
      [=](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& xv = t.value(ix);
        const Tensor<T>& wv = t.value(iw);
        const bool gx = t.requires_grad(ix), gw = t.requires_grad(iw), gb = has_b && t.requires_grad(ib);
        if (groups == 1) {
          if (gx) kernels::gemm_nt(batch * tokens, in, out_dim, g.ptr(), wv.ptr(), t.grad_slot(ix).ptr());
          if (gw) kernels::gemm_tn(in, out_dim, batch * tokens, xv.ptr(), g.ptr(), t.grad_slot(iw).ptr());
        } else if (gx || gw) {
          std::vector<T> xs(batch * in), gs(batch * out_dim), dx(batch * in);
          for (std::size_t k = 0; k < tokens; ++k) {
            for (std::size_t r = 0; r < batch; ++r) {
              std::copy_n(g.ptr() + (r * tokens + k) * out_dim, out_dim, gs.data() + r * out_dim);
              if (gw) std::copy_n(xv.ptr() + (r * tokens + k) * in, in, xs.data() + r * in);
            }
            if (gx) {
              std::fill(dx.begin(), dx.end(), T(0));
              kernels::gemm_nt(batch, in, out_dim, gs.data(), wv.ptr() + k * in * out_dim, dx.data());
              T* dst = t.grad_slot(ix).ptr();
              for (std::size_t r = 0; r < batch; ++r) {
                T* d = dst + (r * tokens + k) * in;
                const T* s = dx.data() + r * in;
                for (std::size_t j = 0; j < in; ++j) d[j] += s[j];
              }
            }
            if (gw)
              kernels::gemm_tn(in, out_dim, batch, xs.data(), gs.data(), t.grad_slot(iw).ptr() + k * in * out_dim);
          }
        }
        if (gb) {
          T* db = t.grad_slot(ib).ptr();
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t k = 0; k < tokens; ++k) {
              T* d = db + (groups == 1 ? 0 : k) * out_dim;
              const T* s = g.ptr() + (r * tokens + k) * out_dim;
              for (std::size_t j = 0; j < out_dim; ++j) d[j] += s[j];
            }
        }
      });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.shape() != bv.shape()) shape_fail("add", av.shape(), bv.shape());
  Tensor<T> out = av;
  accumulate(out, bv);
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(ia)) accumulate(t.grad_slot(ia), g);
    if (t.requires_grad(ib)) accumulate(t.grad_slot(ib), g);
  });
}

template <class T>
Var<T> add_bias(Var<T> x, Var<T> b) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& bv = b.value();
  if (xv.rank() < 1 || bv.rank() != 1 || xv.shape().back() != bv.dim(0)) shape_fail("add_bias", xv.shape(), bv.shape());
  const std::size_t n = bv.dim(0), rows = rows_of(xv.shape());
  Tensor<T> out = xv;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bv[j];
  const auto ix = x.id(), ib = b.id();
  return x.tape().record(std::move(out), {x, b}, [ix, ib, n, rows](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(ix)) accumulate(t.grad_slot(ix), g);
    if (t.requires_grad(ib)) {
      Tensor<T>& db = t.grad_slot(ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) db[j] += g[r * n + j];
    }
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.shape() != bv.shape()) shape_fail("mul", av.shape(), bv.shape());
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  count_mults(out.size());
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(ia)) {
      Tensor<T>& d = t.grad_slot(ia);
      const Tensor<T>& o = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * o[i];
    }
    if (t.requires_grad(ib)) {
      Tensor<T>& d = t.grad_slot(ib);
      const Tensor<T>& o = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * o[i];
    }
  });
}

template <class T>
Var<T> scale(Var<T> x, T factor) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v *= factor;
  count_mults(out.size());
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, factor](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& d = t.grad_slot(ix);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += factor * g[i];
  });
}

template <class T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = v > T(0) ? v : T(0);
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& d = t.grad_slot(ix);
    const Tensor<T>& in = t.value(ix);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (in[i] > T(0)) d[i] += g[i];
  });
}

template <class T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> out = x.value();
  for (T& v : out.data()) v = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  auto saved = std::make_shared<Tensor<T>>(out);
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, saved](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>& d = t.grad_slot(ix);
    const Tensor<T>& s = *saved;
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * s[i] * (T(1) - s[i]);
  });
}

template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
  if (shape == x.shape()) return x;
  Tensor<T> out = x.value().reshaped(std::move(shape));
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape<T>& t, const Tensor<T>& g) {
    accumulate(t.grad_slot(ix), g);
  });
}

template <class T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat axis " + std::to_string(axis) + " out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var<T>& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) shape_fail("concat", first, s);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) shape_fail("concat", first, s);
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = out_shape[axis] * inner;
  Tensor<T> out(out_shape);
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const Var<T>& p : parts) {
    const std::size_t w = p.shape()[axis] * inner;
    const T* src = p.value().ptr();
    for (std::size_t o = 0; o < outer; ++o) std::copy_n(src + o * w, w, out.ptr() + o * out_row + offset);
    offset += w;
    ids.push_back(p.id());
    widths.push_back(w);
  }
  return parts[0].tape().record(std::move(out), parts, [ids, widths, outer, out_row](Tape<T>& t, const Tensor<T>& g) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::size_t w = widths[i];
      if (t.requires_grad(ids[i])) {
        T* d = t.grad_slot(ids[i]).ptr();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < w; ++j) d[o * w + j] += g[o * out_row + off + j];
      }
      off += w;
    }
  });
}

template <class T>
Var<T> slice(Var<T> x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size() || begin > end || end > s[axis])
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " of " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  const std::size_t in_row = s[axis] * inner, w = (end - begin) * inner, off = begin * inner;
  Tensor<T> out(out_shape);
  const T* src = x.value().ptr();
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(src + o * in_row + off, w, out.ptr() + o * w);
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, const Tensor<T>& g) {
    T* d = t.grad_slot(ix).ptr();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < w; ++j) d[o * in_row + off + j] += g[o * w + j];
  });
}

template <class T>
Var<T> mean_over_axis(Var<T> x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw ShapeError("mean_over_axis: axis out of range for " + shape_str(s));
  if (s[axis] == 0) throw ShapeError("mean_over_axis: empty axis in " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor<T> out(out_shape);
  const T* src = x.value().ptr();
  const T inv = T(1) / static_cast<T>(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += src[(o * n + a) * inner + i];
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] *= inv;
  }
  count_mults(outer * inner);
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape<T>& t, const Tensor<T>& g) {
    T* d = t.grad_slot(ix).ptr();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t i = 0; i < inner; ++i) d[(o * n + a) * inner + i] += g[o * inner + i] * inv;
  });
}

template <class T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (T v : x.value().data()) s += v;
  const auto ix = x.id();
  return x.tape().record(Tensor<T>::scalar(s), {x}, [ix](Tape<T>& t, const Tensor<T>& g) {
    const T gv = g[0];
    for (T& d : t.grad_slot(ix).data()) d += gv;
  });
}

template <class T>
Var<T> softmax(Var<T> x) {
  const Shape& s = x.shape();
  if (s.empty() || s.back() == 0) throw ShapeError("softmax needs a non-empty last axis, got " + shape_str(s));
  const std::size_t n = s.back(), rows = rows_of(s);
  Tensor<T> out = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = out.ptr() + r * n;
    const T mx = *std::max_element(row, row + n);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += (row[j] = std::exp(row[j] - mx));
    const T inv = T(1) / z;
    for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
  }
  count_mults(rows * n);
  auto saved = std::make_shared<Tensor<T>>(out);
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, saved, n, rows](Tape<T>& t, const Tensor<T>& g) {
    T* d = t.grad_slot(ix).ptr();
    const Tensor<T>& p = *saved;
    for (std::size_t r = 0; r < rows; ++r) {
      T dotp = 0;
      for (std::size_t j = 0; j < n; ++j) dotp += g[r * n + j] * p[r * n + j];
      for (std::size_t j = 0; j < n; ++j) d[r * n + j] += p[r * n + j] * (g[r * n + j] - dotp);
    }
  });
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps) {
  const Shape& s = x.shape();
  const Shape& gs = gain.shape();
  if (s.empty() || gs != bias.shape()) shape_fail("layer_norm", s, gs);
  const std::size_t d = s.back(), rows = rows_of(s);
  std::size_t groups = 1;
  if (gs == Shape{d}) {
    groups = 1;
  } else if (gs.size() == 2 && gs[1] == d && s.size() == 3 && (gs[0] == 1 || gs[0] == s[1])) {
    groups = gs[0];
  } else {
    shape_fail("layer_norm", s, gs);
  }
  const std::size_t tokens = s.size() == 3 ? s[1] : 1;
  auto xhat = std::make_shared<Tensor<T>>(s);
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  Tensor<T> out(s);
  const T* xp = x.value().ptr();
  const T* gp = gain.value().ptr();
  const T* bp = bias.value().ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xp + r * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<T>(d);
    const T inv = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    const std::size_t grp = groups == 1 ? 0 : r % tokens;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mean) * inv;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gp[grp * d + j] + bp[grp * d + j];
    }
  }
  count_mults(3 * rows * d);
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().record(std::move(out), {x, gain, bias}, [=](Tape<T>& t, const Tensor<T>& g) {
    const T* gp = t.value(ig).ptr();
    const bool gx = t.requires_grad(ix), gg = t.requires_grad(ig), gb = t.requires_grad(ib);
    T* dx = gx ? t.grad_slot(ix).ptr() : nullptr;
    T* dg = gg ? t.grad_slot(ig).ptr() : nullptr;
    T* db = gb ? t.grad_slot(ib).ptr() : nullptr;
    std::vector<T> dh(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t grp = groups == 1 ? 0 : r % tokens;
      const T* gr = g.ptr() + r * d;
      const T* hr = xhat->ptr() + r * d;
      T mean_dh = 0, mean_dh_h = 0;
      for (std::size_t j = 0; j < d; ++j) {
        dh[j] = gr[j] * gp[grp * d + j];
        mean_dh += dh[j];
        mean_dh_h += dh[j] * hr[j];
        if (dg) dg[grp * d + j] += gr[j] * hr[j];
        if (db) db[grp * d + j] += gr[j];
      }
      if (!dx) continue;
      mean_dh /= static_cast<T>(d);
      mean_dh_h /= static_cast<T>(d);
      const T inv = (*inv_std)[r];
      for (std::size_t j = 0; j < d; ++j) dx[r * d + j] += inv * (dh[j] - mean_dh - hr[j] * mean_dh_h);
    }
  });
}

template <class T>
Var<T> embedding_lookup(Var<T> table, std::span<const std::int32_t> ids, std::string_view what) {
  const Shape& s = table.shape();
  if (s.size() != 2) throw ShapeError(std::string(what) + ": embedding table must be 2-D, got " + shape_str(s));
  const std::size_t vocab = s[0], e = s[1];
  Tensor<T> out({ids.size(), e});
  const T* tp = table.value().ptr();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::int32_t id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw IndexError(std::string(what) + ": id " + std::to_string(id) + " out of range [0, " +
                       std::to_string(vocab) + ")");
    std::copy_n(tp + static_cast<std::size_t>(id) * e, e, out.ptr() + i * e);
  }
  const auto it = table.id();
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return table.tape().record(std::move(out), {table}, [it, saved = std::move(saved), e](Tape<T>& t, const Tensor<T>& g) {
    T* d = t.grad_slot(it).ptr();
    for (std::size_t i = 0; i < saved.size(); ++i) {
      T* row = d + static_cast<std::size_t>(saved[i]) * e;
      for (std::size_t j = 0; j < e; ++j) row[j] += g[i * e + j];
    }
  });
}

template <class T>
Var<T> sequence_pool(Var<T> x, std::span<const std::int32_t> lengths, PoolMode mode) {
  const Shape& s = x.shape();
  if (s.size() != 3 || lengths.size() != s[0])
    throw ShapeError("sequence_pool: expected [B x L x e] with B lengths, got " + shape_str(s) + " and " +
                     std::to_string(lengths.size()) + " lengths");
  const std::size_t batch = s[0], max_len = s[1], e = s[2];
  for (std::int32_t len : lengths)
    if (len < 0 || static_cast<std::size_t>(len) > max_len)
      throw SchemaError("sequence length " + std::to_string(len) + " exceeds padded length " + std::to_string(max_len));
  Tensor<T> out({batch, e});
  const T* xp = x.value().ptr();
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t len = static_cast<std::size_t>(lengths[b]);
    if (len == 0) continue;
    T* o = out.ptr() + b * e;
    if (mode == PoolMode::kLast) {
      std::copy_n(xp + (b * max_len + len - 1) * e, e, o);
      continue;
    }
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t j = 0; j < e; ++j) o[j] += xp[(b * max_len + l) * e + j];
    const T inv = T(1) / static_cast<T>(len);
    for (std::size_t j = 0; j < e; ++j) o[j] *= inv;
  }
  const auto ix = x.id();
  std::vector<std::int32_t> lens(lengths.begin(), lengths.end());
  return x.tape().record(std::move(out), {x}, [=, lens = std::move(lens)](Tape<T>& t, const Tensor<T>& g) {
    T* d = t.grad_slot(ix).ptr();
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t len = static_cast<std::size_t>(lens[b]);
      if (len == 0) continue;
      const T* gb = g.ptr() + b * e;
      if (mode == PoolMode::kLast) {
        T* row = d + (b * max_len + len - 1) * e;
        for (std::size_t j = 0; j < e; ++j) row[j] += gb[j];
        continue;
      }
      const T inv = T(1) / static_cast<T>(len);
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t j = 0; j < e; ++j) d[(b * max_len + l) * e + j] += gb[j] * inv;
    }
  });
}

template <class T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::size_t n_heads, Tensor<T>* probs_out) {
  const Shape& qs = q.shape();
  const Shape& ks = k.shape();
  const Shape& vs = v.shape();
  if (qs.size() != 3 || ks.size() != 3 || vs.size() != 3 || qs[0] != ks[0] || ks[0] != vs[0] || qs[2] != ks[2] ||
      ks[1] != vs[1])
    throw ShapeError("attention: incompatible q/k/v shapes " + shape_str(qs) + ", " + shape_str(ks) + ", " +
                     shape_str(vs));
  if (n_heads == 0 || qs[2] % n_heads != 0 || vs[2] % n_heads != 0)
    throw ShapeError("attention: widths " + std::to_string(qs[2]) + "/" + std::to_string(vs[2]) +
                     " not divisible by " + std::to_string(n_heads) + " heads");
  const std::size_t batch = qs[0], m = qs[1], n = ks[1], dq = qs[2], dv = vs[2];
  const std::size_t hq = dq / n_heads, hv = dv / n_heads;
  const T scale_factor = T(1) / std::sqrt(static_cast<T>(hq));
  auto probs = std::make_shared<Tensor<T>>(Shape{batch, n_heads, m, n});
  Tensor<T> out({batch, m, dv});
  const T* qp = q.value().ptr();
  const T* kp = k.value().ptr();
  const T* vp = v.value().ptr();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      T* p = probs->ptr() + ((b * n_heads + h) * m) * n;
      for (std::size_t i = 0; i < m; ++i) {
        const T* qi = qp + (b * m + i) * dq + h * hq;
        T* row = p + i * n;
        for (std::size_t j = 0; j < n; ++j) {
          const T* kj = kp + (b * n + j) * dq + h * hq;
          T s = 0;
          for (std::size_t c = 0; c < hq; ++c) s += qi[c] * kj[c];
          row[j] = s * scale_factor;
        }
        const T mx = *std::max_element(row, row + n);
        T z = 0;
        for (std::size_t j = 0; j < n; ++j) z += (row[j] = std::exp(row[j] - mx));
        const T inv = T(1) / z;
        for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
        T* o = out.ptr() + (b * m + i) * dv + h * hv;
        for (std::size_t j = 0; j < n; ++j) {
          const T pj = row[j];
          const T* vj = vp + (b * n + j) * dv + h * hv;
          for (std::size_t c = 0; c < hv; ++c) o[c] += pj * vj[c];
        }
      }
    }
  }
  count_mults(batch * n_heads * m * n * (hq + hv + 2));
  if (probs_out != nullptr) *probs_out = *probs;
  const auto iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape().record(std::move(out), {q, k, v}, [=](Tape<T>& t, const Tensor<T>& g) {
    const T* qp = t.value(iq).ptr();
    const T* kp = t.value(ik).ptr();
    const T* vp = t.value(iv).ptr();
    T* dq_p = t.requires_grad(iq) ? t.grad_slot(iq).ptr() : nullptr;
    T* dk_p = t.requires_grad(ik) ? t.grad_slot(ik).ptr() : nullptr;
    T* dv_p = t.requires_grad(iv) ? t.grad_slot(iv).ptr() : nullptr;
    std::vector<T> dp(n), ds(n);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t h = 0; h < n_heads; ++h) {
        const T* p = probs->ptr() + ((b * n_heads + h) * m) * n;
        for (std::size_t i = 0; i < m; ++i) {
          const T* gi = g.ptr() + (b * m + i) * dv + h * hv;
          const T* row = p + i * n;
          T acc = 0;
          for (std::size_t j = 0; j < n; ++j) {
            const T* vj = vp + (b * n + j) * dv + h * hv;
            T s = 0;
            for (std::size_t c = 0; c < hv; ++c) s += gi[c] * vj[c];
            dp[j] = s;
            acc += s * row[j];
            if (dv_p) {
              T* dvj = dv_p + (b * n + j) * dv + h * hv;
              for (std::size_t c = 0; c < hv; ++c) dvj[c] += row[j] * gi[c];
            }
          }
          for (std::size_t j = 0; j < n; ++j) ds[j] = row[j] * (dp[j] - acc) * scale_factor;
          const T* qi = qp + (b * m + i) * dq + h * hq;
          for (std::size_t j = 0; j < n; ++j) {
            const T* kj = kp + (b * n + j) * dq + h * hq;
            if (dq_p) {
              T* dqi = dq_p + (b * m + i) * dq + h * hq;
              for (std::size_t c = 0; c < hq; ++c) dqi[c] += ds[j] * kj[c];
            }
            if (dk_p) {
              T* dkj = dk_p + (b * n + j) * dq + h * hq;
              for (std::size_t c = 0; c < hq; ++c) dkj[c] += ds[j] * qi[c];
            }
          }
        }
      }
    }
  });
}

template <class T>
Var<T> bce_with_logits(Var<T> logits, std::span<const T> labels) {
  const Tensor<T>& z = logits.value();
  if (z.size() != labels.size())
    throw ShapeError("bce_with_logits: " + std::to_string(z.size()) + " logits vs " + std::to_string(labels.size()) +
                     " labels");
  if (z.size() == 0) throw ShapeError("bce_with_logits: empty batch");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != T(0) && labels[i] != T(1))
      throw DataError("bce_with_logits: label at position " + std::to_string(i) + " is not 0 or 1");
  T total = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const T zi = z[i];
    total += std::max(zi, T(0)) - labels[i] * zi + std::log1p(std::exp(-std::abs(zi)));
  }
  const T inv_n = T(1) / static_cast<T>(z.size());
  std::vector<T> y(labels.begin(), labels.end());
  const auto iz = logits.id();
  return logits.tape().record(Tensor<T>::scalar(total * inv_n), {logits},
                              [iz, inv_n, y = std::move(y)](Tape<T>& t, const Tensor<T>& g) {
                                T* d = t.grad_slot(iz).ptr();
                                const Tensor<T>& z = t.value(iz);
                                for (std::size_t i = 0; i < y.size(); ++i) {
                                  const T zi = z[i];
                                  const T s = zi >= T(0) ? T(1) / (T(1) + std::exp(-zi))
                                                         : std::exp(zi) / (T(1) + std::exp(zi));
                                  d[i] += g[0] * (s - y[i]) * inv_n;
                                }
                              });
}

#define HHFT_INSTANTIATE(T)                                                                      \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                     \
  template Var<T> linear<T>(Var<T>, Var<T>, Var<T>);                                             \
  template Var<T> blockwise_linear<T>(Var<T>, Var<T>, Var<T>);                                   \
  template Var<T> add<T>(Var<T>, Var<T>);                                                        \
  template Var<T> add_bias<T>(Var<T>, Var<T>);                                                   \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                        \
  template Var<T> scale<T>(Var<T>, T);                                                           \
  template Var<T> relu<T>(Var<T>);                                                               \
  template Var<T> sigmoid<T>(Var<T>);                                                            \
  template Var<T> reshape<T>(Var<T>, Shape);                                                     \
  template Var<T> concat<T>(std::span<const Var<T>>, std::size_t);                               \
  template Var<T> slice<T>(Var<T>, std::size_t, std::size_t, std::size_t);                       \
  template Var<T> mean_over_axis<T>(Var<T>, std::size_t);                                        \
  template Var<T> sum<T>(Var<T>);                                                                \
  template Var<T> softmax<T>(Var<T>);                                                            \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                                      \
  template Var<T> embedding_lookup<T>(Var<T>, std::span<const std::int32_t>, std::string_view); \
  template Var<T> sequence_pool<T>(Var<T>, std::span<const std::int32_t>, PoolMode);            \
  template Var<T> attention<T>(Var<T>, Var<T>, Var<T>, std::size_t, Tensor<T>*);                 \
  template Var<T> bce_with_logits<T>(Var<T>, std::span<const T>);

HHFT_INSTANTIATE(float)
HHFT_INSTANTIATE(double)
#undef HHFT_INSTANTIATE

}  // namespace hhft
