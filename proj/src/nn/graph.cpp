#include "plume/nn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "plume/errors.hpp"
#include "plume/soft_perm.hpp"

namespace plume::nn {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

template <class T>
Tensor<T>& Graph<T>::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty() && !val(id).data.empty()) n.grad = Tensor<T>(val(id).shape);
  return n.grad;
}

template <class T>
Var Graph<T>::push(Tensor<T> value, bool requires_grad) {
  Node n;
  n.own = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <class T>
const Tensor<T>& Graph<T>::value(Var v) const {
  return val(v.id);
}

template <class T>
Var Graph<T>::constant(Tensor<T> value) {
  return push(std::move(value), false);
}

template <class T>
Var Graph<T>::constant_ref(const Tensor<T>& value) {
  Node n;
  n.ext = &value;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <class T>
Var Graph<T>::parameter(Parameter<T>& p) {
  return parameter(p, p.grad);
}

template <class T>
Var Graph<T>::parameter(const Parameter<T>& p, Tensor<T>& sink) {
  if (sink.shape != p.value.shape) sink = Tensor<T>(p.value.shape);
  Node n;
  n.ext = &p.value;
  n.sink = &sink;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <class T>
Var Graph<T>::linear(Var x, Var weight, Var bias) {
  const Tensor<T>& xv = val(x.id);
  const Tensor<T>& wv = val(weight.id);
  const Tensor<T>& bv = val(bias.id);
  require(wv.rank() == 2 && bv.size() == wv.shape[0], "linear: weight/bias shape mismatch");
  require(xv.rank() >= 1 && xv.shape.back() == wv.shape[1], "linear: input dim mismatch");
  const std::size_t out = wv.shape[0], in = wv.shape[1];
  const std::size_t m = xv.size() / in;

  // Forward in axpy form against Wᵀ so the inner loop runs over contiguous outputs.
  std::vector<T> wt(in * out);
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i) wt[i * out + o] = wv.data[o * in + i];
  auto shape = xv.shape;
  shape.back() = out;
  Tensor<T> y(shape);
  for (std::size_t r = 0; r < m; ++r) {
    T* yr = y.data.data() + r * out;
    const T* xr = xv.data.data() + r * in;
    std::copy(bv.data.begin(), bv.data.end(), yr);
    for (std::size_t i = 0; i < in; ++i) {
      const T xi = xr[i];
      if (xi == T(0)) continue;
      const T* wrow = wt.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wrow[o];
    }
  }
  const bool rg = requires_grad(x) || requires_grad(weight) || requires_grad(bias);
  Var res = push(std::move(y), rg);
  if (!rg) return res;
  nodes_[res.id].back = [x, weight, bias, m, in, out](Graph& g, std::size_t self) {
    const Tensor<T>& gy = g.nodes_[self].grad;
    const Tensor<T>& xv = g.val(x.id);
    const Tensor<T>& wv = g.val(weight.id);
    if (g.requires_grad(weight)) {
      std::vector<T> gwt(in * out, T(0));
      for (std::size_t r = 0; r < m; ++r) {
        const T* gr = gy.data.data() + r * out;
        const T* xr = xv.data.data() + r * in;
        for (std::size_t i = 0; i < in; ++i) {
          const T xi = xr[i];
          if (xi == T(0)) continue;
          T* dst = gwt.data() + i * out;
          for (std::size_t o = 0; o < out; ++o) dst[o] += xi * gr[o];
        }
      }
      Tensor<T>& gw = g.grad(weight.id);
      for (std::size_t o = 0; o < out; ++o)
        for (std::size_t i = 0; i < in; ++i) gw.data[o * in + i] += gwt[i * out + o];
    }
    if (g.requires_grad(bias)) {
      Tensor<T>& gb = g.grad(bias.id);
      for (std::size_t r = 0; r < m; ++r) {
        const T* gr = gy.data.data() + r * out;
        for (std::size_t o = 0; o < out; ++o) gb.data[o] += gr[o];
      }
    }
    if (g.requires_grad(x)) {
      Tensor<T>& gx = g.grad(x.id);
      for (std::size_t r = 0; r < m; ++r) {
        const T* gr = gy.data.data() + r * out;
        T* dst = gx.data.data() + r * in;
        for (std::size_t o = 0; o < out; ++o) {
          const T go = gr[o];
          if (go == T(0)) continue;
          const T* wrow = wv.data.data() + o * in;
          for (std::size_t i = 0; i < in; ++i) dst[i] += go * wrow[i];
        }
      }
    }
  };
  return res;
}

template <class T>
Var Graph<T>::relu(Var x) {
  Tensor<T> y = val(x.id);
  for (T& v : y.data) v = v > T(0) ? v : T(0);
  Var res = push(std::move(y), requires_grad(x));
  if (!requires_grad(x)) return res;
  nodes_[res.id].back = [x](Graph& g, std::size_t self) {
    const Tensor<T>& gy = g.nodes_[self].grad;
    const Tensor<T>& yv = g.val(self);
    Tensor<T>& gx = g.grad(x.id);
    for (std::size_t k = 0; k < gy.size(); ++k)
      if (yv.data[k] > T(0)) gx.data[k] += gy.data[k];
  };
  return res;
}

template <class T>
Var Graph<T>::tanh(Var x) {
  Tensor<T> y = val(x.id);
  for (T& v : y.data) v = std::tanh(v);
  Var res = push(std::move(y), requires_grad(x));
  if (!requires_grad(x)) return res;
  nodes_[res.id].back = [x](Graph& g, std::size_t self) {
    const Tensor<T>& gy = g.nodes_[self].grad;
    const Tensor<T>& yv = g.val(self);
    Tensor<T>& gx = g.grad(x.id);
    for (std::size_t k = 0; k < gy.size(); ++k)
      gx.data[k] += gy.data[k] * (T(1) - yv.data[k] * yv.data[k]);
  };
  return res;
}

template <class T>
Var Graph<T>::scale(Var x, T s) {
  Tensor<T> y = val(x.id);
  for (T& v : y.data) v *= s;
  Var res = push(std::move(y), requires_grad(x));
  if (!requires_grad(x)) return res;
  nodes_[res.id].back = [x, s](Graph& g, std::size_t self) {
    const Tensor<T>& gy = g.nodes_[self].grad;
    Tensor<T>& gx = g.grad(x.id);
    for (std::size_t k = 0; k < gy.size(); ++k) gx.data[k] += s * gy.data[k];
  };
  return res;
}

template <class T>
Var Graph<T>::add(Var a, Var b) {
  require(val(a.id).shape == val(b.id).shape, "add: shape mismatch");
  Tensor<T> y = val(a.id);
  const Tensor<T>& bv = val(b.id);
  for (std::size_t k = 0; k < y.size(); ++k) y.data[k] += bv.data[k];
  const bool rg = requires_grad(a) || requires_grad(b);
  Var res = push(std::move(y), rg);
  if (!rg) return res;
  nodes_[res.id].back = [a, b](Graph& g, std::size_t self) {
    const Tensor<T>& gy = g.nodes_[self].grad;
    for (Var in : {a, b}) {
      if (!g.requires_grad(in)) continue;
      Tensor<T>& gx = g.grad(in.id);
      for (std::size_t k = 0; k < gy.size(); ++k) gx.data[k] += gy.data[k];
    }
  };
  return res;
}

template <class T>
Var Graph<T>::matmul(Var a, Var b) {
  const Tensor<T>& av = val(a.id);
  const Tensor<T>& bv = val(b.id);
  require(av.rank() == 2 && bv.rank() == 2 && av.shape[1] == bv.shape[0],
          "matmul: inner dimensions differ");
  const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  Tensor<T> y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    T* yr = y.data.data() + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const T aik = av.data[i * k + t];
      if (aik == T(0)) continue;
      const T* br = bv.data.data() + t * n;
      for (std::size_t j = 0; j < n; ++j) yr[j] += aik * br[j];
    }
  }
  const bool rg = requires_grad(a) || requires_grad(b);
  Var res = push(std::move(y), rg);
  if (!rg) return res;
  nodes_[res.id].back = [a, b, m, k, n](Graph& g, std::size_t self) {
    const Tensor<T>& gy = g.nodes_[self].grad;
    const Tensor<T>& av = g.val(a.id);
    const Tensor<T>& bv = g.val(b.id);
    if (g.requires_grad(a)) {
      Tensor<T>& ga = g.grad(a.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t < k; ++t) {
          T s = 0;
          for (std::size_t j = 0; j < n; ++j) s += gy.data[i * n + j] * bv.data[t * n + j];
          ga.data[i * k + t] += s;
        }
    }
    if (g.requires_grad(b)) {
      Tensor<T>& gb = g.grad(b.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t < k; ++t) {
          const T aik = av.data[i * k + t];
          if (aik == T(0)) continue;
          T* dst = gb.data.data() + t * n;
          const T* src = gy.data.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) dst[j] += aik * src[j];
        }
    }
  };
  return res;
}

template <class T>
Var Graph<T>::gram(Var y) {
  const Tensor<T>& yv = val(y.id);
  require(yv.rank() == 2, "gram: expected a matrix");
  const std::size_t n = yv.shape[0], d = yv.shape[1];
  Tensor<T> out({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      T s = 0;
      for (std::size_t c = 0; c < d; ++c) s += yv.data[i * d + c] * yv.data[j * d + c];
      out.data[i * n + j] = s;
      out.data[j * n + i] = s;
    }
  Var res = push(std::move(out), requires_grad(y));
  if (!requires_grad(y)) return res;
  nodes_[res.id].back = [y, n, d](Graph& g, std::size_t self) {
    const Tensor<T>& gy = g.nodes_[self].grad;
    const Tensor<T>& yv = g.val(y.id);
    Tensor<T>& gx = g.grad(y.id);
    for (std::size_t i = 0; i < n; ++i) {
      T* dst = gx.data.data() + i * d;
      for (std::size_t j = 0; j < n; ++j) {
        const T w = gy.data[i * n + j] + gy.data[j * n + i];
        const T* src = yv.data.data() + j * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] += w * src[c];
      }
    }
  };
  return res;
}

template <class T>
Var Graph<T>::concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t n = val(parts[0].id).rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    const Tensor<T>& pv = val(p.id);
    require(pv.rank() == 2 && pv.shape[0] == n, "concat_cols: row counts differ");
    widths.push_back(pv.shape[1]);
    total += pv.shape[1];
    rg = rg || requires_grad(p);
  }
  Tensor<T> y({n, total});
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor<T>& pv = val(parts[p].id);
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(pv.data.data() + i * widths[p], widths[p], y.data.data() + i * total + off);
    off += widths[p];
  }
  Var res = push(std::move(y), rg);
  if (!rg) return res;
  std::vector<Var> ins(parts.begin(), parts.end());
  nodes_[res.id].back = [ins, widths, n, total](Graph& g, std::size_t self) {
    const Tensor<T>& gy = g.nodes_[self].grad;
    std::size_t off = 0;
    for (std::size_t p = 0; p < ins.size(); ++p) {
      if (g.requires_grad(ins[p])) {
        Tensor<T>& gx = g.grad(ins[p].id);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < widths[p]; ++c)
            gx.data[i * widths[p] + c] += gy.data[i * total + off + c];
      }
      off += widths[p];
    }
  };
  return res;
}

template <class T>
Var Graph<T>::row_pool(Var e) {
  const Tensor<T>& ev = val(e.id);
  require(ev.rank() == 3 && ev.shape[0] == ev.shape[1], "row_pool: expected [n, n, d]");
  const std::size_t n = ev.shape[0], d = ev.shape[2];
  Tensor<T> y({n, 3 * d});
  std::vector<std::uint32_t> argmax(n * d, 0);
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    T* sum = y.data.data() + i * 3 * d;
    T* mean = sum + d;
    T* mx = sum + 2 * d;
    std::uint32_t* am = argmax.data() + i * d;
    const T* first = ev.data.data() + (i * n) * d;
    std::copy_n(first, d, sum);
    std::copy_n(first, d, mx);
    for (std::size_t j = 1; j < n; ++j) {
      const T* src = ev.data.data() + (i * n + j) * d;
      for (std::size_t c = 0; c < d; ++c) {
        sum[c] += src[c];
        if (src[c] > mx[c]) {
          mx[c] = src[c];
          am[c] = static_cast<std::uint32_t>(j);
        }
      }
    }
    for (std::size_t c = 0; c < d; ++c) mean[c] = sum[c] / static_cast<T>(n);
  }
  Var res = push(std::move(y), requires_grad(e));
  if (!requires_grad(e)) return res;
  nodes_[res.id].saved_index = std::move(argmax);
  nodes_[res.id].back = [e, n, d, inv_n](Graph& g, std::size_t self) {
    const Tensor<T>& gy = g.nodes_[self].grad;
    const auto& am = g.nodes_[self].saved_index;
    Tensor<T>& ge = g.grad(e.id);
    std::vector<T> spread(d);
    for (std::size_t i = 0; i < n; ++i) {
      const T* gs = gy.data.data() + i * 3 * d;
      const T* gm = gs + d;
      const T* gx = gs + 2 * d;
      for (std::size_t c = 0; c < d; ++c) spread[c] = gs[c] + gm[c] * inv_n;
      for (std::size_t j = 0; j < n; ++j) {
        T* dst = ge.data.data() + (i * n + j) * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] += spread[c];
      }
      for (std::size_t c = 0; c < d; ++c) ge.data[(i * n + am[i * d + c]) * d + c] += gx[c];
    }
  };
  return res;
}

template <class T>
Var Graph<T>::row_normalize(Var m, T eps) {
  const Tensor<T>& mv = val(m.id);
  require(mv.rank() == 2, "row_normalize: expected a matrix");
  const std::size_t r = mv.shape[0], c = mv.shape[1];
  Tensor<T> y({r, c});
  std::vector<T> denom(r);
  for (std::size_t i = 0; i < r; ++i) {
    T s = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const T v = mv.data[i * c + j];
      if (v < T(0)) throw DomainError("row_normalize: negative entry");
      s += v;
    }
    denom[i] = s + eps;
    // An all-zero row stays zero; with eps = 0 that would otherwise be 0/0.
    if (s == T(0)) continue;
    for (std::size_t j = 0; j < c; ++j) y.data[i * c + j] = mv.data[i * c + j] / denom[i];
  }
  Var res = push(std::move(y), requires_grad(m));
  if (!requires_grad(m)) return res;
  nodes_[res.id].saved = std::move(denom);
  nodes_[res.id].back = [m, r, c](Graph& g, std::size_t self) {
    const Tensor<T>& gy = g.nodes_[self].grad;
    const Tensor<T>& yv = g.val(self);
    const auto& denom = g.nodes_[self].saved;
    Tensor<T>& gm = g.grad(m.id);
    for (std::size_t i = 0; i < r; ++i) {
      T dot = 0;
      for (std::size_t j = 0; j < c; ++j) dot += gy.data[i * c + j] * yv.data[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        gm.data[i * c + j] += (gy.data[i * c + j] - dot) / denom[i];
    }
  };
  return res;
}

template <class T>
Var Graph<T>::sinkhorn(Var logm, int iters) {
  const Tensor<T>& lv = val(logm.id);
  require(lv.rank() == 2 && lv.shape[0] == lv.shape[1], "sinkhorn: expected a square matrix");
  if (iters < 1) throw DomainError("sinkhorn: iters must be at least 1");
  for (T v : lv.data)
    if (!std::isfinite(v)) throw DomainError("sinkhorn: non-finite logits");
  const std::size_t n = lv.shape[0];
  const bool rg = requires_grad(logm);
  Tensor<T> y = lv;
  std::vector<T> trace;
  plume::detail::sinkhorn_log_forward<T>(y.data, n, iters, rg ? &trace : nullptr);
  for (T& v : y.data) v = std::exp(v);
  Var res = push(std::move(y), rg);
  if (!rg) return res;
  nodes_[res.id].saved = std::move(trace);
  nodes_[res.id].back = [logm, n, iters](Graph& g, std::size_t self) {
    const Tensor<T>& gy = g.nodes_[self].grad;
    const Tensor<T>& yv = g.val(self);
    std::vector<T> gl(n * n);
    for (std::size_t k = 0; k < gl.size(); ++k) gl[k] = gy.data[k] * yv.data[k];
    plume::detail::sinkhorn_log_backward<T>(gl, n, iters, g.nodes_[self].saved);
    Tensor<T>& gx = g.grad(logm.id);
    for (std::size_t k = 0; k < gl.size(); ++k) gx.data[k] += gl[k];
  };
  return res;
}

template <class T>
Var Graph<T>::qap_bilinear(Var t, Var f, Var d) {
  const Tensor<T>& tv = val(t.id);
  const Tensor<T>& fv = val(f.id);
  const Tensor<T>& dv = val(d.id);
  require(tv.rank() == 2 && tv.shape[0] == tv.shape[1], "qap_bilinear: t must be square");
  require(fv.shape == tv.shape && dv.shape == tv.shape, "qap_bilinear: shape mismatch");
  const std::size_t n = tv.shape[0];
  // a = t f ; loss = Σ_ij d_ij Σ_k a_ik t_jk
  std::vector<T> a(n * n, T(0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const T tik = tv.data[i * n + k];
      const T* fr = fv.data.data() + k * n;
      T* ar = a.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) ar[j] += tik * fr[j];
    }
  T loss = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const T dij = dv.data[i * n + j];
      if (dij == T(0)) continue;
      T s = 0;
      for (std::size_t k = 0; k < n; ++k) s += a[i * n + k] * tv.data[j * n + k];
      loss += dij * s;
    }
  Var res = push(Tensor<T>({1}, std::vector<T>{loss}), requires_grad(t));
  if (!requires_grad(t)) return res;
  nodes_[res.id].back = [t, f, d, n](Graph& g, std::size_t self) {
    const T gl = g.nodes_[self].grad.data[0];
    const Tensor<T>& tv = g.val(t.id);
    const Tensor<T>& fv = g.val(f.id);
    const Tensor<T>& dv = g.val(d.id);
    // d/dt = d t fᵀ + dᵀ t f
    std::vector<T> tf(n * n, T(0)), tft(n * n, T(0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) {
        const T tik = tv.data[i * n + k];
        for (std::size_t j = 0; j < n; ++j) {
          tf[i * n + j] += tik * fv.data[k * n + j];
          tft[i * n + j] += tik * fv.data[j * n + k];
        }
      }
    Tensor<T>& gt = g.grad(t.id);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const T dij = dv.data[i * n + j];
        const T dji = dv.data[j * n + i];
        if (dij == T(0) && dji == T(0)) continue;
        T* dst = gt.data.data() + i * n;
        const T* r1 = tft.data() + j * n;
        const T* r2 = tf.data() + j * n;
        for (std::size_t c = 0; c < n; ++c) dst[c] += gl * (dij * r1[c] + dji * r2[c]);
      }
  };
  return res;
}

template <class T>
Var Graph<T>::sum(Var x) {
  T s = 0;
  for (T v : val(x.id).data) s += v;
  Var res = push(Tensor<T>({1}, std::vector<T>{s}), requires_grad(x));
  if (!requires_grad(x)) return res;
  nodes_[res.id].back = [x](Graph& g, std::size_t self) {
    const T gy = g.nodes_[self].grad.data[0];
    Tensor<T>& gx = g.grad(x.id);
    for (T& v : gx.data) v += gy;
  };
  return res;
}

template <class T>
void Graph<T>::backward(Var loss) {
  if (loss.id >= nodes_.size()) throw ContractError("backward: unknown node");
  if (val(loss.id).size() != 1)
    throw ContractError("backward: loss must be a scalar, got " +
                        std::to_string(val(loss.id).size()) + " elements");
  if (!requires_grad(loss)) return;
  grad(loss.id).data[0] = T(1);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.data.empty()) continue;
    if (n.back) n.back(*this, id);
    if (n.sink) {
      for (std::size_t k = 0; k < n.grad.size(); ++k) n.sink->data[k] += n.grad.data[k];
    }
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace plume::nn
