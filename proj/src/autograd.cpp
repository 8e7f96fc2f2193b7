#include "finecount/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "finecount/errors.hpp"

namespace finecount::ad {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using CMatMap = Eigen::Map<const RowMat>;

// ---- Graph -----------------------------------------------------------------

Var Graph::push(Tensor value, bool requires_grad, Parameter* param, BackwardFn fn) {
  nodes_.push_back(Node{std::move(value), Tensor(), requires_grad, param, std::move(fn)});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  bool rg = false;
  for (const auto& v : inputs) {
    if (v.graph() != this) throw DataError("op mixes nodes from different graphs");
    rg = rg || nodes_[v.id()].requires_grad;
  }
  return push(std::move(value), rg, nullptr, rg ? std::move(backward) : BackwardFn{});
}

Tensor Graph::grad(Var v) const {
  const auto& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value.channels(), n.value.height(), n.value.width());
  return n.grad;
}

Tensor& Graph::accum(int id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.channels(), n.value.height(), n.value.width());
  return n.grad;
}

void Graph::backward(Var output) {
  if (value(output).size() != 1) throw DataError("backward() expects a scalar output");
  for (auto& n : nodes_) n.grad = Tensor();
  accum(output.id())[0] = 1.0;
  for (int id = output.id(); id >= 0; --id) {
    auto& n = nodes_[id];
    if (n.grad.empty() || !n.requires_grad) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param) {
      if (n.param->grad.empty()) n.param->grad = Tensor(n.value.channels(), n.value.height(), n.value.width());
      auto dst = n.param->grad.data();
      auto src = n.grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  }
}

// ---- convolution -------------------------------------------------------------

namespace {

constexpr std::size_t kIm2ColBudget = std::size_t{1} << 22;  // doubles per column chunk

int rows_per_chunk(int cin, int k, int width) {
  std::size_t per_row = static_cast<std::size_t>(cin) * k * k * width;
  return static_cast<int>(std::max<std::size_t>(1, kIm2ColBudget / std::max<std::size_t>(1, per_row)));
}

void im2col(const Tensor& x, int k, int y0, int y1, RowMat& cols) {
  int cin = x.channels(), h = x.height(), w = x.width(), pad = k / 2;
  int n = (y1 - y0) * w;
  cols.resize(static_cast<Eigen::Index>(cin) * k * k, n);
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        double* row = cols.row((c * k + ky) * k + kx).data();
        for (int y = y0; y < y1; ++y) {
          double* dst = row + static_cast<std::size_t>(y - y0) * w;
          int sy = y + ky - pad;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          for (int xo = 0; xo < w; ++xo) {
            int sx = xo + kx - pad;
            dst[xo] = (sx < 0 || sx >= w) ? 0.0 : x(c, sy, sx);
          }
        }
      }
}

void col2im_add(const RowMat& cols, int k, int y0, int y1, Tensor& dx) {
  int cin = dx.channels(), h = dx.height(), w = dx.width(), pad = k / 2;
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const double* row = cols.row((c * k + ky) * k + kx).data();
        for (int y = y0; y < y1; ++y) {
          int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const double* src = row + static_cast<std::size_t>(y - y0) * w;
          for (int xo = 0; xo < w; ++xo) {
            int sx = xo + kx - pad;
            if (sx >= 0 && sx < w) dx(c, sy, sx) += src[xo];
          }
        }
      }
}

}  // namespace

Var conv2d(Var x, Var weight, Var bias, int kernel) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  int cin = xv.channels(), h = xv.height(), w = xv.width();
  int cout = wv.channels();
  if (wv.height() != cin || wv.width() != kernel * kernel || bv.channels() != cout)
    throw DataError("conv2d: weight shape does not match input channels");
  Tensor out(cout, h, w);
  CMatMap wm(wv.data().data(), cout, static_cast<Eigen::Index>(cin) * kernel * kernel);
  int chunk = rows_per_chunk(cin, kernel, w);
  RowMat cols;
  for (int y0 = 0; y0 < h; y0 += chunk) {
    int y1 = std::min(h, y0 + chunk);
    im2col(xv, kernel, y0, y1, cols);
    RowMat prod = wm * cols;
    for (int o = 0; o < cout; ++o) {
      double* dst = out.channel(o).data() + static_cast<std::size_t>(y0) * w;
      const double* src = prod.row(o).data();
      for (Eigen::Index i = 0; i < prod.cols(); ++i) dst[i] = src[i] + bv[o];
    }
  }
  int xi = x.id(), wi = weight.id(), bi = bias.id();
  return x.graph()->record(std::move(out), {x, weight, bias}, [xi, wi, bi, kernel](Graph& g, int self) {
    const Tensor& xv = g.value(xi);
    const Tensor& wv = g.value(wi);
    const Tensor& go = g.out_grad(self);
    int cin = xv.channels(), h = xv.height(), w = xv.width(), cout = wv.channels();
    Eigen::Index kk = static_cast<Eigen::Index>(cin) * kernel * kernel;
    CMatMap wm(wv.data().data(), cout, kk);
    bool need_x = g.requires_grad(xi), need_w = g.requires_grad(wi), need_b = g.requires_grad(bi);
    if (need_b) {
      Tensor& db = g.accum(bi);
      for (int o = 0; o < cout; ++o) db[o] += go.channel_sum(o);
    }
    if (!need_x && !need_w) return;
    RowMat dwacc = RowMat::Zero(cout, kk);
    Tensor* dx = need_x ? &g.accum(xi) : nullptr;
    int chunk = rows_per_chunk(cin, kernel, w);
    RowMat cols;
    RowMat gchunk;
    for (int y0 = 0; y0 < h; y0 += chunk) {
      int y1 = std::min(h, y0 + chunk);
      Eigen::Index n = static_cast<Eigen::Index>(y1 - y0) * w;
      gchunk.resize(cout, n);
      for (int o = 0; o < cout; ++o)
        std::copy_n(go.channel(o).data() + static_cast<std::size_t>(y0) * w, n, gchunk.row(o).data());
      if (need_w) {
        im2col(xv, kernel, y0, y1, cols);
        dwacc.noalias() += gchunk * cols.transpose();
      }
      if (need_x) {
        RowMat dcols = wm.transpose() * gchunk;
        col2im_add(dcols, kernel, y0, y1, *dx);
      }
    }
    if (need_w) {
      Tensor& dw = g.accum(wi);
      MatMap(dw.data().data(), cout, kk) += dwacc;
    }
  });
}

// ---- pointwise and structural ops ------------------------------------------

Var leaky_relu(Var x, double slope) {
  Tensor out = x.value();
  for (auto& v : out.data())
    if (v < 0) v *= slope;
  int xi = x.id();
  return x.graph()->record(std::move(out), {x}, [xi, slope](Graph& g, int self) {
    const Tensor& xv = g.value(xi);
    const Tensor& go = g.out_grad(self);
    Tensor& dx = g.accum(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += xv[i] < 0 ? slope * go[i] : go[i];
  });
}

Var max_pool2(Var x) {
  const Tensor& xv = x.value();
  if (xv.height() % 2 || xv.width() % 2) throw DataError("max_pool2 expects even spatial dims");
  int oh = xv.height() / 2, ow = xv.width() / 2;
  Tensor out(xv.channels(), oh, ow);
  std::vector<std::size_t> argmax(out.size());
  std::size_t idx = 0;
  for (int c = 0; c < xv.channels(); ++c)
    for (int y = 0; y < oh; ++y)
      for (int xo = 0; xo < ow; ++xo, ++idx) {
        double best = -INFINITY;
        std::size_t arg = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            std::size_t flat = (static_cast<std::size_t>(c) * xv.height() + 2 * y + dy) * xv.width() + 2 * xo + dx;
            if (xv[flat] > best) {
              best = xv[flat];
              arg = flat;
            }
          }
        out[idx] = best;
        argmax[idx] = arg;
      }
  int xi = x.id();
  return x.graph()->record(std::move(out), {x}, [xi, argmax = std::move(argmax)](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    Tensor& dx = g.accum(xi);
    for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += go[i];
  });
}

Var avg_pool2(Var x) {
  const Tensor& xv = x.value();
  int h = xv.height(), w = xv.width();
  int oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor out(xv.channels(), oh, ow);
  for (int c = 0; c < xv.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int xo = 0; xo < w; ++xo) out(c, y / 2, xo / 2) += 0.25 * xv(c, y, xo);
  int xi = x.id();
  return x.graph()->record(std::move(out), {x}, [xi](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    Tensor& dx = g.accum(xi);
    for (int c = 0; c < dx.channels(); ++c)
      for (int y = 0; y < dx.height(); ++y)
        for (int xo = 0; xo < dx.width(); ++xo) dx(c, y, xo) += 0.25 * go(c, y / 2, xo / 2);
  });
}

Var upsample_nearest(Var x, int height, int width) {
  const Tensor& xv = x.value();
  if ((height + 1) / 2 != xv.height() || (width + 1) / 2 != xv.width())
    throw DataError("upsample_nearest: target size incompatible with input");
  Tensor out(xv.channels(), height, width);
  for (int c = 0; c < xv.channels(); ++c)
    for (int y = 0; y < height; ++y)
      for (int xo = 0; xo < width; ++xo) out(c, y, xo) = xv(c, y / 2, xo / 2);
  int xi = x.id();
  return x.graph()->record(std::move(out), {x}, [xi](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    Tensor& dx = g.accum(xi);
    for (int c = 0; c < go.channels(); ++c)
      for (int y = 0; y < go.height(); ++y)
        for (int xo = 0; xo < go.width(); ++xo) dx(c, y / 2, xo / 2) += go(c, y, xo);
  });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw DataError("concat of nothing");
  std::vector<Tensor> vals;
  std::vector<int> ids;
  for (const auto& p : parts) {
    if (!p.value().same_plane(parts[0].value())) throw DataError("concat: spatial misalignment");
    vals.push_back(p.value());
    ids.push_back(p.id());
  }
  Tensor out = stack_channels(vals);
  return parts[0].graph()->record(std::move(out), parts, [ids](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    std::size_t off = 0;
    for (int id : ids) {
      std::size_t n = g.value(id).size();
      if (g.requires_grad(id)) {
        Tensor& d = g.accum(id);
        for (std::size_t i = 0; i < n; ++i) d[i] += go[off + i];
      }
      off += n;
    }
  });
}

Var slice_channels(Var x, int first, int count) {
  Tensor out = x.value().slice_channels(first, count);
  int xi = x.id();
  return x.graph()->record(std::move(out), {x}, [xi, first](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    Tensor& dx = g.accum(xi);
    std::size_t off = first * dx.plane();
    for (std::size_t i = 0; i < go.size(); ++i) dx[off + i] += go[i];
  });
}

Var add(Var a, Var b) {
  if (!a.value().same_shape(b.value())) throw DataError("add: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  int ai = a.id(), bi = b.id();
  return a.graph()->record(std::move(out), {a, b}, [ai, bi](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    for (int id : {ai, bi}) {
      if (!g.requires_grad(id)) continue;
      Tensor& d = g.accum(id);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += go[i];
    }
  });
}

Var affine(Var x, double a, double b) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = a * v + b;
  int xi = x.id();
  return x.graph()->record(std::move(out), {x}, [xi, a](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    Tensor& dx = g.accum(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += a * go[i];
  });
}

Var mul_broadcast(Var x, Var m) {
  const Tensor& xv = x.value();
  const Tensor& mv = m.value();
  if (mv.channels() != 1 || !xv.same_plane(mv)) throw DataError("mul_broadcast: attention map misaligned");
  Tensor out(xv.channels(), xv.height(), xv.width());
  std::size_t n = xv.plane();
  for (int c = 0; c < xv.channels(); ++c)
    for (std::size_t i = 0; i < n; ++i) out.channel(c)[i] = xv.channel(c)[i] * mv[i];
  int xi = x.id(), mi = m.id();
  return x.graph()->record(std::move(out), {x, m}, [xi, mi](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    const Tensor& xv = g.value(xi);
    const Tensor& mv = g.value(mi);
    std::size_t n = xv.plane();
    if (g.requires_grad(xi)) {
      Tensor& dx = g.accum(xi);
      for (int c = 0; c < xv.channels(); ++c)
        for (std::size_t i = 0; i < n; ++i) dx.channel(c)[i] += go.channel(c)[i] * mv[i];
    }
    if (g.requires_grad(mi)) {
      Tensor& dm = g.accum(mi);
      for (int c = 0; c < xv.channels(); ++c)
        for (std::size_t i = 0; i < n; ++i) dm[i] += go.channel(c)[i] * xv.channel(c)[i];
    }
  });
}

Var scale_by(Var x, const Tensor& mask) {
  const Tensor& xv = x.value();
  if (mask.channels() != 1 || !xv.same_plane(mask)) throw DataError("scale_by: mask misaligned");
  Tensor out = xv;
  std::size_t n = xv.plane();
  for (int c = 0; c < xv.channels(); ++c)
    for (std::size_t i = 0; i < n; ++i) out.channel(c)[i] *= mask[i];
  int xi = x.id();
  return x.graph()->record(std::move(out), {x}, [xi, mask](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    Tensor& dx = g.accum(xi);
    std::size_t n = dx.plane();
    for (int c = 0; c < dx.channels(); ++c)
      for (std::size_t i = 0; i < n; ++i) dx.channel(c)[i] += go.channel(c)[i] * mask[i];
  });
}

Var softmax_channels(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.channels(), xv.height(), xv.width());
  std::size_t n = xv.plane();
  int c = xv.channels();
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (int j = 0; j < c; ++j) mx = std::max(mx, xv.channel(j)[i]);
    double z = 0;
    for (int j = 0; j < c; ++j) z += (out.channel(j)[i] = std::exp(xv.channel(j)[i] - mx));
    for (int j = 0; j < c; ++j) out.channel(j)[i] /= z;
  }
  int xi = x.id();
  return x.graph()->record(std::move(out), {x}, [xi](Graph& g, int self) {
    const Tensor& s = g.value(self);
    const Tensor& go = g.out_grad(self);
    Tensor& dx = g.accum(xi);
    std::size_t n = s.plane();
    int c = s.channels();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0;
      for (int j = 0; j < c; ++j) dot += go.channel(j)[i] * s.channel(j)[i];
      for (int j = 0; j < c; ++j) dx.channel(j)[i] += s.channel(j)[i] * (go.channel(j)[i] - dot);
    }
  });
}

Var sum_channels(Var x) {
  const Tensor& xv = x.value();
  Tensor out(1, xv.height(), xv.width());
  for (int c = 0; c < xv.channels(); ++c)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += xv.channel(c)[i];
  int xi = x.id();
  return x.graph()->record(std::move(out), {x}, [xi](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    Tensor& dx = g.accum(xi);
    for (int c = 0; c < dx.channels(); ++c)
      for (std::size_t i = 0; i < go.size(); ++i) dx.channel(c)[i] += go[i];
  });
}

Var detach(Var x) { return x.graph()->constant(x.value()); }

// ---- losses ----------------------------------------------------------------

Var squared_error(Var pred, const Tensor& target) {
  const Tensor& p = pred.value();
  if (!p.same_shape(target)) throw DataError("squared_error: prediction and target misaligned");
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double d = p[i] - target[i];
    s += d * d;
  }
  int pi = pred.id();
  return pred.graph()->record(Tensor(1, 1, 1, s), {pred}, [pi, target](Graph& g, int self) {
    double go = g.out_grad(self)[0];
    const Tensor& p = g.value(pi);
    Tensor& dp = g.accum(pi);
    for (std::size_t i = 0; i < p.size(); ++i) dp[i] += 2.0 * (p[i] - target[i]) * go;
  });
}

Var soft_cross_entropy(Var pred, const Tensor& target, double floor) {
  const Tensor& p = pred.value();
  if (!p.same_shape(target)) throw DataError("soft_cross_entropy: prediction and target misaligned");
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (target[i] != 0) s -= target[i] * std::log(std::max(p[i], floor));
  int pi = pred.id();
  return pred.graph()->record(Tensor(1, 1, 1, s), {pred}, [pi, target, floor](Graph& g, int self) {
    double go = g.out_grad(self)[0];
    const Tensor& p = g.value(pi);
    Tensor& dp = g.accum(pi);
    for (std::size_t i = 0; i < p.size(); ++i)
      if (target[i] != 0 && p[i] > floor) dp[i] -= go * target[i] / p[i];
  });
}

Var weighted_sum(const std::vector<std::pair<Var, double>>& terms) {
  if (terms.empty()) throw DataError("weighted_sum of nothing");
  double s = 0;
  std::vector<Var> vars;
  std::vector<std::pair<int, double>> ids;
  for (const auto& [v, wgt] : terms) {
    s += wgt * v.value()[0];
    vars.push_back(v);
    ids.emplace_back(v.id(), wgt);
  }
  return terms[0].first.graph()->record(Tensor(1, 1, 1, s), vars, [ids](Graph& g, int self) {
    double go = g.out_grad(self)[0];
    for (auto [id, wgt] : ids)
      if (g.requires_grad(id)) g.accum(id)[0] += wgt * go;
  });
}

// ---- graph propagation -----------------------------------------------------

namespace {

constexpr double kNormFloor = 1e-8;

struct Window {
  int y0, y1, x0, x1;
};

Window window_at(int y, int x, int r, int h, int w) {
  return {std::max(0, y - r), std::min(h - 1, y + r), std::max(0, x - r), std::min(w - 1, x + r)};
}

}  // namespace

Var local_cosine_aggregate(Var h, int radius) {
  const Tensor& hv = h.value();
  int c = hv.channels(), ht = hv.height(), wd = hv.width();
  std::size_t n = hv.plane();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = kNormFloor;
    for (int ch = 0; ch < c; ++ch) s += hv.channel(ch)[i] * hv.channel(ch)[i];
    norms[i] = std::sqrt(s);
  }
  auto cosine = [&](std::size_t p, std::size_t q) {
    double d = 0;
    for (int ch = 0; ch < c; ++ch) d += hv.channel(ch)[p] * hv.channel(ch)[q];
    return d / (norms[p] * norms[q]);
  };
  Tensor out(c, ht, wd);
  for (int y = 0; y < ht; ++y)
    for (int x = 0; x < wd; ++x) {
      std::size_t p = static_cast<std::size_t>(y) * wd + x;
      Window win = window_at(y, x, radius, ht, wd);
      double total = 0;
      for (int qy = win.y0; qy <= win.y1; ++qy)
        for (int qx = win.x0; qx <= win.x1; ++qx) total += 0.5 * (1 + cosine(p, static_cast<std::size_t>(qy) * wd + qx));
      for (int qy = win.y0; qy <= win.y1; ++qy)
        for (int qx = win.x0; qx <= win.x1; ++qx) {
          std::size_t q = static_cast<std::size_t>(qy) * wd + qx;
          double a = 0.5 * (1 + cosine(p, q)) / total;
          for (int ch = 0; ch < c; ++ch) out.channel(ch)[p] += a * hv.channel(ch)[q];
        }
    }
  int hi = h.id();
  return h.graph()->record(std::move(out), {h}, [hi, radius](Graph& g, int self) {
    const Tensor& hv = g.value(hi);
    const Tensor& go = g.out_grad(self);
    Tensor& dh = g.accum(hi);
    int c = hv.channels(), ht = hv.height(), wd = hv.width();
    std::size_t n = hv.plane();
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = kNormFloor;
      for (int ch = 0; ch < c; ++ch) s += hv.channel(ch)[i] * hv.channel(ch)[i];
      norms[i] = std::sqrt(s);
    }
    auto dot = [&](const Tensor& a, std::size_t p, const Tensor& b, std::size_t q) {
      double d = 0;
      for (int ch = 0; ch < c; ++ch) d += a.channel(ch)[p] * b.channel(ch)[q];
      return d;
    };
    std::vector<std::size_t> qs;
    std::vector<double> cs, as, das;
    for (int y = 0; y < ht; ++y)
      for (int x = 0; x < wd; ++x) {
        std::size_t p = static_cast<std::size_t>(y) * wd + x;
        Window win = window_at(y, x, radius, ht, wd);
        qs.clear();
        cs.clear();
        for (int qy = win.y0; qy <= win.y1; ++qy)
          for (int qx = win.x0; qx <= win.x1; ++qx) {
            std::size_t q = static_cast<std::size_t>(qy) * wd + qx;
            qs.push_back(q);
            cs.push_back(dot(hv, p, hv, q) / (norms[p] * norms[q]));
          }
        double total = 0;
        for (double cv : cs) total += 0.5 * (1 + cv);
        as.resize(qs.size());
        das.resize(qs.size());
        double mean_da = 0;
        for (std::size_t t = 0; t < qs.size(); ++t) {
          as[t] = 0.5 * (1 + cs[t]) / total;
          das[t] = dot(go, p, hv, qs[t]);
          mean_da += as[t] * das[t];
        }
        for (std::size_t t = 0; t < qs.size(); ++t) {
          std::size_t q = qs[t];
          for (int ch = 0; ch < c; ++ch) dh.channel(ch)[q] += as[t] * go.channel(ch)[p];
          // dL/dcos_pq through the normalized weight a_pq = w_pq / total, w = (1 + cos) / 2.
          double dcos = 0.5 * (das[t] - mean_da) / total;
          if (dcos == 0) continue;
          double inv = 1.0 / (norms[p] * norms[q]);
          for (int ch = 0; ch < c; ++ch) {
            double fp = hv.channel(ch)[p], fq = hv.channel(ch)[q];
            dh.channel(ch)[p] += dcos * (fq * inv - cs[t] * fp / (norms[p] * norms[p]));
            dh.channel(ch)[q] += dcos * (fp * inv - cs[t] * fq / (norms[q] * norms[q]));
          }
        }
      }
  });
}

}  // namespace finecount::ad
