#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <string>

namespace bci::nn {

int64_t numel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) fail_usage("tensor shape dimensions must be positive");
    n *= d;
  }
  return n;
}

namespace {

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      fail_numeric(std::string(op) + " produced non-finite output");
    }
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// Friend of Graph and Tensor; the single place ops go through to append nodes.
// A backprop closure receives the graph and its own node id so it can read the
// output gradient and scatter into its parents' buffers.
class OpBuilder {
 public:
  using Backprop = std::function<void(Graph&, int self)>;

  static Tensor make(Graph& g, const char* op, Shape shape, std::vector<double> value,
                     bool requires_grad, Backprop backprop) {
    if (numel(shape) != static_cast<int64_t>(value.size())) {
      fail_usage(std::string(op) + ": value length does not match shape");
    }
    check_finite(op, value);
    Graph::Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = op;
    g.nodes_.push_back(std::move(n));
    const int id = static_cast<int>(g.nodes_.size()) - 1;
    if (requires_grad && backprop) {
      g.nodes_.back().backprop = [id, f = std::move(backprop)](Graph& gg) { f(gg, id); };
    }
    return Tensor(&g, id);
  }

  static Graph& graph(const Tensor& t) {
    if (!t.valid()) fail_usage("operation on an empty tensor handle");
    return *t.graph_;
  }

  static int id(const Tensor& t) { return t.id_; }

  static Graph& same_graph(std::initializer_list<const Tensor*> ts) {
    Graph* g = nullptr;
    for (const Tensor* t : ts) {
      if (!t->valid()) fail_usage("operation on an empty tensor handle");
      if (g == nullptr) g = t->graph_;
      if (t->graph_ != g) fail_usage("operands belong to different graphs");
    }
    return *g;
  }

  static std::vector<double>& grad(Graph& g, int id) { return g.grad_buffer(id); }
  static const std::vector<double>& value(const Graph& g, int id) { return g.node(id).value; }
  static bool needs_grad(const Graph& g, int id) { return g.node(id).requires_grad; }
};

using Backprop = OpBuilder::Backprop;

// ---- Tensor ----------------------------------------------------------------

const Shape& Tensor::shape() const { return OpBuilder::graph(*this).node(id_).shape; }

const std::vector<double>& Tensor::value() const {
  return OpBuilder::graph(*this).node(id_).value;
}

const std::vector<double>& Tensor::grad() const {
  return OpBuilder::graph(*this).grad_buffer(id_);
}

bool Tensor::requires_grad() const { return OpBuilder::graph(*this).node(id_).requires_grad; }

// ---- Graph -----------------------------------------------------------------

std::vector<double>& Graph::grad_buffer(int id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Tensor Graph::constant(Shape shape, std::vector<double> value) {
  return OpBuilder::make(*this, "constant", std::move(shape), std::move(value), false, {});
}

Tensor Graph::scalar_constant(double v) { return constant({1}, {v}); }

Tensor Graph::leaf(Shape shape, std::vector<double> value, bool requires_grad) {
  return OpBuilder::make(*this, "leaf", std::move(shape), std::move(value), requires_grad, {});
}

void Graph::backward(const Tensor& loss) {
  if (!loss.valid() || loss.graph_ != this) fail_usage("backward: loss is not a node of this graph");
  if (numel(node(loss.id_).shape) != 1) fail_usage("backward: loss must be scalar");
  if (backward_done_) fail_usage("backward called twice without reset");
  if (!node(loss.id_).requires_grad) {
    fail_usage("backward: loss does not depend on any differentiable leaf");
  }
  grad_buffer(loss.id_)[0] = 1.0;
  for (int id = loss.id_; id >= 0; --id) {
    Node& n = node(id);
    if (n.backprop && !n.grad.empty()) n.backprop(*this);
  }
  backward_done_ = true;
}

void Graph::reset() {
  for (Node& n : nodes_) {
    if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
  }
  backward_done_ = false;
}

// ---- ops -------------------------------------------------------------------

Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding) {
  Graph& g = OpBuilder::same_graph({&input, &kernel, &bias});
  const auto& xs = input.shape();
  const auto& ws = kernel.shape();
  const auto& bs = bias.shape();
  if (xs.size() != 2 || ws.size() != 3 || bs.size() != 1) {
    fail_usage("conv1d: expected input [Cin,L], kernel [Cout,Cin,K], bias [Cout]");
  }
  const int cin = xs[0], len = xs[1];
  const int cout = ws[0], k = ws[2];
  if (ws[1] != cin) fail_usage("conv1d: kernel Cin does not match input channels");
  if (bs[0] != cout) fail_usage("conv1d: bias length does not match Cout");
  if (stride < 1 || padding < 0) fail_usage("conv1d: invalid stride/padding");
  if (len + 2 * padding < k) fail_usage("conv1d: output length < 1");
  const int lout = (len + 2 * padding - k) / stride + 1;

  const std::vector<double>& x = input.value();
  const std::vector<double>& w = kernel.value();
  const std::vector<double>& b = bias.value();
  std::vector<double> y(static_cast<size_t>(cout) * lout);

  // Per-tap saxpy over the valid output range; contiguous when stride == 1.
  auto tap_range = [&](int kk, int& o_lo, int& o_hi) {
    const int off = kk - padding;
    o_lo = off < 0 ? (-off + stride - 1) / stride : 0;
    o_hi = off >= len ? 0 : std::min<int>(lout, (len - 1 - off) / stride + 1);
  };

  for (int co = 0; co < cout; ++co) {
    double* yrow = y.data() + static_cast<size_t>(co) * lout;
    std::fill(yrow, yrow + lout, b[co]);
    for (int ci = 0; ci < cin; ++ci) {
      const double* xrow = x.data() + static_cast<size_t>(ci) * len;
      const double* wk = w.data() + (static_cast<size_t>(co) * cin + ci) * k;
      for (int kk = 0; kk < k; ++kk) {
        const double wv = wk[kk];
        int o_lo, o_hi;
        tap_range(kk, o_lo, o_hi);
        const double* xp = xrow + (kk - padding) + static_cast<int64_t>(o_lo) * stride;
        if (stride == 1) {
          for (int o = o_lo; o < o_hi; ++o) yrow[o] += wv * xp[o - o_lo];
        } else {
          for (int o = o_lo; o < o_hi; ++o, xp += stride) yrow[o] += wv * *xp;
        }
      }
    }
  }

  const int xid = OpBuilder::id(input), wid = OpBuilder::id(kernel), bid = OpBuilder::id(bias);
  const bool rg = input.requires_grad() || kernel.requires_grad() || bias.requires_grad();
  Backprop bp = [=](Graph& gg, int self) {
    const std::vector<double>& gy = OpBuilder::grad(gg, self);
    const std::vector<double>& xv = OpBuilder::value(gg, xid);
    const std::vector<double>& wv = OpBuilder::value(gg, wid);
    const bool need_x = OpBuilder::needs_grad(gg, xid);
    const bool need_w = OpBuilder::needs_grad(gg, wid);
    const bool need_b = OpBuilder::needs_grad(gg, bid);
    if (need_b) {
      std::vector<double>& gb = OpBuilder::grad(gg, bid);
      for (int co = 0; co < cout; ++co) {
        const double* gyr = gy.data() + static_cast<size_t>(co) * lout;
        double acc = 0.0;
        for (int o = 0; o < lout; ++o) acc += gyr[o];
        gb[co] += acc;
      }
    }
    if (!need_x && !need_w) return;
    std::vector<double>* gxp = need_x ? &OpBuilder::grad(gg, xid) : nullptr;
    std::vector<double>* gwp = need_w ? &OpBuilder::grad(gg, wid) : nullptr;
    for (int co = 0; co < cout; ++co) {
      const double* gyr = gy.data() + static_cast<size_t>(co) * lout;
      for (int ci = 0; ci < cin; ++ci) {
        const double* xrow = xv.data() + static_cast<size_t>(ci) * len;
        const double* wk = wv.data() + (static_cast<size_t>(co) * cin + ci) * k;
        double* gxrow = need_x ? gxp->data() + static_cast<size_t>(ci) * len : nullptr;
        double* gwk = need_w ? gwp->data() + (static_cast<size_t>(co) * cin + ci) * k : nullptr;
        for (int kk = 0; kk < k; ++kk) {
          const int off = kk - padding;
          const int o_lo = off < 0 ? (-off + stride - 1) / stride : 0;
          const int o_hi = off >= len ? 0 : std::min<int>(lout, (len - 1 - off) / stride + 1);
          if (o_hi <= o_lo) continue;
          if (need_w) {
            const double* xp = xrow + off + static_cast<int64_t>(o_lo) * stride;
            double acc = 0.0;
            if (stride == 1) {
              for (int o = o_lo; o < o_hi; ++o) acc += gyr[o] * xp[o - o_lo];
            } else {
              for (int o = o_lo; o < o_hi; ++o, xp += stride) acc += gyr[o] * *xp;
            }
            gwk[kk] += acc;
          }
          if (need_x) {
            const double wvv = wk[kk];
            double* gxp2 = gxrow + off + static_cast<int64_t>(o_lo) * stride;
            if (stride == 1) {
              for (int o = o_lo; o < o_hi; ++o) gxp2[o - o_lo] += wvv * gyr[o];
            } else {
              for (int o = o_lo; o < o_hi; ++o, gxp2 += stride) *gxp2 += wvv * gyr[o];
            }
          }
        }
      }
    }
  };
  return OpBuilder::make(g, "conv1d", {cout, lout}, std::move(y), rg, std::move(bp));
}

Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  Graph& g = OpBuilder::same_graph({&x, &gamma, &beta});
  const auto& xs = x.shape();
  if (xs.size() != 2) fail_usage("group_norm: expected x [C,L]");
  const int c = xs[0], len = xs[1];
  if (groups < 1 || c % groups != 0) {
    fail_usage("group_norm: channel count not divisible by groups");
  }
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    fail_usage("group_norm: gamma/beta must have one entry per channel");
  }
  const int gc = c / groups;               // channels per group
  const int64_t m = static_cast<int64_t>(gc) * len;  // elements per group

  const std::vector<double>& xv = x.value();
  const std::vector<double>& gav = gamma.value();
  const std::vector<double>& bev = beta.value();
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(groups);
  std::vector<double> y(xv.size());

  for (int gi = 0; gi < groups; ++gi) {
    const double* xg = xv.data() + static_cast<size_t>(gi) * gc * len;
    double mean = 0.0;
    for (int64_t i = 0; i < m; ++i) mean += xg[i];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (int64_t i = 0; i < m; ++i) {
      const double d = xg[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[gi] = inv;
    double* xh = xhat->data() + static_cast<size_t>(gi) * gc * len;
    for (int64_t i = 0; i < m; ++i) xh[i] = (xg[i] - mean) * inv;
  }
  for (int ci = 0; ci < c; ++ci) {
    const double* xh = xhat->data() + static_cast<size_t>(ci) * len;
    double* yr = y.data() + static_cast<size_t>(ci) * len;
    const double ga = gav[ci], be = bev[ci];
    for (int t = 0; t < len; ++t) yr[t] = ga * xh[t] + be;
  }

  const int xid = OpBuilder::id(x), gid = OpBuilder::id(gamma), bid = OpBuilder::id(beta);
  const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  Backprop bp = [=](Graph& gg, int self) {
    const std::vector<double>& gy = OpBuilder::grad(gg, self);
    const std::vector<double>& gav2 = OpBuilder::value(gg, gid);
    const bool need_x = OpBuilder::needs_grad(gg, xid);
    const bool need_ga = OpBuilder::needs_grad(gg, gid);
    const bool need_be = OpBuilder::needs_grad(gg, bid);
    if (need_ga || need_be) {
      std::vector<double>* gga = need_ga ? &OpBuilder::grad(gg, gid) : nullptr;
      std::vector<double>* gbe = need_be ? &OpBuilder::grad(gg, bid) : nullptr;
      for (int ci = 0; ci < c; ++ci) {
        const double* gyr = gy.data() + static_cast<size_t>(ci) * len;
        const double* xh = xhat->data() + static_cast<size_t>(ci) * len;
        double sg = 0.0, sb = 0.0;
        for (int t = 0; t < len; ++t) {
          sg += gyr[t] * xh[t];
          sb += gyr[t];
        }
        if (need_ga) (*gga)[ci] += sg;
        if (need_be) (*gbe)[ci] += sb;
      }
    }
    if (!need_x) return;
    std::vector<double>& gx = OpBuilder::grad(gg, xid);
    std::vector<double> dxhat(static_cast<size_t>(m));
    for (int gi = 0; gi < groups; ++gi) {
      const size_t base = static_cast<size_t>(gi) * gc * len;
      double sum1 = 0.0, sum2 = 0.0;
      for (int cc = 0; cc < gc; ++cc) {
        const int ci = gi * gc + cc;
        const double ga = gav2[ci];
        const double* gyr = gy.data() + static_cast<size_t>(ci) * len;
        const double* xh = xhat->data() + static_cast<size_t>(ci) * len;
        double* dxh = dxhat.data() + static_cast<size_t>(cc) * len;
        for (int t = 0; t < len; ++t) {
          const double d = ga * gyr[t];
          dxh[t] = d;
          sum1 += d;
          sum2 += d * xh[t];
        }
      }
      const double inv = (*inv_std)[gi];
      const double inv_m = 1.0 / static_cast<double>(m);
      const double* xh = xhat->data() + base;
      double* gxg = gx.data() + base;
      for (int64_t i = 0; i < m; ++i) {
        gxg[i] += inv * (dxhat[static_cast<size_t>(i)] - (sum1 + xh[i] * sum2) * inv_m);
      }
    }
  };
  return OpBuilder::make(g, "group_norm", {c, len}, std::move(y), rg, std::move(bp));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Graph& g = OpBuilder::same_graph({&x, &w, &b});
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const auto& bs = b.shape();
  if (xs.size() != 1 || ws.size() != 2 || bs.size() != 1) {
    fail_usage("linear: expected x [N], W [M,N], b [M]");
  }
  const int n = xs[0], mrows = ws[0];
  if (ws[1] != n) fail_usage("linear: W columns do not match x length");
  if (bs[0] != mrows) fail_usage("linear: bias length does not match W rows");

  const std::vector<double>& xv = x.value();
  const std::vector<double>& wv = w.value();
  const std::vector<double>& bv = b.value();
  std::vector<double> y(static_cast<size_t>(mrows));
  for (int i = 0; i < mrows; ++i) {
    const double* wr = wv.data() + static_cast<size_t>(i) * n;
    double acc = bv[i];
    for (int j = 0; j < n; ++j) acc += wr[j] * xv[j];
    y[static_cast<size_t>(i)] = acc;
  }

  const int xid = OpBuilder::id(x), wid = OpBuilder::id(w), bid = OpBuilder::id(b);
  const bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
  Backprop bp = [=](Graph& gg, int self) {
    const std::vector<double>& gy = OpBuilder::grad(gg, self);
    const std::vector<double>& xv2 = OpBuilder::value(gg, xid);
    const std::vector<double>& wv2 = OpBuilder::value(gg, wid);
    if (OpBuilder::needs_grad(gg, bid)) {
      std::vector<double>& gb = OpBuilder::grad(gg, bid);
      for (int i = 0; i < mrows; ++i) gb[i] += gy[i];
    }
    if (OpBuilder::needs_grad(gg, wid)) {
      std::vector<double>& gw = OpBuilder::grad(gg, wid);
      for (int i = 0; i < mrows; ++i) {
        double* gwr = gw.data() + static_cast<size_t>(i) * n;
        const double gyi = gy[i];
        for (int j = 0; j < n; ++j) gwr[j] += gyi * xv2[j];
      }
    }
    if (OpBuilder::needs_grad(gg, xid)) {
      std::vector<double>& gx = OpBuilder::grad(gg, xid);
      for (int i = 0; i < mrows; ++i) {
        const double* wr = wv2.data() + static_cast<size_t>(i) * n;
        const double gyi = gy[i];
        for (int j = 0; j < n; ++j) gx[j] += gyi * wr[j];
      }
    }
  };
  return OpBuilder::make(g, "linear", {mrows}, std::move(y), rg, std::move(bp));
}

Tensor silu(const Tensor& x) {
  Graph& g = OpBuilder::graph(x);
  const std::vector<double>& xv = x.value();
  std::vector<double> y(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] * sigmoid(xv[i]);
  const int xid = OpBuilder::id(x);
  Backprop bp = [=](Graph& gg, int self) {
    const std::vector<double>& gy = OpBuilder::grad(gg, self);
    const std::vector<double>& xv2 = OpBuilder::value(gg, xid);
    std::vector<double>& gx = OpBuilder::grad(gg, xid);
    for (size_t i = 0; i < xv2.size(); ++i) {
      const double s = sigmoid(xv2[i]);
      gx[i] += gy[i] * (s + xv2[i] * s * (1.0 - s));
    }
  };
  return OpBuilder::make(g, "silu", x.shape(), std::move(y), x.requires_grad(), std::move(bp));
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) fail_usage("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return x;
  Graph& g = OpBuilder::graph(x);
  const std::vector<double>& xv = x.value();
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(xv.size());
  std::vector<double> y(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) {
    const double mi = rng.uniform() >= p ? keep_scale : 0.0;
    (*mask)[i] = mi;
    y[i] = xv[i] * mi;
  }
  const int xid = OpBuilder::id(x);
  Backprop bp = [=](Graph& gg, int self) {
    const std::vector<double>& gy = OpBuilder::grad(gg, self);
    std::vector<double>& gx = OpBuilder::grad(gg, xid);
    for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * (*mask)[i];
  };
  return OpBuilder::make(g, "dropout", x.shape(), std::move(y), x.requires_grad(), std::move(bp));
}

Tensor softmax_cross_entropy(const Tensor& logits, int label) {
  Graph& g = OpBuilder::graph(logits);
  const auto& ls = logits.shape();
  if (ls.size() != 1) fail_usage("softmax_cross_entropy: logits must be a vector");
  const int k = ls[0];
  if (label < 0 || label >= k) fail_usage("softmax_cross_entropy: label out of range");
  const std::vector<double>& lv = logits.value();
  const double mx = *std::max_element(lv.begin(), lv.end());
  double z = 0.0;
  for (double v : lv) z += std::exp(v - mx);
  const double loss = std::log(z) + mx - lv[static_cast<size_t>(label)];
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) (*probs)[static_cast<size_t>(i)] = std::exp(lv[static_cast<size_t>(i)] - mx) / z;

  const int lid = OpBuilder::id(logits);
  Backprop bp = [=](Graph& gg, int self) {
    const double gl = OpBuilder::grad(gg, self)[0];
    std::vector<double>& gx = OpBuilder::grad(gg, lid);
    for (int i = 0; i < k; ++i) {
      gx[static_cast<size_t>(i)] +=
          gl * ((*probs)[static_cast<size_t>(i)] - (i == label ? 1.0 : 0.0));
    }
  };
  return OpBuilder::make(g, "softmax_cross_entropy", {1}, {loss}, logits.requires_grad(),
                         std::move(bp));
}

Tensor mse(const Tensor& a, const Tensor& b) {
  Graph& g = OpBuilder::same_graph({&a, &b});
  if (a.shape() != b.shape()) fail_usage("mse: shape mismatch");
  const std::vector<double>& av = a.value();
  const std::vector<double>& bv = b.value();
  const double inv_n = 1.0 / static_cast<double>(av.size());
  double acc = 0.0;
  for (size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    acc += d * d;
  }
  acc *= inv_n;
  const int aid = OpBuilder::id(a), bid = OpBuilder::id(b);
  const bool rg = a.requires_grad() || b.requires_grad();
  Backprop bp = [=](Graph& gg, int self) {
    const double gl = OpBuilder::grad(gg, self)[0];
    const std::vector<double>& av2 = OpBuilder::value(gg, aid);
    const std::vector<double>& bv2 = OpBuilder::value(gg, bid);
    const double c = 2.0 * gl * inv_n;
    if (OpBuilder::needs_grad(gg, aid)) {
      std::vector<double>& ga = OpBuilder::grad(gg, aid);
      for (size_t i = 0; i < av2.size(); ++i) ga[i] += c * (av2[i] - bv2[i]);
    }
    if (OpBuilder::needs_grad(gg, bid)) {
      std::vector<double>& gb = OpBuilder::grad(gg, bid);
      for (size_t i = 0; i < av2.size(); ++i) gb[i] -= c * (av2[i] - bv2[i]);
    }
  };
  return OpBuilder::make(g, "mse", {1}, {acc}, rg, std::move(bp));
}

Tensor add(const Tensor& a, const Tensor& b) {
  Graph& g = OpBuilder::same_graph({&a, &b});
  if (a.shape() != b.shape()) fail_usage("add: shape mismatch");
  const std::vector<double>& av = a.value();
  const std::vector<double>& bv = b.value();
  std::vector<double> y(av.size());
  for (size_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i];
  const int aid = OpBuilder::id(a), bid = OpBuilder::id(b);
  const bool rg = a.requires_grad() || b.requires_grad();
  Backprop bp = [=](Graph& gg, int self) {
    const std::vector<double>& gy = OpBuilder::grad(gg, self);
    for (int pid : {aid, bid}) {
      if (!OpBuilder::needs_grad(gg, pid)) continue;
      std::vector<double>& gp = OpBuilder::grad(gg, pid);
      for (size_t i = 0; i < gy.size(); ++i) gp[i] += gy[i];
    }
  };
  return OpBuilder::make(g, "add", a.shape(), std::move(y), rg, std::move(bp));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Graph& g = OpBuilder::same_graph({&a, &b});
  if (a.shape() != b.shape()) fail_usage("mul: shape mismatch");
  const std::vector<double>& av = a.value();
  const std::vector<double>& bv = b.value();
  std::vector<double> y(av.size());
  for (size_t i = 0; i < av.size(); ++i) y[i] = av[i] * bv[i];
  const int aid = OpBuilder::id(a), bid = OpBuilder::id(b);
  const bool rg = a.requires_grad() || b.requires_grad();
  Backprop bp = [=](Graph& gg, int self) {
    const std::vector<double>& gy = OpBuilder::grad(gg, self);
    const std::vector<double>& av2 = OpBuilder::value(gg, aid);
    const std::vector<double>& bv2 = OpBuilder::value(gg, bid);
    if (OpBuilder::needs_grad(gg, aid)) {
      std::vector<double>& ga = OpBuilder::grad(gg, aid);
      for (size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv2[i];
    }
    if (OpBuilder::needs_grad(gg, bid)) {
      std::vector<double>& gb = OpBuilder::grad(gg, bid);
      for (size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av2[i];
    }
  };
  return OpBuilder::make(g, "mul", a.shape(), std::move(y), rg, std::move(bp));
}

Tensor sum(const Tensor& x) {
  Graph& g = OpBuilder::graph(x);
  const std::vector<double>& xv = x.value();
  double acc = 0.0;
  for (double v : xv) acc += v;
  const int xid = OpBuilder::id(x);
  Backprop bp = [=](Graph& gg, int self) {
    const double gl = OpBuilder::grad(gg, self)[0];
    std::vector<double>& gx = OpBuilder::grad(gg, xid);
    for (double& v : gx) v += gl;
  };
  return OpBuilder::make(g, "sum", {1}, {acc}, x.requires_grad(), std::move(bp));
}

Tensor add_channel_bias(const Tensor& x, const Tensor& v) {
  Graph& g = OpBuilder::same_graph({&x, &v});
  const auto& xs = x.shape();
  if (xs.size() != 2 || v.shape() != Shape{xs[0]}) {
    fail_usage("add_channel_bias: expected x [C,L] and v [C]");
  }
  const int c = xs[0], len = xs[1];
  const std::vector<double>& xv = x.value();
  const std::vector<double>& vv = v.value();
  std::vector<double> y(xv.size());
  for (int ci = 0; ci < c; ++ci) {
    const double add_v = vv[static_cast<size_t>(ci)];
    const double* xr = xv.data() + static_cast<size_t>(ci) * len;
    double* yr = y.data() + static_cast<size_t>(ci) * len;
    for (int t = 0; t < len; ++t) yr[t] = xr[t] + add_v;
  }
  const int xid = OpBuilder::id(x), vid = OpBuilder::id(v);
  const bool rg = x.requires_grad() || v.requires_grad();
  Backprop bp = [=](Graph& gg, int self) {
    const std::vector<double>& gy = OpBuilder::grad(gg, self);
    if (OpBuilder::needs_grad(gg, xid)) {
      std::vector<double>& gx = OpBuilder::grad(gg, xid);
      for (size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    }
    if (OpBuilder::needs_grad(gg, vid)) {
      std::vector<double>& gv = OpBuilder::grad(gg, vid);
      for (int ci = 0; ci < c; ++ci) {
        const double* gyr = gy.data() + static_cast<size_t>(ci) * len;
        double acc = 0.0;
        for (int t = 0; t < len; ++t) acc += gyr[t];
        gv[static_cast<size_t>(ci)] += acc;
      }
    }
  };
  return OpBuilder::make(g, "add_channel_bias", x.shape(), std::move(y), rg, std::move(bp));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Graph& g = OpBuilder::same_graph({&a, &b});
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[1]) {
    fail_usage("concat_channels: expected [Ca,L] and [Cb,L] with matching L");
  }
  const int ca = as[0], cb = bs[0], len = as[1];
  const std::vector<double>& av = a.value();
  const std::vector<double>& bv = b.value();
  std::vector<double> y;
  y.reserve(av.size() + bv.size());
  y.insert(y.end(), av.begin(), av.end());
  y.insert(y.end(), bv.begin(), bv.end());
  const int aid = OpBuilder::id(a), bid = OpBuilder::id(b);
  const bool rg = a.requires_grad() || b.requires_grad();
  Backprop bp = [=](Graph& gg, int self) {
    const std::vector<double>& gy = OpBuilder::grad(gg, self);
    if (OpBuilder::needs_grad(gg, aid)) {
      std::vector<double>& ga = OpBuilder::grad(gg, aid);
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
    }
    if (OpBuilder::needs_grad(gg, bid)) {
      std::vector<double>& gb = OpBuilder::grad(gg, bid);
      const size_t off = static_cast<size_t>(ca) * len;
      for (size_t i = 0; i < gb.size(); ++i) gb[i] += gy[off + i];
    }
  };
  return OpBuilder::make(g, "concat_channels", {ca + cb, len}, std::move(y), rg, std::move(bp));
}

Tensor upsample_nearest2(const Tensor& x) {
  Graph& g = OpBuilder::graph(x);
  const auto& xs = x.shape();
  if (xs.size() != 2) fail_usage("upsample_nearest2: expected x [C,L]");
  const int c = xs[0], len = xs[1];
  const std::vector<double>& xv = x.value();
  std::vector<double> y(static_cast<size_t>(c) * len * 2);
  for (int ci = 0; ci < c; ++ci) {
    const double* xr = xv.data() + static_cast<size_t>(ci) * len;
    double* yr = y.data() + static_cast<size_t>(ci) * len * 2;
    for (int t = 0; t < len; ++t) {
      yr[2 * t] = xr[t];
      yr[2 * t + 1] = xr[t];
    }
  }
  const int xid = OpBuilder::id(x);
  Backprop bp = [=](Graph& gg, int self) {
    const std::vector<double>& gy = OpBuilder::grad(gg, self);
    std::vector<double>& gx = OpBuilder::grad(gg, xid);
    for (int ci = 0; ci < c; ++ci) {
      const double* gyr = gy.data() + static_cast<size_t>(ci) * len * 2;
      double* gxr = gx.data() + static_cast<size_t>(ci) * len;
      for (int t = 0; t < len; ++t) gxr[t] += gyr[2 * t] + gyr[2 * t + 1];
    }
  };
  return OpBuilder::make(g, "upsample_nearest2", {c, 2 * len}, std::move(y), x.requires_grad(),
                         std::move(bp));
}

Tensor global_avg_pool(const Tensor& x) {
  Graph& g = OpBuilder::graph(x);
  const auto& xs = x.shape();
  if (xs.size() != 2) fail_usage("global_avg_pool: expected x [C,L]");
  const int c = xs[0], len = xs[1];
  const double inv_len = 1.0 / static_cast<double>(len);
  const std::vector<double>& xv = x.value();
  std::vector<double> y(static_cast<size_t>(c));
  for (int ci = 0; ci < c; ++ci) {
    const double* xr = xv.data() + static_cast<size_t>(ci) * len;
    double acc = 0.0;
    for (int t = 0; t < len; ++t) acc += xr[t];
    y[static_cast<size_t>(ci)] = acc * inv_len;
  }
  const int xid = OpBuilder::id(x);
  Backprop bp = [=](Graph& gg, int self) {
    const std::vector<double>& gy = OpBuilder::grad(gg, self);
    std::vector<double>& gx = OpBuilder::grad(gg, xid);
    for (int ci = 0; ci < c; ++ci) {
      const double gi = gy[static_cast<size_t>(ci)] * inv_len;
      double* gxr = gx.data() + static_cast<size_t>(ci) * len;
      for (int t = 0; t < len; ++t) gxr[t] += gi;
    }
  };
  return OpBuilder::make(g, "global_avg_pool", {c}, std::move(y), x.requires_grad(),
                         std::move(bp));
}

Tensor matrix_row(const Tensor& m, int r) {
  Graph& g = OpBuilder::graph(m);
  const auto& ms = m.shape();
  if (ms.size() != 2) fail_usage("matrix_row: expected m [R,C]");
  const int rows = ms[0], cols = ms[1];
  if (r < 0 || r >= rows) fail_usage("matrix_row: row index out of range");
  const std::vector<double>& mv = m.value();
  std::vector<double> y(mv.begin() + static_cast<size_t>(r) * cols,
                        mv.begin() + static_cast<size_t>(r + 1) * cols);
  const int mid = OpBuilder::id(m);
  Backprop bp = [=](Graph& gg, int self) {
    const std::vector<double>& gy = OpBuilder::grad(gg, self);
    std::vector<double>& gm = OpBuilder::grad(gg, mid);
    double* gr = gm.data() + static_cast<size_t>(r) * cols;
    for (int j = 0; j < cols; ++j) gr[j] += gy[static_cast<size_t>(j)];
  };
  return OpBuilder::make(g, "matrix_row", {cols}, std::move(y), m.requires_grad(), std::move(bp));
}

Tensor weighted_sum(std::span<const Tensor> scalars, std::span<const double> weights) {
  if (scalars.empty() || scalars.size() != weights.size()) {
    fail_usage("weighted_sum: needs matching non-empty scalars and weights");
  }
  Graph* gp = nullptr;
  double acc = 0.0;
  bool rg = false;
  std::vector<int> ids(scalars.size());
  for (size_t i = 0; i < scalars.size(); ++i) {
    const Tensor& t = scalars[i];
    if (numel(t.shape()) != 1) fail_usage("weighted_sum: all inputs must be scalar");
    Graph& tg = OpBuilder::graph(t);
    if (gp == nullptr) gp = &tg;
    if (&tg != gp) fail_usage("weighted_sum: operands belong to different graphs");
    acc += weights[i] * t.value()[0];
    rg = rg || t.requires_grad();
    ids[i] = OpBuilder::id(t);
  }
  std::vector<double> wcopy(weights.begin(), weights.end());
  Backprop bp = [ids, wcopy](Graph& gg, int self) {
    const double gl = OpBuilder::grad(gg, self)[0];
    for (size_t i = 0; i < ids.size(); ++i) {
      if (OpBuilder::needs_grad(gg, ids[i])) {
        OpBuilder::grad(gg, ids[i])[0] += gl * wcopy[i];
      }
    }
  };
  return OpBuilder::make(*gp, "weighted_sum", {1}, {acc}, rg, std::move(bp));
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) fail_usage("softmax: empty input");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

}  // namespace bci::nn
