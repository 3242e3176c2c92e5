#include "rfsl/tape.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>

namespace rfsl {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// C (+)= op(A) * op(B), with op ∈ {identity, transpose}.
//
// Eigen's packed matrix-matrix kernels reduce in a fixed order, but its
// matrix-vector kernels peel according to runtime pointer alignment, so a
// thin product's last ulp would depend on where the tape buffer happened to
// land. Bitwise reproducibility is a contract here (train/eval parity,
// checkpoint determinism), so thin or degenerate products take a fixed-order
// scalar loop and only true matrix-matrix shapes go to Eigen.
enum class Op { kNone, kTrans };

void gemm(const double* a, Shape sa, Op ta, const double* b, Shape sb, Op tb, double* c,
          bool accumulate) {
  const int m = ta == Op::kNone ? sa.rows : sa.cols;
  const int k = ta == Op::kNone ? sa.cols : sa.rows;
  const int n = tb == Op::kNone ? sb.cols : sb.rows;

  if (m == 1 || n == 1 || k == 1) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int p = 0; p < k; ++p) {
          const double av = ta == Op::kNone ? a[static_cast<size_t>(i) * sa.cols + p]
                                            : a[static_cast<size_t>(p) * sa.cols + i];
          const double bv = tb == Op::kNone ? b[static_cast<size_t>(p) * sb.cols + j]
                                            : b[static_cast<size_t>(j) * sb.cols + p];
          s += av * bv;
        }
        double& dst = c[static_cast<size_t>(i) * n + j];
        dst = accumulate ? dst + s : s;
      }
    return;
  }

  CMapRM A(a, sa.rows, sa.cols);
  CMapRM B(b, sb.rows, sb.cols);
  MapRM C(c, m, n);
  if (accumulate) {
    if (ta == Op::kNone && tb == Op::kNone)
      C.noalias() += A * B;
    else if (ta == Op::kNone)
      C.noalias() += A * B.transpose();
    else if (tb == Op::kNone)
      C.noalias() += A.transpose() * B;
    else
      C.noalias() += A.transpose() * B.transpose();
  } else {
    if (ta == Op::kNone && tb == Op::kNone)
      C.noalias() = A * B;
    else if (ta == Op::kNone)
      C.noalias() = A * B.transpose();
    else if (tb == Op::kNone)
      C.noalias() = A.transpose() * B;
    else
      C.noalias() = A.transpose() * B.transpose();
  }
}

}  // namespace

int Tape::new_node(Shape shape, bool needs_grad) {
  Node n;
  n.shape = shape;
  n.value.resize(static_cast<size_t>(shape.size()));
  n.needs_grad = grad_enabled_ && needs_grad;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::check_same_tape(Value v) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw std::logic_error("Value does not belong to this tape");
}

double Tape::scalar(Value v) const {
  check_same_tape(v);
  if (nodes_[v.id].shape.size() != 1) throw std::invalid_argument("scalar() on non-scalar value");
  return nodes_[v.id].value[0];
}

Value Tape::input(Shape shape, std::span<const double> data) {
  if (static_cast<int>(data.size()) != shape.size())
    throw std::invalid_argument("input: data size does not match shape");
  int id = new_node(shape, false);
  std::copy(data.begin(), data.end(), nodes_[id].value.begin());
  return {this, id};
}

Value Tape::param(Tensor& t) {
  if (static_cast<int>(t.value.size()) != t.shape.size())
    throw std::invalid_argument("param: tensor value size does not match shape");
  int id = new_node(t.shape, true);
  std::copy(t.value.begin(), t.value.end(), nodes_[id].value.begin());
  if (nodes_[id].needs_grad) {
    nodes_[id].leaf = &t;
    nodes_[id].pull = [id, tp = &t](Tape& tape) {
      const auto& g = tape.nodes_[id].grad;
      if (tp->grad.size() != g.size()) tp->grad.assign(g.size(), 0.0);
      for (size_t i = 0; i < g.size(); ++i) tp->grad[i] += g[i];
    };
  }
  return {this, id};
}

Value Tape::add(Value a, Value b) {
  check_same_tape(a);
  check_same_tape(b);
  if (!(nodes_[a.id].shape == nodes_[b.id].shape))
    throw std::invalid_argument("add: shape mismatch");
  int id = new_node(nodes_[a.id].shape, nodes_[a.id].needs_grad || nodes_[b.id].needs_grad);
  auto& out = nodes_[id];
  const auto& av = nodes_[a.id].value;
  const auto& bv = nodes_[b.id].value;
  for (size_t i = 0; i < av.size(); ++i) out.value[i] = av[i] + bv[i];
  if (out.needs_grad) {
    out.pull = [id, ai = a.id, bi = b.id](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      if (t.nodes_[ai].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) t.nodes_[ai].grad[i] += g[i];
      if (t.nodes_[bi].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) t.nodes_[bi].grad[i] += g[i];
    };
  }
  return {this, id};
}

Value Tape::sub(Value a, Value b) {
  check_same_tape(a);
  check_same_tape(b);
  if (!(nodes_[a.id].shape == nodes_[b.id].shape))
    throw std::invalid_argument("sub: shape mismatch");
  int id = new_node(nodes_[a.id].shape, nodes_[a.id].needs_grad || nodes_[b.id].needs_grad);
  auto& out = nodes_[id];
  const auto& av = nodes_[a.id].value;
  const auto& bv = nodes_[b.id].value;
  for (size_t i = 0; i < av.size(); ++i) out.value[i] = av[i] - bv[i];
  if (out.needs_grad) {
    out.pull = [id, ai = a.id, bi = b.id](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      if (t.nodes_[ai].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) t.nodes_[ai].grad[i] += g[i];
      if (t.nodes_[bi].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) t.nodes_[bi].grad[i] -= g[i];
    };
  }
  return {this, id};
}

Value Tape::mul(Value a, Value b) {
  check_same_tape(a);
  check_same_tape(b);
  if (!(nodes_[a.id].shape == nodes_[b.id].shape))
    throw std::invalid_argument("mul: shape mismatch");
  int id = new_node(nodes_[a.id].shape, nodes_[a.id].needs_grad || nodes_[b.id].needs_grad);
  auto& out = nodes_[id];
  const auto& av = nodes_[a.id].value;
  const auto& bv = nodes_[b.id].value;
  for (size_t i = 0; i < av.size(); ++i) out.value[i] = av[i] * bv[i];
  if (out.needs_grad) {
    out.pull = [id, ai = a.id, bi = b.id](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      const auto& av2 = t.nodes_[ai].value;
      const auto& bv2 = t.nodes_[bi].value;
      if (t.nodes_[ai].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) t.nodes_[ai].grad[i] += g[i] * bv2[i];
      if (t.nodes_[bi].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) t.nodes_[bi].grad[i] += g[i] * av2[i];
    };
  }
  return {this, id};
}

Value Tape::div(Value a, Value b) {
  check_same_tape(a);
  check_same_tape(b);
  if (!(nodes_[a.id].shape == nodes_[b.id].shape))
    throw std::invalid_argument("div: shape mismatch");
  int id = new_node(nodes_[a.id].shape, nodes_[a.id].needs_grad || nodes_[b.id].needs_grad);
  auto& out = nodes_[id];
  const auto& av = nodes_[a.id].value;
  const auto& bv = nodes_[b.id].value;
  for (size_t i = 0; i < av.size(); ++i) out.value[i] = av[i] / bv[i];
  if (out.needs_grad) {
    out.pull = [id, ai = a.id, bi = b.id](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      const auto& cv = t.nodes_[id].value;
      const auto& bv2 = t.nodes_[bi].value;
      if (t.nodes_[ai].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) t.nodes_[ai].grad[i] += g[i] / bv2[i];
      if (t.nodes_[bi].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) t.nodes_[bi].grad[i] -= g[i] * cv[i] / bv2[i];
    };
  }
  return {this, id};
}

Value Tape::scale(Value a, double c) {
  check_same_tape(a);
  int id = new_node(nodes_[a.id].shape, nodes_[a.id].needs_grad);
  auto& out = nodes_[id];
  const auto& av = nodes_[a.id].value;
  for (size_t i = 0; i < av.size(); ++i) out.value[i] = c * av[i];
  if (out.needs_grad) {
    out.pull = [id, ai = a.id, c](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      for (size_t i = 0; i < g.size(); ++i) t.nodes_[ai].grad[i] += c * g[i];
    };
  }
  return {this, id};
}

Value Tape::matmul(Value a, Value b) {
  check_same_tape(a);
  check_same_tape(b);
  const Shape sa = nodes_[a.id].shape, sb = nodes_[b.id].shape;
  if (sa.cols != sb.rows) throw std::invalid_argument("matmul: inner dimension mismatch");
  int id = new_node({sa.rows, sb.cols}, nodes_[a.id].needs_grad || nodes_[b.id].needs_grad);
  gemm(nodes_[a.id].value.data(), sa, Op::kNone, nodes_[b.id].value.data(), sb, Op::kNone,
       nodes_[id].value.data(), false);
  if (nodes_[id].needs_grad) {
    nodes_[id].pull = [id, ai = a.id, bi = b.id, sa, sb](Tape& t) {
      const Shape sg{sa.rows, sb.cols};
      const double* g = t.nodes_[id].grad.data();
      if (t.nodes_[ai].needs_grad)
        gemm(g, sg, Op::kNone, t.nodes_[bi].value.data(), sb, Op::kTrans,
             t.nodes_[ai].grad.data(), true);
      if (t.nodes_[bi].needs_grad)
        gemm(t.nodes_[ai].value.data(), sa, Op::kTrans, g, sg, Op::kNone,
             t.nodes_[bi].grad.data(), true);
    };
  }
  return {this, id};
}

Value Tape::matmul_nt(Value a, Value b) {
  check_same_tape(a);
  check_same_tape(b);
  const Shape sa = nodes_[a.id].shape, sb = nodes_[b.id].shape;
  if (sa.cols != sb.cols) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  int id = new_node({sa.rows, sb.rows}, nodes_[a.id].needs_grad || nodes_[b.id].needs_grad);
  gemm(nodes_[a.id].value.data(), sa, Op::kNone, nodes_[b.id].value.data(), sb, Op::kTrans,
       nodes_[id].value.data(), false);
  if (nodes_[id].needs_grad) {
    nodes_[id].pull = [id, ai = a.id, bi = b.id, sa, sb](Tape& t) {
      const Shape sg{sa.rows, sb.rows};
      const double* g = t.nodes_[id].grad.data();
      if (t.nodes_[ai].needs_grad)
        gemm(g, sg, Op::kNone, t.nodes_[bi].value.data(), sb, Op::kNone,
             t.nodes_[ai].grad.data(), true);
      if (t.nodes_[bi].needs_grad)
        gemm(g, sg, Op::kTrans, t.nodes_[ai].value.data(), sa, Op::kNone,
             t.nodes_[bi].grad.data(), true);
    };
  }
  return {this, id};
}

Value Tape::matmul_tn(Value a, Value b) {
  check_same_tape(a);
  check_same_tape(b);
  const Shape sa = nodes_[a.id].shape, sb = nodes_[b.id].shape;
  if (sa.rows != sb.rows) throw std::invalid_argument("matmul_tn: inner dimension mismatch");
  int id = new_node({sa.cols, sb.cols}, nodes_[a.id].needs_grad || nodes_[b.id].needs_grad);
  gemm(nodes_[a.id].value.data(), sa, Op::kTrans, nodes_[b.id].value.data(), sb, Op::kNone,
       nodes_[id].value.data(), false);
  if (nodes_[id].needs_grad) {
    nodes_[id].pull = [id, ai = a.id, bi = b.id, sa, sb](Tape& t) {
      const Shape sg{sa.cols, sb.cols};
      const double* g = t.nodes_[id].grad.data();
      if (t.nodes_[ai].needs_grad)
        gemm(t.nodes_[bi].value.data(), sb, Op::kNone, g, sg, Op::kTrans,
             t.nodes_[ai].grad.data(), true);
      if (t.nodes_[bi].needs_grad)
        gemm(t.nodes_[ai].value.data(), sa, Op::kNone, g, sg, Op::kNone,
             t.nodes_[bi].grad.data(), true);
    };
  }
  return {this, id};
}

Value Tape::add_row_bias(Value m, Value bias) {
  check_same_tape(m);
  check_same_tape(bias);
  const Shape sm = nodes_[m.id].shape, sb = nodes_[bias.id].shape;
  if (sb.rows != 1 || sb.cols != sm.cols)
    throw std::invalid_argument("add_row_bias: bias must be [1, cols]");
  int id = new_node(sm, nodes_[m.id].needs_grad || nodes_[bias.id].needs_grad);
  auto& out = nodes_[id];
  const auto& mv = nodes_[m.id].value;
  const auto& bv = nodes_[bias.id].value;
  for (int r = 0; r < sm.rows; ++r)
    for (int c = 0; c < sm.cols; ++c)
      out.value[static_cast<size_t>(r) * sm.cols + c] =
          mv[static_cast<size_t>(r) * sm.cols + c] + bv[c];
  if (out.needs_grad) {
    out.pull = [id, mi = m.id, bi = bias.id, sm](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      if (t.nodes_[mi].needs_grad)
        for (size_t i = 0; i < g.size(); ++i) t.nodes_[mi].grad[i] += g[i];
      if (t.nodes_[bi].needs_grad)
        for (int r = 0; r < sm.rows; ++r)
          for (int c = 0; c < sm.cols; ++c)
            t.nodes_[bi].grad[c] += g[static_cast<size_t>(r) * sm.cols + c];
    };
  }
  return {this, id};
}

Value Tape::im2col(Value x, int kernel, int stride, int pad) {
  check_same_tape(x);
  const Shape sx = nodes_[x.id].shape;  // [T, C]
  if (kernel < 1 || stride < 1 || pad < 0) throw std::invalid_argument("im2col: bad geometry");
  const int t_out = (sx.rows + 2 * pad - kernel) / stride + 1;
  if (t_out < 1) throw std::invalid_argument("im2col: empty output");
  const int c_in = sx.cols;
  int id = new_node({t_out, kernel * c_in}, nodes_[x.id].needs_grad);
  auto& out = nodes_[id];
  const auto& xv = nodes_[x.id].value;
  for (int t = 0; t < t_out; ++t) {
    for (int j = 0; j < kernel; ++j) {
      const int src = t * stride - pad + j;
      double* dst = &out.value[static_cast<size_t>(t) * kernel * c_in + static_cast<size_t>(j) * c_in];
      if (src >= 0 && src < sx.rows) {
        const double* s = &xv[static_cast<size_t>(src) * c_in];
        for (int c = 0; c < c_in; ++c) dst[c] = s[c];
      } else {
        for (int c = 0; c < c_in; ++c) dst[c] = 0.0;
      }
    }
  }
  if (out.needs_grad) {
    out.pull = [id, xi = x.id, kernel, stride, pad, sx, t_out](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      auto& dx = t.nodes_[xi].grad;
      const int c_in = sx.cols;
      for (int ti = 0; ti < t_out; ++ti) {
        for (int j = 0; j < kernel; ++j) {
          const int src = ti * stride - pad + j;
          if (src < 0 || src >= sx.rows) continue;
          const double* gs = &g[static_cast<size_t>(ti) * kernel * c_in + static_cast<size_t>(j) * c_in];
          double* d = &dx[static_cast<size_t>(src) * c_in];
          for (int c = 0; c < c_in; ++c) d[c] += gs[c];
        }
      }
    };
  }
  return {this, id};
}

Value Tape::conv1d(Value x, Value w, Value b, int kernel, int stride, int pad) {
  const Shape sx = nodes_[x.id].shape, sw = nodes_[w.id].shape;
  if (sw.rows != kernel * sx.cols)
    throw std::invalid_argument("conv1d: weight rows must equal kernel * in_channels");
  return linear(im2col(x, kernel, stride, pad), w, b);
}

Value Tape::layer_norm(Value x, Value gamma, Value beta) {
  check_same_tape(x);
  check_same_tape(gamma);
  check_same_tape(beta);
  const Shape sx = nodes_[x.id].shape;
  const Shape sg = nodes_[gamma.id].shape, sb = nodes_[beta.id].shape;
  if (sx.cols < 1) throw std::invalid_argument("layer_norm: empty normalization axis");
  if (sg.rows != 1 || sg.cols != sx.cols || sb.rows != 1 || sb.cols != sx.cols)
    throw std::invalid_argument("layer_norm: gamma/beta must be [1, cols]");
  int id = new_node(sx, nodes_[x.id].needs_grad || nodes_[gamma.id].needs_grad ||
                            nodes_[beta.id].needs_grad);
  auto& out = nodes_[id];
  const auto& xv = nodes_[x.id].value;
  const auto& gv = nodes_[gamma.id].value;
  const auto& bv = nodes_[beta.id].value;
  const int n = sx.cols;
  for (int r = 0; r < sx.rows; ++r) {
    const double* xr = &xv[static_cast<size_t>(r) * n];
    double* yr = &out.value[static_cast<size_t>(r) * n];
    double mu = 0.0;
    for (int c = 0; c < n; ++c) mu += xr[c];
    mu /= n;
    double var = 0.0;
    for (int c = 0; c < n; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (int c = 0; c < n; ++c) yr[c] = gv[c] * ((xr[c] - mu) * inv) + bv[c];
  }
  if (out.needs_grad) {
    out.pull = [id, xi = x.id, gi = gamma.id, bi = beta.id, sx](Tape& t) {
      const int n = sx.cols;
      const auto& g = t.nodes_[id].grad;
      const auto& xv2 = t.nodes_[xi].value;
      const auto& gv2 = t.nodes_[gi].value;
      for (int r = 0; r < sx.rows; ++r) {
        const double* xr = &xv2[static_cast<size_t>(r) * n];
        const double* gr = &g[static_cast<size_t>(r) * n];
        double mu = 0.0;
        for (int c = 0; c < n; ++c) mu += xr[c];
        mu /= n;
        double var = 0.0;
        for (int c = 0; c < n; ++c) var += (xr[c] - mu) * (xr[c] - mu);
        var /= n;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        double m1 = 0.0, m2 = 0.0;
        for (int c = 0; c < n; ++c) {
          const double xhat = (xr[c] - mu) * inv;
          const double gh = gr[c] * gv2[c];
          m1 += gh;
          m2 += gh * xhat;
        }
        m1 /= n;
        m2 /= n;
        if (t.nodes_[xi].needs_grad) {
          double* dx = &t.nodes_[xi].grad[static_cast<size_t>(r) * n];
          for (int c = 0; c < n; ++c) {
            const double xhat = (xr[c] - mu) * inv;
            dx[c] += (gr[c] * gv2[c] - m1 - xhat * m2) * inv;
          }
        }
        if (t.nodes_[gi].needs_grad) {
          auto& dg = t.nodes_[gi].grad;
          for (int c = 0; c < n; ++c) dg[c] += gr[c] * ((xr[c] - mu) * inv);
        }
        if (t.nodes_[bi].needs_grad) {
          auto& db = t.nodes_[bi].grad;
          for (int c = 0; c < n; ++c) db[c] += gr[c];
        }
      }
    };
  }
  return {this, id};
}

Value Tape::softmax(Value x) {
  check_same_tape(x);
  const Shape sx = nodes_[x.id].shape;
  int id = new_node(sx, nodes_[x.id].needs_grad);
  auto& out = nodes_[id];
  const auto& xv = nodes_[x.id].value;
  const int n = sx.cols;
  for (int r = 0; r < sx.rows; ++r) {
    const double* xr = &xv[static_cast<size_t>(r) * n];
    double* yr = &out.value[static_cast<size_t>(r) * n];
    double mx = xr[0];
    for (int c = 1; c < n; ++c) mx = std::max(mx, xr[c]);
    double z = 0.0;
    for (int c = 0; c < n; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      z += yr[c];
    }
    for (int c = 0; c < n; ++c) yr[c] /= z;
  }
  if (out.needs_grad) {
    out.pull = [id, xi = x.id, sx](Tape& t) {
      const int n = sx.cols;
      const auto& g = t.nodes_[id].grad;
      const auto& y = t.nodes_[id].value;
      auto& dx = t.nodes_[xi].grad;
      for (int r = 0; r < sx.rows; ++r) {
        const double* gr = &g[static_cast<size_t>(r) * n];
        const double* yr = &y[static_cast<size_t>(r) * n];
        double dot = 0.0;
        for (int c = 0; c < n; ++c) dot += gr[c] * yr[c];
        double* dxr = &dx[static_cast<size_t>(r) * n];
        for (int c = 0; c < n; ++c) dxr[c] += yr[c] * (gr[c] - dot);
      }
    };
  }
  return {this, id};
}

Value Tape::gelu(Value x) {
  check_same_tape(x);
  int id = new_node(nodes_[x.id].shape, nodes_[x.id].needs_grad);
  auto& out = nodes_[id];
  const auto& xv = nodes_[x.id].value;
  for (size_t i = 0; i < xv.size(); ++i)
    out.value[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * kInvSqrt2));
  if (out.needs_grad) {
    out.pull = [id, xi = x.id](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      const auto& xv2 = t.nodes_[xi].value;
      auto& dx = t.nodes_[xi].grad;
      for (size_t i = 0; i < g.size(); ++i) {
        const double phi = 0.5 * (1.0 + std::erf(xv2[i] * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xv2[i] * xv2[i]);
        dx[i] += g[i] * (phi + xv2[i] * pdf);
      }
    };
  }
  return {this, id};
}

Value Tape::relu(Value x) {
  check_same_tape(x);
  int id = new_node(nodes_[x.id].shape, nodes_[x.id].needs_grad);
  auto& out = nodes_[id];
  const auto& xv = nodes_[x.id].value;
  for (size_t i = 0; i < xv.size(); ++i) out.value[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (out.needs_grad) {
    out.pull = [id, xi = x.id](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      const auto& xv2 = t.nodes_[xi].value;
      auto& dx = t.nodes_[xi].grad;
      for (size_t i = 0; i < g.size(); ++i)
        if (xv2[i] > 0.0) dx[i] += g[i];
    };
  }
  return {this, id};
}

Value Tape::abs(Value x) {
  check_same_tape(x);
  int id = new_node(nodes_[x.id].shape, nodes_[x.id].needs_grad);
  auto& out = nodes_[id];
  const auto& xv = nodes_[x.id].value;
  for (size_t i = 0; i < xv.size(); ++i) out.value[i] = std::fabs(xv[i]);
  if (out.needs_grad) {
    out.pull = [id, xi = x.id](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      const auto& xv2 = t.nodes_[xi].value;
      auto& dx = t.nodes_[xi].grad;
      for (size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * sign_of(xv2[i]);
    };
  }
  return {this, id};
}

Value Tape::mean_axis0(Value x) {
  check_same_tape(x);
  const Shape sx = nodes_[x.id].shape;
  int id = new_node({1, sx.cols}, nodes_[x.id].needs_grad);
  auto& out = nodes_[id];
  const auto& xv = nodes_[x.id].value;
  for (int c = 0; c < sx.cols; ++c) {
    double s = 0.0;
    for (int r = 0; r < sx.rows; ++r) s += xv[static_cast<size_t>(r) * sx.cols + c];
    out.value[c] = s / sx.rows;
  }
  if (out.needs_grad) {
    out.pull = [id, xi = x.id, sx](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      auto& dx = t.nodes_[xi].grad;
      const double inv = 1.0 / sx.rows;
      for (int r = 0; r < sx.rows; ++r)
        for (int c = 0; c < sx.cols; ++c) dx[static_cast<size_t>(r) * sx.cols + c] += g[c] * inv;
    };
  }
  return {this, id};
}

Value Tape::sum_all(Value x) {
  check_same_tape(x);
  int id = new_node({1, 1}, nodes_[x.id].needs_grad);
  const auto& xv = nodes_[x.id].value;
  double s = 0.0;
  for (double v : xv) s += v;
  nodes_[id].value[0] = s;
  if (nodes_[id].needs_grad) {
    nodes_[id].pull = [id, xi = x.id](Tape& t) {
      const double g = t.nodes_[id].grad[0];
      auto& dx = t.nodes_[xi].grad;
      for (double& d : dx) d += g;
    };
  }
  return {this, id};
}

Value Tape::l1_norm(Value x) {
  check_same_tape(x);
  int id = new_node({1, 1}, nodes_[x.id].needs_grad);
  const auto& xv = nodes_[x.id].value;
  double s = 0.0;
  for (double v : xv) s += std::fabs(v);
  nodes_[id].value[0] = s;
  if (nodes_[id].needs_grad) {
    nodes_[id].pull = [id, xi = x.id](Tape& t) {
      const double g = t.nodes_[id].grad[0];
      const auto& xv2 = t.nodes_[xi].value;
      auto& dx = t.nodes_[xi].grad;
      for (size_t i = 0; i < dx.size(); ++i) dx[i] += g * sign_of(xv2[i]);
    };
  }
  return {this, id};
}

Value Tape::slice_rows(Value x, int start, int n) {
  check_same_tape(x);
  const Shape sx = nodes_[x.id].shape;
  if (start < 0 || n < 1 || start + n > sx.rows)
    throw std::invalid_argument("slice_rows: range out of bounds");
  int id = new_node({n, sx.cols}, nodes_[x.id].needs_grad);
  auto& out = nodes_[id];
  const auto& xv = nodes_[x.id].value;
  std::copy(xv.begin() + static_cast<size_t>(start) * sx.cols,
            xv.begin() + static_cast<size_t>(start + n) * sx.cols, out.value.begin());
  if (out.needs_grad) {
    out.pull = [id, xi = x.id, start, sx](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      auto& dx = t.nodes_[xi].grad;
      for (size_t i = 0; i < g.size(); ++i)
        dx[static_cast<size_t>(start) * sx.cols + i] += g[i];
    };
  }
  return {this, id};
}

Value Tape::slice_cols(Value x, int start, int n) {
  check_same_tape(x);
  const Shape sx = nodes_[x.id].shape;
  if (start < 0 || n < 1 || start + n > sx.cols)
    throw std::invalid_argument("slice_cols: range out of bounds");
  int id = new_node({sx.rows, n}, nodes_[x.id].needs_grad);
  auto& out = nodes_[id];
  const auto& xv = nodes_[x.id].value;
  for (int r = 0; r < sx.rows; ++r)
    for (int c = 0; c < n; ++c)
      out.value[static_cast<size_t>(r) * n + c] =
          xv[static_cast<size_t>(r) * sx.cols + start + c];
  if (out.needs_grad) {
    out.pull = [id, xi = x.id, start, n, sx](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      auto& dx = t.nodes_[xi].grad;
      for (int r = 0; r < sx.rows; ++r)
        for (int c = 0; c < n; ++c)
          dx[static_cast<size_t>(r) * sx.cols + start + c] += g[static_cast<size_t>(r) * n + c];
    };
  }
  return {this, id};
}

Value Tape::concat_cols(std::span<const Value> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  int rows = -1, total = 0;
  bool needs = false;
  for (Value p : parts) {
    check_same_tape(p);
    const Shape s = nodes_[p.id].shape;
    if (rows < 0) rows = s.rows;
    if (s.rows != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    total += s.cols;
    needs = needs || nodes_[p.id].needs_grad;
  }
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (Value p : parts) ids.push_back(p.id);
  int id = new_node({rows, total}, needs);
  auto& out = nodes_[id];
  int off = 0;
  for (int pid : ids) {
    const Shape s = nodes_[pid].shape;
    const auto& pv = nodes_[pid].value;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < s.cols; ++c)
        out.value[static_cast<size_t>(r) * total + off + c] = pv[static_cast<size_t>(r) * s.cols + c];
    off += s.cols;
  }
  if (out.needs_grad) {
    out.pull = [id, ids, rows, total](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      int off2 = 0;
      for (int pid : ids) {
        const Shape s = t.nodes_[pid].shape;
        if (t.nodes_[pid].needs_grad) {
          auto& dp = t.nodes_[pid].grad;
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < s.cols; ++c)
              dp[static_cast<size_t>(r) * s.cols + c] += g[static_cast<size_t>(r) * total + off2 + c];
        }
        off2 += s.cols;
      }
    };
  }
  return {this, id};
}

Value Tape::stack_rows(std::span<const Value> rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no inputs");
  const int n = nodes_[rows.front().id].shape.cols;
  bool needs = false;
  std::vector<int> ids;
  ids.reserve(rows.size());
  for (Value r : rows) {
    check_same_tape(r);
    const Shape s = nodes_[r.id].shape;
    if (s.rows != 1 || s.cols != n) throw std::invalid_argument("stack_rows: rows must be [1, n]");
    needs = needs || nodes_[r.id].needs_grad;
    ids.push_back(r.id);
  }
  int id = new_node({static_cast<int>(rows.size()), n}, needs);
  auto& out = nodes_[id];
  for (size_t r = 0; r < ids.size(); ++r)
    std::copy(nodes_[ids[r]].value.begin(), nodes_[ids[r]].value.end(),
              out.value.begin() + r * static_cast<size_t>(n));
  if (out.needs_grad) {
    out.pull = [id, ids, n](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      for (size_t r = 0; r < ids.size(); ++r) {
        if (!t.nodes_[ids[r]].needs_grad) continue;
        auto& dr = t.nodes_[ids[r]].grad;
        for (int c = 0; c < n; ++c) dr[c] += g[r * static_cast<size_t>(n) + c];
      }
    };
  }
  return {this, id};
}

Value Tape::cross_entropy_with_logits(Value logits, std::span<const int> labels) {
  check_same_tape(logits);
  const Shape s = nodes_[logits.id].shape;
  if (static_cast<int>(labels.size()) != s.rows)
    throw std::invalid_argument("cross_entropy: one label per row required");
  for (int y : labels)
    if (y < 0 || y >= s.cols) throw std::out_of_range("cross_entropy: label out of range");
  std::vector<int> ys(labels.begin(), labels.end());
  int id = new_node({1, 1}, nodes_[logits.id].needs_grad);
  const auto& lv = nodes_[logits.id].value;
  double loss = 0.0;
  for (int r = 0; r < s.rows; ++r) {
    const double* lr = &lv[static_cast<size_t>(r) * s.cols];
    double mx = lr[0];
    for (int c = 1; c < s.cols; ++c) mx = std::max(mx, lr[c]);
    double z = 0.0;
    for (int c = 0; c < s.cols; ++c) z += std::exp(lr[c] - mx);
    loss += std::log(z) + mx - lr[ys[r]];
  }
  nodes_[id].value[0] = loss / s.rows;
  if (nodes_[id].needs_grad) {
    nodes_[id].pull = [id, li = logits.id, s, ys = std::move(ys)](Tape& t) {
      const double g = t.nodes_[id].grad[0] / s.rows;
      const auto& lv2 = t.nodes_[li].value;
      auto& dl = t.nodes_[li].grad;
      for (int r = 0; r < s.rows; ++r) {
        const double* lr = &lv2[static_cast<size_t>(r) * s.cols];
        double mx = lr[0];
        for (int c = 1; c < s.cols; ++c) mx = std::max(mx, lr[c]);
        double z = 0.0;
        for (int c = 0; c < s.cols; ++c) z += std::exp(lr[c] - mx);
        double* dr = &dl[static_cast<size_t>(r) * s.cols];
        for (int c = 0; c < s.cols; ++c) {
          const double p = std::exp(lr[c] - mx) / z;
          dr[c] += g * (p - (c == ys[r] ? 1.0 : 0.0));
        }
      }
    };
  }
  return {this, id};
}

Value Tape::sliding_distance(Value frame, Value shapelet) {
  check_same_tape(frame);
  check_same_tape(shapelet);
  const Shape sf = nodes_[frame.id].shape, ss = nodes_[shapelet.id].shape;
  if (sf.rows != 2 || ss.rows != 2)
    throw std::invalid_argument("sliding_distance: frame and shapelet must have 2 rows");
  if (ss.cols > sf.cols)
    throw std::invalid_argument("sliding_distance: shapelet longer than frame");
  const int T = sf.cols, L = ss.cols, J = T - L + 1;
  int id = new_node({1, J}, nodes_[frame.id].needs_grad || nodes_[shapelet.id].needs_grad);
  auto& out = nodes_[id];
  const auto& fv = nodes_[frame.id].value;
  const auto& sv = nodes_[shapelet.id].value;
  for (int j = 0; j < J; ++j) {
    double ss2 = 0.0;
    for (int c = 0; c < 2; ++c) {
      const double* fr = &fv[static_cast<size_t>(c) * T + j];
      const double* sr = &sv[static_cast<size_t>(c) * L];
      for (int k = 0; k < L; ++k) {
        const double d = sr[k] - fr[k];
        ss2 += d * d;
      }
    }
    out.value[j] = std::sqrt(ss2);
  }
  if (out.needs_grad) {
    out.pull = [id, fi = frame.id, si = shapelet.id, T, L, J](Tape& t) {
      const auto& g = t.nodes_[id].grad;
      const auto& d = t.nodes_[id].value;
      const auto& fv2 = t.nodes_[fi].value;
      const auto& sv2 = t.nodes_[si].value;
      const bool wf = t.nodes_[fi].needs_grad;
      const bool ws = t.nodes_[si].needs_grad;
      for (int j = 0; j < J; ++j) {
        if (g[j] == 0.0) continue;
        const double w = g[j] / std::max(d[j], 1e-12);
        for (int c = 0; c < 2; ++c) {
          const double* fr = &fv2[static_cast<size_t>(c) * T + j];
          const double* sr = &sv2[static_cast<size_t>(c) * L];
          for (int k = 0; k < L; ++k) {
            const double diff = w * (sr[k] - fr[k]);
            if (ws) t.nodes_[si].grad[static_cast<size_t>(c) * L + k] += diff;
            if (wf) t.nodes_[fi].grad[static_cast<size_t>(c) * T + j + k] -= diff;
          }
        }
      }
    };
  }
  return {this, id};
}

Value Tape::column_normalize(Value a) {
  check_same_tape(a);
  const Shape s = nodes_[a.id].shape;
  int id = new_node(s, nodes_[a.id].needs_grad);
  auto& out = nodes_[id];
  const auto& av = nodes_[a.id].value;
  constexpr double kDeadNorm = 1e-12;
  for (int c = 0; c < s.cols; ++c) {
    double ss2 = 0.0;
    for (int r = 0; r < s.rows; ++r) {
      const double v = av[static_cast<size_t>(r) * s.cols + c];
      ss2 += v * v;
    }
    const double norm = std::sqrt(ss2);
    if (norm < kDeadNorm) {
      for (int r = 0; r < s.rows; ++r) out.value[static_cast<size_t>(r) * s.cols + c] = 0.0;
    } else {
      for (int r = 0; r < s.rows; ++r)
        out.value[static_cast<size_t>(r) * s.cols + c] =
            av[static_cast<size_t>(r) * s.cols + c] / norm;
    }
  }
  if (out.needs_grad) {
    out.pull = [id, ai = a.id, s](Tape& t) {
      constexpr double kDead = 1e-12;
      const auto& g = t.nodes_[id].grad;
      const auto& y = t.nodes_[id].value;
      const auto& av2 = t.nodes_[ai].value;
      auto& dx = t.nodes_[ai].grad;
      for (int c = 0; c < s.cols; ++c) {
        double ss2 = 0.0;
        for (int r = 0; r < s.rows; ++r) {
          const double v = av2[static_cast<size_t>(r) * s.cols + c];
          ss2 += v * v;
        }
        const double norm = std::sqrt(ss2);
        if (norm < kDead) continue;  // dead column: zero subgradient
        double dot = 0.0;
        for (int r = 0; r < s.rows; ++r)
          dot += y[static_cast<size_t>(r) * s.cols + c] * g[static_cast<size_t>(r) * s.cols + c];
        for (int r = 0; r < s.rows; ++r) {
          const size_t i = static_cast<size_t>(r) * s.cols + c;
          dx[i] += (g[i] - y[i] * dot) / norm;
        }
      }
    };
  }
  return {this, id};
}

Value Tape::scaled_dot_product_attention(Value q, Value k, Value v) {
  const Shape sq = nodes_[q.id].shape;
  Value scores = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(sq.cols)));
  return matmul(softmax(scores), v);
}

void Tape::backward(Value scalar_out) {
  check_same_tape(scalar_out);
  if (!grad_enabled_) throw std::logic_error("backward on a grad-disabled tape");
  if (nodes_[scalar_out.id].shape.size() != 1)
    throw std::invalid_argument("backward: output must be scalar");
  for (auto& n : nodes_)
    if (n.needs_grad) n.grad.assign(n.value.size(), 0.0);
  if (!nodes_[scalar_out.id].needs_grad) return;  // constant: nothing reaches parameters
  nodes_[scalar_out.id].grad[0] = 1.0;
  for (int i = scalar_out.id; i >= 0; --i)
    if (nodes_[i].needs_grad && nodes_[i].pull) nodes_[i].pull(*this);
}

}  // namespace rfsl
