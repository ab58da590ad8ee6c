#include "octevo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "octevo/errors.hpp"
#include "gemm.hpp"

namespace octevo {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

namespace detail {
void ensure_grad(Node* n) {
  if (n->grad.size() != n->values.size()) n->grad.assign(n->values.size(), 0);
}
}  // namespace detail

using detail::Node;

// ---------------- Tensor basics ----------------

static thread_local int no_grad_depth = 0;

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }
bool grad_enabled() { return no_grad_depth == 0; }

Tensor Tensor::raw(Shape shape) {
  for (int64_t d : shape)
    check_dim(d > 0, "tensor extents must be positive, got " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->values.assign(shape_numel(shape), 0);
  n->shape = std::move(shape);
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t = raw(std::move(shape));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape shape, Real v, bool requires_grad) {
  Tensor t = raw(std::move(shape));
  std::fill(t.node_->values.begin(), t.node_->values.end(), v);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<Real> values, bool requires_grad) {
  check_dim(shape_numel(shape) == static_cast<int64_t>(values.size()),
            "value count does not match shape " + shape_str(shape));
  Tensor t = raw(std::move(shape));
  t.node_->values = std::move(values);
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(Real v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
int64_t Tensor::numel() const {
  return static_cast<int64_t>(node_->values.size());
}
int Tensor::ndim() const { return static_cast<int>(node_->shape.size()); }
int64_t Tensor::dim(int i) const { return node_->shape.at(i); }

Real* Tensor::data() { return node_->values.data(); }
const Real* Tensor::data() const { return node_->values.data(); }
std::vector<Real>& Tensor::values() { return node_->values; }
const std::vector<Real>& Tensor::values() const { return node_->values; }

Real Tensor::item() const {
  check_dim(numel() == 1, "item() on non-scalar " + shape_str(shape()));
  return node_->values[0];
}

Real Tensor::at(const Shape& idx) const {
  check_dim(idx.size() == node_->shape.size(), "at(): rank mismatch");
  int64_t off = 0;
  for (size_t i = 0; i < idx.size(); ++i) {
    check_dim(idx[i] >= 0 && idx[i] < node_->shape[i], "at(): out of range");
    off = off * node_->shape[i] + idx[i];
  }
  return node_->values[off];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::requires_grad(bool on) {
  check_arg(node_ != nullptr, "requires_grad: undefined tensor");
  node_->requires_grad = on;
}

const std::vector<Real>& Tensor::grad() const {
  check_arg(node_ && !node_->grad.empty(),
            "gradient not populated; run backward() first");
  return node_->grad;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty())
    std::fill(node_->grad.begin(), node_->grad.end(), 0);
}

void Tensor::clear_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
  Tensor t = raw(node_->shape);
  t.node_->values = node_->values;
  return t;
}

void Tensor::backward() const {
  check_arg(node_ != nullptr, "backward() on an empty tensor");
  check_arg(numel() == 1,
            "backward() needs a scalar, got " + shape_str(shape()));
  check_arg(node_->requires_grad,
            "backward() on a tensor with no recorded graph");
  // Post-order DFS; reversed it yields consumers-before-producers, so each
  // node's backprop runs exactly once with its gradient fully accumulated.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  struct Frame {
    Node* n;
    size_t next;
  };
  std::vector<Frame> st;
  st.push_back({node_.get(), 0});
  seen.insert(node_.get());
  while (!st.empty()) {
    Frame& f = st.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        st.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      st.pop_back();
    }
  }
  detail::ensure_grad(node_.get());
  node_->grad[0] = 1;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop(**it);
}

void attach_backprop(Tensor& out, std::vector<Tensor> parents,
                     std::function<void(Node&)> fn) {
  if (!grad_enabled()) return;
  bool any = false;
  for (const Tensor& p : parents) any = any || p.requires_grad();
  if (!any) return;
  Node* n = out.node().get();
  n->requires_grad = true;
  n->parents.reserve(parents.size());
  for (Tensor& p : parents) n->parents.push_back(p.node());
  n->backprop = std::move(fn);
}

// ---------------- elementwise helpers ----------------

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check_dim(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                        shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
}

// dfdx receives (x, y) where y = f(x)
template <class F, class D>
Tensor unary_op(const Tensor& x, F f, D dfdx) {
  Tensor out = Tensor::raw(x.shape());
  const Real* xv = x.data();
  Real* ov = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) ov[i] = f(xv[i]);
  attach_backprop(out, {x}, [xn = x.node(), dfdx](Node& self) {
    detail::ensure_grad(xn.get());
    const int64_t n = static_cast<int64_t>(self.values.size());
    for (int64_t i = 0; i < n; ++i)
      xn->grad[i] += self.grad[i] * dfdx(xn->values[i], self.values[i]);
  });
  return out;
}

Real softplus_stable(Real x) {
  if (x > Real(30)) return x;
  if (x < Real(-30)) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

// ---------------- arithmetic ----------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::raw(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  attach_backprop(out, {a, b}, [an = a.node(), bn = b.node()](Node& self) {
    const int64_t n = static_cast<int64_t>(self.values.size());
    if (an->requires_grad) {
      detail::ensure_grad(an.get());
      for (int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      detail::ensure_grad(bn.get());
      for (int64_t i = 0; i < n; ++i) bn->grad[i] += self.grad[i];
    }
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::raw(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  attach_backprop(out, {a, b}, [an = a.node(), bn = b.node()](Node& self) {
    const int64_t n = static_cast<int64_t>(self.values.size());
    if (an->requires_grad) {
      detail::ensure_grad(an.get());
      for (int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      detail::ensure_grad(bn.get());
      for (int64_t i = 0; i < n; ++i) bn->grad[i] -= self.grad[i];
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::raw(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  attach_backprop(out, {a, b}, [an = a.node(), bn = b.node()](Node& self) {
    const int64_t n = static_cast<int64_t>(self.values.size());
    if (an->requires_grad) {
      detail::ensure_grad(an.get());
      for (int64_t i = 0; i < n; ++i)
        an->grad[i] += self.grad[i] * bn->values[i];
    }
    if (bn->requires_grad) {
      detail::ensure_grad(bn.get());
      for (int64_t i = 0; i < n; ++i)
        bn->grad[i] += self.grad[i] * an->values[i];
    }
  });
  return out;
}

Tensor add_scalar(const Tensor& a, Real s) {
  return unary_op(
      a, [s](Real x) { return x + s; }, [](Real, Real) { return Real(1); });
}

Tensor mul_scalar(const Tensor& a, Real s) {
  return unary_op(
      a, [s](Real x) { return x * s; }, [s](Real, Real) { return s; });
}

// ---------------- shape ops ----------------

Tensor reshape(const Tensor& a, Shape shape) {
  check_dim(shape_numel(shape) == a.numel(),
            "reshape: element count mismatch " + shape_str(a.shape()) +
                " -> " + shape_str(shape));
  Tensor out = Tensor::raw(std::move(shape));
  out.values() = a.values();
  attach_backprop(out, {a}, [an = a.node()](Node& self) {
    detail::ensure_grad(an.get());
    const int64_t n = static_cast<int64_t>(self.values.size());
    for (int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
  });
  return out;
}

Tensor transpose2d(const Tensor& a) {
  check_dim(a.ndim() == 2, "transpose2d: expected rank 2");
  const int64_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::raw({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out.data()[j * m + i] = a.data()[i * n + j];
  attach_backprop(out, {a}, [an = a.node(), m, n](Node& self) {
    detail::ensure_grad(an.get());
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j)
        an->grad[i * n + j] += self.grad[j * m + i];
  });
  return out;
}

Tensor concat0(const Tensor& a, const Tensor& b) {
  check_dim(a.ndim() == b.ndim() && a.ndim() >= 1, "concat0: rank mismatch");
  for (int i = 1; i < a.ndim(); ++i)
    check_dim(a.dim(i) == b.dim(i), "concat0: trailing dims differ");
  Shape s = a.shape();
  s[0] += b.dim(0);
  Tensor out = Tensor::raw(std::move(s));
  std::memcpy(out.data(), a.data(), sizeof(Real) * a.numel());
  std::memcpy(out.data() + a.numel(), b.data(), sizeof(Real) * b.numel());
  attach_backprop(out, {a, b},
                  [an = a.node(), bn = b.node(),
                   na = a.numel()](Node& self) {
                    if (an->requires_grad) {
                      detail::ensure_grad(an.get());
                      for (int64_t i = 0; i < na; ++i)
                        an->grad[i] += self.grad[i];
                    }
                    if (bn->requires_grad) {
                      detail::ensure_grad(bn.get());
                      const int64_t nb =
                          static_cast<int64_t>(bn->values.size());
                      for (int64_t i = 0; i < nb; ++i)
                        bn->grad[i] += self.grad[na + i];
                    }
                  });
  return out;
}

Tensor slice0(const Tensor& a, int64_t start, int64_t len) {
  check_dim(a.ndim() >= 1, "slice0: rank-0 input");
  check_arg(start >= 0 && len >= 1 && start + len <= a.dim(0),
            "slice0: range outside axis 0");
  int64_t inner = 1;
  for (int i = 1; i < a.ndim(); ++i) inner *= a.dim(i);
  Shape s = a.shape();
  s[0] = len;
  Tensor out = Tensor::raw(std::move(s));
  std::memcpy(out.data(), a.data() + start * inner,
              sizeof(Real) * len * inner);
  attach_backprop(out, {a},
                  [an = a.node(), off = start * inner](Node& self) {
                    detail::ensure_grad(an.get());
                    const int64_t n = int64_t(self.values.size());
                    for (int64_t i = 0; i < n; ++i)
                      an->grad[off + i] += self.grad[i];
                  });
  return out;
}

Tensor outer_sum(const Tensor& u, const Tensor& v) {
  check_dim(u.ndim() == 1 && v.ndim() == 1, "outer_sum: expected 1-D inputs");
  const int64_t p = u.dim(0), q = v.dim(0);
  Tensor out = Tensor::raw({p, q});
  for (int64_t i = 0; i < p; ++i)
    for (int64_t j = 0; j < q; ++j)
      out.data()[i * q + j] = u.data()[i] + v.data()[j];
  attach_backprop(out, {u, v}, [un = u.node(), vn = v.node(), p, q](Node& self) {
    if (un->requires_grad) {
      detail::ensure_grad(un.get());
      for (int64_t i = 0; i < p; ++i) {
        Real acc = 0;
        for (int64_t j = 0; j < q; ++j) acc += self.grad[i * q + j];
        un->grad[i] += acc;
      }
    }
    if (vn->requires_grad) {
      detail::ensure_grad(vn.get());
      for (int64_t j = 0; j < q; ++j) {
        Real acc = 0;
        for (int64_t i = 0; i < p; ++i) acc += self.grad[i * q + j];
        vn->grad[j] += acc;
      }
    }
  });
  return out;
}

Tensor scale_channels(const Tensor& f, const Tensor& s) {
  check_dim(f.ndim() == 3, "scale_channels: feature map must be [C,H,W]");
  check_dim(s.ndim() == 1 && s.dim(0) == f.dim(0),
            "scale_channels: scale vector must have one entry per channel");
  const int64_t c = f.dim(0), hw = f.dim(1) * f.dim(2);
  Tensor out = Tensor::raw(f.shape());
  for (int64_t i = 0; i < c; ++i) {
    const Real sv = s.data()[i];
    for (int64_t j = 0; j < hw; ++j)
      out.data()[i * hw + j] = f.data()[i * hw + j] * sv;
  }
  attach_backprop(out, {f, s},
                  [fn = f.node(), sn = s.node(), c, hw](Node& self) {
                    if (fn->requires_grad) {
                      detail::ensure_grad(fn.get());
                      for (int64_t i = 0; i < c; ++i) {
                        const Real sv = sn->values[i];
                        for (int64_t j = 0; j < hw; ++j)
                          fn->grad[i * hw + j] += self.grad[i * hw + j] * sv;
                      }
                    }
                    if (sn->requires_grad) {
                      detail::ensure_grad(sn.get());
                      for (int64_t i = 0; i < c; ++i) {
                        Real acc = 0;
                        for (int64_t j = 0; j < hw; ++j)
                          acc += self.grad[i * hw + j] * fn->values[i * hw + j];
                        sn->grad[i] += acc;
                      }
                    }
                  });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_dim(a.ndim() == 2 && b.ndim() == 2, "matmul: expected rank-2 inputs");
  check_dim(a.dim(1) == b.dim(0), "matmul: inner dims differ, " +
                                      shape_str(a.shape()) + " x " +
                                      shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::raw({m, n});
  detail::gemm(detail::Tr::N, detail::Tr::N, m, n, k, a.data(), k, b.data(), n,
               out.data(), n, false);
  attach_backprop(out, {a, b},
                  [an = a.node(), bn = b.node(), m, k, n](Node& self) {
                    if (an->requires_grad) {
                      detail::ensure_grad(an.get());
                      // gA += g * B^T
                      detail::gemm(detail::Tr::N, detail::Tr::T, m, k, n,
                                   self.grad.data(), n, bn->values.data(), n,
                                   an->grad.data(), k, true);
                    }
                    if (bn->requires_grad) {
                      detail::ensure_grad(bn.get());
                      // gB += A^T * g
                      detail::gemm(detail::Tr::T, detail::Tr::N, k, n, m,
                                   an->values.data(), k, self.grad.data(), n,
                                   bn->grad.data(), n, true);
                    }
                  });
  return out;
}

// ---------------- activations ----------------

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](Real x) { return x > 0 ? x : Real(0); },
      [](Real x, Real) { return x > 0 ? Real(1) : Real(0); });
}

Tensor leaky_relu(const Tensor& a, Real alpha) {
  return unary_op(
      a, [alpha](Real x) { return x > 0 ? x : alpha * x; },
      [alpha](Real x, Real) { return x > 0 ? Real(1) : alpha; });
}

Tensor mish(const Tensor& a) {
  return unary_op(
      a, [](Real x) { return x * std::tanh(softplus_stable(x)); },
      [](Real x, Real) {
        const Real t = std::tanh(softplus_stable(x));
        const Real sig = Real(1) / (Real(1) + std::exp(-x));
        return t + x * (Real(1) - t * t) * sig;
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a,
      [](Real x) {
        return x >= 0 ? Real(1) / (Real(1) + std::exp(-x))
                      : std::exp(x) / (Real(1) + std::exp(x));
      },
      [](Real, Real y) { return y * (Real(1) - y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, [](Real x) { return std::tanh(x); },
      [](Real, Real y) { return Real(1) - y * y; });
}

Tensor abs(const Tensor& a) {
  return unary_op(
      a, [](Real x) { return std::fabs(x); },
      [](Real x, Real) { return x > 0 ? Real(1) : (x < 0 ? Real(-1) : Real(0)); });
}

Tensor log(const Tensor& a) {
  return unary_op(
      a, [](Real x) { return std::log(x); },
      [](Real x, Real) { return Real(1) / x; });
}

Tensor clamp(const Tensor& a, Real lo, Real hi) {
  check_arg(lo <= hi, "clamp: lo > hi");
  return unary_op(
      a, [lo, hi](Real x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](Real x, Real) {
        return (x >= lo && x <= hi) ? Real(1) : Real(0);
      });
}

// ---------------- reductions / softmax ----------------

Tensor sum(const Tensor& a) {
  Real acc = 0;
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) acc += a.data()[i];
  Tensor out = Tensor::from({1}, {acc});
  attach_backprop(out, {a}, [an = a.node()](Node& self) {
    detail::ensure_grad(an.get());
    const Real g = self.grad[0];
    for (Real& v : an->grad) v += g;
  });
  return out;
}

Tensor mean(const Tensor& a) {
  const int64_t n = a.numel();
  Real acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += a.data()[i];
  Tensor out = Tensor::from({1}, {acc / Real(n)});
  attach_backprop(out, {a}, [an = a.node(), n](Node& self) {
    detail::ensure_grad(an.get());
    const Real g = self.grad[0] / Real(n);
    for (Real& v : an->grad) v += g;
  });
  return out;
}

Tensor softmax(const Tensor& a, int axis) {
  check_dim(axis >= 0 && axis < a.ndim(), "softmax: axis out of range");
  const Shape& s = a.shape();
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < a.ndim(); ++i) inner *= s[i];
  const int64_t len = s[axis];
  Tensor out = Tensor::raw(a.shape());
  const Real* av = a.data();
  Real* ov = out.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * len * inner + in;
      Real mx = av[base];
      for (int64_t j = 1; j < len; ++j)
        mx = std::max(mx, av[base + j * inner]);
      Real denom = 0;
      for (int64_t j = 0; j < len; ++j) {
        const Real e = std::exp(av[base + j * inner] - mx);
        ov[base + j * inner] = e;
        denom += e;
      }
      for (int64_t j = 0; j < len; ++j) ov[base + j * inner] /= denom;
    }
  }
  attach_backprop(out, {a}, [an = a.node(), outer, inner, len](Node& self) {
    detail::ensure_grad(an.get());
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        const int64_t base = o * len * inner + in;
        Real dot = 0;
        for (int64_t j = 0; j < len; ++j)
          dot += self.grad[base + j * inner] * self.values[base + j * inner];
        for (int64_t j = 0; j < len; ++j)
          an->grad[base + j * inner] +=
              self.values[base + j * inner] *
              (self.grad[base + j * inner] - dot);
      }
    }
  });
  return out;
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  check_dim(a.numel() == b.numel(),
            "cosine_similarity: element counts differ");
  const int64_t n = a.numel();
  Real dot = 0, na2 = 0, nb2 = 0;
  for (int64_t i = 0; i < n; ++i) {
    dot += a.data()[i] * b.data()[i];
    na2 += a.data()[i] * a.data()[i];
    nb2 += b.data()[i] * b.data()[i];
  }
  const Real na = std::sqrt(na2), nb = std::sqrt(nb2);
  const bool degenerate = (na == 0 || nb == 0);
  const Real sim = degenerate ? Real(0) : dot / (na * nb);
  Tensor out = Tensor::from({1}, {sim});
  attach_backprop(out, {a, b},
                  [an = a.node(), bn = b.node(), n, dot, na, nb,
                   degenerate, sim](Node& self) {
                    if (degenerate) {  // flat-zero convention
                      if (an->requires_grad) detail::ensure_grad(an.get());
                      if (bn->requires_grad) detail::ensure_grad(bn.get());
                      return;
                    }
                    const Real g = self.grad[0];
                    if (an->requires_grad) {
                      detail::ensure_grad(an.get());
                      for (int64_t i = 0; i < n; ++i)
                        an->grad[i] += g * (bn->values[i] / (na * nb) -
                                            sim * an->values[i] / (na * na));
                    }
                    if (bn->requires_grad) {
                      detail::ensure_grad(bn.get());
                      for (int64_t i = 0; i < n; ++i)
                        bn->grad[i] += g * (an->values[i] / (na * nb) -
                                            sim * bn->values[i] / (nb * nb));
                    }
                  });
  return out;
}

}  // namespace octevo
