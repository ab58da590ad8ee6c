#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace octevo {

#ifdef OCTEVO_REAL_FLOAT
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<Real> values;
  std::vector<Real> grad;  // allocated on demand, same length as values
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backprop;
};

void ensure_grad(Node* n);

}  // namespace detail

// Dense row-major tensor with optional reverse-mode gradient tracking.
// A Tensor is a cheap shared handle; values are treated as immutable once
// another op has consumed them (parameter updates happen between steps,
// after the recording graph has been dropped).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Real> values,
                     bool requires_grad = false);
  static Tensor scalar(Real v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t numel() const;
  int64_t dim(int i) const;
  int ndim() const;

  Real* data();
  const Real* data() const;
  std::vector<Real>& values();
  const std::vector<Real>& values() const;
  Real item() const;                 // requires numel() == 1
  Real at(const Shape& idx) const;   // convenience for tests

  bool requires_grad() const;
  void requires_grad(bool on);  // mark a leaf as trainable
  const std::vector<Real>& grad() const;  // throws if never populated
  bool has_grad() const;
  void zero_grad();
  void clear_grad();  // drop the gradient entirely (has_grad() turns false)

  // Copy of the values, cut loose from the recording graph.
  Tensor detach() const;

  // Reverse-mode sweep from a scalar. Visits each reachable recorded node
  // exactly once, in reverse topological order.
  void backward() const;

  // --- plumbing for op implementations ---
  std::shared_ptr<detail::Node> node() const { return node_; }
  static Tensor raw(Shape shape);  // uninitialized-to-zero, untracked
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// RAII guard: ops executed while any guard is alive record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// Attach tracking metadata to an op result if recording is on and at least
// one parent requires grad. Op implementations call this after filling
// out's values.
void attach_backprop(Tensor& out, std::vector<Tensor> parents,
                     std::function<void(detail::Node&)> fn);

// ---------------- elementwise / linear-algebra ops ----------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, Real s);
Tensor mul_scalar(const Tensor& a, Real s);

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor transpose2d(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat0(const Tensor& a, const Tensor& b);  // along axis 0
// E[p,q] = u[p] + v[q] for 1-D u, v
Tensor outer_sum(const Tensor& u, const Tensor& v);
// out[c,h,w] = f[c,h,w] * s[c]
Tensor scale_channels(const Tensor& f, const Tensor& s);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, Real alpha = Real(0.2));
Tensor mish(const Tensor& a);  // x * tanh(softplus(x))
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

// contiguous slice along axis 0 (copying, gradient flows into the range)
Tensor slice0(const Tensor& a, int64_t start, int64_t len);

Tensor softmax(const Tensor& a, int axis);  // max-subtracted, along one axis
Tensor sum(const Tensor& a);                // -> [1]
Tensor mean(const Tensor& a);               // -> [1]
Tensor abs(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp(const Tensor& a, Real lo, Real hi);

// Scalar similarity of two same-length vectors; 0 with zero gradient when
// either norm vanishes.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

// ---------------- conv / pooling ----------------
// input [C_in,H,W], kernel [C_out,C_in,k,k], bias [C_out]
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride = 1, int padding = 0);
// input [C_in,H,W], kernel [C_in,C_out,k,k], bias [C_out]; output spatial is
// exactly stride * input (padding (k-stride)/2 enforced internally).
Tensor conv_transpose2d(const Tensor& input, const Tensor& kernel,
                        const Tensor& bias, int stride);
Tensor maxpool2d(const Tensor& input, int window);
Tensor global_avg_pool(const Tensor& input);  // [C,H,W] -> [C]
// input [...,d_in], weight [d_out,d_in], optional bias [d_out]
Tensor linear(const Tensor& input, const Tensor& weight);
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

// ---------------- gradient checking ----------------
struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::string worst;  // "input i elem j" for diagnostics
};

// Central finite differences against the recorded backward pass. The closure
// must be deterministic and return a scalar.
GradCheckReport grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs, double eps = 1e-3, double tol = 1e-4);

}  // namespace octevo
