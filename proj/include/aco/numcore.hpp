#pragma once

// Dense f64 tensors with reverse-mode autodiff on an explicit tape, plus
// SGD with momentum. Shapes are explicit; the only broadcasting is
// scalar*tensor and the row-wise bias/affine ops.

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "aco/common.hpp"

namespace aco::num {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d);

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double v);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  int64_t numel() const { return int64_t(data.size()); }
  int dim(int i) const { return shape[size_t(i)]; }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  double item() const;
};

std::string shape_str(const std::vector<int>& s);
int64_t shape_numel(const std::vector<int>& s);

// Ordered parameter store; iteration order is insertion order and is part
// of the determinism contract (checkpoints, sgd state).
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> values;

  void add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
  size_t size() const { return names.size(); }
  ParamSet clone() const;

 private:
  std::unordered_map<std::string, size_t> index_;
};

class Tape {
 public:
  // Leaves
  int leaf(Tensor value, bool requires_grad);
  int constant(Tensor value) { return leaf(std::move(value), false); }

  // Forward ops. All validate shapes and throw AcoError(code="shape_mismatch")
  // naming the op and offending shapes.
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);           // elementwise
  int scale(int a, double s);      // scalar-mul
  int add_bias(int x, int b);      // [B,F] + [F], rows
  int row_affine(int x, int s, int b);  // [B,F]*[F] + [F], rows
  int matmul(int a, int b);        // [m,k]x[k,n]
  int conv2d(int x, int w, int stride);       // x [B,C,H,W], w [O,C,3,3], zero pad 1
  int add_channel_bias(int x, int b);         // [B,O,H,W] + [O]
  int relu(int a);
  int tanh_(int a);
  int abs_(int a);
  int square(int a);
  int mean(int a);                 // full reduce -> scalar
  int sum(int a);                  // full reduce -> scalar
  int l2_normalize(int a);         // rows of [B,F] (or a 1-D vector)
  int log_sum_exp(int a);          // [B,F] -> [B] over axis 1 (or 1-D -> scalar)
  int dot(int a, int b);           // 1-D, scalar out
  int concat(const std::vector<int>& parts);  // along axis 0
  int reshape(int a, std::vector<int> shape);

  // Fused masked contrastive loss over precomputed similarities.
  // zq: [B,dP] (on tape), keys: [K,dP] constants. For query i the loss is
  // lse(den_i) - lse(num_i) with logits z_i.k_j / tau; masks select the
  // numerator/denominator key sets. Queries with an empty numerator or
  // denominator are skipped; the result is the mean over contributing
  // queries (0 if none contribute). n_contributing reports the count.
  int contrastive(int zq, const Tensor& keys,
                  const std::vector<std::vector<char>>& num_mask,
                  const std::vector<std::vector<char>>& den_mask,
                  double tau, int* n_contributing);

  const Tensor& value(int id) const { return nodes_[size_t(id)].value; }
  const Tensor& grad(int id) const;
  bool requires_grad(int id) const { return nodes_[size_t(id)].requires_grad; }
  size_t size() const { return nodes_.size(); }

  // Seeds d(loss)=1 and accumulates gradients into every requires_grad
  // node at or below loss_id. Rejects non-scalar losses.
  void backward(int loss_id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated during backward
    bool requires_grad = false;
    std::function<void()> back;  // empty for leaves / no-grad nodes
  };

  int push(Tensor value, bool requires_grad, std::function<void()> back);
  Tensor& grad_ref(int id);

  std::vector<Node> nodes_;
};

struct SgdState {
  std::vector<Tensor> momentum;  // aligned to ParamSet order, lazily sized
};

// Classic SGD: g += wd*theta; buf = mom*buf + g; theta -= lr*buf.
// Empty grads (numel 0) are treated as zero.
void sgd_step(ParamSet& params, const std::vector<Tensor>& grads, double lr,
              double weight_decay, double momentum_coeff, SgdState& state);

// theta_m' = alpha*theta_m + (1-alpha)*theta; sets must align by name/shape.
void momentum_update(ParamSet& twin, const ParamSet& main, double alpha);

Tensor kaiming_normal_init(std::vector<int> shape, int fan_in, Rng& rng);

// Max over coordinates of |analytic - central difference| /
// (|central difference| + 1e-12). fn builds a scalar loss from the leaf id.
double finite_diff_check(const std::function<int(Tape&, int)>& fn,
                         const Tensor& point, double step);

}  // namespace aco::num
