#include "aco/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace aco::num {

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

int64_t shape_numel(const std::vector<int>& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  for (int dd : shape)
    if (dd <= 0) fail("bad_shape", "non-positive dimension " + shape_str(shape));
  if (shape_numel(shape) != int64_t(data.size()))
    fail("bad_shape", "shape " + shape_str(shape) + " != data length " +
                          std::to_string(data.size()));
}

Tensor Tensor::zeros(std::vector<int> shape) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(size_t(n), 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(size_t(n), v));
}

double Tensor::item() const {
  if (numel() != 1) fail("bad_shape", "item() on non-scalar " + shape_str(shape));
  return data[0];
}

void ParamSet::add(const std::string& name, Tensor t) {
  if (index_.count(name)) fail("bad_arg", "duplicate parameter " + name);
  index_[name] = names.size();
  names.push_back(name);
  values.push_back(std::move(t));
}

Tensor& ParamSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) fail("bad_arg", "unknown parameter " + name);
  return values[it->second];
}

const Tensor& ParamSet::get(const std::string& name) const {
  return const_cast<ParamSet*>(this)->get(name);
}

bool ParamSet::has(const std::string& name) const { return index_.count(name) > 0; }

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (size_t i = 0; i < names.size(); ++i) out.add(names[i], values[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Tape

int Tape::push(Tensor value, bool requires_grad, std::function<void()> back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = requires_grad ? std::move(back) : std::function<void()>();
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

int Tape::leaf(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, {});
}

Tensor& Tape::grad_ref(int id) {
  Node& n = nodes_[size_t(id)];
  if (n.grad.data.empty()) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

const Tensor& Tape::grad(int id) const {
  return const_cast<Tape*>(this)->grad_ref(id);
}

static void check_same(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    fail("shape_mismatch", std::string(op) + ": " + shape_str(a.shape) + " vs " +
                               shape_str(b.shape));
}

int Tape::add(int a, int b) {
  const Tensor &ta = value(a), &tb = value(b);
  check_same("add", ta, tb);
  Tensor out = ta;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
  bool rg = requires_grad(a) || requires_grad(b);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, a, b]() {
      const Tensor& g = grad_ref(id);
      if (requires_grad(a)) {
        Tensor& ga = grad_ref(a);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
      }
      if (requires_grad(b)) {
        Tensor& gb = grad_ref(b);
        for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i];
      }
    };
  return id;
}

int Tape::sub(int a, int b) {
  const Tensor &ta = value(a), &tb = value(b);
  check_same("sub", ta, tb);
  Tensor out = ta;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
  bool rg = requires_grad(a) || requires_grad(b);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, a, b]() {
      const Tensor& g = grad_ref(id);
      if (requires_grad(a)) {
        Tensor& ga = grad_ref(a);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
      }
      if (requires_grad(b)) {
        Tensor& gb = grad_ref(b);
        for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
      }
    };
  return id;
}

int Tape::mul(int a, int b) {
  const Tensor &ta = value(a), &tb = value(b);
  check_same("mul", ta, tb);
  Tensor out = ta;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  bool rg = requires_grad(a) || requires_grad(b);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, a, b]() {
      const Tensor& g = grad_ref(id);
      const Tensor &va = value(a), &vb = value(b);
      if (requires_grad(a)) {
        Tensor& ga = grad_ref(a);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * vb.data[i];
      }
      if (requires_grad(b)) {
        Tensor& gb = grad_ref(b);
        for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * va.data[i];
      }
    };
  return id;
}

int Tape::scale(int a, double s) {
  Tensor out = value(a);
  for (double& v : out.data) v *= s;
  bool rg = requires_grad(a);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, a, s]() {
      const Tensor& g = grad_ref(id);
      Tensor& ga = grad_ref(a);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * s;
    };
  return id;
}

int Tape::add_bias(int x, int b) {
  const Tensor &tx = value(x), &tb = value(b);
  if (tx.shape.size() != 2 || tb.shape.size() != 1 || tx.shape[1] != tb.shape[0])
    fail("shape_mismatch",
         "add_bias: " + shape_str(tx.shape) + " + " + shape_str(tb.shape));
  int B = tx.shape[0], F = tx.shape[1];
  Tensor out = tx;
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < F; ++j) out.data[size_t(i) * F + j] += tb.data[size_t(j)];
  bool rg = requires_grad(x) || requires_grad(b);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, x, b, B, F]() {
      const Tensor& g = grad_ref(id);
      if (requires_grad(x)) {
        Tensor& gx = grad_ref(x);
        for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
      }
      if (requires_grad(b)) {
        Tensor& gb = grad_ref(b);
        for (int i = 0; i < B; ++i)
          for (int j = 0; j < F; ++j) gb.data[size_t(j)] += g.data[size_t(i) * F + j];
      }
    };
  return id;
}

int Tape::row_affine(int x, int s, int b) {
  const Tensor &tx = value(x), &ts = value(s), &tb = value(b);
  if (tx.shape.size() != 2 || ts.shape.size() != 1 || tb.shape.size() != 1 ||
      tx.shape[1] != ts.shape[0] || tx.shape[1] != tb.shape[0])
    fail("shape_mismatch", "row_affine: " + shape_str(tx.shape) + " * " +
                               shape_str(ts.shape) + " + " + shape_str(tb.shape));
  int B = tx.shape[0], F = tx.shape[1];
  Tensor out = tx;
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < F; ++j) {
      double& v = out.data[size_t(i) * F + j];
      v = v * ts.data[size_t(j)] + tb.data[size_t(j)];
    }
  bool rg = requires_grad(x) || requires_grad(s) || requires_grad(b);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, x, s, b, B, F]() {
      const Tensor& g = grad_ref(id);
      const Tensor &vx = value(x), &vs = value(s);
      if (requires_grad(x)) {
        Tensor& gx = grad_ref(x);
        for (int i = 0; i < B; ++i)
          for (int j = 0; j < F; ++j)
            gx.data[size_t(i) * F + j] += g.data[size_t(i) * F + j] * vs.data[size_t(j)];
      }
      if (requires_grad(s)) {
        Tensor& gs = grad_ref(s);
        for (int i = 0; i < B; ++i)
          for (int j = 0; j < F; ++j)
            gs.data[size_t(j)] += g.data[size_t(i) * F + j] * vx.data[size_t(i) * F + j];
      }
      if (requires_grad(b)) {
        Tensor& gb = grad_ref(b);
        for (int i = 0; i < B; ++i)
          for (int j = 0; j < F; ++j) gb.data[size_t(j)] += g.data[size_t(i) * F + j];
      }
    };
  return id;
}

int Tape::matmul(int a, int b) {
  const Tensor &ta = value(a), &tb = value(b);
  if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0])
    fail("shape_mismatch",
         "matmul: " + shape_str(ta.shape) + " x " + shape_str(tb.shape));
  int m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double av = ta.data[size_t(i) * k + p];
      if (av == 0.0) continue;
      const double* brow = &tb.data[size_t(p) * n];
      double* orow = &out.data[size_t(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  bool rg = requires_grad(a) || requires_grad(b);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, a, b, m, k, n]() {
      const Tensor& g = grad_ref(id);
      const Tensor &va = value(a), &vb = value(b);
      if (requires_grad(a)) {
        Tensor& ga = grad_ref(a);  // dA = G * B^T
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = &g.data[size_t(i) * n];
            const double* brow = &vb.data[size_t(p) * n];
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga.data[size_t(i) * k + p] += acc;
          }
      }
      if (requires_grad(b)) {
        Tensor& gb = grad_ref(b);  // dB = A^T * G
        for (int p = 0; p < k; ++p)
          for (int i = 0; i < m; ++i) {
            double av = va.data[size_t(i) * k + p];
            if (av == 0.0) continue;
            const double* grow = &g.data[size_t(i) * n];
            double* brow = &gb.data[size_t(p) * n];
            for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
          }
      }
    };
  return id;
}

int Tape::conv2d(int x, int w, int stride) {
  const Tensor &tx = value(x), &tw = value(w);
  if (tx.shape.size() != 4 || tw.shape.size() != 4 || tw.shape[2] != 3 ||
      tw.shape[3] != 3 || tx.shape[1] != tw.shape[1])
    fail("shape_mismatch",
         "conv2d: " + shape_str(tx.shape) + " * " + shape_str(tw.shape));
  if (stride != 1 && stride != 2) fail("bad_arg", "conv2d: stride must be 1 or 2");
  int B = tx.shape[0], C = tx.shape[1], H = tx.shape[2], W = tx.shape[3];
  int O = tw.shape[0];
  int Ho = (H + 2 - 3) / stride + 1;
  int Wo = (W + 2 - 3) / stride + 1;
  Tensor out = Tensor::zeros({B, O, Ho, Wo});
  auto xat = [&](int bi, int c, int i, int j) {
    return tx.data[((size_t(bi) * C + c) * H + i) * W + j];
  };
  for (int bi = 0; bi < B; ++bi)
    for (int o = 0; o < O; ++o)
      for (int oi = 0; oi < Ho; ++oi)
        for (int oj = 0; oj < Wo; ++oj) {
          double acc = 0.0;
          for (int c = 0; c < C; ++c)
            for (int ki = 0; ki < 3; ++ki) {
              int ii = oi * stride + ki - 1;
              if (ii < 0 || ii >= H) continue;
              for (int kj = 0; kj < 3; ++kj) {
                int jj = oj * stride + kj - 1;
                if (jj < 0 || jj >= W) continue;
                acc += xat(bi, c, ii, jj) *
                       tw.data[((size_t(o) * C + c) * 3 + ki) * 3 + kj];
              }
            }
          out.data[((size_t(bi) * O + o) * Ho + oi) * Wo + oj] = acc;
        }
  bool rg = requires_grad(x) || requires_grad(w);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, x, w, stride, B, C, H, W, O, Ho, Wo]() {
      const Tensor& g = grad_ref(id);
      const Tensor &vx = value(x), &vw = value(w);
      bool need_x = requires_grad(x), need_w = requires_grad(w);
      Tensor* gx = need_x ? &grad_ref(x) : nullptr;
      Tensor* gw = need_w ? &grad_ref(w) : nullptr;
      for (int bi = 0; bi < B; ++bi)
        for (int o = 0; o < O; ++o)
          for (int oi = 0; oi < Ho; ++oi)
            for (int oj = 0; oj < Wo; ++oj) {
              double go = g.data[((size_t(bi) * O + o) * Ho + oi) * Wo + oj];
              if (go == 0.0) continue;
              for (int c = 0; c < C; ++c)
                for (int ki = 0; ki < 3; ++ki) {
                  int ii = oi * stride + ki - 1;
                  if (ii < 0 || ii >= H) continue;
                  for (int kj = 0; kj < 3; ++kj) {
                    int jj = oj * stride + kj - 1;
                    if (jj < 0 || jj >= W) continue;
                    size_t xi = ((size_t(bi) * C + c) * H + ii) * W + jj;
                    size_t wi = ((size_t(o) * C + c) * 3 + ki) * 3 + kj;
                    if (need_x) gx->data[xi] += go * vw.data[wi];
                    if (need_w) gw->data[wi] += go * vx.data[xi];
                  }
                }
            }
    };
  return id;
}

int Tape::add_channel_bias(int x, int b) {
  const Tensor &tx = value(x), &tb = value(b);
  if (tx.shape.size() != 4 || tb.shape.size() != 1 || tx.shape[1] != tb.shape[0])
    fail("shape_mismatch",
         "add_channel_bias: " + shape_str(tx.shape) + " + " + shape_str(tb.shape));
  int B = tx.shape[0], O = tx.shape[1];
  int plane = tx.shape[2] * tx.shape[3];
  Tensor out = tx;
  for (int bi = 0; bi < B; ++bi)
    for (int o = 0; o < O; ++o) {
      double bv = tb.data[size_t(o)];
      double* p = &out.data[(size_t(bi) * O + o) * plane];
      for (int i = 0; i < plane; ++i) p[i] += bv;
    }
  bool rg = requires_grad(x) || requires_grad(b);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, x, b, B, O, plane]() {
      const Tensor& g = grad_ref(id);
      if (requires_grad(x)) {
        Tensor& gx = grad_ref(x);
        for (size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i];
      }
      if (requires_grad(b)) {
        Tensor& gb = grad_ref(b);
        for (int bi = 0; bi < B; ++bi)
          for (int o = 0; o < O; ++o) {
            const double* p = &g.data[(size_t(bi) * O + o) * plane];
            double acc = 0.0;
            for (int i = 0; i < plane; ++i) acc += p[i];
            gb.data[size_t(o)] += acc;
          }
      }
    };
  return id;
}

int Tape::relu(int a) {
  Tensor out = value(a);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  bool rg = requires_grad(a);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, a]() {
      const Tensor& g = grad_ref(id);
      const Tensor& va = value(a);
      Tensor& ga = grad_ref(a);
      for (size_t i = 0; i < g.data.size(); ++i)
        if (va.data[i] > 0.0) ga.data[i] += g.data[i];
    };
  return id;
}

int Tape::tanh_(int a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::tanh(v);
  bool rg = requires_grad(a);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, a]() {
      const Tensor& g = grad_ref(id);
      const Tensor& y = value(id);
      Tensor& ga = grad_ref(a);
      for (size_t i = 0; i < g.data.size(); ++i)
        ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
    };
  return id;
}

int Tape::abs_(int a) {
  Tensor out = value(a);
  for (double& v : out.data) v = std::fabs(v);
  bool rg = requires_grad(a);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, a]() {
      const Tensor& g = grad_ref(id);
      const Tensor& va = value(a);
      Tensor& ga = grad_ref(a);
      for (size_t i = 0; i < g.data.size(); ++i) {
        double s = va.data[i] > 0.0 ? 1.0 : (va.data[i] < 0.0 ? -1.0 : 0.0);
        ga.data[i] += g.data[i] * s;
      }
    };
  return id;
}

int Tape::square(int a) {
  Tensor out = value(a);
  for (double& v : out.data) v = v * v;
  bool rg = requires_grad(a);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, a]() {
      const Tensor& g = grad_ref(id);
      const Tensor& va = value(a);
      Tensor& ga = grad_ref(a);
      for (size_t i = 0; i < g.data.size(); ++i)
        ga.data[i] += g.data[i] * 2.0 * va.data[i];
    };
  return id;
}

int Tape::sum(int a) {
  const Tensor& ta = value(a);
  double acc = 0.0;
  for (double v : ta.data) acc += v;
  bool rg = requires_grad(a);
  int id = push(Tensor::scalar(acc), rg, {});
  if (rg)
    nodes_.back().back = [this, id, a]() {
      double g = grad_ref(id).data[0];
      Tensor& ga = grad_ref(a);
      for (double& v : ga.data) v += g;
    };
  return id;
}

int Tape::mean(int a) {
  const Tensor& ta = value(a);
  double n = double(ta.numel());
  double acc = 0.0;
  for (double v : ta.data) acc += v;
  bool rg = requires_grad(a);
  int id = push(Tensor::scalar(acc / n), rg, {});
  if (rg)
    nodes_.back().back = [this, id, a, n]() {
      double g = grad_ref(id).data[0] / n;
      Tensor& ga = grad_ref(a);
      for (double& v : ga.data) v += g;
    };
  return id;
}

int Tape::l2_normalize(int a) {
  const Tensor& ta = value(a);
  int B, F;
  if (ta.shape.size() == 1) {
    B = 1;
    F = ta.shape[0];
  } else if (ta.shape.size() == 2) {
    B = ta.shape[0];
    F = ta.shape[1];
  } else {
    fail("shape_mismatch", "l2_normalize: rank must be 1 or 2, got " +
                               shape_str(ta.shape));
  }
  Tensor out = ta;
  std::vector<double> norms(size_t(B));
  for (int i = 0; i < B; ++i) {
    double n2 = 0.0;
    for (int j = 0; j < F; ++j) {
      double v = ta.data[size_t(i) * F + j];
      n2 += v * v;
    }
    double n = std::sqrt(n2);
    norms[size_t(i)] = n;
    double denom = n + 1e-12;  // zero-vector guard
    for (int j = 0; j < F; ++j) out.data[size_t(i) * F + j] /= denom;
  }
  bool rg = requires_grad(a);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, a, B, F, norms]() {
      const Tensor& g = grad_ref(id);
      const Tensor& va = value(a);
      Tensor& ga = grad_ref(a);
      for (int i = 0; i < B; ++i) {
        double n = norms[size_t(i)];
        double denom = n + 1e-12;
        double xg = 0.0;
        for (int j = 0; j < F; ++j)
          xg += va.data[size_t(i) * F + j] * g.data[size_t(i) * F + j];
        for (int j = 0; j < F; ++j) {
          double gi = g.data[size_t(i) * F + j] / denom;
          if (n > 1e-12)
            gi -= va.data[size_t(i) * F + j] * xg / (n * denom * denom);
          ga.data[size_t(i) * F + j] += gi;
        }
      }
    };
  return id;
}

int Tape::log_sum_exp(int a) {
  const Tensor& ta = value(a);
  int B, F;
  std::vector<int> out_shape;
  if (ta.shape.size() == 1) {
    B = 1;
    F = ta.shape[0];
    out_shape = {1};
  } else if (ta.shape.size() == 2) {
    B = ta.shape[0];
    F = ta.shape[1];
    out_shape = {B};
  } else {
    fail("shape_mismatch",
         "log_sum_exp: rank must be 1 or 2, got " + shape_str(ta.shape));
  }
  Tensor out = Tensor::zeros(out_shape);
  for (int i = 0; i < B; ++i) {
    const double* row = &ta.data[size_t(i) * F];
    double m = row[0];
    for (int j = 1; j < F; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (int j = 0; j < F; ++j) s += std::exp(row[j] - m);
    out.data[size_t(i)] = m + std::log(s);
  }
  bool rg = requires_grad(a);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, a, B, F]() {
      const Tensor& g = grad_ref(id);
      const Tensor& va = value(a);
      const Tensor& y = value(id);
      Tensor& ga = grad_ref(a);
      for (int i = 0; i < B; ++i)
        for (int j = 0; j < F; ++j)
          ga.data[size_t(i) * F + j] +=
              g.data[size_t(i)] * std::exp(va.data[size_t(i) * F + j] - y.data[size_t(i)]);
    };
  return id;
}

int Tape::dot(int a, int b) {
  const Tensor &ta = value(a), &tb = value(b);
  if (ta.shape.size() != 1 || tb.shape.size() != 1 || ta.shape != tb.shape)
    fail("shape_mismatch",
         "dot: " + shape_str(ta.shape) + " . " + shape_str(tb.shape));
  double acc = 0.0;
  for (size_t i = 0; i < ta.data.size(); ++i) acc += ta.data[i] * tb.data[i];
  bool rg = requires_grad(a) || requires_grad(b);
  int id = push(Tensor::scalar(acc), rg, {});
  if (rg)
    nodes_.back().back = [this, id, a, b]() {
      double g = grad_ref(id).data[0];
      const Tensor &va = value(a), &vb = value(b);
      if (requires_grad(a)) {
        Tensor& ga = grad_ref(a);
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g * vb.data[i];
      }
      if (requires_grad(b)) {
        Tensor& gb = grad_ref(b);
        for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g * va.data[i];
      }
    };
  return id;
}

int Tape::concat(const std::vector<int>& parts) {
  if (parts.empty()) fail("bad_arg", "concat: empty part list");
  const Tensor& first = value(parts[0]);
  std::vector<int> tail(first.shape.begin() + 1, first.shape.end());
  int rows = 0;
  bool rg = false;
  for (int p : parts) {
    const Tensor& t = value(p);
    std::vector<int> pt(t.shape.begin() + 1, t.shape.end());
    if (pt != tail || t.shape.size() != first.shape.size())
      fail("shape_mismatch", "concat: incompatible " + shape_str(t.shape) +
                                 " vs " + shape_str(first.shape));
    rows += t.shape[0];
    rg = rg || requires_grad(p);
  }
  std::vector<int> out_shape = first.shape;
  out_shape[0] = rows;
  Tensor out = Tensor::zeros(out_shape);
  size_t off = 0;
  for (int p : parts) {
    const Tensor& t = value(p);
    std::copy(t.data.begin(), t.data.end(), out.data.begin() + long(off));
    off += t.data.size();
  }
  int id = push(std::move(out), rg, {});
  if (rg) {
    std::vector<int> ps = parts;
    nodes_.back().back = [this, id, ps]() {
      const Tensor& g = grad_ref(id);
      size_t off = 0;
      for (int p : ps) {
        size_t n = value(p).data.size();
        if (requires_grad(p)) {
          Tensor& gp = grad_ref(p);
          for (size_t i = 0; i < n; ++i) gp.data[i] += g.data[off + i];
        }
        off += n;
      }
    };
  }
  return id;
}

int Tape::reshape(int a, std::vector<int> shape) {
  const Tensor& ta = value(a);
  if (shape_numel(shape) != ta.numel())
    fail("shape_mismatch", "reshape: " + shape_str(ta.shape) + " -> " +
                               shape_str(shape));
  Tensor out(std::move(shape), ta.data);
  bool rg = requires_grad(a);
  int id = push(std::move(out), rg, {});
  if (rg)
    nodes_.back().back = [this, id, a]() {
      const Tensor& g = grad_ref(id);
      Tensor& ga = grad_ref(a);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    };
  return id;
}

int Tape::contrastive(int zq, const Tensor& keys,
                      const std::vector<std::vector<char>>& num_mask,
                      const std::vector<std::vector<char>>& den_mask,
                      double tau, int* n_contributing) {
  const Tensor& tq = value(zq);
  if (tq.shape.size() != 2 || keys.shape.size() != 2 ||
      tq.shape[1] != keys.shape[1])
    fail("shape_mismatch",
         "contrastive: " + shape_str(tq.shape) + " vs keys " + shape_str(keys.shape));
  if (tau <= 0.0) fail("bad_arg", "contrastive: tau must be > 0");
  int B = tq.shape[0], K = keys.shape[0], D = tq.shape[1];
  if (int(num_mask.size()) != B || int(den_mask.size()) != B)
    fail("bad_arg", "contrastive: mask batch size mismatch");
  for (int i = 0; i < B; ++i)
    if (int(num_mask[size_t(i)].size()) != K || int(den_mask[size_t(i)].size()) != K)
      fail("bad_arg", "contrastive: mask key-count mismatch");

  // logits s_ij = z_i . k_j / tau
  std::vector<double> sim(size_t(B) * K);
  for (int i = 0; i < B; ++i)
    for (int j = 0; j < K; ++j) {
      double acc = 0.0;
      const double* q = &tq.data[size_t(i) * D];
      const double* k = &keys.data[size_t(j) * D];
      for (int d = 0; d < D; ++d) acc += q[d] * k[d];
      sim[size_t(i) * K + j] = acc / tau;
    }

  auto lse = [&](int i, const std::vector<char>& mask, bool* any) {
    double m = -1e300;
    for (int j = 0; j < K; ++j)
      if (mask[size_t(j)]) m = std::max(m, sim[size_t(i) * K + j]);
    if (m == -1e300) {
      *any = false;
      return 0.0;
    }
    *any = true;
    double s = 0.0;
    for (int j = 0; j < K; ++j)
      if (mask[size_t(j)]) s += std::exp(sim[size_t(i) * K + j] - m);
    return m + std::log(s);
  };

  std::vector<char> contributes(size_t(B), 0);
  int n_contrib = 0;
  double total = 0.0;
  std::vector<double> lse_num(size_t(B)), lse_den(size_t(B));
  for (int i = 0; i < B; ++i) {
    bool any_num = false, any_den = false;
    double ln = lse(i, num_mask[size_t(i)], &any_num);
    double ld = lse(i, den_mask[size_t(i)], &any_den);
    if (!any_num || !any_den) continue;
    contributes[size_t(i)] = 1;
    ++n_contrib;
    lse_num[size_t(i)] = ln;
    lse_den[size_t(i)] = ld;
    total += ld - ln;  // -log(num/den)
  }
  if (n_contributing) *n_contributing = n_contrib;
  double loss = n_contrib > 0 ? total / n_contrib : 0.0;

  bool rg = requires_grad(zq);
  int id = push(Tensor::scalar(loss), rg, {});
  if (rg && n_contrib > 0) {
    Tensor keys_copy = keys;
    auto nm = num_mask;
    auto dm = den_mask;
    nodes_.back().back = [this, id, zq, keys_copy, nm, dm, tau, B, K, D, sim,
                          lse_num, lse_den, contributes, n_contrib]() {
      double g = grad_ref(id).data[0] / n_contrib;
      Tensor& gq = grad_ref(zq);
      for (int i = 0; i < B; ++i) {
        if (!contributes[size_t(i)]) continue;
        for (int j = 0; j < K; ++j) {
          double w = 0.0;
          if (dm[size_t(i)][size_t(j)])
            w += std::exp(sim[size_t(i) * K + j] - lse_den[size_t(i)]);
          if (nm[size_t(i)][size_t(j)])
            w -= std::exp(sim[size_t(i) * K + j] - lse_num[size_t(i)]);
          if (w == 0.0) continue;
          double coef = g * w / tau;
          const double* k = &keys_copy.data[size_t(j) * D];
          double* q = &gq.data[size_t(i) * D];
          for (int d = 0; d < D; ++d) q[d] += coef * k[d];
        }
      }
    };
  }
  return id;
}

void Tape::backward(int loss_id) {
  if (loss_id < 0 || size_t(loss_id) >= nodes_.size())
    fail("bad_arg", "backward: invalid loss id");
  Node& loss = nodes_[size_t(loss_id)];
  if (loss.value.numel() != 1)
    fail("bad_arg", "backward: loss must be scalar, got " +
                        shape_str(loss.value.shape));
  grad_ref(loss_id).data[0] = 1.0;
  for (int i = loss_id; i >= 0; --i) {
    Node& n = nodes_[size_t(i)];
    if (n.requires_grad && n.back && !n.grad.data.empty()) n.back();
  }
}

// ---------------------------------------------------------------------------

void sgd_step(ParamSet& params, const std::vector<Tensor>& grads, double lr,
              double weight_decay, double momentum_coeff, SgdState& state) {
  if (grads.size() != params.values.size())
    fail("bad_arg", "sgd_step: grads not aligned to params");
  if (state.momentum.size() != params.values.size())
    state.momentum.assign(params.values.size(), Tensor());
  for (size_t p = 0; p < params.values.size(); ++p) {
    Tensor& theta = params.values[p];
    Tensor& buf = state.momentum[p];
    if (buf.data.empty()) buf = Tensor::zeros(theta.shape);
    const bool has_grad = !grads[p].data.empty();
    if (has_grad && !grads[p].same_shape(theta))
      fail("shape_mismatch", "sgd_step: grad shape for " + params.names[p]);
    for (size_t i = 0; i < theta.data.size(); ++i) {
      double g = has_grad ? grads[p].data[i] : 0.0;
      g += weight_decay * theta.data[i];
      buf.data[i] = momentum_coeff * buf.data[i] + g;
      theta.data[i] -= lr * buf.data[i];
    }
  }
}

void momentum_update(ParamSet& twin, const ParamSet& main, double alpha) {
  if (twin.names != main.names)
    fail("bad_arg", "momentum_update: parameter sets not aligned");
  for (size_t p = 0; p < twin.values.size(); ++p) {
    Tensor& tm = twin.values[p];
    const Tensor& t = main.values[p];
    if (!tm.same_shape(t))
      fail("shape_mismatch", "momentum_update: shape for " + twin.names[p]);
    for (size_t i = 0; i < tm.data.size(); ++i)
      tm.data[i] = alpha * tm.data[i] + (1.0 - alpha) * t.data[i];
  }
}

Tensor kaiming_normal_init(std::vector<int> shape, int fan_in, Rng& rng) {
  if (fan_in < 1) fail("bad_arg", "kaiming_normal_init: fan_in must be >= 1");
  double std = std::sqrt(2.0 / double(fan_in));
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = std * rng.normal();
  return t;
}

double finite_diff_check(const std::function<int(Tape&, int)>& fn,
                         const Tensor& point, double step) {
  Tape tape;
  int x = tape.leaf(point, true);
  int loss = fn(tape, x);
  tape.backward(loss);
  Tensor analytic = tape.grad(x);

  double max_err = 0.0;
  Tensor probe = point;
  for (size_t i = 0; i < probe.data.size(); ++i) {
    double saved = probe.data[i];
    probe.data[i] = saved + step;
    Tape tp;
    double up = tp.value(fn(tp, tp.leaf(probe, false))).item();
    probe.data[i] = saved - step;
    Tape tm;
    double dn = tm.value(fn(tm, tm.leaf(probe, false))).item();
    probe.data[i] = saved;
    double fd = (up - dn) / (2.0 * step);
    double err = std::fabs(analytic.data[i] - fd) / (std::fabs(fd) + 1e-12);
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace aco::num
