#include "streamtts/numerics/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "streamtts/error.hpp"

namespace streamtts::num {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::constant_ref(const Tensor& value) {
  Node n;
  n.external = &value;
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::variable_ref(const Tensor& value) {
  Node n;
  n.external = &value;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, Backward backward) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                [this](std::size_t p) { return nodes_[p].requires_grad; });
  if (n.requires_grad) {
    n.parents = std::move(parents);
    n.backward = std::move(backward);
  }
  return push(std::move(n));
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(value(v.id()).shape(), 0.0);
  return n.grad;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(value(id).shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw StateError("backward() on a foreign variable");
  if (value(loss.id()).size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got " +
                         shape_string(value(loss.id()).shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  visits_ = 0;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
    ++visits_;
  }
}

namespace {

Tape& tape_of(Var a, Var b) {
  if (!a.valid() || a.tape() != b.tape()) {
    throw StateError("operands recorded on different tapes");
  }
  return *a.tape();
}

enum class Broadcast { kNone, kRow };

Broadcast check_elementwise(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kNone;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_string(a.shape()) + " and " + shape_string(b.shape()));
}

template <typename F, typename D>
Var unary(Var a, F f, D df) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  return t.record(std::move(y), {ia}, [ia, df](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    const Tensor& xv = tp.value(ia);
    const Tensor& yv = tp.value(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ: " + shape_string(av.shape()) +
                         " x " + shape_string(bv.shape()));
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(matmul_plain(av, bv), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    const Tensor& A = tp.value(ia);
    const Tensor& B = tp.value(ib);
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    const double* gp = g.values().data();
    if (tp.requires_grad(ia)) {
      double* ga = tp.grad_buffer(ia).values().data();  // g * B^T
      const double* bp = B.values().data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = gp + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = bp + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (tp.requires_grad(ib)) {
      double* gb = tp.grad_buffer(ib).values().data();  // A^T * g
      const double* ap = A.values().data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = gp + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = ap[i * k + p];
          if (av == 0.0) continue;
          double* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast bc = check_elementwise("add", av, bv);
  Tensor y = av;
  const std::size_t n = av.cols();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bc == Broadcast::kRow ? bv[i % n] : bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(y), {ia, ib}, [ia, ib, bc, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gb[bc == Broadcast::kRow ? i % n : i] += g[i];
      }
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast bc = check_elementwise("sub", av, bv);
  Tensor y = av;
  const std::size_t n = av.cols();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bc == Broadcast::kRow ? bv[i % n] : bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(y), {ia, ib}, [ia, ib, bc, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gb[bc == Broadcast::kRow ? i % n : i] -= g[i];
      }
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast bc = check_elementwise("mul", av, bv);
  Tensor y = av;
  const std::size_t n = av.cols();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bc == Broadcast::kRow ? bv[i % n] : bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(y), {ia, ib}, [ia, ib, bc, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    const Tensor& A = tp.value(ia);
    const Tensor& B = tp.value(ib);
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * (bc == Broadcast::kRow ? B[i % n] : B[i]);
      }
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gb[bc == Broadcast::kRow ? i % n : i] += g[i] * A[i];
      }
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var abs(Var a) {
  return unary(a, [](double x) { return std::fabs(x); },
               [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y(x.shape());
  for (std::size_t r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, x(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (y(r, c) = std::exp(x(r, c) - mx));
    for (std::size_t c = 0; c < n; ++c) y(r, c) /= z;
  }
  const std::size_t ia = a.id();
  return t.record(std::move(y), {ia}, [ia, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    const Tensor& yv = tp.value(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += g(r, c) * yv(r, c);
      for (std::size_t c = 0; c < n; ++c) ga(r, c) += yv(r, c) * (g(r, c) - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y(x.shape());
  for (std::size_t r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, x(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += std::exp(x(r, c) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < n; ++c) y(r, c) = x(r, c) - lse;
  }
  const std::size_t ia = a.id();
  return t.record(std::move(y), {ia}, [ia, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    const Tensor& yv = tp.value(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < m; ++r) {
      double gs = 0.0;
      for (std::size_t c = 0; c < n; ++c) gs += g(r, c);
      for (std::size_t c = 0; c < n; ++c) ga(r, c) += g(r, c) - std::exp(yv(r, c)) * gs;
    }
  });
}

Var logsumexp_rows(Var a) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({m, 1});
  for (std::size_t r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) mx = std::max(mx, x(r, c));
    if (mx == -std::numeric_limits<double>::infinity()) {
      y[r] = mx;
      continue;
    }
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += std::exp(x(r, c) - mx);
    y[r] = mx + std::log(z);
  }
  const std::size_t ia = a.id();
  return t.record(std::move(y), {ia}, [ia, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    const Tensor& yv = tp.value(self);
    const Tensor& xv = tp.value(ia);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < m; ++r) {
      if (!std::isfinite(yv[r])) continue;
      for (std::size_t c = 0; c < n; ++c) ga(r, c) += g[r] * std::exp(xv(r, c) - yv[r]);
    }
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const std::size_t ia = a.id();
  return t.record(Tensor::scalar(s), {ia}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad_ref(self)[0];
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean(Var a) {
  const auto n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var sum_cols(Var a) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({m, 1});
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += x(r, c);
    y[r] = s;
  }
  const std::size_t ia = a.id();
  return t.record(std::move(y), {ia}, [ia, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) ga(r, c) += g[r];
    }
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor y({n, m});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) y(c, r) = x(r, c);
  }
  const std::size_t ia = a.id();
  return t.record(std::move(y), {ia}, [ia, m, n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < n; ++c) ga(r, c) += g(c, r);
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  if (begin > end || end > x.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + shape_string(x.shape()));
  }
  const std::size_t n = x.cols();
  std::vector<double> data(x.values().begin() + static_cast<long>(begin * n),
                           x.values().begin() + static_cast<long>(end * n));
  const std::size_t ia = a.id();
  return t.record(Tensor({end - begin, n}, std::move(data)), {ia},
                  [ia, begin, n](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad_ref(self);
                    Tensor& ga = tp.grad_buffer(ia);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  if (begin > end || end > x.cols()) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + shape_string(x.shape()));
  }
  const std::size_t m = x.rows(), w = end - begin;
  Tensor y({m, w});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < w; ++c) y(r, c) = x(r, begin + c);
  }
  const std::size_t ia = a.id();
  return t.record(std::move(y), {ia}, [ia, begin, m, w](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < w; ++c) ga(r, begin + c) += g(r, c);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  Tape& t = *parts[0].tape();
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw StateError("operands recorded on different tapes");
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column count " + std::to_string(p.cols()) +
                           " != " + std::to_string(n));
    }
    m += p.rows();
    ids.push_back(p.id());
  }
  std::vector<double> data;
  data.reserve(m * n);
  for (const Var& p : parts) {
    data.insert(data.end(), p.value().values().begin(), p.value().values().end());
  }
  auto parent_ids = ids;
  return t.record(Tensor({m, n}, std::move(data)), std::move(parent_ids),
                  [ids](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad_ref(self);
                    std::size_t off = 0;
                    for (std::size_t id : ids) {
                      const std::size_t len = tp.value(id).size();
                      if (tp.requires_grad(id)) {
                        Tensor& gp = tp.grad_buffer(id);
                        for (std::size_t i = 0; i < len; ++i) gp[i] += g[off + i];
                      }
                      off += len;
                    }
                  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  Tape& t = *parts[0].tape();
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw StateError("operands recorded on different tapes");
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row count " + std::to_string(p.rows()) +
                           " != " + std::to_string(m));
    }
    n += p.cols();
    ids.push_back(p.id());
  }
  Tensor y({m, n});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t c = 0; c < v.cols(); ++c) y(r, off + c) = v(r, c);
    }
    off += v.cols();
  }
  auto parent_ids = ids;
  return t.record(std::move(y), std::move(parent_ids), [ids, m](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const std::size_t w = tp.value(id).cols();
      if (tp.requires_grad(id)) {
        Tensor& gp = tp.grad_buffer(id);
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t c = 0; c < w; ++c) gp(r, c) += g(r, off + c);
        }
      }
      off += w;
    }
  });
}

Var gather_rows(Var table, std::span<const std::size_t> index) {
  Tape& t = *table.tape();
  const Tensor& x = table.value();
  const std::size_t n = x.cols();
  Tensor y({index.size(), n});
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= x.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(index[k]) +
                           " out of range for " + shape_string(x.shape()));
    }
    for (std::size_t c = 0; c < n; ++c) y(k, c) = x(index[k], c);
  }
  const std::size_t ia = table.id();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return t.record(std::move(y), {ia}, [ia, idx = std::move(idx), n](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      for (std::size_t c = 0; c < n; ++c) ga(idx[k], c) += g(k, c);
    }
  });
}

Var pick(Var a, std::span<const std::pair<std::size_t, std::size_t>> at) {
  Tape& t = *a.tape();
  const Tensor& x = a.value();
  Tensor y({at.size(), 1});
  for (std::size_t k = 0; k < at.size(); ++k) {
    if (at[k].first >= x.rows() || at[k].second >= x.cols()) {
      throw DimensionError("pick: entry out of range for " + shape_string(x.shape()));
    }
    y[k] = x(at[k].first, at[k].second);
  }
  const std::size_t ia = a.id();
  std::vector<std::pair<std::size_t, std::size_t>> where(at.begin(), at.end());
  return t.record(std::move(y), {ia}, [ia, where = std::move(where)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_ref(self);
    Tensor& ga = tp.grad_buffer(ia);
    for (std::size_t k = 0; k < where.size(); ++k) ga(where[k].first, where[k].second) += g[k];
  });
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x, gain);
  tape_of(x, bias);
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw DimensionError("layer_norm_rows: gain/bias width must be " + std::to_string(n));
  }
  Tensor y(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(m);
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < m; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += xv(r, c);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (xv(r, c) - mu) * (xv(r, c) - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (xv(r, c) - mu) * inv_std[r];
      y(r, c) = xhat(r, c) * gv[c] + bv[c];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return t.record(
      std::move(y), {ix, ig, ib},
      [ix, ig, ib, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_ref(self);
        const Tensor& gv = tp.value(ig);
        if (tp.requires_grad(ig)) {
          Tensor& gg = tp.grad_buffer(ig);
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < n; ++c) gg[c] += g(r, c) * xhat(r, c);
          }
        }
        if (tp.requires_grad(ib)) {
          Tensor& gb = tp.grad_buffer(ib);
          for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < n; ++c) gb[c] += g(r, c);
          }
        }
        if (tp.requires_grad(ix)) {
          Tensor& gx = tp.grad_buffer(ix);
          const double dn = static_cast<double>(n);
          for (std::size_t r = 0; r < m; ++r) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
              const double dxhat = g(r, c) * gv[c];
              s1 += dxhat;
              s2 += dxhat * xhat(r, c);
            }
            for (std::size_t c = 0; c < n; ++c) {
              const double dxhat = g(r, c) * gv[c];
              gx(r, c) += inv_std[r] * (dxhat - s1 / dn - xhat(r, c) * s2 / dn);
            }
          }
        }
      });
}

}  // namespace streamtts::num
