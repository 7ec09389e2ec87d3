#include "tgvlm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "tgvlm/errors.hpp"

namespace tgvlm {

namespace {

thread_local Tape* g_active_tape = nullptr;

using ImplPtr = std::shared_ptr<TensorImpl>;

void ensure_grad(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
}

#ifndef NDEBUG
void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw Error(std::string("non-finite value produced by ") + op);
  }
}
#else
void check_finite(const Tensor&, const char*) {}
#endif

// Registers `fn` when recording is active and any input needs a gradient.
template <typename Fn>
void maybe_record(Tensor& out, std::initializer_list<const Tensor*> inputs, Fn&& fn) {
  Tape* tape = Tape::active();
  if (tape == nullptr) return;
  bool any = false;
  for (const Tensor* t : inputs) any = any || t->requires_grad();
  if (!any) return;
  out.set_requires_grad(true);
  tape->record(out, std::forward<Fn>(fn));
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not hold " + std::to_string(values.size()) +
                         " values");
  }
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Tensor Tensor::eye(std::size_t n) {
  Tensor t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const { return rank() == 1 ? 1 : impl_->shape[0]; }

std::size_t Tensor::cols() const { return impl_->shape.back(); }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  return *this;
}

std::span<const double> Tensor::grad() const {
  ensure_grad(*impl_);
  return impl_->grad;
}

std::span<double> Tensor::grad_mut() {
  ensure_grad(*impl_);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const { return from(shape(), impl_->data); }

Tensor Tensor::reshaped(Shape new_shape) const { return from(std::move(new_shape), impl_->data); }

// ---- Tape ------------------------------------------------------------------

Tape* Tape::active() { return g_active_tape; }

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape::NoGrad::NoGrad() : previous_(g_active_tape) { g_active_tape = nullptr; }
Tape::NoGrad::~NoGrad() { g_active_tape = previous_; }

void Tape::record(const Tensor& output, std::function<void()> backward_fn) {
  entries_.push_back(Entry{output.impl(), std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " +
                         (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;  // constant: nothing reachable
  for (auto& e : entries_) {
    if (!e.output->grad.empty()) std::fill(e.output->grad.begin(), e.output->grad.end(), 0.0);
  }
  ensure_grad(*loss.impl());
  loss.impl()->grad[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward_fn();
  }
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) throw Error("backward() called without an active tape");
  tape->backward(loss);
}

// ---- operations --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out = Tensor::zeros({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  check_finite(out, "matmul");
  ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
  maybe_record(out, {&a, &b}, [ai, bi, oi, m, k, n] {
    const double* g = oi->grad.data();
    if (ai->requires_grad) {
      ensure_grad(*ai);
      // dA = dC · Bᵀ
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = bi->data.data() + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ai->grad[i * k + p] += acc;
        }
      }
    }
    if (bi->requires_grad) {
      ensure_grad(*bi);
      // dB = Aᵀ · dC
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = ai->data[i * k + p];
          if (av == 0.0) continue;
          double* bg = bi->grad.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) bg[j] += av * grow[j];
        }
      }
    }
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  ImplPtr ai = a.impl(), oi = out.impl();
  maybe_record(out, {&a}, [ai, oi, m, n] {
    ensure_grad(*ai);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ai->grad[i * n + j] += oi->grad[j * m + i];
  });
  return out;
}

namespace {

template <typename Fwd, typename Da, typename Db>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Da da, Db db) {
  require_same_shape(a, b, name);
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = fwd(a.data()[i], b.data()[i]);
  check_finite(out, name);
  ImplPtr ai = a.impl(), bi = b.impl(), oi = out.impl();
  maybe_record(out, {&a, &b}, [ai, bi, oi, n, da, db] {
    if (ai->requires_grad) {
      ensure_grad(*ai);
      for (std::size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i] * da(ai->data[i], bi->data[i]);
    }
    if (bi->requires_grad) {
      ensure_grad(*bi);
      for (std::size_t i = 0; i < n; ++i) bi->grad[i] += oi->grad[i] * db(ai->data[i], bi->data[i]);
    }
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * factor;
  ImplPtr ai = a.impl(), oi = out.impl();
  maybe_record(out, {&a}, [ai, oi, n, factor] {
    ensure_grad(*ai);
    for (std::size_t i = 0; i < n; ++i) ai->grad[i] += oi->grad[i] * factor;
  });
  return out;
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  const std::size_t n = x.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_row: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(x.shape()));
  }
  const std::size_t m = x.numel() / n;
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data()[i * n + j] = x.data()[i * n + j] + bias.data()[j];
  check_finite(out, "add_row");
  ImplPtr xi = x.impl(), bi = bias.impl(), oi = out.impl();
  maybe_record(out, {&x, &bias}, [xi, bi, oi, m, n] {
    if (xi->requires_grad) {
      ensure_grad(*xi);
      for (std::size_t i = 0; i < m * n; ++i) xi->grad[i] += oi->grad[i];
    }
    if (bi->requires_grad) {
      ensure_grad(*bi);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) bi->grad[j] += oi->grad[i * n + j];
    }
  });
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  ImplPtr xi = x.impl(), oi = out.impl();
  maybe_record(out, {&x}, [xi, oi, n] {
    ensure_grad(*xi);
    for (std::size_t i = 0; i < n; ++i)
      if (xi->data[i] > 0.0) xi->grad[i] += oi->grad[i];
  });
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(x.shape()));
  }
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Tensor out = Tensor::zeros(s);
  const double* px = x.data().data();
  double* po = out.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < len; ++t) mx = std::max(mx, px[base + t * inner]);
      double total = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const double e = std::exp(px[base + t * inner] - mx);
        po[base + t * inner] = e;
        total += e;
      }
      for (std::size_t t = 0; t < len; ++t) po[base + t * inner] /= total;
    }
  }
  check_finite(out, "softmax");
  ImplPtr xi = x.impl(), oi = out.impl();
  maybe_record(out, {&x}, [xi, oi, outer, inner, len] {
    ensure_grad(*xi);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t t = 0; t < len; ++t) dot += oi->grad[base + t * inner] * oi->data[base + t * inner];
        for (std::size_t t = 0; t < len; ++t) {
          const std::size_t idx = base + t * inner;
          xi->grad[idx] += oi->data[idx] * (oi->grad[idx] - dot);
        }
      }
    }
  });
  return out;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat: incompatible shapes " + shape_string(first) + " and " + shape_string(s));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_stride = out_shape[axis] * inner;
  Tensor out = Tensor::zeros(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    const std::size_t chunk = p.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.data().data() + o * chunk, chunk, out.data().data() + o * out_stride + offset);
    offset += chunk;
  }
  Tape* tape = Tape::active();
  bool any = std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (tape != nullptr && any) {
    out.set_requires_grad(true);
    std::vector<ImplPtr> impls;
    for (const Tensor& p : parts) impls.push_back(p.impl());
    ImplPtr oi = out.impl();
    tape->record(out, [impls, offsets, oi, outer, inner, axis, out_stride] {
      for (std::size_t k = 0; k < impls.size(); ++k) {
        TensorImpl& p = *impls[k];
        if (!p.requires_grad) continue;
        ensure_grad(p);
        const std::size_t chunk = p.shape[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t t = 0; t < chunk; ++t) p.grad[o * chunk + t] += oi->grad[o * out_stride + offsets[k] + t];
      }
    });
  }
  return out;
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank2(x, "slice_cols");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (count == 0 || start + count > n) {
    throw IndexError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of range for " + shape_string(x.shape()));
  }
  Tensor out = Tensor::zeros({m, count});
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(x.data().data() + i * n + start, count, out.data().data() + i * count);
  ImplPtr xi = x.impl(), oi = out.impl();
  maybe_record(out, {&x}, [xi, oi, m, n, start, count] {
    ensure_grad(*xi);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) xi->grad[i * n + start + j] += oi->grad[i * count + j];
  });
  return out;
}

namespace {

void check_row_indices(const Tensor& x, std::span<const std::size_t> rows, const char* op) {
  const std::size_t m = x.rank() == 1 ? 1 : x.shape()[0];
  for (std::size_t r : rows) {
    if (r >= m) {
      throw IndexError(std::string(op) + ": row " + std::to_string(r) + " out of range for " +
                       shape_string(x.shape()));
    }
  }
}

}  // namespace

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank2(x, "gather_rows");
  if (rows.empty()) throw IndexError("gather_rows: empty index list");
  check_row_indices(x, rows, "gather_rows");
  const std::size_t n = x.shape()[1];
  Tensor out = Tensor::zeros({rows.size(), n});
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(x.data().data() + rows[r] * n, n, out.data().data() + r * n);
  ImplPtr xi = x.impl(), oi = out.impl();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  maybe_record(out, {&x}, [xi, oi, idx, n] {
    ensure_grad(*xi);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) xi->grad[idx[r] * n + j] += oi->grad[r * n + j];
  });
  return out;
}

Tensor mean_over_indices(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank2(x, "mean_over_indices");
  if (rows.empty()) throw IndexError("mean_over_indices: empty index set");
  check_row_indices(x, rows, "mean_over_indices");
  const std::size_t n = x.shape()[1];
  Tensor out = Tensor::zeros({1, n});
  for (std::size_t r : rows)
    for (std::size_t j = 0; j < n; ++j) out.data()[j] += x.data()[r * n + j];
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t j = 0; j < n; ++j) out.data()[j] *= inv;
  ImplPtr xi = x.impl(), oi = out.impl();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  maybe_record(out, {&x}, [xi, oi, idx, n, inv] {
    ensure_grad(*xi);
    for (std::size_t r : idx)
      for (std::size_t j = 0; j < n; ++j) xi->grad[r * n + j] += oi->grad[j] * inv;
  });
  return out;
}

Tensor replace_rows(const Tensor& x, std::span<const std::size_t> positions, const Tensor& z) {
  require_rank2(x, "replace_rows");
  check_row_indices(x, positions, "replace_rows");
  const std::size_t n = x.shape()[1];
  if (positions.empty()) return x;
  require_rank2(z, "replace_rows");
  if (z.shape()[0] != positions.size() || z.shape()[1] != n) {
    throw DimensionError("replace_rows: replacement " + shape_string(z.shape()) + " does not fit " +
                         std::to_string(positions.size()) + " rows of " + shape_string(x.shape()));
  }
  Tensor out = x.clone();
  for (std::size_t r = 0; r < positions.size(); ++r)
    std::copy_n(z.data().data() + r * n, n, out.data().data() + positions[r] * n);
  ImplPtr xi = x.impl(), zi = z.impl(), oi = out.impl();
  std::vector<std::size_t> idx(positions.begin(), positions.end());
  maybe_record(out, {&x, &z}, [xi, zi, oi, idx, n] {
    if (xi->requires_grad) {
      ensure_grad(*xi);
      std::vector<char> replaced(xi->data.size() / n, 0);
      for (std::size_t p : idx) replaced[p] = 1;
      for (std::size_t i = 0; i < replaced.size(); ++i)
        if (!replaced[i])
          for (std::size_t j = 0; j < n; ++j) xi->grad[i * n + j] += oi->grad[i * n + j];
    }
    if (zi->requires_grad) {
      ensure_grad(*zi);
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < n; ++j) zi->grad[r * n + j] += oi->grad[idx[r] * n + j];
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t n = x.cols();
  if (gamma.numel() != n || beta.numel() != n) {
    throw DimensionError("layer_norm: parameters do not match " + shape_string(x.shape()));
  }
  const std::size_t m = x.numel() / n;
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> xhat(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data().data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mean) * inv_std[i];
      out.data()[i * n + j] = xhat[i * n + j] * gamma.data()[j] + beta.data()[j];
    }
  }
  check_finite(out, "layer_norm");
  ImplPtr xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl();
  maybe_record(out, {&x, &gamma, &beta}, [xi, gi, bi, oi, xhat = std::move(xhat), inv_std = std::move(inv_std), m, n] {
    const double* g = oi->grad.data();
    if (gi->requires_grad) {
      ensure_grad(*gi);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gi->grad[j] += g[i * n + j] * xhat[i * n + j];
    }
    if (bi->requires_grad) {
      ensure_grad(*bi);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) bi->grad[j] += g[i * n + j];
    }
    if (xi->requires_grad) {
      ensure_grad(*xi);
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < m; ++i) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dy = g[i * n + j] * gi->data[j];
          sum_dy += dy;
          sum_dy_xhat += dy * xhat[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          const double dy = g[i * n + j] * gi->data[j];
          xi->grad[i * n + j] += inv_std[i] * (dy - inv_n * sum_dy - xhat[i * n + j] * inv_n * sum_dy_xhat);
        }
      }
    }
  });
  return out;
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  require_rank2(table, "embedding_lookup");
  if (ids.empty()) throw IndexError("embedding_lookup: empty id sequence");
  const std::size_t v = table.shape()[0], n = table.shape()[1];
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw IndexError("embedding_lookup: id " + std::to_string(id) + " out of range for table " +
                       shape_string(table.shape()));
    }
  }
  Tensor out = Tensor::zeros({ids.size(), n});
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[r]) * n, n, out.data().data() + r * n);
  ImplPtr ti = table.impl(), oi = out.impl();
  std::vector<int> idv(ids.begin(), ids.end());
  maybe_record(out, {&table}, [ti, oi, idv, n] {
    ensure_grad(*ti);
    for (std::size_t r = 0; r < idv.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) ti->grad[static_cast<std::size_t>(idv[r]) * n + j] += oi->grad[r * n + j];
  });
  return out;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor out = Tensor::scalar(total);
  ImplPtr xi = x.impl(), oi = out.impl();
  maybe_record(out, {&x}, [xi, oi] {
    ensure_grad(*xi);
    for (double& g : xi->grad) g += oi->grad[0];
  });
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int pad_id) {
  require_rank2(logits, "cross_entropy");
  const std::size_t t_len = logits.shape()[0], v = logits.shape()[1];
  if (targets.size() != t_len) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_string(logits.shape()));
  }
  std::size_t counted = 0;
  for (int t : targets) {
    if (t == pad_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside vocabulary of " + std::to_string(v));
    }
    ++counted;
  }
  if (counted == 0) throw Error("cross_entropy: every target position is padding");
  std::vector<double> probs(t_len * v, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < t_len; ++i) {
    if (targets[i] == pad_id) continue;
    const double* row = logits.data().data() + i * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] = std::exp(row[j] - log_z);
    total += log_z - row[static_cast<std::size_t>(targets[i])];
  }
  const double inv = 1.0 / static_cast<double>(counted);
  Tensor out = Tensor::scalar(total * inv);
  ImplPtr li = logits.impl(), oi = out.impl();
  std::vector<int> tv(targets.begin(), targets.end());
  maybe_record(out, {&logits}, [li, oi, tv, probs = std::move(probs), pad_id, t_len, v, inv] {
    ensure_grad(*li);
    const double g = oi->grad[0] * inv;
    for (std::size_t i = 0; i < t_len; ++i) {
      if (tv[i] == pad_id) continue;
      for (std::size_t j = 0; j < v; ++j) li->grad[i * v + j] += g * probs[i * v + j];
      li->grad[i * v + static_cast<std::size_t>(tv[i])] -= g;
    }
  });
  return out;
}

Tensor row_distances(const Tensor& c, const Tensor& w, std::span<const std::size_t> which) {
  require_rank2(w, "row_distances");
  const std::size_t d = w.shape()[1];
  if (c.numel() != d) {
    throw DimensionError("row_distances: vector " + shape_string(c.shape()) + " vs rows of " + shape_string(w.shape()));
  }
  check_row_indices(w, which, "row_distances");
  const std::size_t k = which.size();
  Tensor out = Tensor::zeros({k});
  for (std::size_t r = 0; r < k; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = c.data()[j] - w.data()[which[r] * d + j];
      acc += diff * diff;
    }
    out.data()[r] = std::sqrt(acc);
  }
  ImplPtr ci = c.impl(), wi = w.impl(), oi = out.impl();
  std::vector<std::size_t> idx(which.begin(), which.end());
  maybe_record(out, {&c, &w}, [ci, wi, oi, idx, d] {
    if (ci->requires_grad) ensure_grad(*ci);
    if (wi->requires_grad) ensure_grad(*wi);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const double dist = oi->data[r];
      if (dist == 0.0) continue;  // subgradient 0 at coincidence
      const double g = oi->grad[r] / dist;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = ci->data[j] - wi->data[idx[r] * d + j];
        if (ci->requires_grad) ci->grad[j] += g * diff;
        if (wi->requires_grad) wi->grad[idx[r] * d + j] -= g * diff;
      }
    }
  });
  return out;
}

Tensor weighted_sum(std::span<const Tensor> items, const Tensor& weights) {
  if (items.empty() || weights.numel() != items.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(items.size()) + " items for " +
                         std::to_string(weights.numel()) + " weights");
  }
  const Shape& s = items[0].shape();
  for (const Tensor& t : items) require_same_shape(items[0], t, "weighted_sum");
  const std::size_t n = shape_numel(s);
  Tensor out = Tensor::zeros(s);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const double w = weights.data()[i];
    for (std::size_t j = 0; j < n; ++j) out.data()[j] += w * items[i].data()[j];
  }
  Tape* tape = Tape::active();
  bool any = weights.requires_grad() ||
             std::any_of(items.begin(), items.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (tape != nullptr && any) {
    out.set_requires_grad(true);
    std::vector<ImplPtr> impls;
    for (const Tensor& t : items) impls.push_back(t.impl());
    ImplPtr wi = weights.impl(), oi = out.impl();
    tape->record(out, [impls, wi, oi, n] {
      if (wi->requires_grad) ensure_grad(*wi);
      for (std::size_t i = 0; i < impls.size(); ++i) {
        TensorImpl& item = *impls[i];
        if (wi->requires_grad) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += oi->grad[j] * item.data[j];
          wi->grad[i] += acc;
        }
        if (item.requires_grad) {
          ensure_grad(item);
          for (std::size_t j = 0; j < n; ++j) item.grad[j] += oi->grad[j] * wi->data[i];
        }
      }
    });
  }
  return out;
}

}  // namespace tgvlm
