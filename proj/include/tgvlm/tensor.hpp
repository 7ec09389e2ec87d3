#pragma once

// Dense f64 tensors with a dynamic reverse-mode tape.
//
// A Tensor is a shared handle: copies alias the same storage. Operations
// record a backward closure on the tape that is active on the calling thread
// (see Tape::Scope) whenever at least one input requires a gradient. Without
// an active tape, operations are plain forward computations.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tgvlm {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor eye(std::size_t n);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  std::span<double> data() { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }
  double item() const;
  double at(std::size_t i, std::size_t j) const { return impl_->data[i * cols() + j]; }
  double& at(std::size_t i, std::size_t j) { return impl_->data[i * cols() + j]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const { return !impl_->grad.empty(); }
  // Gradient view; all zeros when nothing has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  // Detached deep copy.
  Tensor clone() const;
  // Detached copy with a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

// Records backward closures in creation order; backward() replays them in
// exact reverse order. One tape per thread at a time.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const Tensor& output, std::function<void()> backward_fn);
  // Populates grads of every requires_grad tensor reachable from loss.
  // Leaf gradients accumulate across calls; intermediates are reset first.
  void backward(const Tensor& loss);
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  static Tape* active();

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  // Disables recording for its lifetime (inference).
  class NoGrad {
   public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

   private:
    Tape* previous_;
  };

 private:
  struct Entry {
    std::shared_ptr<TensorImpl> output;
    std::function<void()> backward_fn;
  };
  std::vector<Entry> entries_;
};

// Free-function spelling of Tape::backward for the active tape.
void backward(const Tensor& loss);

// ---- differentiable operations -------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// x[m×n] + bias[n] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor mean_over_indices(const Tensor& x, std::span<const std::size_t> rows);
// Copy of x with x[positions[j]] replaced by z[j].
Tensor replace_rows(const Tensor& x, std::span<const std::size_t> positions, const Tensor& z);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);
Tensor sum(const Tensor& x);
// Mean token NLL over positions whose target is not pad_id.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int pad_id);
// Euclidean distances between row vector c[1×d] and rows `which` of w[S×d].
Tensor row_distances(const Tensor& c, const Tensor& w, std::span<const std::size_t> which);
// Σ_i weights[i] · items[i]; all items share one shape.
Tensor weighted_sum(std::span<const Tensor> items, const Tensor& weights);

}  // namespace tgvlm
