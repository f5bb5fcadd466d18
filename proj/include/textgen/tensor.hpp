#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "textgen/rng.hpp"

namespace textgen {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until the first accumulation
    bool requires_grad = false;
};

// Dense row-major f64 tensor. Copies are shallow handles to the same storage;
// ops always allocate fresh outputs.
class Tensor {
   public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value);
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);
    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

    std::vector<double>& data() { return impl_->data; }
    const std::vector<double>& data() const { return impl_->data; }

    // Scalar convenience.
    double value() const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return !impl_->grad.empty(); }
    const std::vector<double>& grad() const;
    std::vector<double>& grad_buffer();  // allocates zeros on first use
    void zero_grad();

    const std::shared_ptr<TensorImpl>& ptr() const { return impl_; }
    TensorImpl* impl() const { return impl_.get(); }

   private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;
};

// Per-backward-pass adjoint buffers, keyed by tensor identity. Kept separate
// from Tensor::grad so repeated backward() calls accumulate exactly.
class Adjoints {
   public:
    // Adjoint of t if one has been produced, else nullptr.
    const std::vector<double>* find(const TensorImpl* t) const;
    // Adjoint buffer of t, created zero-filled on first use.
    std::vector<double>& get(const TensorImpl* t);

    const std::unordered_map<const TensorImpl*, std::vector<double>>& all() const {
        return bufs_;
    }

   private:
    std::unordered_map<const TensorImpl*, std::vector<double>> bufs_;
};

// Dynamic define-by-run tape. Ops append one node per executed operation;
// backward replays them in reverse, which is a valid topological order.
// A tape and its tensors belong to a single thread.
class Tape {
   public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    ~Tape();

    // Seeds d(root)/d(root) = 1 and accumulates adjoints into .grad of every
    // requires_grad tensor reached. Root must be scalar.
    void backward(const Tensor& root);

    void record(std::function<void(Adjoints&)> fn) { nodes_.push_back(std::move(fn)); }
    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

    static Tape* current();

    // RAII activation: ops record onto the innermost active tape.
    class Scope {
       public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

       private:
        Tape* prev_;
    };

   private:
    std::vector<std::function<void(Adjoints&)>> nodes_;
};

// ----------------------------- operations -----------------------------
// All ops compute forward immediately and, when a tape is active and any
// input requires grad, record an adjoint node.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// y = m*x + c with scalar constants m, c.
Tensor affine(const Tensor& x, double m, double c);
Tensor scale(const Tensor& x, double m);

// Adds bias (shape = trailing suffix of x's shape) broadcast over the
// leading axes. The only broadcasting form in this library.
Tensor add_bias(const Tensor& x, const Tensor& bias);

// 2-D [m,k]x[k,n] or batched 3-D [B,m,k]x[B,k,n].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& x, Shape new_shape);
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor concat(const std::vector<Tensor>& xs, int axis);

// Rows over the last axis; stabilized by max subtraction.
Tensor softmax(const Tensor& x);

// Last two axes must be [T,T]; entries at column > row become -inf so that a
// following softmax zeroes them exactly.
Tensor causal_mask(const Tensor& x);

// Mean over rows of -log softmax(logits)[target]. The masked variant skips
// rows whose mask entry is 0 and averages over the kept rows.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);
Tensor cross_entropy_masked(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<uint8_t>& keep);

// Normalizes the last axis; gain/bias have that axis's length.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mean_axis(const Tensor& x, int axis);

// Rows of table gathered by id; gradient scatters back into the table.
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

// Inverted dropout; identity when train is false or rate is 0.
Tensor dropout(const Tensor& x, double rate, Rng& rng, bool train);

// Forward: exact one-hot of the last-axis argmax (ties toward the lowest
// index). Backward: identity to the soft input.
Tensor straight_through_onehot(const Tensor& soft);

// Value copy that never carries gradient.
Tensor detach(const Tensor& x);

}  // namespace textgen
