#include "textgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "textgen/error.hpp"

namespace textgen {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

thread_local Tape* g_current_tape = nullptr;

void check_defined(const Tensor& t, const char* op) {
    if (!t.defined()) {
        throw ContractError(std::string(op) + ": undefined tensor");
    }
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ");
    }
}

bool tracing(std::initializer_list<const Tensor*> inputs) {
    if (g_current_tape == nullptr) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

Tensor make_output(Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs) {
    bool rg = false;
    for (const Tensor* t : inputs) rg = rg || t->requires_grad();
    Tensor out = Tensor::from_data(std::move(shape), std::move(data));
    out.set_requires_grad(rg);
    return out;
}

void accumulate(std::vector<double>& dst, const std::vector<double>& src) {
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// ----------------------------- matmul kernels -----------------------------
// ikj ordering keeps the innermost loop contiguous in both C and B.

// C[m,n] += A[m,k] * B[k,n]
void mm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,k] += G[m,n] * B[k,n]^T  (i.e. C[i,p] += sum_j G[i,j] * B[p,j])
void mm_acc_bt(const double* g, const double* b, double* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const double* grow = g + static_cast<size_t>(i) * n;
        double* crow = c + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double* brow = b + static_cast<size_t>(p) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T * G[m,n]  (i.e. C[p,j] += sum_i A[i,p] * G[i,j])
void mm_acc_at(const double* a, const double* g, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        const double* grow = g + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * grow[j];
        }
    }
}

std::vector<int64_t> row_major_strides(const Shape& s) {
    std::vector<int64_t> st(s.size());
    int64_t acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        st[static_cast<size_t>(i)] = acc;
        acc *= s[static_cast<size_t>(i)];
    }
    return st;
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i > 0) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

// ----------------------------- Tensor -----------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    const int64_t n = shape_numel(shape);
    impl->shape = std::move(shape);
    impl->data.assign(static_cast<size_t>(n), value);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    const int64_t n = shape_numel(shape);
    if (n != static_cast<int64_t>(data.size())) {
        throw DimensionError("from_data: shape " + shape_str(shape) + " wants " +
                             std::to_string(n) + " values, got " + std::to_string(data.size()));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& v : t.data()) v = rng.normal(0.0, stddev);
    return t;
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

double Tensor::value() const {
    if (numel() != 1) {
        throw ContractError("value(): tensor has shape " + shape_str(shape()) +
                            ", expected a scalar");
    }
    return impl_->data[0];
}

const std::vector<double>& Tensor::grad() const {
    if (impl_->grad.empty()) {
        throw ContractError("grad(): no gradient has been accumulated");
    }
    return impl_->grad;
}

std::vector<double>& Tensor::grad_buffer() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

// ----------------------------- Adjoints / Tape -----------------------------

const std::vector<double>* Adjoints::find(const TensorImpl* t) const {
    auto it = bufs_.find(t);
    return it == bufs_.end() ? nullptr : &it->second;
}

std::vector<double>& Adjoints::get(const TensorImpl* t) {
    auto it = bufs_.find(t);
    if (it == bufs_.end()) {
        it = bufs_.emplace(t, std::vector<double>(t->data.size(), 0.0)).first;
    }
    return it->second;
}

Tape::~Tape() = default;

Tape* Tape::current() { return g_current_tape; }

Tape::Scope::Scope(Tape& tape) : prev_(g_current_tape) { g_current_tape = &tape; }
Tape::Scope::~Scope() { g_current_tape = prev_; }

void Tape::backward(const Tensor& root) {
    if (!root.defined() || root.numel() != 1) {
        throw ContractError("backward: root must be a scalar tensor");
    }
    Adjoints adj;
    adj.get(root.impl())[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        (*it)(adj);
    }
    for (const auto& [impl, buf] : adj.all()) {
        if (!impl->requires_grad) continue;
        auto* mut = const_cast<TensorImpl*>(impl);
        if (mut->grad.empty()) mut->grad.assign(mut->data.size(), 0.0);
        accumulate(mut->grad, buf);
    }
}

// ----------------------------- elementwise -----------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_defined(a, "add");
    check_defined(b, "add");
    check_same_shape("add", a, b);
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    Tensor y = make_output(a.shape(), std::move(out), {&a, &b});
    if (tracing({&a, &b})) {
        Tape::current()->record([ai = a.ptr(), bi = b.ptr(), yi = y.ptr()](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy) return;
            if (ai->requires_grad) accumulate(adj.get(ai.get()), *gy);
            if (bi->requires_grad) accumulate(adj.get(bi.get()), *gy);
        });
    }
    return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_defined(a, "sub");
    check_defined(b, "sub");
    check_same_shape("sub", a, b);
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    Tensor y = make_output(a.shape(), std::move(out), {&a, &b});
    if (tracing({&a, &b})) {
        Tape::current()->record([ai = a.ptr(), bi = b.ptr(), yi = y.ptr()](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy) return;
            if (ai->requires_grad) accumulate(adj.get(ai.get()), *gy);
            if (bi->requires_grad) {
                auto& gb = adj.get(bi.get());
                for (size_t i = 0; i < gb.size(); ++i) gb[i] -= (*gy)[i];
            }
        });
    }
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_defined(a, "mul");
    check_defined(b, "mul");
    check_same_shape("mul", a, b);
    std::vector<double> out(a.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    Tensor y = make_output(a.shape(), std::move(out), {&a, &b});
    if (tracing({&a, &b})) {
        Tape::current()->record([ai = a.ptr(), bi = b.ptr(), yi = y.ptr()](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy) return;
            if (ai->requires_grad) {
                auto& ga = adj.get(ai.get());
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += (*gy)[i] * bi->data[i];
            }
            if (bi->requires_grad) {
                auto& gb = adj.get(bi.get());
                for (size_t i = 0; i < gb.size(); ++i) gb[i] += (*gy)[i] * ai->data[i];
            }
        });
    }
    return y;
}

Tensor affine(const Tensor& x, double m, double c) {
    check_defined(x, "affine");
    std::vector<double> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = m * x.data()[i] + c;
    Tensor y = make_output(x.shape(), std::move(out), {&x});
    if (tracing({&x})) {
        Tape::current()->record([xi = x.ptr(), yi = y.ptr(), m](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy || !xi->requires_grad) return;
            auto& gx = adj.get(xi.get());
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += m * (*gy)[i];
        });
    }
    return y;
}

Tensor scale(const Tensor& x, double m) { return affine(x, m, 0.0); }

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    check_defined(x, "add_bias");
    check_defined(bias, "add_bias");
    const Shape& xs = x.shape();
    const Shape& bs = bias.shape();
    if (bs.size() > xs.size() ||
        !std::equal(bs.rbegin(), bs.rend(), xs.rbegin())) {
        throw DimensionError("add_bias: bias shape " + shape_str(bs) +
                             " is not a trailing suffix of " + shape_str(xs));
    }
    const size_t blen = bias.data().size();
    std::vector<double> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + bias.data()[i % blen];
    Tensor y = make_output(xs, std::move(out), {&x, &bias});
    if (tracing({&x, &bias})) {
        Tape::current()->record([xi = x.ptr(), bi = bias.ptr(), yi = y.ptr()](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy) return;
            if (xi->requires_grad) accumulate(adj.get(xi.get()), *gy);
            if (bi->requires_grad) {
                auto& gb = adj.get(bi.get());
                const size_t blen = gb.size();
                for (size_t i = 0; i < gy->size(); ++i) gb[i % blen] += (*gy)[i];
            }
        });
    }
    return y;
}

// ----------------------------- matmul -----------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_defined(a, "matmul");
    check_defined(b, "matmul");
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    const bool batched = as.size() == 3;
    if (!((as.size() == 2 && bs.size() == 2) || (as.size() == 3 && bs.size() == 3))) {
        throw DimensionError("matmul: ranks must both be 2 or both be 3, got " + shape_str(as) +
                             " and " + shape_str(bs));
    }
    const int nb = batched ? as[0] : 1;
    const int m = batched ? as[1] : as[0];
    const int k = batched ? as[2] : as[1];
    const int kb = batched ? bs[1] : bs[0];
    const int n = batched ? bs[2] : bs[1];
    if (k != kb || (batched && as[0] != bs[0])) {
        throw DimensionError("matmul: shapes " + shape_str(as) + " and " + shape_str(bs) +
                             " do not align");
    }
    Shape out_shape = batched ? Shape{nb, m, n} : Shape{m, n};
    std::vector<double> out(static_cast<size_t>(nb) * m * n, 0.0);
    for (int t = 0; t < nb; ++t) {
        mm_acc(a.data().data() + static_cast<size_t>(t) * m * k,
               b.data().data() + static_cast<size_t>(t) * k * n,
               out.data() + static_cast<size_t>(t) * m * n, m, k, n);
    }
    Tensor y = make_output(std::move(out_shape), std::move(out), {&a, &b});
    if (tracing({&a, &b})) {
        Tape::current()->record(
            [ai = a.ptr(), bi = b.ptr(), yi = y.ptr(), nb, m, k, n](Adjoints& adj) {
                const auto* gy = adj.find(yi.get());
                if (!gy) return;
                if (ai->requires_grad) {
                    auto& ga = adj.get(ai.get());
                    for (int t = 0; t < nb; ++t) {
                        mm_acc_bt(gy->data() + static_cast<size_t>(t) * m * n,
                                  bi->data.data() + static_cast<size_t>(t) * k * n,
                                  ga.data() + static_cast<size_t>(t) * m * k, m, n, k);
                    }
                }
                if (bi->requires_grad) {
                    auto& gb = adj.get(bi.get());
                    for (int t = 0; t < nb; ++t) {
                        mm_acc_at(ai->data.data() + static_cast<size_t>(t) * m * k,
                                  gy->data() + static_cast<size_t>(t) * m * n,
                                  gb.data() + static_cast<size_t>(t) * k * n, m, k, n);
                    }
                }
            });
    }
    return y;
}

// ----------------------------- shape ops -----------------------------

Tensor reshape(const Tensor& x, Shape new_shape) {
    check_defined(x, "reshape");
    if (shape_numel(new_shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                             shape_str(new_shape));
    }
    Tensor y = make_output(std::move(new_shape), x.data(), {&x});
    if (tracing({&x})) {
        Tape::current()->record([xi = x.ptr(), yi = y.ptr()](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy || !xi->requires_grad) return;
            accumulate(adj.get(xi.get()), *gy);
        });
    }
    return y;
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
    check_defined(x, "permute");
    const Shape& xs = x.shape();
    const size_t r = xs.size();
    if (perm.size() != r) {
        throw DimensionError("permute: perm size " + std::to_string(perm.size()) +
                             " vs rank " + std::to_string(r));
    }
    std::vector<bool> seen(r, false);
    Shape out_shape(r);
    for (size_t i = 0; i < r; ++i) {
        const int p = perm[i];
        if (p < 0 || static_cast<size_t>(p) >= r || seen[static_cast<size_t>(p)]) {
            throw DimensionError("permute: invalid axis permutation");
        }
        seen[static_cast<size_t>(p)] = true;
        out_shape[i] = xs[static_cast<size_t>(p)];
    }
    const auto in_strides = row_major_strides(xs);
    const auto out_strides = row_major_strides(out_shape);
    const int64_t n = x.numel();
    // out[idx] = in[perm(idx)]: forward map from output linear index to input.
    std::vector<int64_t> src_index(static_cast<size_t>(n));
    {
        std::vector<int> idx(r, 0);
        for (int64_t o = 0; o < n; ++o) {
            int64_t src = 0;
            for (size_t d = 0; d < r; ++d) {
                src += static_cast<int64_t>(idx[d]) * in_strides[static_cast<size_t>(perm[d])];
            }
            src_index[static_cast<size_t>(o)] = src;
            for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
                if (++idx[static_cast<size_t>(d)] < out_shape[static_cast<size_t>(d)]) break;
                idx[static_cast<size_t>(d)] = 0;
            }
        }
    }
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t o = 0; o < n; ++o) {
        out[static_cast<size_t>(o)] = x.data()[static_cast<size_t>(src_index[static_cast<size_t>(o)])];
    }
    Tensor y = make_output(std::move(out_shape), std::move(out), {&x});
    if (tracing({&x})) {
        Tape::current()->record(
            [xi = x.ptr(), yi = y.ptr(), src_index = std::move(src_index)](Adjoints& adj) {
                const auto* gy = adj.find(yi.get());
                if (!gy || !xi->requires_grad) return;
                auto& gx = adj.get(xi.get());
                for (size_t o = 0; o < src_index.size(); ++o) {
                    gx[static_cast<size_t>(src_index[o])] += (*gy)[o];
                }
            });
    }
    return y;
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
    if (xs.empty()) throw ContractError("concat: no inputs");
    const Shape& first = xs[0].shape();
    const int r = static_cast<int>(first.size());
    if (axis < 0 || axis >= r) throw DimensionError("concat: axis out of range");
    int axis_total = 0;
    for (const Tensor& t : xs) {
        check_defined(t, "concat");
        const Shape& s = t.shape();
        if (static_cast<int>(s.size()) != r) {
            throw DimensionError("concat: rank mismatch");
        }
        for (int d = 0; d < r; ++d) {
            if (d != axis && s[static_cast<size_t>(d)] != first[static_cast<size_t>(d)]) {
                throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " +
                                     shape_str(first) + " along axis " + std::to_string(axis));
            }
        }
        axis_total += s[static_cast<size_t>(axis)];
    }
    Shape out_shape = first;
    out_shape[static_cast<size_t>(axis)] = axis_total;

    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= first[static_cast<size_t>(d)];
    for (int d = axis + 1; d < r; ++d) inner *= first[static_cast<size_t>(d)];

    std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
    std::vector<int64_t> offsets;  // start of each input's block within a slab
    {
        int64_t off = 0;
        for (const Tensor& t : xs) {
            offsets.push_back(off);
            off += static_cast<int64_t>(t.shape()[static_cast<size_t>(axis)]) * inner;
        }
    }
    const int64_t slab = static_cast<int64_t>(axis_total) * inner;
    for (size_t xi = 0; xi < xs.size(); ++xi) {
        const int64_t block = static_cast<int64_t>(xs[xi].shape()[static_cast<size_t>(axis)]) * inner;
        const double* src = xs[xi].data().data();
        for (int64_t o = 0; o < outer; ++o) {
            std::copy(src + o * block, src + (o + 1) * block,
                      out.begin() + o * slab + offsets[xi]);
        }
    }
    bool rg = false;
    for (const Tensor& t : xs) rg = rg || t.requires_grad();
    Tensor y = Tensor::from_data(std::move(out_shape), std::move(out));
    y.set_requires_grad(rg);
    if (g_current_tape != nullptr && rg) {
        std::vector<std::shared_ptr<TensorImpl>> ins;
        std::vector<int64_t> blocks;
        for (const Tensor& t : xs) {
            ins.push_back(t.ptr());
            blocks.push_back(static_cast<int64_t>(t.shape()[static_cast<size_t>(axis)]) * inner);
        }
        Tape::current()->record([ins, blocks, offsets, outer, slab, yi = y.ptr()](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy) return;
            for (size_t xi = 0; xi < ins.size(); ++xi) {
                if (!ins[xi]->requires_grad) continue;
                auto& gx = adj.get(ins[xi].get());
                for (int64_t o = 0; o < outer; ++o) {
                    const double* g = gy->data() + o * slab + offsets[xi];
                    double* dst = gx.data() + o * blocks[xi];
                    for (int64_t i = 0; i < blocks[xi]; ++i) dst[i] += g[i];
                }
            }
        });
    }
    return y;
}

// ----------------------------- softmax family -----------------------------

Tensor softmax(const Tensor& x) {
    check_defined(x, "softmax");
    if (x.rank() < 1) throw DimensionError("softmax: rank must be >= 1");
    for (double v : x.data()) {
        if (std::isnan(v)) throw NumericError("softmax: NaN input");
    }
    const int k = x.shape().back();
    if (k == 0) throw DimensionError("softmax: empty last axis");
    const int64_t rows = x.numel() / k;
    std::vector<double> out(x.data().size());
    const double* in = x.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* row = in + r * k;
        double* orow = out.data() + r * k;
        double mx = -kInf;
        for (int j = 0; j < k; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < k; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        for (int j = 0; j < k; ++j) orow[j] /= sum;
    }
    Tensor y = make_output(x.shape(), std::move(out), {&x});
    if (tracing({&x})) {
        Tape::current()->record([xi = x.ptr(), yi = y.ptr(), k, rows](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy || !xi->requires_grad) return;
            auto& gx = adj.get(xi.get());
            for (int64_t r = 0; r < rows; ++r) {
                const double* yrow = yi->data.data() + r * k;
                const double* grow = gy->data() + r * k;
                double dot = 0.0;
                for (int j = 0; j < k; ++j) dot += grow[j] * yrow[j];
                double* gxr = gx.data() + r * k;
                for (int j = 0; j < k; ++j) gxr[j] += yrow[j] * (grow[j] - dot);
            }
        });
    }
    return y;
}

Tensor causal_mask(const Tensor& x) {
    check_defined(x, "causal_mask");
    const int r = x.rank();
    if (r < 2) throw DimensionError("causal_mask: rank must be >= 2");
    const int t = x.dim(r - 2);
    const int s = x.dim(r - 1);
    if (t != s) {
        throw DimensionError("causal_mask: last two axes must be square, got " +
                             shape_str(x.shape()));
    }
    const int64_t mats = x.numel() / (static_cast<int64_t>(t) * s);
    std::vector<double> out = x.data();
    for (int64_t m = 0; m < mats; ++m) {
        double* base = out.data() + m * t * s;
        for (int i = 0; i < t; ++i) {
            for (int j = i + 1; j < s; ++j) base[static_cast<size_t>(i) * s + j] = -kInf;
        }
    }
    Tensor y = make_output(x.shape(), std::move(out), {&x});
    if (tracing({&x})) {
        Tape::current()->record([xi = x.ptr(), yi = y.ptr(), t, s, mats](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy || !xi->requires_grad) return;
            auto& gx = adj.get(xi.get());
            for (int64_t m = 0; m < mats; ++m) {
                const double* g = gy->data() + m * t * s;
                double* dst = gx.data() + m * t * s;
                for (int i = 0; i < t; ++i) {
                    for (int j = 0; j <= i; ++j) {
                        dst[static_cast<size_t>(i) * s + j] += g[static_cast<size_t>(i) * s + j];
                    }
                }
            }
        });
    }
    return y;
}

namespace {

Tensor cross_entropy_impl(const Tensor& logits, const std::vector<int>& targets,
                          const std::vector<uint8_t>* keep) {
    check_defined(logits, "cross_entropy");
    if (logits.rank() != 2) {
        throw DimensionError("cross_entropy: logits must be [N,K], got " +
                             shape_str(logits.shape()));
    }
    const int n = logits.dim(0);
    const int k = logits.dim(1);
    if (static_cast<int>(targets.size()) != n) {
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                             " targets for " + std::to_string(n) + " rows");
    }
    if (keep && static_cast<int>(keep->size()) != n) {
        throw DimensionError("cross_entropy: mask length mismatch");
    }
    int64_t kept = 0;
    for (int r = 0; r < n; ++r) {
        if (keep && !(*keep)[static_cast<size_t>(r)]) continue;
        ++kept;
        const int t = targets[static_cast<size_t>(r)];
        if (t < 0 || t >= k) {
            throw IndexError("cross_entropy: target " + std::to_string(t) + " out of range [0," +
                             std::to_string(k) + ") at row " + std::to_string(r));
        }
    }
    if (kept == 0) throw ContractError("cross_entropy: all rows masked out");

    // loss = mean over kept rows of (logsumexp(row) - row[target])
    double total = 0.0;
    const double* in = logits.data().data();
    for (int r = 0; r < n; ++r) {
        if (keep && !(*keep)[static_cast<size_t>(r)]) continue;
        const double* row = in + static_cast<size_t>(r) * k;
        double mx = -kInf;
        for (int j = 0; j < k; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
        total += mx + std::log(sum) - row[targets[static_cast<size_t>(r)]];
    }
    std::vector<double> out{total / static_cast<double>(kept)};
    Tensor y = make_output({1}, std::move(out), {&logits});
    if (tracing({&logits})) {
        std::vector<uint8_t> keep_copy = keep ? *keep : std::vector<uint8_t>();
        Tape::current()->record([xi = logits.ptr(), yi = y.ptr(), targets, keep_copy, n, k,
                                 kept](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy || !xi->requires_grad) return;
            const double g = (*gy)[0] / static_cast<double>(kept);
            auto& gx = adj.get(xi.get());
            for (int r = 0; r < n; ++r) {
                if (!keep_copy.empty() && !keep_copy[static_cast<size_t>(r)]) continue;
                const double* row = xi->data.data() + static_cast<size_t>(r) * k;
                double mx = -kInf;
                for (int j = 0; j < k; ++j) mx = std::max(mx, row[j]);
                double sum = 0.0;
                for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
                double* gxr = gx.data() + static_cast<size_t>(r) * k;
                for (int j = 0; j < k; ++j) {
                    const double p = std::exp(row[j] - mx) / sum;
                    gxr[j] += g * (p - (j == targets[static_cast<size_t>(r)] ? 1.0 : 0.0));
                }
            }
        });
    }
    return y;
}

}  // namespace

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    return cross_entropy_impl(logits, targets, nullptr);
}

Tensor cross_entropy_masked(const Tensor& logits, const std::vector<int>& targets,
                            const std::vector<uint8_t>& keep) {
    return cross_entropy_impl(logits, targets, &keep);
}

// ----------------------------- layernorm -----------------------------

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    check_defined(x, "layernorm");
    check_defined(gain, "layernorm");
    check_defined(bias, "layernorm");
    const int k = x.shape().back();
    if (gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != k || bias.dim(0) != k) {
        throw DimensionError("layernorm: gain/bias must be [" + std::to_string(k) + "], got " +
                             shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
    }
    const int64_t rows = x.numel() / k;
    std::vector<double> out(x.data().size());
    std::vector<double> xhat(x.data().size());
    std::vector<double> inv_std(static_cast<size_t>(rows));
    const double* in = x.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* row = in + r * k;
        double mean = 0.0;
        for (int j = 0; j < k; ++j) mean += row[j];
        mean /= k;
        double var = 0.0;
        for (int j = 0; j < k; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= k;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(r)] = is;
        double* xh = xhat.data() + r * k;
        double* orow = out.data() + r * k;
        for (int j = 0; j < k; ++j) {
            xh[j] = (row[j] - mean) * is;
            orow[j] = xh[j] * gain.data()[static_cast<size_t>(j)] +
                      bias.data()[static_cast<size_t>(j)];
        }
    }
    Tensor y = make_output(x.shape(), std::move(out), {&x, &gain, &bias});
    if (tracing({&x, &gain, &bias})) {
        Tape::current()->record([xi = x.ptr(), gi = gain.ptr(), bi = bias.ptr(), yi = y.ptr(),
                                 xhat = std::move(xhat), inv_std = std::move(inv_std), k,
                                 rows](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy) return;
            if (bi->requires_grad) {
                auto& gb = adj.get(bi.get());
                for (int64_t r = 0; r < rows; ++r) {
                    const double* g = gy->data() + r * k;
                    for (int j = 0; j < k; ++j) gb[static_cast<size_t>(j)] += g[j];
                }
            }
            if (gi->requires_grad) {
                auto& gg = adj.get(gi.get());
                for (int64_t r = 0; r < rows; ++r) {
                    const double* g = gy->data() + r * k;
                    const double* xh = xhat.data() + r * k;
                    for (int j = 0; j < k; ++j) gg[static_cast<size_t>(j)] += g[j] * xh[j];
                }
            }
            if (xi->requires_grad) {
                auto& gx = adj.get(xi.get());
                for (int64_t r = 0; r < rows; ++r) {
                    const double* g = gy->data() + r * k;
                    const double* xh = xhat.data() + r * k;
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    for (int j = 0; j < k; ++j) {
                        const double dxh = g[j] * gi->data[static_cast<size_t>(j)];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xh[j];
                    }
                    mean_dxhat /= k;
                    mean_dxhat_xhat /= k;
                    double* gxr = gx.data() + r * k;
                    const double is = inv_std[static_cast<size_t>(r)];
                    for (int j = 0; j < k; ++j) {
                        const double dxh = g[j] * gi->data[static_cast<size_t>(j)];
                        gxr[j] += (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat) * is;
                    }
                }
            }
        });
    }
    return y;
}

// ----------------------------- pointwise nonlinearities -----------------------------

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

template <typename Fwd, typename Dfn>
Tensor pointwise(const char* name, const Tensor& x, Fwd fwd, Dfn dfn) {
    check_defined(x, name);
    std::vector<double> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(x.data()[i]);
    Tensor y = make_output(x.shape(), std::move(out), {&x});
    if (tracing({&x})) {
        Tape::current()->record([xi = x.ptr(), yi = y.ptr(), dfn](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy || !xi->requires_grad) return;
            auto& gx = adj.get(xi.get());
            for (size_t i = 0; i < gx.size(); ++i) {
                gx[i] += (*gy)[i] * dfn(xi->data[i], yi->data[i]);
            }
        });
    }
    return y;
}

}  // namespace

Tensor gelu(const Tensor& x) {
    return pointwise(
        "gelu", x,
        [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
        [](double v, double) {
            return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) +
                   v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
        });
}

Tensor tanh(const Tensor& x) {
    return pointwise(
        "tanh", x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return pointwise(
        "sigmoid", x,
        [](double v) {
            if (v >= 0.0) {
                return 1.0 / (1.0 + std::exp(-v));
            }
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& x) {
    check_defined(x, "log");
    for (double v : x.data()) {
        if (!(v > 0.0)) {
            throw NumericError("log: input " + std::to_string(v) + " is not positive");
        }
    }
    return pointwise(
        "log", x, [](double v) { return std::log(v); },
        [](double v, double) { return 1.0 / v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    if (!(lo < hi)) throw ParameterError("clamp: lo must be < hi");
    return pointwise(
        "clamp", x,
        [lo, hi](double v) { return std::min(hi, std::max(lo, v)); },
        [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

// ----------------------------- reductions -----------------------------

Tensor sum_all(const Tensor& x) {
    check_defined(x, "sum_all");
    double total = 0.0;
    for (double v : x.data()) total += v;
    Tensor y = make_output({1}, {total}, {&x});
    if (tracing({&x})) {
        Tape::current()->record([xi = x.ptr(), yi = y.ptr()](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy || !xi->requires_grad) return;
            auto& gx = adj.get(xi.get());
            for (double& g : gx) g += (*gy)[0];
        });
    }
    return y;
}

Tensor mean_all(const Tensor& x) {
    check_defined(x, "mean_all");
    if (x.numel() == 0) throw ContractError("mean_all: empty tensor");
    double total = 0.0;
    for (double v : x.data()) total += v;
    const double inv = 1.0 / static_cast<double>(x.numel());
    Tensor y = make_output({1}, {total * inv}, {&x});
    if (tracing({&x})) {
        Tape::current()->record([xi = x.ptr(), yi = y.ptr(), inv](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy || !xi->requires_grad) return;
            auto& gx = adj.get(xi.get());
            for (double& g : gx) g += (*gy)[0] * inv;
        });
    }
    return y;
}

Tensor mean_axis(const Tensor& x, int axis) {
    check_defined(x, "mean_axis");
    const int r = x.rank();
    if (axis < 0 || axis >= r) throw DimensionError("mean_axis: axis out of range");
    const Shape& xs = x.shape();
    const int len = xs[static_cast<size_t>(axis)];
    if (len == 0) throw DimensionError("mean_axis: empty axis");
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= xs[static_cast<size_t>(d)];
    for (int d = axis + 1; d < r; ++d) inner *= xs[static_cast<size_t>(d)];
    Shape out_shape;
    for (int d = 0; d < r; ++d) {
        if (d != axis) out_shape.push_back(xs[static_cast<size_t>(d)]);
    }
    if (out_shape.empty()) out_shape.push_back(1);
    std::vector<double> out(static_cast<size_t>(outer * inner), 0.0);
    const double* in = x.data().data();
    const double inv = 1.0 / len;
    for (int64_t o = 0; o < outer; ++o) {
        for (int l = 0; l < len; ++l) {
            const double* src = in + (o * len + l) * inner;
            double* dst = out.data() + o * inner;
            for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    }
    for (double& v : out) v *= inv;
    Tensor y = make_output(std::move(out_shape), std::move(out), {&x});
    if (tracing({&x})) {
        Tape::current()->record(
            [xi = x.ptr(), yi = y.ptr(), outer, len, inner, inv](Adjoints& adj) {
                const auto* gy = adj.find(yi.get());
                if (!gy || !xi->requires_grad) return;
                auto& gx = adj.get(xi.get());
                for (int64_t o = 0; o < outer; ++o) {
                    const double* g = gy->data() + o * inner;
                    for (int l = 0; l < len; ++l) {
                        double* dst = gx.data() + (o * len + l) * inner;
                        for (int64_t i = 0; i < inner; ++i) dst[i] += g[i] * inv;
                    }
                }
            });
    }
    return y;
}

// ----------------------------- lookup / dropout / misc -----------------------------

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    check_defined(table, "embedding_lookup");
    if (table.rank() != 2) {
        throw DimensionError("embedding_lookup: table must be [V,C], got " +
                             shape_str(table.shape()));
    }
    const int v = table.dim(0);
    const int c = table.dim(1);
    const int n = static_cast<int>(ids.size());
    for (int i = 0; i < n; ++i) {
        if (ids[static_cast<size_t>(i)] < 0 || ids[static_cast<size_t>(i)] >= v) {
            throw IndexError("embedding_lookup: id " + std::to_string(ids[static_cast<size_t>(i)]) +
                             " out of range [0," + std::to_string(v) + ")");
        }
    }
    std::vector<double> out(static_cast<size_t>(n) * c);
    for (int i = 0; i < n; ++i) {
        const double* src = table.data().data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * c;
        std::copy(src, src + c, out.begin() + static_cast<size_t>(i) * c);
    }
    Tensor y = make_output({n, c}, std::move(out), {&table});
    if (tracing({&table})) {
        Tape::current()->record([ti = table.ptr(), yi = y.ptr(), ids, c](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy || !ti->requires_grad) return;
            auto& gt = adj.get(ti.get());
            for (size_t i = 0; i < ids.size(); ++i) {
                const double* g = gy->data() + i * static_cast<size_t>(c);
                double* dst = gt.data() + static_cast<size_t>(ids[i]) * c;
                for (int j = 0; j < c; ++j) dst[j] += g[j];
            }
        });
    }
    return y;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng, bool train) {
    check_defined(x, "dropout");
    if (rate < 0.0 || rate >= 1.0) {
        throw ParameterError("dropout: rate must be in [0,1), got " + std::to_string(rate));
    }
    if (!train || rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.data().size());
    for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
    std::vector<double> out(x.data().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
    Tensor y = make_output(x.shape(), std::move(out), {&x});
    if (tracing({&x})) {
        Tape::current()->record([xi = x.ptr(), yi = y.ptr(), mask = std::move(mask)](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy || !xi->requires_grad) return;
            auto& gx = adj.get(xi.get());
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += (*gy)[i] * mask[i];
        });
    }
    return y;
}

Tensor straight_through_onehot(const Tensor& soft) {
    check_defined(soft, "straight_through_onehot");
    if (soft.rank() < 1) throw DimensionError("straight_through_onehot: rank must be >= 1");
    const int k = soft.shape().back();
    if (k == 0) throw DimensionError("straight_through_onehot: empty last axis");
    const int64_t rows = soft.numel() / k;
    std::vector<double> out(soft.data().size(), 0.0);
    const double* in = soft.data().data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* row = in + r * k;
        int best = 0;
        for (int j = 1; j < k; ++j) {
            if (row[j] > row[best]) best = j;  // ties keep the lowest index
        }
        out[static_cast<size_t>(r * k + best)] = 1.0;
    }
    Tensor y = make_output(soft.shape(), std::move(out), {&soft});
    if (tracing({&soft})) {
        Tape::current()->record([si = soft.ptr(), yi = y.ptr()](Adjoints& adj) {
            const auto* gy = adj.find(yi.get());
            if (!gy || !si->requires_grad) return;
            accumulate(adj.get(si.get()), *gy);
        });
    }
    return y;
}

Tensor detach(const Tensor& x) {
    check_defined(x, "detach");
    return Tensor::from_data(x.shape(), x.data(), false);
}

}  // namespace textgen
