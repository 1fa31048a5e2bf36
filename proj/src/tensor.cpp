#include "kggen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "kggen/errors.hpp"

namespace kggen {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw DimensionError(msg);
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << " ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Act act_from_string(const std::string& name) {
    if (name == "gelu") return Act::Gelu;
    if (name == "leaky_relu") return Act::LeakyRelu;
    if (name == "elu") return Act::Elu;
    throw ConfigError("unknown activation kind '" + name + "' (expected gelu, leaky_relu or elu)");
}

std::size_t max_threads() {
    static const std::size_t cached = [] {
        const char* env = std::getenv("KGC_THREADS");
        if (!env) return std::size_t{1};
        long v = std::strtol(env, nullptr, 10);
        if (v < 1) v = 1;
        if (v > 64) v = 64;
        return static_cast<std::size_t>(v);
    }();
    return cached;
}

namespace {

// Row-partitioned helper for the matmul kernels. Work below the threshold runs
// inline; threads only pay off on the larger forward/backward products.
void parallel_rows(std::size_t n_rows, std::size_t work_per_row,
                   const std::function<void(std::size_t, std::size_t)>& fn) {
    const std::size_t threads = std::min(max_threads(), n_rows);
    if (threads <= 1 || n_rows * work_per_row < 1u << 16) {
        fn(0, n_rows);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const std::size_t chunk = (n_rows + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
        const std::size_t lo = t * chunk;
        const std::size_t hi = std::min(n_rows, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace

// ---------------------------------------------------------------------------
// TensorData / Tensor basics
// ---------------------------------------------------------------------------

void TensorData::ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

void TensorData::add_grad(const std::vector<double>& g) {
    ensure_grad();
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
}

Tensor make_node(std::vector<std::size_t> shape, std::vector<double> values,
                 std::vector<Tensor> parents, std::function<void(TensorData&)> backprop) {
    auto d = std::make_shared<TensorData>();
    d->shape = std::move(shape);
    d->values = std::move(values);
    bool rg = false;
    for (const Tensor& p : parents) rg = rg || p.requires_grad();
    d->requires_grad = rg;
    if (rg) {
        d->parents = std::move(parents);
        d->backprop = std::move(backprop);
        d->ensure_grad();
    }
    return Tensor(std::move(d));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    return from(std::move(shape), {}, requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    std::vector<double> v(shape_product(shape), value);
    return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values,
                    bool requires_grad) {
    auto d = std::make_shared<TensorData>();
    const std::size_t n = shape_product(shape);
    if (values.empty()) values.assign(n, 0.0);
    if (values.size() != n) {
        throw DimensionError("tensor value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
    }
    d->shape = std::move(shape);
    d->values = std::move(values);
    d->requires_grad = requires_grad;
    if (requires_grad) d->ensure_grad();
    return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({1}, {value}, requires_grad);
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
    std::vector<std::size_t> shape{values.size()};
    return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::randn(std::vector<std::size_t> shape, Rng& rng, double stddev,
                     bool requires_grad) {
    std::vector<double> v(shape_product(shape));
    for (double& x : v) x = rng.normal(0.0, stddev);
    return from(std::move(shape), std::move(v), requires_grad);
}

const std::vector<std::size_t>& Tensor::shape() const { return d_->shape; }
std::size_t Tensor::size() const { return d_->values.size(); }

std::size_t Tensor::rows() const {
    require(rank() == 2, "rows() needs a rank-2 tensor, got " + shape_str(shape()));
    return d_->shape[0];
}

std::size_t Tensor::cols() const {
    require(rank() == 2, "cols() needs a rank-2 tensor, got " + shape_str(shape()));
    return d_->shape[1];
}

std::vector<double>& Tensor::values() { return d_->values; }
const std::vector<double>& Tensor::values() const { return d_->values; }

std::vector<double>& Tensor::grad() {
    if (!d_->requires_grad) throw Error("tensor does not track gradients");
    d_->ensure_grad();
    return d_->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (!d_->requires_grad) throw Error("tensor does not track gradients");
    d_->ensure_grad();
    return d_->grad;
}

bool Tensor::requires_grad() const { return d_ && d_->requires_grad; }

double Tensor::item() const {
    require(size() == 1, "item() needs a scalar, got " + shape_str(shape()));
    return d_->values[0];
}

double Tensor::at(std::size_t i) const { return d_->values.at(i); }

double Tensor::at(std::size_t r, std::size_t c) const {
    require(rank() == 2, "at(r,c) needs a rank-2 tensor");
    return d_->values.at(r * d_->shape[1] + c);
}

void Tensor::zero_grad() {
    if (d_ && d_->requires_grad) d_->grad.assign(d_->values.size(), 0.0);
}

void Tensor::backward() const {
    if (!d_) throw Error("backward() on an empty tensor");
    require(size() == 1, "backward() needs a scalar loss, got " + shape_str(shape()));
    if (!d_->requires_grad) return;

    // Iterative post-order DFS; reversed it yields dependents-before-parents.
    std::vector<TensorData*> order;
    std::unordered_set<TensorData*> visited;
    struct Frame {
        TensorData* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack{{d_.get(), 0}};
    visited.insert(d_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorData* p = f.node->parents[f.next_parent++].node();
            if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    // Interior grads are scratch per call; leaves keep accumulating.
    for (TensorData* n : order) {
        if (!n->is_leaf()) n->grad.assign(n->values.size(), 0.0);
        else n->ensure_grad();
    }
    d_->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorData* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise / shaping
// ---------------------------------------------------------------------------

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) +
                             " does not match " + shape_str(b.shape()));
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return make_node(a.shape(), std::move(out), {a, b}, [](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        TensorData* pb = self.parents[1].node();
        if (pa->requires_grad) pa->add_grad(self.grad);
        if (pb->requires_grad) pb->add_grad(self.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return make_node(a.shape(), std::move(out), {a, b}, [](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        TensorData* pb = self.parents[1].node();
        if (pa->requires_grad) pa->add_grad(self.grad);
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return make_node(a.shape(), std::move(out), {a, b}, [](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        TensorData* pb = self.parents[1].node();
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pa->grad[i] += self.grad[i] * pb->values[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pb->grad[i] += self.grad[i] * pa->values[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
    return make_node(a.shape(), std::move(out), {a}, [c](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += c * self.grad[i];
    });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    require(m.rank() == 2, "add_rowvec: matrix must be rank-2, got " + shape_str(m.shape()));
    const std::size_t d = m.cols();
    require(v.size() == d, "add_rowvec: vector size " + shape_str(v.shape()) +
                               " does not match matrix " + shape_str(m.shape()));
    const std::size_t n = m.rows();
    std::vector<double> out(m.size());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) out[r * d + c] = m.values()[r * d + c] + v.values()[c];
    return make_node(m.shape(), std::move(out), {m, v}, [n, d](TensorData& self) {
        TensorData* pm = self.parents[0].node();
        TensorData* pv = self.parents[1].node();
        if (pm->requires_grad) pm->add_grad(self.grad);
        if (pv->requires_grad) {
            pv->ensure_grad();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t c = 0; c < d; ++c) pv->grad[c] += self.grad[r * d + c];
        }
    });
}

Tensor transpose(const Tensor& a) {
    require(a.rank() == 2, "transpose needs a rank-2 tensor, got " + shape_str(a.shape()));
    const std::size_t n = a.rows(), m = a.cols();
    std::vector<double> out(a.size());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) out[c * n + r] = a.values()[r * m + c];
    return make_node({m, n}, std::move(out), {a}, [n, m](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        pa->ensure_grad();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < m; ++c) pa->grad[r * m + c] += self.grad[c * n + r];
    });
}

Tensor reshape(const Tensor& a, std::vector<std::size_t> shape) {
    require(shape_product(shape) == a.size(),
            "reshape: " + shape_str(a.shape()) + " cannot become " + shape_str(shape));
    std::vector<double> out = a.values();
    return make_node(std::move(shape), std::move(out), {a}, [](TensorData& self) {
        self.parents[0].node()->add_grad(self.grad);
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_rows: no parts");
    const std::size_t d = parts[0].cols();
    std::size_t n = 0;
    for (const Tensor& p : parts) {
        require(p.rank() == 2 && p.cols() == d,
                "concat_rows: column mismatch " + shape_str(p.shape()));
        n += p.rows();
    }
    std::vector<double> out;
    out.reserve(n * d);
    for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    return make_node({n, d}, std::move(out), parts, [](TensorData& self) {
        std::size_t offset = 0;
        for (Tensor& p : self.parents) {
            TensorData* pd = p.node();
            if (pd->requires_grad) {
                pd->ensure_grad();
                for (std::size_t i = 0; i < pd->values.size(); ++i)
                    pd->grad[i] += self.grad[offset + i];
            }
            offset += pd->values.size();
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols: no parts");
    const std::size_t n = parts[0].rows();
    std::size_t d = 0;
    for (const Tensor& p : parts) {
        require(p.rank() == 2 && p.rows() == n, "concat_cols: row mismatch " + shape_str(p.shape()));
        d += p.cols();
    }
    std::vector<double> out(n * d);
    std::size_t col0 = 0;
    for (const Tensor& p : parts) {
        const std::size_t pc = p.cols();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < pc; ++c) out[r * d + col0 + c] = p.values()[r * pc + c];
        col0 += pc;
    }
    return make_node({n, d}, std::move(out), parts, [n, d](TensorData& self) {
        std::size_t col0 = 0;
        for (Tensor& p : self.parents) {
            TensorData* pd = p.node();
            const std::size_t pc = pd->shape[1];
            if (pd->requires_grad) {
                pd->ensure_grad();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t c = 0; c < pc; ++c)
                        pd->grad[r * pc + c] += self.grad[r * d + col0 + c];
            }
            col0 += pc;
        }
    });
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
    require(a.rank() == 2, "slice_rows needs a rank-2 tensor");
    require(r0 <= r1 && r1 <= a.rows(), "slice_rows: range [" + std::to_string(r0) + "," +
                                            std::to_string(r1) + ") outside " +
                                            shape_str(a.shape()));
    const std::size_t d = a.cols();
    std::vector<double> out(a.values().begin() + static_cast<std::ptrdiff_t>(r0 * d),
                            a.values().begin() + static_cast<std::ptrdiff_t>(r1 * d));
    return make_node({r1 - r0, d}, std::move(out), {a}, [r0, d](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[r0 * d + i] += self.grad[i];
    });
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    require(a.rank() == 2, "slice_cols needs a rank-2 tensor");
    require(c0 <= c1 && c1 <= a.cols(), "slice_cols: range [" + std::to_string(c0) + "," +
                                            std::to_string(c1) + ") outside " +
                                            shape_str(a.shape()));
    const std::size_t n = a.rows(), d = a.cols(), w = c1 - c0;
    std::vector<double> out(n * w);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < w; ++c) out[r * w + c] = a.values()[r * d + c0 + c];
    return make_node({n, w}, std::move(out), {a}, [n, d, c0, w](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        pa->ensure_grad();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < w; ++c) pa->grad[r * d + c0 + c] += self.grad[r * w + c];
    });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2, "matmul needs rank-2 tensors, got " +
                                                shape_str(a.shape()) + " and " +
                                                shape_str(b.shape()));
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k) {
        throw DimensionError("matmul: inner dimensions of " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " disagree");
    }
    std::vector<double> out(n * m, 0.0);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    parallel_rows(n, k * m, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t r = lo; r < hi; ++r)
            for (std::size_t j = 0; j < k; ++j) {
                const double x = av[r * k + j];
                for (std::size_t c = 0; c < m; ++c) out[r * m + c] += x * bv[j * m + c];
            }
    });
    return make_node({n, m}, std::move(out), {a, b}, [n, k, m](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        TensorData* pb = self.parents[1].node();
        const double* g = self.grad.data();
        if (pa->requires_grad) {
            pa->ensure_grad();
            double* ga = pa->grad.data();
            const double* bv = pb->values.data();
            parallel_rows(n, k * m, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t r = lo; r < hi; ++r)
                    for (std::size_t j = 0; j < k; ++j) {
                        double s = 0.0;
                        for (std::size_t c = 0; c < m; ++c) s += g[r * m + c] * bv[j * m + c];
                        ga[r * k + j] += s;
                    }
            });
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            double* gb = pb->grad.data();
            const double* av = pa->values.data();
            parallel_rows(k, n * m, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t j = lo; j < hi; ++j)
                    for (std::size_t c = 0; c < m; ++c) {
                        double s = 0.0;
                        for (std::size_t r = 0; r < n; ++r) s += av[r * k + j] * g[r * m + c];
                        gb[j * m + c] += s;
                    }
            });
        }
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2, "matmul_nt needs rank-2 tensors");
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    if (b.cols() != k) {
        throw DimensionError("matmul_nt: inner dimensions of " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " disagree");
    }
    std::vector<double> out(n * m, 0.0);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    parallel_rows(n, k * m, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t r = lo; r < hi; ++r)
            for (std::size_t c = 0; c < m; ++c) {
                double s = 0.0;
                for (std::size_t j = 0; j < k; ++j) s += av[r * k + j] * bv[c * k + j];
                out[r * m + c] = s;
            }
    });
    return make_node({n, m}, std::move(out), {a, b}, [n, k, m](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        TensorData* pb = self.parents[1].node();
        const double* g = self.grad.data();
        if (pa->requires_grad) {
            pa->ensure_grad();
            double* ga = pa->grad.data();
            const double* bv = pb->values.data();
            parallel_rows(n, k * m, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t r = lo; r < hi; ++r)
                    for (std::size_t c = 0; c < m; ++c) {
                        const double gz = g[r * m + c];
                        for (std::size_t j = 0; j < k; ++j) ga[r * k + j] += gz * bv[c * k + j];
                    }
            });
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            double* gb = pb->grad.data();
            const double* av = pa->values.data();
            parallel_rows(m, n * k, [&](std::size_t lo, std::size_t hi) {
                for (std::size_t c = lo; c < hi; ++c)
                    for (std::size_t j = 0; j < k; ++j) {
                        double s = 0.0;
                        for (std::size_t r = 0; r < n; ++r) s += g[r * m + c] * av[r * k + j];
                        gb[c * k + j] += s;
                    }
            });
        }
    });
}

Tensor linear(const Tensor& input, const Tensor& weight) {
    if (input.rank() != 2 || weight.rank() != 2 || input.cols() != weight.cols()) {
        throw DimensionError("linear: input shape " + shape_str(input.shape()) +
                             " incompatible with weight " + shape_str(weight.shape()));
    }
    return matmul_nt(input, weight);
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    Tensor out = linear(input, weight);
    if (!bias.defined()) return out;
    if (bias.size() != weight.rows()) {
        throw DimensionError("linear: bias shape " + shape_str(bias.shape()) +
                             " incompatible with weight " + shape_str(weight.shape()));
    }
    return add_rowvec(out, bias);
}

// ---------------------------------------------------------------------------
// reductions / normalization
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return make_node({1}, {s}, {a}, [](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        pa->ensure_grad();
        for (double& g : pa->grad) g += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.size());
    double s = 0.0;
    for (double v : a.values()) s += v;
    return make_node({1}, {s * inv}, {a}, [inv](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        pa->ensure_grad();
        for (double& g : pa->grad) g += self.grad[0] * inv;
    });
}

Tensor max_rows(const Tensor& a) {
    require(a.rank() == 2 && a.rows() >= 1, "max_rows needs a non-empty rank-2 tensor");
    const std::size_t n = a.rows(), d = a.cols();
    std::vector<double> out(d);
    auto argmax = std::make_shared<std::vector<std::size_t>>(d, 0);
    for (std::size_t c = 0; c < d; ++c) {
        double best = a.values()[c];
        std::size_t best_r = 0;
        for (std::size_t r = 1; r < n; ++r) {
            const double v = a.values()[r * d + c];
            if (v > best) {
                best = v;
                best_r = r;
            }
        }
        out[c] = best;
        (*argmax)[c] = best_r;
    }
    return make_node({1, d}, std::move(out), {a}, [argmax, d](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        pa->ensure_grad();
        for (std::size_t c = 0; c < d; ++c) pa->grad[(*argmax)[c] * d + c] += self.grad[c];
    });
}

namespace {

// Softmax along a contiguous axis described by (outer, len, inner) strides.
struct AxisView {
    std::size_t outer, len, inner;
};

AxisView axis_view(const Tensor& a, int axis) {
    const auto& sh = a.shape();
    require(!sh.empty() && a.rank() <= 2, "softmax supports rank 1 and 2 tensors");
    int ax = axis;
    if (ax < 0) ax += static_cast<int>(a.rank());
    require(ax >= 0 && ax < static_cast<int>(a.rank()),
            "softmax: axis out of range for " + shape_str(sh));
    if (a.rank() == 1) return {1, sh[0], 1};
    if (ax == 1) return {sh[0], sh[1], 1};
    return {1, sh[0], sh[1]};
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
    for (double v : a.values()) {
        if (std::isnan(v)) throw NumericError("softmax: NaN in input");
    }
    const AxisView view = axis_view(a, axis);
    std::vector<double> out(a.size());
    const auto& x = a.values();
    for (std::size_t o = 0; o < view.outer; ++o) {
        for (std::size_t i = 0; i < view.inner; ++i) {
            const std::size_t base = o * view.len * view.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < view.len; ++j)
                mx = std::max(mx, x[base + j * view.inner]);
            double z = 0.0;
            for (std::size_t j = 0; j < view.len; ++j) {
                const double e = std::exp(x[base + j * view.inner] - mx);
                out[base + j * view.inner] = e;
                z += e;
            }
            for (std::size_t j = 0; j < view.len; ++j) out[base + j * view.inner] /= z;
        }
    }
    auto y = std::make_shared<std::vector<double>>(out);
    return make_node(a.shape(), std::move(out), {a}, [view, y](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        pa->ensure_grad();
        const auto& yv = *y;
        for (std::size_t o = 0; o < view.outer; ++o) {
            for (std::size_t i = 0; i < view.inner; ++i) {
                const std::size_t base = o * view.len * view.inner + i;
                double dot = 0.0;
                for (std::size_t j = 0; j < view.len; ++j) {
                    const std::size_t idx = base + j * view.inner;
                    dot += self.grad[idx] * yv[idx];
                }
                for (std::size_t j = 0; j < view.len; ++j) {
                    const std::size_t idx = base + j * view.inner;
                    pa->grad[idx] += yv[idx] * (self.grad[idx] - dot);
                }
            }
        }
    });
}

Tensor log_softmax_rows(const Tensor& a) {
    require(a.rank() == 2, "log_softmax_rows needs a rank-2 tensor");
    const std::size_t n = a.rows(), d = a.cols();
    std::vector<double> out(a.size());
    const auto& x = a.values();
    for (std::size_t r = 0; r < n; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < d; ++c) mx = std::max(mx, x[r * d + c]);
        double z = 0.0;
        for (std::size_t c = 0; c < d; ++c) z += std::exp(x[r * d + c] - mx);
        const double lz = std::log(z) + mx;
        for (std::size_t c = 0; c < d; ++c) out[r * d + c] = x[r * d + c] - lz;
    }
    auto y = std::make_shared<std::vector<double>>(out);
    return make_node(a.shape(), std::move(out), {a}, [n, d, y](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        pa->ensure_grad();
        for (std::size_t r = 0; r < n; ++r) {
            double gsum = 0.0;
            for (std::size_t c = 0; c < d; ++c) gsum += self.grad[r * d + c];
            for (std::size_t c = 0; c < d; ++c) {
                const std::size_t idx = r * d + c;
                pa->grad[idx] += self.grad[idx] - std::exp((*y)[idx]) * gsum;
            }
        }
    });
}

Tensor layer_norm(const Tensor& input, const Tensor& gain, const Tensor& offset, double eps) {
    require(input.rank() == 2, "layer_norm needs a rank-2 input, got " + shape_str(input.shape()));
    const std::size_t n = input.rows(), d = input.cols();
    if (d == 0) throw DimensionError("layer_norm: zero feature dimension");
    require(gain.size() == d && offset.size() == d,
            "layer_norm: gain " + shape_str(gain.shape()) + " / offset " +
                shape_str(offset.shape()) + " do not match input " + shape_str(input.shape()));
    std::vector<double> out(input.size());
    auto xhat = std::make_shared<std::vector<double>>(input.size());
    auto inv_std = std::make_shared<std::vector<double>>(n);
    const auto& x = input.values();
    for (std::size_t r = 0; r < n; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < d; ++c) mu += x[r * d + c];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double t = x[r * d + c] - mu;
            var += t * t;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t c = 0; c < d; ++c) {
            const double h = (x[r * d + c] - mu) * is;
            (*xhat)[r * d + c] = h;
            out[r * d + c] = gain.values()[c] * h + offset.values()[c];
        }
    }
    return make_node(input.shape(), std::move(out), {input, gain, offset},
                     [n, d, xhat, inv_std](TensorData& self) {
                         TensorData* px = self.parents[0].node();
                         TensorData* pg = self.parents[1].node();
                         TensorData* po = self.parents[2].node();
                         const auto& h = *xhat;
                         if (pg->requires_grad) {
                             pg->ensure_grad();
                             for (std::size_t r = 0; r < n; ++r)
                                 for (std::size_t c = 0; c < d; ++c)
                                     pg->grad[c] += self.grad[r * d + c] * h[r * d + c];
                         }
                         if (po->requires_grad) {
                             po->ensure_grad();
                             for (std::size_t r = 0; r < n; ++r)
                                 for (std::size_t c = 0; c < d; ++c)
                                     po->grad[c] += self.grad[r * d + c];
                         }
                         if (px->requires_grad) {
                             px->ensure_grad();
                             const auto& gainv = pg->values;
                             for (std::size_t r = 0; r < n; ++r) {
                                 double m1 = 0.0, m2 = 0.0;
                                 for (std::size_t c = 0; c < d; ++c) {
                                     const double dh = self.grad[r * d + c] * gainv[c];
                                     m1 += dh;
                                     m2 += dh * h[r * d + c];
                                 }
                                 m1 /= static_cast<double>(d);
                                 m2 /= static_cast<double>(d);
                                 for (std::size_t c = 0; c < d; ++c) {
                                     const double dh = self.grad[r * d + c] * gainv[c];
                                     px->grad[r * d + c] +=
                                         (dh - m1 - h[r * d + c] * m2) * (*inv_std)[r];
                                 }
                             }
                         }
                     });
}

// ---------------------------------------------------------------------------
// nonlinearities
// ---------------------------------------------------------------------------

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

double gelu_fwd(double x) {
    const double u = kGeluC * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_bwd(double x) {
    const double u = kGeluC * (x + 0.044715 * x * x * x);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

}  // namespace

Tensor leaky_relu(const Tensor& a, double slope) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.values()[i];
        out[i] = x > 0.0 ? x : slope * x;
    }
    return make_node(a.shape(), std::move(out), {a}, [slope](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            pa->grad[i] += self.grad[i] * (pa->values[i] > 0.0 ? 1.0 : slope);
    });
}

Tensor gelu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_fwd(a.values()[i]);
    return make_node(a.shape(), std::move(out), {a}, [](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            pa->grad[i] += self.grad[i] * gelu_bwd(pa->values[i]);
    });
}

Tensor elu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.values()[i];
        out[i] = x > 0.0 ? x : std::expm1(x);
    }
    auto y = std::make_shared<std::vector<double>>(out);
    return make_node(a.shape(), std::move(out), {a}, [y](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            pa->grad[i] += self.grad[i] * (pa->values[i] > 0.0 ? 1.0 : (*y)[i] + 1.0);
    });
}

Tensor activation(const Tensor& a, Act kind) {
    switch (kind) {
        case Act::Gelu:
            return gelu(a);
        case Act::LeakyRelu:
            return leaky_relu(a);
        case Act::Elu:
            return elu(a);
    }
    throw ConfigError("unknown activation kind");
}

// ---------------------------------------------------------------------------
// depthwise conv / deconv (kernel: one length-l vector, all channels)
// ---------------------------------------------------------------------------

Tensor conv1d_depthwise(const Tensor& seq, const Tensor& kernel) {
    require(seq.rank() == 2, "conv1d_depthwise: sequence must be rank-2, got " +
                                 shape_str(seq.shape()));
    require(kernel.rank() == 1, "conv1d_depthwise: kernel must be rank-1");
    const std::size_t m = seq.rows(), d = seq.cols(), l = kernel.size();
    if (l == 0 || m < l) {
        throw DimensionError("conv1d_depthwise: sequence length " + std::to_string(m) +
                             " shorter than kernel length " + std::to_string(l));
    }
    const std::size_t w = m - l + 1;
    std::vector<double> out(w * d, 0.0);
    for (std::size_t t = 0; t < w; ++t)
        for (std::size_t j = 0; j < l; ++j) {
            const double kj = kernel.values()[j];
            for (std::size_t c = 0; c < d; ++c)
                out[t * d + c] += kj * seq.values()[(t + j) * d + c];
        }
    return make_node({w, d}, std::move(out), {seq, kernel}, [w, d, l](TensorData& self) {
        TensorData* ps = self.parents[0].node();
        TensorData* pk = self.parents[1].node();
        if (ps->requires_grad) {
            ps->ensure_grad();
            for (std::size_t t = 0; t < w; ++t)
                for (std::size_t j = 0; j < l; ++j) {
                    const double kj = pk->values[j];
                    for (std::size_t c = 0; c < d; ++c)
                        ps->grad[(t + j) * d + c] += kj * self.grad[t * d + c];
                }
        }
        if (pk->requires_grad) {
            pk->ensure_grad();
            for (std::size_t j = 0; j < l; ++j) {
                double s = 0.0;
                for (std::size_t t = 0; t < w; ++t)
                    for (std::size_t c = 0; c < d; ++c)
                        s += ps->values[(t + j) * d + c] * self.grad[t * d + c];
                pk->grad[j] += s;
            }
        }
    });
}

// Output row j gets sum_t kernel[j-t] * seq[t]; the operator matrix is the
// transpose of the conv matrix built from the same kernel.
Tensor deconv1d_depthwise(const Tensor& seq, const Tensor& kernel) {
    require(seq.rank() == 2, "deconv1d_depthwise: sequence must be rank-2");
    require(kernel.rank() == 1 && kernel.size() >= 1,
            "deconv1d_depthwise: kernel must be rank-1 and non-empty");
    const std::size_t w = seq.rows(), d = seq.cols(), l = kernel.size();
    const std::size_t m = w + l - 1;
    std::vector<double> out(m * d, 0.0);
    for (std::size_t t = 0; t < w; ++t)
        for (std::size_t j = 0; j < l; ++j) {
            const double kj = kernel.values()[j];
            for (std::size_t c = 0; c < d; ++c)
                out[(t + j) * d + c] += kj * seq.values()[t * d + c];
        }
    return make_node({m, d}, std::move(out), {seq, kernel}, [w, d, l](TensorData& self) {
        TensorData* ps = self.parents[0].node();
        TensorData* pk = self.parents[1].node();
        if (ps->requires_grad) {
            ps->ensure_grad();
            for (std::size_t t = 0; t < w; ++t)
                for (std::size_t j = 0; j < l; ++j) {
                    const double kj = pk->values[j];
                    for (std::size_t c = 0; c < d; ++c)
                        ps->grad[t * d + c] += kj * self.grad[(t + j) * d + c];
                }
        }
        if (pk->requires_grad) {
            pk->ensure_grad();
            for (std::size_t j = 0; j < l; ++j) {
                double s = 0.0;
                for (std::size_t t = 0; t < w; ++t)
                    for (std::size_t c = 0; c < d; ++c)
                        s += ps->values[t * d + c] * self.grad[(t + j) * d + c];
                pk->grad[j] += s;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// lookups / regularization
// ---------------------------------------------------------------------------

Tensor embedding_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
    require(table.rank() == 2, "embedding_rows: table must be rank-2");
    const std::size_t v = table.rows(), d = table.cols();
    std::vector<double> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= v) {
            throw LookupError("embedding_rows: id " + std::to_string(ids[i]) +
                              " outside table " + shape_str(table.shape()));
        }
        std::copy_n(table.values().begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                    out.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    auto idx = std::make_shared<std::vector<std::size_t>>(ids);
    return make_node({ids.size(), d}, std::move(out), {table}, [idx, d](TensorData& self) {
        TensorData* pt = self.parents[0].node();
        pt->ensure_grad();
        for (std::size_t i = 0; i < idx->size(); ++i)
            for (std::size_t c = 0; c < d; ++c)
                pt->grad[(*idx)[i] * d + c] += self.grad[i * d + c];
    });
}

Tensor dropout(const Tensor& a, double rate, Rng& rng, bool training) {
    if (!training || rate <= 0.0) return a;
    if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
    const double keep = 1.0 - rate;
    auto mask = std::make_shared<std::vector<double>>(a.size());
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double m = rng.uniform() < keep ? 1.0 / keep : 0.0;
        (*mask)[i] = m;
        out[i] = a.values()[i] * m;
    }
    return make_node(a.shape(), std::move(out), {a}, [mask](TensorData& self) {
        TensorData* pa = self.parents[0].node();
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            pa->grad[i] += self.grad[i] * (*mask)[i];
    });
}

}  // namespace kggen
