#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "kggen/rng.hpp"

namespace kggen {

enum class Act { Gelu, LeakyRelu, Elu };

Act act_from_string(const std::string& name);

struct TensorData;

// Value handle over a node of the computation graph. Copies share the node.
// Rank 1 and 2 only; everything higher-rank in the model is kept flattened.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor row(std::vector<double> values, bool requires_grad = false);
    static Tensor randn(std::vector<std::size_t> shape, Rng& rng, double stddev,
                        bool requires_grad = true);

    bool defined() const { return d_ != nullptr; }
    const std::vector<std::size_t>& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;
    std::size_t rows() const;  // 2-d only
    std::size_t cols() const;  // 2-d only

    std::vector<double>& values();
    const std::vector<double>& values() const;
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    bool requires_grad() const;

    double item() const;
    double at(std::size_t i) const;
    double at(std::size_t r, std::size_t c) const;

    void zero_grad();
    // Seeds d(self)/d(self)=1 and walks the graph; accumulates into leaf grads.
    void backward() const;

    TensorData* node() const { return d_.get(); }

  private:
    explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
    std::shared_ptr<TensorData> d_;

    friend Tensor make_node(std::vector<std::size_t> shape, std::vector<double> values,
                            std::vector<Tensor> parents,
                            std::function<void(TensorData&)> backprop);
};

struct TensorData {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;
    std::vector<Tensor> parents;
    std::function<void(TensorData&)> backprop;

    std::size_t size() const { return values.size(); }
    bool is_leaf() const { return parents.empty(); }
    void ensure_grad();
    void add_grad(const std::vector<double>& g);
};

std::string shape_str(const std::vector<std::size_t>& shape);

// ---- elementwise / shaping ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_rowvec(const Tensor& m, const Tensor& v);  // v broadcast over rows
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);     // [n,k]x[k,m]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [n,k]x[m,k]^T
Tensor linear(const Tensor& input, const Tensor& weight);  // input . weight^T
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

// ---- reductions / normalization ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor max_rows(const Tensor& a);  // column-wise max over rows -> [1,d]
Tensor softmax(const Tensor& a, int axis = -1);
Tensor log_softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& input, const Tensor& gain, const Tensor& offset,
                  double eps = 1e-5);

// ---- nonlinearities ----
Tensor activation(const Tensor& a, Act kind);
Tensor gelu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor elu(const Tensor& a);

// ---- sequence kernels (single length-l kernel shared across channels) ----
Tensor conv1d_depthwise(const Tensor& seq, const Tensor& kernel);
Tensor deconv1d_depthwise(const Tensor& seq, const Tensor& kernel);

// ---- lookups / regularization ----
Tensor embedding_rows(const Tensor& table, const std::vector<std::size_t>& ids);
Tensor dropout(const Tensor& a, double rate, Rng& rng, bool training);

// Worker-thread cap, from KGC_THREADS (default 1). Kernels stay deterministic:
// each output element keeps a fixed reduction order regardless of thread count.
std::size_t max_threads();

}  // namespace kggen
