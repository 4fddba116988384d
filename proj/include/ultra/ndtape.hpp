#pragma once

// Dense 2-D tensors with a recording tape for reverse-mode gradients.
//
// Every value is a row-major rows x cols matrix of doubles; scalars are 1x1
// and vectors are 1xn rows. The only broadcast is a 1xn row applied to every
// row of an mxn matrix.

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ultra::nd {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor row_vector(std::initializer_list<double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double item() const;

  void fill(double v);
  bool all_finite() const;
  bool operator==(const Tensor& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

class Tape {
 public:
  // Receives the gradient w.r.t. the op output and the output value.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out, const Tensor& out)>;

  // A non-recording tape evaluates ops without keeping backward closures.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Tensor value);
  Var leaf(Tensor value, bool requires_grad = true);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse
  // order. May be called once per tape.
  void backward(Var loss);
  // Gradient of a leaf after backward; zeros when the leaf is unreachable.
  Tensor grad(Var v) const;

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Used by op implementations.
  Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn fn);
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(fn));
  }
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool record_;
  bool consumed_ = false;
};

// Edge list for message passing: message e goes from row src[e] of the node
// states, multiplied elementwise by row rel[e] of the relation matrix, and is
// summed into row dst[e] of the output.
class MessageIndex {
 public:
  MessageIndex() = default;
  MessageIndex(std::vector<std::uint32_t> src, std::vector<std::uint32_t> rel,
               std::vector<std::uint32_t> dst, std::size_t num_nodes);

  std::size_t num_messages() const { return src_.size(); }
  std::size_t num_nodes() const { return num_nodes_; }
  std::span<const std::uint32_t> src() const { return src_; }
  std::span<const std::uint32_t> rel() const { return rel_; }
  std::span<const std::uint32_t> dst() const { return dst_; }
  // Messages grouped by destination (CSR), each group in edge order.
  std::span<const std::uint32_t> incoming(std::size_t node) const {
    return {by_dst_.data() + dst_ptr_[node], dst_ptr_[node + 1] - dst_ptr_[node]};
  }

 private:
  std::vector<std::uint32_t> src_, rel_, dst_;
  std::size_t num_nodes_ = 0;
  std::vector<std::size_t> dst_ptr_{0};
  std::vector<std::uint32_t> by_dst_;
};

// Summation order for aggregated messages. kEdgeOrder adds messages in edge
// list order; kCanonical orders each node's incoming messages by their
// (relation row, state row) values, so the result depends only on the
// multiset of messages and not on node or edge numbering.
enum class SumOrder { kEdgeOrder, kCanonical };

Var matmul(Var a, Var b);
// x * w + bias, bias a 1xn row.
Var affine(Var x, Var w, Var bias);
Var add(Var a, Var b);
Var add_row(Var x, Var row);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var relu(Var x);
Var sigmoid(Var x);
// log(1 + exp(x)), evaluated stably.
Var softplus(Var x);
inline constexpr double kLayerNormEps = 1e-5;
Var layer_norm(Var x, Var gain, Var shift, double eps = kLayerNormEps);
Var sum(Var x);
Var mean(Var x);
Var index_select(Var x, std::span<const std::uint32_t> rows);
Var scatter_add(Var x, std::span<const std::uint32_t> index, std::size_t num_rows);
Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
// Fused DistMult message passing with sum aggregation; equivalent to
// scatter_add(mul(index_select(states, src), index_select(relations, rel)), dst).
Var propagate(Var states, Var relations, const MessageIndex& index,
              SumOrder order = SumOrder::kEdgeOrder);

// Dense kernels shared by ops and tests. c = a * b (+ c when accumulate).
void gemm(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
Tensor transpose(const Tensor& a);

// AdamW with bias-corrected moments and decoupled weight decay.
struct AdamWConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

struct OptimizerState {
  AdamWConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  static OptimizerState zeros_like(std::span<const Tensor> params, AdamWConfig config);
};

void adamw_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& state);

}  // namespace ultra::nd
