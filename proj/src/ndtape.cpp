#include "ultra/ndtape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#endif

#include "ultra/errors.hpp"

namespace ultra::nd {

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("tensor: " + std::to_string(data_.size()) + " values for shape [" +
                         std::to_string(rows) + ", " + std::to_string(cols) + "]");
  }
}

Tensor Tensor::row_vector(std::initializer_list<double> values) {
  return Tensor(1, values.size(), std::vector<double>(values));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("tensor: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(values));
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item: tensor is not a scalar");
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Dense kernels

namespace {

constexpr std::size_t kBlockCols = 8;
constexpr std::size_t kBlockRows = 4;

// Computes R rows of c = a * b (+ init). Each output element is the chain
// acc = fma(a[i][k], b[k][j], acc) over k, identical for every row.
template <std::size_t R>
void gemm_rows(const double* a, std::size_t lda, const double* b, std::size_t k, std::size_t n,
               double* c, const double* bias, bool accumulate) {
  std::size_t j0 = 0;
#if defined(__AVX2__) && defined(__FMA__)
  for (; j0 + kBlockCols <= n; j0 += kBlockCols) {
    __m256d lo[R], hi[R];
    for (std::size_t r = 0; r < R; ++r) {
      if (accumulate) {
        lo[r] = _mm256_loadu_pd(c + r * n + j0);
        hi[r] = _mm256_loadu_pd(c + r * n + j0 + 4);
      } else if (bias) {
        lo[r] = _mm256_loadu_pd(bias + j0);
        hi[r] = _mm256_loadu_pd(bias + j0 + 4);
      } else {
        lo[r] = _mm256_setzero_pd();
        hi[r] = _mm256_setzero_pd();
      }
    }
    for (std::size_t kk = 0; kk < k; ++kk) {
      const __m256d b0 = _mm256_loadu_pd(b + kk * n + j0);
      const __m256d b1 = _mm256_loadu_pd(b + kk * n + j0 + 4);
      for (std::size_t r = 0; r < R; ++r) {
        const __m256d av = _mm256_set1_pd(a[r * lda + kk]);
        lo[r] = _mm256_fmadd_pd(av, b0, lo[r]);
        hi[r] = _mm256_fmadd_pd(av, b1, hi[r]);
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      _mm256_storeu_pd(c + r * n + j0, lo[r]);
      _mm256_storeu_pd(c + r * n + j0 + 4, hi[r]);
    }
  }
#endif
  for (; j0 + kBlockCols <= n; j0 += kBlockCols) {
    double acc[R][kBlockCols];
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t jj = 0; jj < kBlockCols; ++jj) {
        acc[r][jj] = accumulate ? c[r * n + j0 + jj] : (bias ? bias[j0 + jj] : 0.0);
      }
    }
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* brow = b + kk * n + j0;
      for (std::size_t r = 0; r < R; ++r) {
        const double av = a[r * lda + kk];
        for (std::size_t jj = 0; jj < kBlockCols; ++jj) {
          acc[r][jj] = std::fma(av, brow[jj], acc[r][jj]);
        }
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t jj = 0; jj < kBlockCols; ++jj) c[r * n + j0 + jj] = acc[r][jj];
    }
  }
  if (j0 < n) {
    const std::size_t width = n - j0;
    double acc[R][kBlockCols];
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t jj = 0; jj < width; ++jj) {
        acc[r][jj] = accumulate ? c[r * n + j0 + jj] : (bias ? bias[j0 + jj] : 0.0);
      }
    }
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* brow = b + kk * n + j0;
      for (std::size_t r = 0; r < R; ++r) {
        const double av = a[r * lda + kk];
        for (std::size_t jj = 0; jj < width; ++jj) {
          acc[r][jj] = std::fma(av, brow[jj], acc[r][jj]);
        }
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t jj = 0; jj < width; ++jj) c[r * n + j0 + jj] = acc[r][jj];
    }
  }
}

void gemm_impl(const Tensor& a, const Tensor& b, Tensor& c, const double* bias, bool accumulate) {
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  std::size_t i = 0;
  for (; i + kBlockRows <= m; i += kBlockRows) {
    gemm_rows<kBlockRows>(a.data() + i * k, k, b.data(), k, n, c.data() + i * n, bias, accumulate);
  }
  for (; i < m; ++i) {
    gemm_rows<1>(a.data() + i * k, k, b.data(), k, n, c.data() + i * n, bias, accumulate);
  }
}

void dim_check(bool ok, std::string_view op, const std::string& detail) {
  if (!ok) throw DimensionError(std::string(op) + ": " + detail);
}

std::string shape_str(const Tensor& t) {
  return "[" + std::to_string(t.rows()) + ", " + std::to_string(t.cols()) + "]";
}

Tape& tape_of(Var a, Var b, std::string_view op) {
  if (!a.valid() || !b.valid()) throw ContractViolation(std::string(op) + ": invalid variable");
  if (&a.tape() != &b.tape()) throw ContractViolation(std::string(op) + ": variables on different tapes");
  return a.tape();
}

Tape& tape_of(Var a, std::string_view op) {
  if (!a.valid()) throw ContractViolation(std::string(op) + ": invalid variable");
  return a.tape();
}

void axpy_rows(Tensor& dst, const Tensor& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// Rank of every row in the lexicographic order of row values; equal rows
// share a rank.
std::vector<std::uint32_t> dense_row_ranks(const Tensor& t) {
  const std::size_t d = t.cols();
  auto less = [&](std::uint32_t a, std::uint32_t b) {
    const double* x = t.row(a).data();
    const double* y = t.row(b).data();
    return std::lexicographical_compare(x, x + d, y, y + d);
  };
  std::vector<std::uint32_t> order(t.rows());
  for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), less);
  std::vector<std::uint32_t> rank(t.rows());
  std::uint32_t current = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0 && less(order[i - 1], order[i])) ++current;
    rank[order[i]] = current;
  }
  return rank;
}

}  // namespace

void gemm(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  dim_check(a.cols() == b.rows(), "gemm", shape_str(a) + " x " + shape_str(b));
  if (c.rows() != a.rows() || c.cols() != b.cols()) {
    dim_check(!accumulate, "gemm", "accumulator shape " + shape_str(c));
    c = Tensor(a.rows(), b.cols());
  }
  gemm_impl(a, b, c, nullptr, accumulate);
}

Tensor transpose(const Tensor& a) {
  Tensor t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, nullptr});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, requires_grad && record_, false, nullptr});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs,
                 BackwardFn fn) {
  if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite output");
  bool needs_grad = false;
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw ContractViolation(std::string(op) + ": foreign variable");
    needs_grad = needs_grad || nodes_[in.id()].requires_grad;
  }
  needs_grad = needs_grad && record_;
  nodes_.push_back(Node{std::move(value), {}, needs_grad, false, needs_grad ? std::move(fn) : nullptr});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Tensor& Tape::grad_buffer(Var v) {
  auto& node = nodes_[v.id()];
  if (!node.has_grad) {
    node.grad = Tensor(node.value.rows(), node.value.cols());
    node.has_grad = true;
  }
  return node.grad;
}

void Tape::backward(Var loss) {
  if (!record_) throw ContractViolation("backward: tape is not recording");
  if (consumed_) throw ContractViolation("backward: tape already consumed");
  if (&loss.tape() != this) throw ContractViolation("backward: foreign variable");
  if (loss.value().size() != 1) throw ContractViolation("backward: loss must be a scalar");
  consumed_ = true;
  grad_buffer(loss).fill(1.0);
  for (std::int64_t i = loss.id(); i >= 0; --i) {
    auto& node = nodes_[static_cast<std::size_t>(i)];
    if (!node.has_grad || !node.backward) continue;
    node.backward(*this, node.grad, node.value);
    // Interior gradients are dead once propagated.
    node.grad = Tensor();
    node.has_grad = false;
    node.backward = nullptr;
  }
}

Tensor Tape::grad(Var v) const {
  const auto& node = nodes_[v.id()];
  if (node.has_grad) return node.grad;
  return Tensor(node.value.rows(), node.value.cols());
}

// ---------------------------------------------------------------------------
// MessageIndex

MessageIndex::MessageIndex(std::vector<std::uint32_t> src, std::vector<std::uint32_t> rel,
                           std::vector<std::uint32_t> dst, std::size_t num_nodes)
    : src_(std::move(src)), rel_(std::move(rel)), dst_(std::move(dst)), num_nodes_(num_nodes) {
  if (src_.size() != rel_.size() || src_.size() != dst_.size()) {
    throw DimensionError("message index: src/rel/dst lengths differ");
  }
  dst_ptr_.assign(num_nodes_ + 1, 0);
  for (std::size_t e = 0; e < src_.size(); ++e) {
    if (src_[e] >= num_nodes_ || dst_[e] >= num_nodes_) {
      throw IndexError("message index: node id out of range");
    }
    ++dst_ptr_[dst_[e] + 1];
  }
  for (std::size_t v = 0; v < num_nodes_; ++v) dst_ptr_[v + 1] += dst_ptr_[v];
  by_dst_.resize(src_.size());
  std::vector<std::size_t> fill(dst_ptr_.begin(), dst_ptr_.end() - 1);
  for (std::size_t e = 0; e < src_.size(); ++e) {
    by_dst_[fill[dst_[e]]++] = static_cast<std::uint32_t>(e);
  }
}

// ---------------------------------------------------------------------------
// Ops

Var matmul(Var a, Var b) {
  constexpr std::string_view op = "matmul";
  Tape& t = tape_of(a, b, op);
  dim_check(a.cols() == b.rows(), op, shape_str(a.value()) + " x " + shape_str(b.value()));
  Tensor out(a.rows(), b.cols());
  gemm_impl(a.value(), b.value(), out, nullptr, false);
  return t.record(op, std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g, const Tensor&) {
    if (tp.requires_grad(a)) gemm(g, transpose(b.value()), tp.grad_buffer(a), true);
    if (tp.requires_grad(b)) gemm(transpose(a.value()), g, tp.grad_buffer(b), true);
  });
}

Var affine(Var x, Var w, Var bias) {
  constexpr std::string_view op = "affine";
  Tape& t = tape_of(x, w, op);
  tape_of(x, bias, op);
  dim_check(x.cols() == w.rows(), op, shape_str(x.value()) + " x " + shape_str(w.value()));
  dim_check(bias.rows() == 1 && bias.cols() == w.cols(), op, "bias " + shape_str(bias.value()));
  Tensor out(x.rows(), w.cols());
  gemm_impl(x.value(), w.value(), out, bias.value().data(), false);
  return t.record(op, std::move(out), {x, w, bias}, [x, w, bias](Tape& tp, const Tensor& g, const Tensor&) {
    if (tp.requires_grad(x)) gemm(g, transpose(w.value()), tp.grad_buffer(x), true);
    if (tp.requires_grad(w)) gemm(transpose(x.value()), g, tp.grad_buffer(w), true);
    if (tp.requires_grad(bias)) {
      auto& gb = tp.grad_buffer(bias);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        const auto row = g.row(i);
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += row[j];
      }
    }
  });
}

Var add(Var a, Var b) {
  constexpr std::string_view op = "add";
  Tape& t = tape_of(a, b, op);
  dim_check(a.value().same_shape(b.value()), op, shape_str(a.value()) + " vs " + shape_str(b.value()));
  Tensor out = a.value();
  axpy_rows(out, b.value());
  return t.record(op, std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g, const Tensor&) {
    if (tp.requires_grad(a)) axpy_rows(tp.grad_buffer(a), g);
    if (tp.requires_grad(b)) axpy_rows(tp.grad_buffer(b), g);
  });
}

Var add_row(Var x, Var row) {
  constexpr std::string_view op = "add_row";
  Tape& t = tape_of(x, row, op);
  dim_check(row.rows() == 1 && row.cols() == x.cols(), op,
            shape_str(x.value()) + " + row " + shape_str(row.value()));
  Tensor out = x.value();
  const auto r = row.value().row(0);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto o = out.row(i);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += r[j];
  }
  return t.record(op, std::move(out), {x, row}, [x, row](Tape& tp, const Tensor& g, const Tensor&) {
    if (tp.requires_grad(x)) axpy_rows(tp.grad_buffer(x), g);
    if (tp.requires_grad(row)) {
      auto& gr = tp.grad_buffer(row);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) gr(0, j) += g(i, j);
      }
    }
  });
}

Var mul(Var a, Var b) {
  constexpr std::string_view op = "mul";
  Tape& t = tape_of(a, b, op);
  dim_check(a.value().same_shape(b.value()), op, shape_str(a.value()) + " vs " + shape_str(b.value()));
  Tensor out = a.value();
  auto o = out.values();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return t.record(op, std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g, const Tensor&) {
    const auto gv = g.values();
    if (tp.requires_grad(a)) {
      auto ga = tp.grad_buffer(a).values();
      const auto bv2 = b.value().values();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gv[i] * bv2[i];
    }
    if (tp.requires_grad(b)) {
      auto gb = tp.grad_buffer(b).values();
      const auto av = a.value().values();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gv[i] * av[i];
    }
  });
}

Var scale(Var x, double factor) {
  constexpr std::string_view op = "scale";
  Tape& t = tape_of(x, op);
  Tensor out = x.value();
  for (auto& v : out.values()) v *= factor;
  return t.record(op, std::move(out), {x}, [x, factor](Tape& tp, const Tensor& g, const Tensor&) {
    auto gx = tp.grad_buffer(x).values();
    const auto gv = g.values();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gv[i] * factor;
  });
}

Var relu(Var x) {
  constexpr std::string_view op = "relu";
  Tape& t = tape_of(x, op);
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return t.record(op, std::move(out), {x}, [x](Tape& tp, const Tensor& g, const Tensor&) {
    auto gx = tp.grad_buffer(x).values();
    const auto xv = x.value().values();
    const auto gv = g.values();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xv[i] > 0.0) gx[i] += gv[i];
    }
  });
}

Var sigmoid(Var x) {
  constexpr std::string_view op = "sigmoid";
  Tape& t = tape_of(x, op);
  Tensor out = x.value();
  for (auto& v : out.values()) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return t.record(op, std::move(out), {x}, [x](Tape& tp, const Tensor& g, const Tensor& y) {
    auto gx = tp.grad_buffer(x).values();
    const auto yv = y.values();
    const auto gv = g.values();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gv[i] * yv[i] * (1.0 - yv[i]);
  });
}

Var softplus(Var x) {
  constexpr std::string_view op = "softplus";
  Tape& t = tape_of(x, op);
  Tensor out = x.value();
  for (auto& v : out.values()) v = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
  return t.record(op, std::move(out), {x}, [x](Tape& tp, const Tensor& g, const Tensor&) {
    auto gx = tp.grad_buffer(x).values();
    const auto xv = x.value().values();
    const auto gv = g.values();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = xv[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-xv[i]))
                                    : std::exp(xv[i]) / (1.0 + std::exp(xv[i]));
      gx[i] += gv[i] * s;
    }
  });
}

Var layer_norm(Var x, Var gain, Var shift, double eps) {
  constexpr std::string_view op = "layer_norm";
  Tape& t = tape_of(x, gain, op);
  tape_of(x, shift, op);
  const std::size_t n = x.cols();
  dim_check(gain.rows() == 1 && gain.cols() == n && shift.rows() == 1 && shift.cols() == n, op,
            "gain/shift must be [1, " + std::to_string(n) + "]");
  const Tensor& xv = x.value();
  Tensor normalized(xv.rows(), n);
  std::vector<double> inv_std(xv.rows());
  Tensor out(xv.rows(), n);
  const auto gv = gain.value().row(0);
  const auto sv = shift.value().row(0);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    const auto row = xv.row(i);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    auto nr = normalized.row(i);
    auto o = out.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      nr[j] = (row[j] - mu) * is;
      o[j] = nr[j] * gv[j] + sv[j];
    }
  }
  return t.record(op, std::move(out), {x, gain, shift},
                  [x, gain, shift, normalized = std::move(normalized),
                   inv_std = std::move(inv_std)](Tape& tp, const Tensor& g, const Tensor&) {
                    const std::size_t cols = normalized.cols();
                    const auto gainv = gain.value().row(0);
                    if (tp.requires_grad(gain)) {
                      auto& gg = tp.grad_buffer(gain);
                      for (std::size_t i = 0; i < g.rows(); ++i) {
                        for (std::size_t j = 0; j < cols; ++j) gg(0, j) += g(i, j) * normalized(i, j);
                      }
                    }
                    if (tp.requires_grad(shift)) {
                      auto& gs = tp.grad_buffer(shift);
                      for (std::size_t i = 0; i < g.rows(); ++i) {
                        for (std::size_t j = 0; j < cols; ++j) gs(0, j) += g(i, j);
                      }
                    }
                    if (tp.requires_grad(x)) {
                      auto& gx = tp.grad_buffer(x);
                      std::vector<double> dn(cols);
                      for (std::size_t i = 0; i < g.rows(); ++i) {
                        double mean_dn = 0.0, mean_dn_n = 0.0;
                        for (std::size_t j = 0; j < cols; ++j) {
                          dn[j] = g(i, j) * gainv[j];
                          mean_dn += dn[j];
                          mean_dn_n += dn[j] * normalized(i, j);
                        }
                        mean_dn /= static_cast<double>(cols);
                        mean_dn_n /= static_cast<double>(cols);
                        for (std::size_t j = 0; j < cols; ++j) {
                          gx(i, j) += inv_std[i] * (dn[j] - mean_dn - normalized(i, j) * mean_dn_n);
                        }
                      }
                    }
                  });
}

Var sum(Var x) {
  constexpr std::string_view op = "sum";
  Tape& t = tape_of(x, op);
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return t.record(op, Tensor::scalar(s), {x}, [x](Tape& tp, const Tensor& g, const Tensor&) {
    const double gv = g.item();
    for (auto& v : tp.grad_buffer(x).values()) v += gv;
  });
}

Var mean(Var x) {
  constexpr std::string_view op = "mean";
  const std::size_t n = x.value().size();
  dim_check(n > 0, op, "empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var index_select(Var x, std::span<const std::uint32_t> rows) {
  constexpr std::string_view op = "index_select";
  Tape& t = tape_of(x, op);
  const std::size_t cols = x.cols();
  std::vector<std::uint32_t> idx(rows.begin(), rows.end());
  Tensor out(idx.size(), cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= x.rows()) {
      throw IndexError("index_select: row " + std::to_string(idx[i]) + " out of range for " +
                       shape_str(x.value()));
    }
    std::copy_n(x.value().row(idx[i]).data(), cols, out.row(i).data());
  }
  return t.record(op, std::move(out), {x}, [x, idx = std::move(idx)](Tape& tp, const Tensor& g, const Tensor&) {
    auto& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto dst = gx.row(idx[i]);
      const auto src = g.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  });
}

Var scatter_add(Var x, std::span<const std::uint32_t> index, std::size_t num_rows) {
  constexpr std::string_view op = "scatter_add";
  Tape& t = tape_of(x, op);
  dim_check(index.size() == x.rows(), op,
            std::to_string(index.size()) + " indices for " + shape_str(x.value()));
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  Tensor out(num_rows, x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= num_rows) throw IndexError("scatter_add: bucket out of range");
    auto dst = out.row(idx[i]);
    const auto src = x.value().row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
  return t.record(op, std::move(out), {x}, [x, idx = std::move(idx)](Tape& tp, const Tensor& g, const Tensor&) {
    auto& gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto dst = gx.row(i);
      const auto src = g.row(idx[i]);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  });
}

Var concat_cols(Var a, Var b) {
  constexpr std::string_view op = "concat_cols";
  Tape& t = tape_of(a, b, op);
  dim_check(a.rows() == b.rows(), op, shape_str(a.value()) + " | " + shape_str(b.value()));
  const std::size_t ca = a.cols(), cb = b.cols();
  Tensor out(a.rows(), ca + cb);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    std::copy_n(a.value().row(i).data(), ca, out.row(i).data());
    std::copy_n(b.value().row(i).data(), cb, out.row(i).data() + ca);
  }
  return t.record(op, std::move(out), {a, b}, [a, b, ca, cb](Tape& tp, const Tensor& g, const Tensor&) {
    if (tp.requires_grad(a)) {
      auto& ga = tp.grad_buffer(a);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < ca; ++j) ga(i, j) += g(i, j);
      }
    }
    if (tp.requires_grad(b)) {
      auto& gb = tp.grad_buffer(b);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < cb; ++j) gb(i, j) += g(i, ca + j);
      }
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  constexpr std::string_view op = "concat_rows";
  dim_check(!parts.empty(), op, "no inputs");
  Tape& t = tape_of(parts[0], op);
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    tape_of(parts[0], p, op);
    dim_check(p.cols() == cols, op, "column mismatch");
    rows += p.rows();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), out.data() + offset * cols);
    offset += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(op, std::move(out), parts, [inputs](Tape& tp, const Tensor& g, const Tensor&) {
    std::size_t off = 0;
    for (const auto& p : inputs) {
      if (tp.requires_grad(p)) {
        auto gp = tp.grad_buffer(p).values();
        const double* src = g.data() + off * g.cols();
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += src[i];
      }
      off += p.rows();
    }
  });
}

Var propagate(Var states, Var relations, const MessageIndex& index, SumOrder order) {
  constexpr std::string_view op = "propagate";
  Tape& t = tape_of(states, relations, op);
  const std::size_t d = states.cols();
  dim_check(relations.cols() == d, op,
            "states " + shape_str(states.value()) + " vs relations " + shape_str(relations.value()));
  dim_check(states.rows() == index.num_nodes(), op,
            "states have " + std::to_string(states.rows()) + " rows, index has " +
                std::to_string(index.num_nodes()) + " nodes");
  for (auto r : index.rel()) {
    if (r >= relations.rows()) throw IndexError("propagate: relation row out of range");
  }
  const Tensor& sv = states.value();
  const Tensor& rv = relations.value();
  Tensor out(index.num_nodes(), d);
  const auto src = index.src();
  const auto rel = index.rel();
  const auto dst = index.dst();
  if (order == SumOrder::kEdgeOrder) {
    for (std::size_t e = 0; e < src.size(); ++e) {
      const double* s = sv.row(src[e]).data();
      const double* r = rv.row(rel[e]).data();
      double* o = out.row(dst[e]).data();
      for (std::size_t j = 0; j < d; ++j) o[j] += s[j] * r[j];
    }
  } else {
    // Incoming messages are summed in the lexicographic order of their
    // (relation row, state row) factors. Equal keys give equal addends, so
    // the result depends only on the multiset of factor pairs.
    const auto rel_rank = dense_row_ranks(rv);
    const auto src_rank = dense_row_ranks(sv);
    std::vector<std::uint32_t> edges;
    for (std::size_t v = 0; v < index.num_nodes(); ++v) {
      const auto incoming = index.incoming(v);
      if (incoming.empty()) continue;
      edges.assign(incoming.begin(), incoming.end());
      std::sort(edges.begin(), edges.end(), [&](std::uint32_t x, std::uint32_t y) {
        return std::pair(rel_rank[rel[x]], src_rank[src[x]]) <
               std::pair(rel_rank[rel[y]], src_rank[src[y]]);
      });
      double* o = out.row(v).data();
      for (auto e : edges) {
        const double* sr = sv.row(src[e]).data();
        const double* r = rv.row(rel[e]).data();
        for (std::size_t j = 0; j < d; ++j) o[j] += sr[j] * r[j];
      }
    }
  }
  return t.record(op, std::move(out), {states, relations},
                  [states, relations, index](Tape& tp, const Tensor& g, const Tensor&) {
                    const std::size_t dim = g.cols();
                    const auto s_idx = index.src();
                    const auto r_idx = index.rel();
                    const auto d_idx = index.dst();
                    const bool want_s = tp.requires_grad(states);
                    const bool want_r = tp.requires_grad(relations);
                    Tensor* gs = want_s ? &tp.grad_buffer(states) : nullptr;
                    Tensor* gr = want_r ? &tp.grad_buffer(relations) : nullptr;
                    const Tensor& s_val = states.value();
                    const Tensor& r_val = relations.value();
                    for (std::size_t e = 0; e < s_idx.size(); ++e) {
                      const double* go = g.row(d_idx[e]).data();
                      if (gs) {
                        double* dst_row = gs->row(s_idx[e]).data();
                        const double* r = r_val.row(r_idx[e]).data();
                        for (std::size_t j = 0; j < dim; ++j) dst_row[j] += go[j] * r[j];
                      }
                      if (gr) {
                        double* dst_row = gr->row(r_idx[e]).data();
                        const double* s = s_val.row(s_idx[e]).data();
                        for (std::size_t j = 0; j < dim; ++j) dst_row[j] += go[j] * s[j];
                      }
                    }
                  });
}

// ---------------------------------------------------------------------------
// AdamW

OptimizerState OptimizerState::zeros_like(std::span<const Tensor> params, AdamWConfig config) {
  OptimizerState s;
  s.config = config;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.rows(), p.cols());
    s.second_moment.emplace_back(p.rows(), p.cols());
  }
  return s;
}

void adamw_step(std::span<Tensor> params, std::span<const Tensor> grads, OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw ContractViolation("adamw_step: parameter/gradient/state counts differ");
  }
  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  const double decay = 1.0 - c.learning_rate * c.weight_decay;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].values();
    const auto g = grads[p].values();
    auto m = state.first_moment[p].values();
    auto v = state.second_moment[p].values();
    if (g.size() != w.size() || m.size() != w.size() || v.size() != w.size()) {
      throw ContractViolation("adamw_step: shape mismatch for parameter " + std::to_string(p));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] *= decay;
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      w[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

}  // namespace ultra::nd
