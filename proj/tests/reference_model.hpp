#pragma once

// Loop-based forward passes of both networks, written without the tape, used
// as an oracle for the tape implementation.

#include <cmath>
#include <vector>

#include "ultra/entnet.hpp"
#include "ultra/params.hpp"
#include "ultra/relgraph.hpp"
#include "ultra/relnet.hpp"

namespace support {

using Matrix = std::vector<std::vector<double>>;

inline Matrix to_matrix(const ultra::nd::Tensor& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
  return m;
}

// x * w + b (b a single row).
inline Matrix affine_ref(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix out(x.size(), std::vector<double>(w[0].size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < w[0].size(); ++j) {
      double s = b[0][j];
      for (std::size_t k = 0; k < w.size(); ++k) s += x[i][k] * w[k][j];
      out[i][j] = s;
    }
  return out;
}

inline void relu_ref(Matrix& x) {
  for (auto& row : x)
    for (auto& v : row) v = v > 0 ? v : 0;
}

inline Matrix norm_relu_ref(const Matrix& u, const Matrix& gain, const Matrix& shift) {
  Matrix out = u;
  for (auto& row : out) {
    double mean = 0, var = 0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(row.size());
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean) * inv * gain[0][j] + shift[0][j];
  }
  relu_ref(out);
  return out;
}

inline Matrix concat_ref(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i].insert(out[i].end(), b[i].begin(), b[i].end());
  return out;
}

inline Matrix reference_relations(const ultra::RelationGraph& rg, ultra::RelationId query,
                                  const ultra::ParameterStore& p, std::size_t dim, std::size_t layers) {
  namespace n = ultra::relnet_names;
  Matrix h(rg.num_nodes(), std::vector<double>(dim, 0.0));
  h[query].assign(dim, 1.0);
  for (std::size_t l = 0; l < layers; ++l) {
    const Matrix fund = to_matrix(p.at(n::fundamental(l)));
    Matrix agg(rg.num_nodes(), std::vector<double>(dim, 0.0));
    for (std::size_t t = 0; t < rg.num_edge_types(); ++t)
      for (const auto& e : rg.edges(t))
        for (std::size_t j = 0; j < dim; ++j) agg[e.dst][j] += h[e.src][j] * fund[t][j];
    const Matrix u = affine_ref(concat_ref(h, agg), to_matrix(p.at(n::update_weight(l))),
                                to_matrix(p.at(n::update_bias(l))));
    h = norm_relu_ref(u, to_matrix(p.at(n::norm_gain(l))), to_matrix(p.at(n::norm_shift(l))));
  }
  return h;
}

inline std::vector<double> reference_scores(const ultra::TripleGraph& g, ultra::EntityId head,
                                            ultra::RelationId query, const Matrix& rq,
                                            const ultra::ParameterStore& p, std::size_t dim,
                                            std::size_t layers) {
  namespace n = ultra::entnet_names;
  Matrix h(g.num_entities(), std::vector<double>(dim, 0.0));
  h[head] = rq[query];
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix hidden = affine_ref(rq, to_matrix(p.at(n::rel_mlp_w1(l))), to_matrix(p.at(n::rel_mlp_b1(l))));
    relu_ref(hidden);
    const Matrix rel = affine_ref(hidden, to_matrix(p.at(n::rel_mlp_w2(l))), to_matrix(p.at(n::rel_mlp_b2(l))));
    Matrix agg(g.num_entities(), std::vector<double>(dim, 0.0));
    for (const auto& e : g.edges())
      for (std::size_t j = 0; j < dim; ++j) agg[e.tail][j] += h[e.head][j] * rel[e.relation][j];
    const Matrix u = affine_ref(concat_ref(h, agg), to_matrix(p.at(n::update_weight(l))),
                                to_matrix(p.at(n::update_bias(l))));
    h = norm_relu_ref(u, to_matrix(p.at(n::norm_gain(l))), to_matrix(p.at(n::norm_shift(l))));
  }
  Matrix hidden = affine_ref(h, to_matrix(p.at(n::kScoreW1)), to_matrix(p.at(n::kScoreB1)));
  relu_ref(hidden);
  const Matrix out = affine_ref(hidden, to_matrix(p.at(n::kScoreW2)), to_matrix(p.at(n::kScoreB2)));
  std::vector<double> scores;
  for (const auto& row : out) scores.push_back(row[0]);
  return scores;
}

}  // namespace support
