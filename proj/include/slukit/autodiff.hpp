#pragma once

// Reverse-mode autodiff on a tape of Eigen double matrices. Creation order
// is the topological order, so backward() is a single reverse sweep.
// Scalars are 1x1 matrices.

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_map>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "slukit/common.hpp"

namespace slukit::ad {

using Matrix = Eigen::MatrixXd;

struct Node;
using NodeRef = std::shared_ptr<Node>;

struct Node {
  Matrix value;
  Matrix grad;  // lazily allocated; empty means no gradient has arrived
  bool requires_grad = false;
  std::vector<NodeRef> parents;
  std::function<void(Node&)> backward;
};

inline void touch_grad(Node& n) {
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
}

// A named, persistent tensor with optimizer state. Graphs wrap parameters
// as leaves; after backward() the accumulated gradient is harvested back.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m, adam_v;

  void init_state() {
    grad = Matrix::Zero(value.rows(), value.cols());
    adam_m = Matrix::Zero(value.rows(), value.cols());
    adam_v = Matrix::Zero(value.rows(), value.cols());
  }
};

class Graph {
 public:
  NodeRef leaf(Matrix v, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    tape_.push_back(n);
    return n;
  }

  NodeRef constant(Matrix v) { return leaf(std::move(v), false); }

  NodeRef scalar(double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(m);
  }

  // Memoized so a parameter used by many forwards shares one leaf and its
  // gradients accumulate in one place.
  NodeRef param(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    NodeRef n = leaf(p.value, true);
    param_nodes_.emplace(&p, n);
    return n;
  }

  NodeRef make(Matrix v, std::vector<NodeRef> parents,
               std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    n->parents = std::move(parents);
    if (n->requires_grad) n->backward = std::move(backward);
    tape_.push_back(n);
    return n;
  }

  void backward(const NodeRef& root) {
    if (root->value.size() != 1) throw NumericError("backward root must be scalar");
    touch_grad(*root);
    root->grad(0, 0) += 1.0;
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
      Node& n = **it;
      if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
      n.backward(n);
    }
  }

  // Copies accumulated leaf gradients into the wrapped parameters.
  void harvest_param_grads() {
    for (auto& [p, node] : param_nodes_) {
      if (node->grad.size() != 0) p->grad += node->grad;
    }
  }

  std::size_t size() const { return tape_.size(); }

 private:
  std::vector<NodeRef> tape_;
  std::unordered_map<Parameter*, NodeRef> param_nodes_;
};

// --- elementwise and shape ops ---------------------------------------------

inline NodeRef add(Graph& g, NodeRef a, NodeRef b) {
  return g.make(a->value + b->value, {a, b}, [a, b](Node& n) {
    if (a->requires_grad) { touch_grad(*a); a->grad += n.grad; }
    if (b->requires_grad) { touch_grad(*b); b->grad += n.grad; }
  });
}

inline NodeRef sub(Graph& g, NodeRef a, NodeRef b) {
  return g.make(a->value - b->value, {a, b}, [a, b](Node& n) {
    if (a->requires_grad) { touch_grad(*a); a->grad += n.grad; }
    if (b->requires_grad) { touch_grad(*b); b->grad -= n.grad; }
  });
}

inline NodeRef ew_mul(Graph& g, NodeRef a, NodeRef b) {
  return g.make(a->value.cwiseProduct(b->value), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) { touch_grad(*a); a->grad += n.grad.cwiseProduct(b->value); }
    if (b->requires_grad) { touch_grad(*b); b->grad += n.grad.cwiseProduct(a->value); }
  });
}

inline NodeRef ew_div(Graph& g, NodeRef a, NodeRef b) {
  return g.make(a->value.cwiseQuotient(b->value), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) { touch_grad(*a); a->grad += n.grad.cwiseQuotient(b->value); }
    if (b->requires_grad) {
      touch_grad(*b);
      b->grad -= n.grad.cwiseProduct(a->value).cwiseQuotient(b->value.cwiseProduct(b->value));
    }
  });
}

inline NodeRef scale(Graph& g, NodeRef a, double s) {
  return g.make(a->value * s, {a}, [a, s](Node& n) {
    touch_grad(*a);
    a->grad += n.grad * s;
  });
}

inline NodeRef add_const(Graph& g, NodeRef a, double c) {
  return g.make(a->value.array() + c, {a}, [a](Node& n) {
    touch_grad(*a);
    a->grad += n.grad;
  });
}

inline NodeRef relu(Graph& g, NodeRef a) {
  return g.make(a->value.cwiseMax(0.0), {a}, [a](Node& n) {
    touch_grad(*a);
    a->grad.array() += n.grad.array() * (a->value.array() > 0.0).cast<double>();
  });
}

inline NodeRef gelu(Graph& g, NodeRef a) {
  constexpr double inv_sqrt2 = 0.7071067811865476;
  Matrix y = a->value.unaryExpr(
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); });
  return g.make(std::move(y), {a}, [a](Node& n) {
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    Matrix d = a->value.unaryExpr([](double x) {
      return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) +
             x * std::exp(-0.5 * x * x) * inv_sqrt_2pi;
    });
    touch_grad(*a);
    a->grad.array() += n.grad.array() * d.array();
  });
}

// mask in {0, 1/(1-p)}; identity when p == 0 or not training
inline NodeRef dropout(Graph& g, NodeRef a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  auto mask = std::make_shared<Matrix>(a->value.rows(), a->value.cols());
  const double keep = 1.0 - p;
  for (Eigen::Index i = 0; i < mask->rows(); ++i)
    for (Eigen::Index j = 0; j < mask->cols(); ++j)
      (*mask)(i, j) = uniform01(rng) < keep ? 1.0 / keep : 0.0;
  return g.make(a->value.cwiseProduct(*mask), {a}, [a, mask](Node& n) {
    touch_grad(*a);
    a->grad += n.grad.cwiseProduct(*mask);
  });
}

// --- linear algebra ---------------------------------------------------------

inline NodeRef matmul(Graph& g, NodeRef a, NodeRef b) {
  return g.make(a->value * b->value, {a, b}, [a, b](Node& n) {
    if (a->requires_grad) { touch_grad(*a); a->grad.noalias() += n.grad * b->value.transpose(); }
    if (b->requires_grad) { touch_grad(*b); b->grad.noalias() += a->value.transpose() * n.grad; }
  });
}

// C = A * B^T
inline NodeRef matmul_nt(Graph& g, NodeRef a, NodeRef b) {
  return g.make(a->value * b->value.transpose(), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) { touch_grad(*a); a->grad.noalias() += n.grad * b->value; }
    if (b->requires_grad) { touch_grad(*b); b->grad.noalias() += n.grad.transpose() * a->value; }
  });
}

// A (r x c) + row vector (1 x c) broadcast over rows
inline NodeRef add_rowvec(Graph& g, NodeRef a, NodeRef r) {
  return g.make(a->value.rowwise() + r->value.row(0), {a, r}, [a, r](Node& n) {
    if (a->requires_grad) { touch_grad(*a); a->grad += n.grad; }
    if (r->requires_grad) { touch_grad(*r); r->grad.row(0) += n.grad.colwise().sum(); }
  });
}

inline NodeRef linear(Graph& g, NodeRef x, NodeRef w, NodeRef b) {
  return add_rowvec(g, matmul(g, x, w), b);
}

inline NodeRef slice_rows(Graph& g, NodeRef a, Eigen::Index start, Eigen::Index n_rows) {
  return g.make(a->value.middleRows(start, n_rows), {a}, [a, start, n_rows](Node& n) {
    touch_grad(*a);
    a->grad.middleRows(start, n_rows) += n.grad;
  });
}

inline NodeRef row(Graph& g, NodeRef a, Eigen::Index i) { return slice_rows(g, a, i, 1); }

inline NodeRef slice_cols(Graph& g, NodeRef a, Eigen::Index start, Eigen::Index n_cols) {
  return g.make(a->value.middleCols(start, n_cols), {a}, [a, start, n_cols](Node& n) {
    touch_grad(*a);
    a->grad.middleCols(start, n_cols) += n.grad;
  });
}

inline NodeRef vstack(Graph& g, std::vector<NodeRef> parts) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p->value.rows();
  Matrix out(rows, parts.front()->value.cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p->value.rows()) = p->value;
    at += p->value.rows();
  }
  auto sizes = std::make_shared<std::vector<Eigen::Index>>();
  for (const auto& p : parts) sizes->push_back(p->value.rows());
  return g.make(std::move(out), parts, [parts, sizes](Node& n) {
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (parts[i]->requires_grad) {
        touch_grad(*parts[i]);
        parts[i]->grad += n.grad.middleRows(at, (*sizes)[i]);
      }
      at += (*sizes)[i];
    }
  });
}

inline NodeRef hstack(Graph& g, std::vector<NodeRef> parts) {
  Eigen::Index cols = 0;
  for (const auto& p : parts) cols += p->value.cols();
  Matrix out(parts.front()->value.rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p->value.cols()) = p->value;
    at += p->value.cols();
  }
  auto sizes = std::make_shared<std::vector<Eigen::Index>>();
  for (const auto& p : parts) sizes->push_back(p->value.cols());
  return g.make(std::move(out), parts, [parts, sizes](Node& n) {
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (parts[i]->requires_grad) {
        touch_grad(*parts[i]);
        parts[i]->grad += n.grad.middleCols(at, (*sizes)[i]);
      }
      at += (*sizes)[i];
    }
  });
}

inline NodeRef repeat_row(Graph& g, NodeRef a, Eigen::Index n_rows) {
  return g.make(a->value.replicate(n_rows, 1), {a}, [a](Node& n) {
    touch_grad(*a);
    a->grad.row(0) += n.grad.colwise().sum();
  });
}

inline NodeRef gather_rows(Graph& g, NodeRef table, std::vector<int> ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table->value.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = table->value.row(ids[i]);
  auto idx = std::make_shared<std::vector<int>>(std::move(ids));
  return g.make(std::move(out), {table}, [table, idx](Node& n) {
    touch_grad(*table);
    for (std::size_t i = 0; i < idx->size(); ++i)
      table->grad.row((*idx)[i]) += n.grad.row(static_cast<Eigen::Index>(i));
  });
}

// --- reductions and normalizations ------------------------------------------

inline NodeRef mean_rows(Graph& g, NodeRef a) {
  const double inv = 1.0 / static_cast<double>(a->value.rows());
  return g.make(a->value.colwise().mean(), {a}, [a, inv](Node& n) {
    touch_grad(*a);
    a->grad += (n.grad.row(0) * inv).replicate(a->value.rows(), 1);
  });
}

inline NodeRef sum_all(Graph& g, NodeRef a) {
  Matrix out(1, 1);
  out(0, 0) = a->value.sum();
  return g.make(std::move(out), {a}, [a](Node& n) {
    touch_grad(*a);
    a->grad.array() += n.grad(0, 0);
  });
}

inline NodeRef dot(Graph& g, NodeRef a, NodeRef b) {
  Matrix out(1, 1);
  out(0, 0) = a->value.cwiseProduct(b->value).sum();
  return g.make(std::move(out), {a, b}, [a, b](Node& n) {
    const double s = n.grad(0, 0);
    if (a->requires_grad) { touch_grad(*a); a->grad += s * b->value; }
    if (b->requires_grad) { touch_grad(*b); b->grad += s * a->value; }
  });
}

// Frobenius norm; zero-norm input gets a zero (sub)gradient.
inline NodeRef norm(Graph& g, NodeRef a) {
  Matrix out(1, 1);
  out(0, 0) = a->value.norm();
  return g.make(std::move(out), {a}, [a](Node& n) {
    const double v = a->value.norm();
    if (v == 0.0) return;
    touch_grad(*a);
    a->grad += (n.grad(0, 0) / v) * a->value;
  });
}

inline NodeRef l2_normalize_rows(Graph& g, NodeRef a) {
  Matrix out = a->value;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double v = out.row(r).norm();
    if (v < 1e-300) throw NumericError("l2_normalize_rows: zero-norm row");
    out.row(r) /= v;
  }
  auto y = std::make_shared<Matrix>(out);
  return g.make(std::move(out), {a}, [a, y](Node& n) {
    touch_grad(*a);
    for (Eigen::Index r = 0; r < n.grad.rows(); ++r) {
      const double v = a->value.row(r).norm();
      const double gy = n.grad.row(r).dot(y->row(r));
      a->grad.row(r) += (n.grad.row(r) - gy * y->row(r)) / v;
    }
  });
}

inline NodeRef softmax_rows(Graph& g, NodeRef a) {
  Matrix out = a->value;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    Eigen::ArrayXd e = (out.row(r).array() - out.row(r).maxCoeff()).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  auto y = std::make_shared<Matrix>(out);
  return g.make(std::move(out), {a}, [a, y](Node& n) {
    touch_grad(*a);
    for (Eigen::Index r = 0; r < n.grad.rows(); ++r) {
      const double gs = n.grad.row(r).dot(y->row(r));
      a->grad.row(r).array() +=
          y->row(r).array() * (n.grad.row(r).array() - gs);
    }
  });
}

inline NodeRef log_softmax_rows(Graph& g, NodeRef a) {
  Matrix out = a->value;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    const double lse = m + std::log((out.row(r).array() - m).exp().sum());
    out.row(r).array() -= lse;
  }
  auto y = std::make_shared<Matrix>(out);
  return g.make(std::move(out), {a}, [a, y](Node& n) {
    touch_grad(*a);
    for (Eigen::Index r = 0; r < n.grad.rows(); ++r) {
      const double gsum = n.grad.row(r).sum();
      a->grad.row(r) += n.grad.row(r) - gsum * y->row(r).array().exp().matrix();
    }
  });
}

// Per-row LayerNorm with learned gain/bias (1 x d each), biased variance.
inline NodeRef layernorm_rows(Graph& g, NodeRef a, NodeRef gamma, NodeRef beta,
                              double eps = 1e-12) {
  const Eigen::Index d = a->value.cols();
  Matrix xhat(a->value.rows(), d);
  Matrix inv_std(a->value.rows(), 1);
  for (Eigen::Index r = 0; r < a->value.rows(); ++r) {
    const double mu = a->value.row(r).mean();
    const double var = (a->value.row(r).array() - mu).square().mean();
    inv_std(r, 0) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (a->value.row(r).array() - mu) * inv_std(r, 0);
  }
  Matrix out = (xhat.array().rowwise() * gamma->value.row(0).array()).rowwise() +
               beta->value.row(0).array();
  auto xh = std::make_shared<Matrix>(std::move(xhat));
  auto is = std::make_shared<Matrix>(std::move(inv_std));
  return g.make(std::move(out), {a, gamma, beta}, [a, gamma, beta, xh, is](Node& n) {
    const Eigen::Index d = a->value.cols();
    if (gamma->requires_grad) {
      touch_grad(*gamma);
      gamma->grad.row(0) += n.grad.cwiseProduct(*xh).colwise().sum();
    }
    if (beta->requires_grad) {
      touch_grad(*beta);
      beta->grad.row(0) += n.grad.colwise().sum();
    }
    if (a->requires_grad) {
      touch_grad(*a);
      for (Eigen::Index r = 0; r < n.grad.rows(); ++r) {
        Eigen::RowVectorXd dxhat =
            n.grad.row(r).cwiseProduct(gamma->value.row(0));
        const double m1 = dxhat.mean();
        const double m2 = dxhat.cwiseProduct(xh->row(r)).mean();
        a->grad.row(r) +=
            ((dxhat.array() - m1 - xh->row(r).array() * m2) * (*is)(r, 0)).matrix();
      }
    }
    (void)d;
  });
}

// Sum over rows of (logsumexp(row) - row[gold]); cross entropy computed
// from logits for numerical stability.
inline NodeRef cross_entropy_rows(Graph& g, NodeRef logits, std::vector<int> golds) {
  if (static_cast<Eigen::Index>(golds.size()) != logits->value.rows())
    throw NumericError("cross_entropy_rows: gold count mismatch");
  double total = 0.0;
  Matrix probs = logits->value;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const double m = probs.row(r).maxCoeff();
    Eigen::ArrayXd e = (probs.row(r).array() - m).exp();
    const double z = e.sum();
    total += m + std::log(z) - logits->value(r, golds[r]);
    probs.row(r) = (e / z).matrix();
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  auto p = std::make_shared<Matrix>(std::move(probs));
  auto gd = std::make_shared<std::vector<int>>(std::move(golds));
  return g.make(std::move(out), {logits}, [logits, p, gd](Node& n) {
    touch_grad(*logits);
    const double s = n.grad(0, 0);
    logits->grad += s * (*p);
    for (Eigen::Index r = 0; r < p->rows(); ++r)
      logits->grad(r, (*gd)[r]) -= s;
  });
}

inline NodeRef sum_list(Graph& g, const std::vector<NodeRef>& parts) {
  Matrix out(1, 1);
  out(0, 0) = 0.0;
  for (const auto& p : parts) out(0, 0) += p->value(0, 0);
  return g.make(std::move(out), parts, [parts](Node& n) {
    for (const auto& p : parts) {
      if (!p->requires_grad) continue;
      touch_grad(*p);
      p->grad(0, 0) += n.grad(0, 0);
    }
  });
}

inline NodeRef mean_list(Graph& g, const std::vector<NodeRef>& parts) {
  if (parts.empty()) return g.scalar(0.0);
  return scale(g, sum_list(g, parts), 1.0 / static_cast<double>(parts.size()));
}

}  // namespace slukit::ad
