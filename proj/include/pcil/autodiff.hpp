#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pcil/errors.hpp"
#include "pcil/tensor.hpp"

namespace pcil {

// Reverse-mode scalar-graph node. Each operation allocates a fresh node that
// owns its forward value and (lazily) a gradient buffer of the same size.
// Graphs are built per forward pass, are single-owner and single-threaded;
// leaves (parameters, constants) outlive the op nodes that reference them.
struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor data;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;  // scatter data.grad into parent grads
  bool needs_grad = false;

  std::size_t size() const { return data.size(); }
  const Shape& shape() const { return data.shape; }
  std::vector<double>& values() { return data.values; }
  const std::vector<double>& values() const { return data.values; }
  std::vector<double>& grad() { return data.grad; }
};

inline NodePtr constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->data = std::move(t);
  return n;
}

inline NodePtr leaf(Tensor t, bool needs_grad = true) {
  auto n = std::make_shared<Node>();
  n->data = std::move(t);
  n->needs_grad = needs_grad;
  return n;
}

namespace detail {

inline NodePtr make_op(Tensor value, std::vector<NodePtr> parents,
                       std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->data = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->needs_grad) {
      n->needs_grad = true;
      break;
    }
  }
  if (n->needs_grad) n->backprop = std::move(backprop);
  return n;
}

inline void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

inline void topo_order(Node* root, std::vector<Node*>& order) {
  // iterative post-order DFS; order is fully determined by the graph shape
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->needs_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace detail

// Run reverse accumulation from a scalar root. Gradients accumulate (+=) into
// every reachable node that needs them, so leaves keep batch sums until the
// caller clears them.
inline void backward(const NodePtr& root) {
  if (root->size() != 1) {
    throw DimensionError("backward: root must be scalar, got " + shape_str(root->shape()));
  }
  if (!root->needs_grad) return;
  std::vector<Node*> order;
  detail::topo_order(root.get(), order);
  for (Node* n : order) n->data.ensure_grad();
  root->data.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// ---- elementwise arithmetic -------------------------------------------------

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
  if (!same_shape(a->shape(), b->shape())) {
    throw DimensionError("add: shape mismatch " + shape_str(a->shape()) + " vs " + shape_str(b->shape()));
  }
  Tensor out = Tensor::zeros(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a->values()[i] + b->values()[i];
  return detail::make_op(std::move(out), {a, b}, [](Node& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node* p = n.parents[k].get();
      if (!p->needs_grad) continue;
      p->data.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) p->data.grad[i] += n.data.grad[i];
    }
  });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
  if (!same_shape(a->shape(), b->shape())) {
    throw DimensionError("sub: shape mismatch " + shape_str(a->shape()) + " vs " + shape_str(b->shape()));
  }
  Tensor out = Tensor::zeros(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a->values()[i] - b->values()[i];
  return detail::make_op(std::move(out), {a, b}, [](Node& n) {
    Node* pa = n.parents[0].get();
    Node* pb = n.parents[1].get();
    if (pa->needs_grad) {
      pa->data.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) pa->data.grad[i] += n.data.grad[i];
    }
    if (pb->needs_grad) {
      pb->data.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) pb->data.grad[i] -= n.data.grad[i];
    }
  });
}

// Hadamard product
inline NodePtr mul(const NodePtr& a, const NodePtr& b) {
  if (!same_shape(a->shape(), b->shape())) {
    throw DimensionError("mul: shape mismatch " + shape_str(a->shape()) + " vs " + shape_str(b->shape()));
  }
  Tensor out = Tensor::zeros(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a->values()[i] * b->values()[i];
  return detail::make_op(std::move(out), {a, b}, [](Node& n) {
    Node* pa = n.parents[0].get();
    Node* pb = n.parents[1].get();
    if (pa->needs_grad) {
      pa->data.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) pa->data.grad[i] += n.data.grad[i] * pb->data.values[i];
    }
    if (pb->needs_grad) {
      pb->data.ensure_grad();
      for (std::size_t i = 0; i < n.size(); ++i) pb->data.grad[i] += n.data.grad[i] * pa->data.values[i];
    }
  });
}

inline NodePtr scale(const NodePtr& a, double c) {
  Tensor out = Tensor::zeros(a->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a->values()[i] * c;
  return detail::make_op(std::move(out), {a}, [c](Node& n) {
    Node* p = n.parents[0].get();
    p->data.ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i) p->data.grad[i] += n.data.grad[i] * c;
  });
}

// ---- shape plumbing ---------------------------------------------------------

inline NodePtr reshape(const NodePtr& a, Shape shape) {
  if (shape_numel(shape) != a->size()) {
    throw DimensionError("reshape: cannot view " + shape_str(a->shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), a->values());
  return detail::make_op(std::move(out), {a}, [](Node& n) {
    Node* p = n.parents[0].get();
    p->data.ensure_grad();
    for (std::size_t i = 0; i < n.size(); ++i) p->data.grad[i] += n.data.grad[i];
  });
}

// Repeat a length-d vector into n identical rows.
inline NodePtr repeat_row(const NodePtr& v, std::size_t n) {
  if (v->data.rank() != 1) throw DimensionError("repeat_row: expected rank-1, got " + shape_str(v->shape()));
  const std::size_t d = v->size();
  Tensor out = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(v->values().begin(), v->values().end(), out.values.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return detail::make_op(std::move(out), {v}, [n, d](Node& node) {
    Node* p = node.parents[0].get();
    p->data.ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) p->data.grad[j] += node.data.grad[i * d + j];
    }
  });
}

// Select rows of a [n,d] matrix by index; duplicate indices are allowed and
// scatter-add their gradients back to the same source row.
inline NodePtr gather_rows(const NodePtr& x, std::vector<std::size_t> idx) {
  if (x->data.rank() != 2) throw DimensionError("gather_rows: expected rank-2, got " + shape_str(x->shape()));
  const std::size_t n = x->shape()[0];
  const std::size_t d = x->shape()[1];
  for (std::size_t i : idx) {
    if (i >= n) throw DimensionError("gather_rows: row index " + std::to_string(i) + " out of range");
  }
  Tensor out = Tensor::zeros({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const double* src = x->values().data() + idx[r] * d;
    std::copy(src, src + d, out.values.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return detail::make_op(std::move(out), {x}, [idx = std::move(idx), d](Node& node) {
    Node* p = node.parents[0].get();
    p->data.ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double* dst = p->data.grad.data() + idx[r] * d;
      const double* g = node.data.grad.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
    }
  });
}

// Stack L vectors of length d into an [L,d] matrix (row l = input l).
inline NodePtr stack_rows(const std::vector<NodePtr>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows: empty input");
  const std::size_t d = rows[0]->size();
  for (const auto& r : rows) {
    if (r->data.rank() != 1 || r->size() != d) {
      throw DimensionError("stack_rows: rows must all be rank-1 of length " + std::to_string(d));
    }
  }
  Tensor out = Tensor::zeros({rows.size(), d});
  for (std::size_t l = 0; l < rows.size(); ++l) {
    std::copy(rows[l]->values().begin(), rows[l]->values().end(),
              out.values.begin() + static_cast<std::ptrdiff_t>(l * d));
  }
  std::vector<NodePtr> parents(rows.begin(), rows.end());
  return detail::make_op(std::move(out), std::move(parents), [d](Node& node) {
    for (std::size_t l = 0; l < node.parents.size(); ++l) {
      Node* p = node.parents[l].get();
      if (!p->needs_grad) continue;
      p->data.ensure_grad();
      const double* g = node.data.grad.data() + l * d;
      for (std::size_t j = 0; j < d; ++j) p->data.grad[j] += g[j];
    }
  });
}

// ---- reductions -------------------------------------------------------------

// Column means of an [n,d] matrix -> length-d vector.
inline NodePtr mean_rows(const NodePtr& x) {
  if (x->data.rank() != 2) throw DimensionError("mean_rows: expected rank-2, got " + shape_str(x->shape()));
  const std::size_t n = x->shape()[0];
  const std::size_t d = x->shape()[1];
  if (n == 0) throw DimensionError("mean_rows: empty axis");
  Tensor out = Tensor::zeros({d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.values[j] += x->values()[i * d + j];
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : out.values) v *= inv;
  return detail::make_op(std::move(out), {x}, [n, d, inv](Node& node) {
    Node* p = node.parents[0].get();
    p->data.ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) p->data.grad[i * d + j] += node.data.grad[j] * inv;
    }
  });
}

inline NodePtr sum_all(const NodePtr& x) {
  double s = 0.0;
  for (double v : x->values()) s += v;
  return detail::make_op(Tensor::scalar(s), {x}, [](Node& node) {
    Node* p = node.parents[0].get();
    p->data.ensure_grad();
    for (std::size_t i = 0; i < p->data.grad.size(); ++i) p->data.grad[i] += node.data.grad[0];
  });
}

// Max over one axis of an [n,m] matrix with argmax gradient routing.
// Ties resolve to the lowest index so backward stays deterministic.
inline NodePtr max_reduce(const NodePtr& x, int axis) {
  if (x->data.rank() != 2) throw DimensionError("max_reduce: expected rank-2, got " + shape_str(x->shape()));
  if (axis != 0 && axis != 1) throw DimensionError("max_reduce: axis must be 0 or 1");
  const std::size_t n = x->shape()[0];
  const std::size_t m = x->shape()[1];
  const std::size_t out_len = axis == 0 ? m : n;
  const std::size_t red_len = axis == 0 ? n : m;
  if (red_len == 0) throw DimensionError("max_reduce: empty axis");
  Tensor out = Tensor::zeros({out_len});
  std::vector<std::size_t> winner(out_len, 0);
  for (std::size_t o = 0; o < out_len; ++o) {
    std::size_t best = axis == 0 ? o : o * m;
    double best_v = x->values()[best];
    for (std::size_t r = 1; r < red_len; ++r) {
      const std::size_t pos = axis == 0 ? r * m + o : o * m + r;
      if (x->values()[pos] > best_v) {
        best_v = x->values()[pos];
        best = pos;
      }
    }
    out.values[o] = best_v;
    winner[o] = best;
  }
  return detail::make_op(std::move(out), {x}, [winner = std::move(winner)](Node& node) {
    Node* p = node.parents[0].get();
    p->data.ensure_grad();
    for (std::size_t o = 0; o < winner.size(); ++o) p->data.grad[winner[o]] += node.data.grad[o];
  });
}

// Scale row i of x by w[i]; w is [n] or [n,1].
inline NodePtr scale_rows(const NodePtr& x, const NodePtr& w) {
  if (x->data.rank() != 2) throw DimensionError("scale_rows: x must be rank-2");
  const std::size_t n = x->shape()[0];
  const std::size_t m = x->shape()[1];
  if (w->size() != n) {
    throw DimensionError("scale_rows: weight length " + std::to_string(w->size()) +
                         " does not match row count " + std::to_string(n));
  }
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out.values[i * m + j] = x->values()[i * m + j] * w->values()[i];
  }
  return detail::make_op(std::move(out), {x, w}, [n, m](Node& node) {
    Node* px = node.parents[0].get();
    Node* pw = node.parents[1].get();
    if (px->needs_grad) {
      px->data.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          px->data.grad[i * m + j] += node.data.grad[i * m + j] * pw->data.values[i];
        }
      }
    }
    if (pw->needs_grad) {
      pw->data.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) acc += node.data.grad[i * m + j] * px->data.values[i * m + j];
        pw->data.grad[i] += acc;
      }
    }
  });
}

// ---- dense layer ------------------------------------------------------------

// out[i,j] = sum_a x[i,a] * W[a,j] + b[j]
inline NodePtr linear(const NodePtr& x, const NodePtr& W, const NodePtr& b) {
  if (x->data.rank() != 2 || W->data.rank() != 2 || b->data.rank() != 1) {
    throw DimensionError("linear: expected x[n,in], W[in,out], b[out]");
  }
  const std::size_t n = x->shape()[0];
  const std::size_t in = x->shape()[1];
  const std::size_t out_dim = W->shape()[1];
  if (W->shape()[0] != in) {
    throw DimensionError("linear: inner dimensions disagree, x " + shape_str(x->shape()) +
                         " vs W " + shape_str(W->shape()));
  }
  if (b->size() != out_dim) {
    throw DimensionError("linear: bias length " + std::to_string(b->size()) +
                         " does not match output width " + std::to_string(out_dim));
  }
  Tensor out = Tensor::zeros({n, out_dim});
  const double* xv = x->values().data();
  const double* wv = W->values().data();
  const double* bv = b->values().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.values.data() + i * out_dim;
    std::copy(bv, bv + out_dim, row);
    for (std::size_t a = 0; a < in; ++a) {
      const double xia = xv[i * in + a];
      const double* wrow = wv + a * out_dim;
      for (std::size_t j = 0; j < out_dim; ++j) row[j] += xia * wrow[j];
    }
  }
  return detail::make_op(std::move(out), {x, W, b}, [n, in, out_dim](Node& node) {
    Node* px = node.parents[0].get();
    Node* pw = node.parents[1].get();
    Node* pb = node.parents[2].get();
    const double* g = node.data.grad.data();
    if (px->needs_grad) {
      px->data.ensure_grad();
      const double* wv = pw->data.values.data();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < in; ++a) {
          const double* wrow = wv + a * out_dim;
          const double* grow = g + i * out_dim;
          double acc = 0.0;
          for (std::size_t j = 0; j < out_dim; ++j) acc += grow[j] * wrow[j];
          px->data.grad[i * in + a] += acc;
        }
      }
    }
    if (pw->needs_grad) {
      pw->data.ensure_grad();
      const double* xv = px->data.values.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double* grow = g + i * out_dim;
        for (std::size_t a = 0; a < in; ++a) {
          const double xia = xv[i * in + a];
          double* wrow = pw->data.grad.data() + a * out_dim;
          for (std::size_t j = 0; j < out_dim; ++j) wrow[j] += xia * grow[j];
        }
      }
    }
    if (pb->needs_grad) {
      pb->data.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double* grow = g + i * out_dim;
        for (std::size_t j = 0; j < out_dim; ++j) pb->data.grad[j] += grow[j];
      }
    }
  });
}

// ---- activations ------------------------------------------------------------

inline NodePtr relu(const NodePtr& x) {
  detail::check_finite(x->values(), "relu");
  Tensor out = Tensor::zeros(x->shape());
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = x->values()[i] > 0.0 ? x->values()[i] : 0.0;
  return detail::make_op(std::move(out), {x}, [](Node& node) {
    Node* p = node.parents[0].get();
    p->data.ensure_grad();
    for (std::size_t i = 0; i < node.size(); ++i) {
      if (p->data.values[i] > 0.0) p->data.grad[i] += node.data.grad[i];
    }
  });
}

inline NodePtr sigmoid(const NodePtr& x) {
  detail::check_finite(x->values(), "sigmoid");
  Tensor out = Tensor::zeros(x->shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x->values()[i];
    out.values[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return detail::make_op(std::move(out), {x}, [](Node& node) {
    Node* p = node.parents[0].get();
    p->data.ensure_grad();
    for (std::size_t i = 0; i < node.size(); ++i) {
      const double s = node.data.values[i];
      p->data.grad[i] += node.data.grad[i] * s * (1.0 - s);
    }
  });
}

// Row-wise softmax over the last axis of an [n,m] matrix (or a single vector).
inline NodePtr softmax(const NodePtr& x) {
  detail::check_finite(x->values(), "softmax");
  const bool is_vec = x->data.rank() == 1;
  const std::size_t n = is_vec ? 1 : x->shape()[0];
  const std::size_t m = is_vec ? x->size() : x->shape()[1];
  if (m == 0) throw DimensionError("softmax: empty axis");
  Tensor out = Tensor::zeros(x->shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x->values().data() + i * m;
    double* orow = out.values.data() + i * m;
    double mx = row[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (std::size_t j = 0; j < m; ++j) orow[j] /= sum;
  }
  return detail::make_op(std::move(out), {x}, [n, m](Node& node) {
    Node* p = node.parents[0].get();
    p->data.ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const double* s = node.data.values.data() + i * m;
      const double* g = node.data.grad.data() + i * m;
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += g[j] * s[j];
      for (std::size_t j = 0; j < m; ++j) p->data.grad[i * m + j] += s[j] * (g[j] - dot);
    }
  });
}

// Mean negative log-likelihood of integer labels under softmax(logits).
// Fused log-sum-exp keeps small-logit rows stable; gradient is
// (softmax - onehot) / n.
inline NodePtr cross_entropy(const NodePtr& logits, const std::vector<int>& labels) {
  if (logits->data.rank() != 2) throw DimensionError("cross_entropy: logits must be [n,C]");
  const std::size_t n = logits->shape()[0];
  const std::size_t C = logits->shape()[1];
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  for (int lbl : labels) {
    if (lbl < 0 || static_cast<std::size_t>(lbl) >= C) {
      throw ClassRangeError("cross_entropy: label " + std::to_string(lbl) + " outside [0," +
                            std::to_string(C) + ")");
    }
  }
  detail::check_finite(logits->values(), "cross_entropy");
  double loss = 0.0;
  std::vector<double> softmaxed(n * C);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits->values().data() + i * C;
    double mx = row[0];
    for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < C; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    loss += lse - row[static_cast<std::size_t>(labels[i])];
    for (std::size_t j = 0; j < C; ++j) softmaxed[i * C + j] = std::exp(row[j] - lse);
  }
  loss /= static_cast<double>(n);
  return detail::make_op(
      Tensor::scalar(loss), {logits},
      [labels, softmaxed = std::move(softmaxed), n, C](Node& node) {
        Node* p = node.parents[0].get();
        p->data.ensure_grad();
        const double gscale = node.data.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < C; ++j) {
            double delta = softmaxed[i * C + j];
            if (j == static_cast<std::size_t>(labels[i])) delta -= 1.0;
            p->data.grad[i * C + j] += gscale * delta;
          }
        }
      });
}

// One-hot encode labels; convenience for tests that exercise the tensor form.
inline Tensor one_hot(const std::vector<int>& labels, std::size_t num_classes) {
  Tensor t = Tensor::zeros({labels.size(), num_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int lbl = labels[i];
    if (lbl < 0 || static_cast<std::size_t>(lbl) >= num_classes) {
      throw ClassRangeError("one_hot: label " + std::to_string(lbl) + " outside [0," +
                            std::to_string(num_classes) + ")");
    }
    t.values[i * num_classes + static_cast<std::size_t>(lbl)] = 1.0;
  }
  return t;
}

}  // namespace pcil
