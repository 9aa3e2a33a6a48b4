#include "feedrank/tape.hpp"

#include <cmath>
#include <string>

#include "feedrank/errors.hpp"

namespace feedrank {

namespace {

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tensor& Tape::grad_buf(Id id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

const Tensor& Tape::grad(Id id) const {
  const Node& n = nodes_[id];
  if (n.grad.empty())
    throw ContractError("tape: gradient not computed for node " +
                        std::to_string(id));
  return n.grad;
}

double Tape::scalar(Id id) const {
  const Tensor& v = nodes_[id].value;
  if (!v.is_scalar()) throw ContractError("tape: node is not scalar");
  return v[0];
}

void Tape::reset() { nodes_.clear(); }

Tape::Id Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.op = Op::leaf;
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
    throw ShapeError("matmul: inner dimensions disagree");
  const int m = A.rows(), k = A.cols(), p = B.cols();
  Tensor out({m, p});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) {
      const double aij = A.at(i, j);
      for (int l = 0; l < p; ++l) out.at(i, l) += aij * B.at(j, l);
    }
  Node n;
  n.value = std::move(out);
  n.op = Op::matmul;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::matvec(Id a, Id x) {
  const Tensor& A = val(a);
  const Tensor& X = val(x);
  if (A.rank() != 2 || X.rank() != 1 || A.cols() != X.rows())
    throw ShapeError("matvec: dimensions disagree");
  const int m = A.rows(), k = A.cols();
  Tensor out({m});
  const double* av = A.values().data();
  const double* xv = X.values().data();
  for (int i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = av + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < k; ++j) acc += row[j] * xv[j];
    out[i] = acc;
  }
  Node n;
  n.value = std::move(out);
  n.op = Op::matvec;
  n.a = a;
  n.b = x;
  n.requires_grad = nodes_[a].requires_grad || nodes_[x].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  Tensor out;
  if (A.same_shape(B)) {
    out = A;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += B[i];
  } else if (A.rank() == 2 && B.rank() == 1 && A.cols() == B.rows()) {
    out = A;  // row-wise bias
    for (int i = 0; i < A.rows(); ++i)
      for (int j = 0; j < A.cols(); ++j) out.at(i, j) += B[j];
  } else {
    throw ShapeError("add: shapes incompatible");
  }
  Node n;
  n.value = std::move(out);
  n.op = Op::add;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (!A.same_shape(B)) throw ShapeError("sub: shapes disagree");
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= B[i];
  Node n;
  n.value = std::move(out);
  n.op = Op::sub;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (!A.same_shape(B)) throw ShapeError("mul: shapes disagree");
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= B[i];
  Node n;
  n.value = std::move(out);
  n.op = Op::mul;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::scale(Id a, double c) {
  Tensor out = val(a);
  for (auto& v : out.values()) v *= c;
  Node n;
  n.value = std::move(out);
  n.op = Op::scale;
  n.a = a;
  n.c = c;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::sigmoid(Id a) {
  Tensor out = val(a);
  for (auto& v : out.values()) v = stable_sigmoid(v);
  Node n;
  n.value = std::move(out);
  n.op = Op::sigmoid;
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::tanh(Id a) {
  Tensor out = val(a);
  for (auto& v : out.values()) v = std::tanh(v);
  Node n;
  n.value = std::move(out);
  n.op = Op::tanh_fn;
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::relu(Id a) {
  Tensor out = val(a);
  for (auto& v : out.values())
    if (v < 0.0) v = 0.0;
  Node n;
  n.value = std::move(out);
  n.op = Op::relu;
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::softmax_last(Id a) {
  const Tensor& A = val(a);
  if (A.rank() < 1 || A.rank() > 2)
    throw ShapeError("softmax_last: expects rank 1 or 2");
  const int last = A.shape().back();
  const int rows = static_cast<int>(A.numel()) / last;
  Tensor out = A;
  for (int r = 0; r < rows; ++r) {
    double* row = out.values().data() + static_cast<std::size_t>(r) * last;
    double m = row[0];
    for (int j = 1; j < last; ++j) m = std::max(m, row[j]);
    double s = 0.0;
    for (int j = 0; j < last; ++j) {
      row[j] = std::exp(row[j] - m);
      s += row[j];
    }
    for (int j = 0; j < last; ++j) row[j] /= s;
  }
  Node n;
  n.value = std::move(out);
  n.op = Op::softmax_last;
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::concat(std::span<const Id> parts) {
  if (parts.empty()) throw ContractError("concat: empty part list");
  int total = 0;
  for (Id p : parts) {
    if (val(p).rank() != 1) throw ShapeError("concat: expects rank-1 parts");
    total += val(p).rows();
  }
  Tensor out({total});
  int off = 0;
  bool rg = false;
  for (Id p : parts) {
    const Tensor& t = val(p);
    for (int i = 0; i < t.rows(); ++i) out[off + i] = t[i];
    off += t.rows();
    rg = rg || nodes_[p].requires_grad;
  }
  Node n;
  n.value = std::move(out);
  n.op = Op::concat;
  n.args.assign(parts.begin(), parts.end());
  n.requires_grad = rg;
  return push(std::move(n));
}

Tape::Id Tape::dot(Id a, Id b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (A.rank() != 1 || B.rank() != 1 || A.rows() != B.rows())
    throw ShapeError("dot: expects equal-length vectors");
  double acc = 0.0;
  for (int i = 0; i < A.rows(); ++i) acc += A[i] * B[i];
  Node n;
  n.value = Tensor::scalar(acc);
  n.op = Op::dot;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::sum(Id a) {
  const Tensor& A = val(a);
  double acc = 0.0;
  for (double v : A.values()) acc += v;
  Node n;
  n.value = Tensor::scalar(acc);
  n.op = Op::sum;
  n.a = a;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::embed(Id table, int row) {
  const Tensor& T = val(table);
  if (T.rank() != 2) throw ShapeError("embed: table must be rank 2");
  if (row < 0 || row >= T.rows())
    throw LookupError("embed: row " + std::to_string(row) +
                      " outside table of " + std::to_string(T.rows()));
  const int d = T.cols();
  Tensor out({d});
  for (int j = 0; j < d; ++j) out[j] = T.at(row, j);
  Node n;
  n.value = std::move(out);
  n.op = Op::embed;
  n.a = table;
  n.aux = row;
  n.requires_grad = nodes_[table].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::cosine(Id a, Id b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  if (A.rank() != 1 || B.rank() != 1 || A.rows() != B.rows())
    throw ShapeError("cosine: expects equal-length vectors");
  double na = 0.0, nb = 0.0, d = 0.0;
  for (int i = 0; i < A.rows(); ++i) {
    na += A[i] * A[i];
    nb += B[i] * B[i];
    d += A[i] * B[i];
  }
  // zero-norm input: similarity defined as 0 (and gradient 0)
  const double denom = std::sqrt(na) * std::sqrt(nb);
  const double cosv = denom > 0.0 ? d / denom : 0.0;
  Node n;
  n.value = Tensor::scalar(cosv);
  n.op = Op::cosine;
  n.a = a;
  n.b = b;
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::bce_with_logits(Id logit, double label) {
  const Tensor& L = val(logit);
  if (!L.is_scalar()) throw ShapeError("bce_with_logits: logit must be scalar");
  const double z = L[0];
  const double loss =
      std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
  Node n;
  n.value = Tensor::scalar(loss);
  n.op = Op::bce_logits;
  n.a = logit;
  n.c = label;
  n.requires_grad = nodes_[logit].requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::weighted_sum(Id weights, std::span<const Id> vectors) {
  const Tensor& W = val(weights);
  if (W.rank() != 1 || static_cast<std::size_t>(W.rows()) != vectors.size())
    throw ShapeError("weighted_sum: weight length must match vector count");
  if (vectors.empty()) throw ContractError("weighted_sum: empty vector list");
  const int d = val(vectors[0]).rows();
  Tensor out({d});
  bool rg = nodes_[weights].requires_grad;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const Tensor& v = val(vectors[i]);
    if (v.rank() != 1 || v.rows() != d)
      throw ShapeError("weighted_sum: vector dims disagree");
    const double w = W[i];
    for (int j = 0; j < d; ++j) out[j] += w * v[j];
    rg = rg || nodes_[vectors[i]].requires_grad;
  }
  Node n;
  n.value = std::move(out);
  n.op = Op::weighted_sum;
  n.a = weights;
  n.args.assign(vectors.begin(), vectors.end());
  n.requires_grad = rg;
  return push(std::move(n));
}

void Tape::backward(Id loss) {
  if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size())
    throw ContractError("backward: loss id out of range");
  if (!val(loss).is_scalar())
    throw ContractError("backward: loss must be scalar");

  if (nodes_[loss].requires_grad) {
    grad_buf(loss)[0] = 1.0;

    for (Id i = loss; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      const Tensor& g = n.grad;
      switch (n.op) {
        case Op::leaf:
          break;
        case Op::matmul: {
          const Tensor& A = val(n.a);
          const Tensor& B = val(n.b);
          const int m = A.rows(), k = A.cols(), p = B.cols();
          if (nodes_[n.a].requires_grad) {
            Tensor& ga = grad_buf(n.a);  // dA = g B^T
            for (int i2 = 0; i2 < m; ++i2)
              for (int j = 0; j < k; ++j) {
                double acc = 0.0;
                for (int l = 0; l < p; ++l) acc += g.at(i2, l) * B.at(j, l);
                ga.at(i2, j) += acc;
              }
          }
          if (nodes_[n.b].requires_grad) {
            Tensor& gb = grad_buf(n.b);  // dB = A^T g
            for (int j = 0; j < k; ++j)
              for (int l = 0; l < p; ++l) {
                double acc = 0.0;
                for (int i2 = 0; i2 < m; ++i2) acc += A.at(i2, j) * g.at(i2, l);
                gb.at(j, l) += acc;
              }
          }
          break;
        }
        case Op::matvec: {
          const Tensor& A = val(n.a);
          const Tensor& X = val(n.b);
          const int m = A.rows(), k = A.cols();
          if (nodes_[n.a].requires_grad) {
            Tensor& ga = grad_buf(n.a);  // dA = outer(g, x)
            for (int i2 = 0; i2 < m; ++i2) {
              const double gi = g[i2];
              double* row = ga.values().data() + static_cast<std::size_t>(i2) * k;
              for (int j = 0; j < k; ++j) row[j] += gi * X[j];
            }
          }
          if (nodes_[n.b].requires_grad) {
            Tensor& gx = grad_buf(n.b);  // dx = A^T g
            for (int i2 = 0; i2 < m; ++i2) {
              const double gi = g[i2];
              const double* row =
                  A.values().data() + static_cast<std::size_t>(i2) * k;
              for (int j = 0; j < k; ++j) gx[j] += gi * row[j];
            }
          }
          break;
        }
        case Op::add: {
          const Tensor& A = val(n.a);
          const Tensor& B = val(n.b);
          if (nodes_[n.a].requires_grad) {
            Tensor& ga = grad_buf(n.a);
            for (std::size_t j = 0; j < g.numel(); ++j) ga[j] += g[j];
          }
          if (nodes_[n.b].requires_grad) {
            Tensor& gb = grad_buf(n.b);
            if (A.same_shape(B)) {
              for (std::size_t j = 0; j < g.numel(); ++j) gb[j] += g[j];
            } else {  // row-wise bias: column sums
              for (int r = 0; r < A.rows(); ++r)
                for (int c2 = 0; c2 < A.cols(); ++c2) gb[c2] += g.at(r, c2);
            }
          }
          break;
        }
        case Op::sub: {
          if (nodes_[n.a].requires_grad) {
            Tensor& ga = grad_buf(n.a);
            for (std::size_t j = 0; j < g.numel(); ++j) ga[j] += g[j];
          }
          if (nodes_[n.b].requires_grad) {
            Tensor& gb = grad_buf(n.b);
            for (std::size_t j = 0; j < g.numel(); ++j) gb[j] -= g[j];
          }
          break;
        }
        case Op::mul: {
          const Tensor& A = val(n.a);
          const Tensor& B = val(n.b);
          if (nodes_[n.a].requires_grad) {
            Tensor& ga = grad_buf(n.a);
            for (std::size_t j = 0; j < g.numel(); ++j) ga[j] += g[j] * B[j];
          }
          if (nodes_[n.b].requires_grad) {
            Tensor& gb = grad_buf(n.b);
            for (std::size_t j = 0; j < g.numel(); ++j) gb[j] += g[j] * A[j];
          }
          break;
        }
        case Op::scale: {
          if (nodes_[n.a].requires_grad) {
            Tensor& ga = grad_buf(n.a);
            for (std::size_t j = 0; j < g.numel(); ++j) ga[j] += g[j] * n.c;
          }
          break;
        }
        case Op::sigmoid: {
          if (nodes_[n.a].requires_grad) {
            Tensor& ga = grad_buf(n.a);
            const Tensor& y = n.value;
            for (std::size_t j = 0; j < g.numel(); ++j)
              ga[j] += g[j] * y[j] * (1.0 - y[j]);
          }
          break;
        }
        case Op::tanh_fn: {
          if (nodes_[n.a].requires_grad) {
            Tensor& ga = grad_buf(n.a);
            const Tensor& y = n.value;
            for (std::size_t j = 0; j < g.numel(); ++j)
              ga[j] += g[j] * (1.0 - y[j] * y[j]);
          }
          break;
        }
        case Op::relu: {
          if (nodes_[n.a].requires_grad) {
            Tensor& ga = grad_buf(n.a);
            const Tensor& x = val(n.a);
            for (std::size_t j = 0; j < g.numel(); ++j)
              if (x[j] > 0.0) ga[j] += g[j];
          }
          break;
        }
        case Op::softmax_last: {
          if (nodes_[n.a].requires_grad) {
            Tensor& ga = grad_buf(n.a);
            const Tensor& y = n.value;
            const int last = y.shape().back();
            const int rows = static_cast<int>(y.numel()) / last;
            for (int r = 0; r < rows; ++r) {
              const std::size_t off = static_cast<std::size_t>(r) * last;
              double dotgy = 0.0;
              for (int j = 0; j < last; ++j) dotgy += g[off + j] * y[off + j];
              for (int j = 0; j < last; ++j)
                ga[off + j] += y[off + j] * (g[off + j] - dotgy);
            }
          }
          break;
        }
        case Op::concat: {
          int off = 0;
          for (Id p : n.args) {
            const int len = val(p).rows();
            if (nodes_[p].requires_grad) {
              Tensor& gp = grad_buf(p);
              for (int j = 0; j < len; ++j) gp[j] += g[off + j];
            }
            off += len;
          }
          break;
        }
        case Op::dot: {
          const Tensor& A = val(n.a);
          const Tensor& B = val(n.b);
          const double gs = g[0];
          if (nodes_[n.a].requires_grad) {
            Tensor& ga = grad_buf(n.a);
            for (int j = 0; j < A.rows(); ++j) ga[j] += gs * B[j];
          }
          if (nodes_[n.b].requires_grad) {
            Tensor& gb = grad_buf(n.b);
            for (int j = 0; j < B.rows(); ++j) gb[j] += gs * A[j];
          }
          break;
        }
        case Op::sum: {
          if (nodes_[n.a].requires_grad) {
            Tensor& ga = grad_buf(n.a);
            const double gs = g[0];
            for (std::size_t j = 0; j < ga.numel(); ++j) ga[j] += gs;
          }
          break;
        }
        case Op::embed: {
          if (nodes_[n.a].requires_grad) {
            Tensor& gt = grad_buf(n.a);
            const int d = n.value.rows();
            double* row =
                gt.values().data() + static_cast<std::size_t>(n.aux) * d;
            for (int j = 0; j < d; ++j) row[j] += g[j];
          }
          break;
        }
        case Op::cosine: {
          const Tensor& A = val(n.a);
          const Tensor& B = val(n.b);
          double na2 = 0.0, nb2 = 0.0;
          for (int j = 0; j < A.rows(); ++j) {
            na2 += A[j] * A[j];
            nb2 += B[j] * B[j];
          }
          if (na2 > 0.0 && nb2 > 0.0) {
            const double na = std::sqrt(na2), nb = std::sqrt(nb2);
            const double cosv = n.value[0];
            const double gs = g[0];
            if (nodes_[n.a].requires_grad) {
              Tensor& ga = grad_buf(n.a);
              for (int j = 0; j < A.rows(); ++j)
                ga[j] += gs * (B[j] / (na * nb) - cosv * A[j] / na2);
            }
            if (nodes_[n.b].requires_grad) {
              Tensor& gb = grad_buf(n.b);
              for (int j = 0; j < B.rows(); ++j)
                gb[j] += gs * (A[j] / (na * nb) - cosv * B[j] / nb2);
            }
          }
          break;
        }
        case Op::bce_logits: {
          if (nodes_[n.a].requires_grad) {
            Tensor& ga = grad_buf(n.a);
            const double z = val(n.a)[0];
            ga[0] += g[0] * (stable_sigmoid(z) - n.c);
          }
          break;
        }
        case Op::weighted_sum: {
          const Tensor& W = val(n.a);
          if (nodes_[n.a].requires_grad) {
            Tensor& gw = grad_buf(n.a);
            for (std::size_t i2 = 0; i2 < n.args.size(); ++i2) {
              const Tensor& v = val(n.args[i2]);
              double acc = 0.0;
              for (int j = 0; j < v.rows(); ++j) acc += g[j] * v[j];
              gw[i2] += acc;
            }
          }
          for (std::size_t i2 = 0; i2 < n.args.size(); ++i2) {
            if (!nodes_[n.args[i2]].requires_grad) continue;
            Tensor& gv = grad_buf(n.args[i2]);
            const double w = W[i2];
            for (int j = 0; j < val(n.args[i2]).rows(); ++j) gv[j] += w * g[j];
          }
          break;
        }
      }
    }
  }

  // Parameters never reached from the loss still report zero gradients.
  for (Id i = 0; i <= loss; ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.grad.empty())
      n.grad = Tensor::zeros(n.value.shape());
  }
}

}  // namespace feedrank
