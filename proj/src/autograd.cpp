// Copyright 2026 The EDTK Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "edtk/autograd.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace edtk {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

Tape::Var Tape::push(Matrix value, bool needs_grad, std::function<void(Tape&, const Matrix&)> back) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = track_ && needs_grad;
  if (node.needs_grad) node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::constant(Matrix value) { return push(std::move(value), false, {}); }

Tape::Var Tape::parameter(const Matrix& value, Matrix* grad_sink) {
  Node node;
  node.ref = &value;
  node.sink = grad_sink;
  node.needs_grad = track_ && grad_sink != nullptr;
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(Var v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  return n.ref ? *n.ref : n.value;
}

Matrix& Tape::grad(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.size() == 0) {
    const Matrix& val = n.ref ? *n.ref : n.value;
    n.grad = Matrix::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

Tape::Var Tape::matmul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require(av.cols() == bv.rows(), "tape matmul: inner dimensions differ");
  Matrix out;
  out.noalias() = av * bv;
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, const Matrix& g) {
    if (t.needs(a)) t.grad(a).noalias() += g * t.value(b).transpose();
    if (t.needs(b)) t.grad(b).noalias() += t.value(a).transpose() * g;
  });
}

Tape::Var Tape::matmul_nt(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require(av.cols() == bv.cols(), "tape matmul_nt: inner dimensions differ");
  Matrix out;
  out.noalias() = av * bv.transpose();
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, const Matrix& g) {
    if (t.needs(a)) t.grad(a).noalias() += g * t.value(b);
    if (t.needs(b)) t.grad(b).noalias() += g.transpose() * t.value(a);
  });
}

Tape::Var Tape::add(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "tape add: shape mismatch");
  return push(av + bv, needs(a) || needs(b), [a, b](Tape& t, const Matrix& g) {
    if (t.needs(a)) t.grad(a) += g;
    if (t.needs(b)) t.grad(b) += g;
  });
}

Tape::Var Tape::scale(Var a, double factor) {
  return push(value(a) * factor, needs(a), [a, factor](Tape& t, const Matrix& g) { t.grad(a) += g * factor; });
}

Tape::Var Tape::add3(Var a, Var b, Var c) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  const Matrix& cv = value(c);
  require(av.rows() == bv.rows() && av.cols() == bv.cols() && av.rows() == cv.rows() && av.cols() == cv.cols(),
          "tape add3: shape mismatch");
  return push(av + bv + cv, needs(a) || needs(b) || needs(c), [a, b, c](Tape& t, const Matrix& g) {
    if (t.needs(a)) t.grad(a) += g;
    if (t.needs(b)) t.grad(b) += g;
    if (t.needs(c)) t.grad(c) += g;
  });
}

Tape::Var Tape::add_row(Var a, Var row) {
  const Matrix& av = value(a);
  const Matrix& rv = value(row);
  require(rv.rows() == 1 && rv.cols() == av.cols(), "tape add_row: shape mismatch");
  Matrix out = av.rowwise() + rv.row(0);
  return push(std::move(out), needs(a) || needs(row), [a, row](Tape& t, const Matrix& g) {
    if (t.needs(a)) t.grad(a) += g;
    if (t.needs(row)) t.grad(row) += g.colwise().sum();
  });
}

Tape::Var Tape::gelu(Var a) {
  const Matrix& x = value(a);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  }
  return push(std::move(out), needs(a), [a](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    Matrix& ga = t.grad(a);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double v = x.data()[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      ga.data()[i] += g.data()[i] * (cdf + v * pdf);
    }
  });
}

Tape::Var Tape::layer_norm(Var x, Var gain, Var shift, double eps) {
  const Matrix& xv = value(x);
  const Matrix& gv = value(gain);
  const Matrix& sv = value(shift);
  require(gv.rows() == 1 && sv.rows() == 1 && gv.cols() == xv.cols() && sv.cols() == xv.cols(),
          "tape layer_norm: shape mismatch");
  const Eigen::Index n = xv.cols();
  Matrix normalized(xv.rows(), n);
  Vector inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mean = xv.row(r).mean();
    const double var = (xv.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    normalized.row(r) = (xv.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (normalized.array().rowwise() * gv.row(0).array()).rowwise() + sv.row(0).array();
  return push(std::move(out), needs(x) || needs(gain) || needs(shift),
              [x, gain, shift, normalized = std::move(normalized), inv_std = std::move(inv_std)](Tape& t, const Matrix& g) {
                const Matrix& gv = t.value(gain);
                if (t.needs(gain)) t.grad(gain) += (g.array() * normalized.array()).colwise().sum().matrix();
                if (t.needs(shift)) t.grad(shift) += g.colwise().sum();
                if (t.needs(x)) {
                  Matrix& gx = t.grad(x);
                  const double n = static_cast<double>(g.cols());
                  for (Eigen::Index r = 0; r < g.rows(); ++r) {
                    const RowVector dxhat = (g.row(r).array() * gv.row(0).array()).matrix();
                    const double mean_d = dxhat.sum() / n;
                    const double mean_dx = dxhat.dot(normalized.row(r)) / n;
                    gx.row(r).array() +=
                        inv_std(r) * (dxhat.array() - mean_d - normalized.row(r).array() * mean_dx);
                  }
                }
              });
}

Tape::Var Tape::gather_rows(Var table, std::span<const int> ids) {
  const Matrix& tv = value(table);
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) throw DimensionError("tape gather_rows: id " + std::to_string(ids[i]) + " out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return push(std::move(out), needs(table), [table, idx = std::move(idx)](Tape& t, const Matrix& g) {
    Matrix& gt = t.grad(table);
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Tape::Var Tape::take_rows(Var x, Eigen::Index first, Eigen::Index count) {
  const Matrix& xv = value(x);
  require(first >= 0 && count >= 0 && first + count <= xv.rows(), "tape take_rows: range out of bounds");
  return push(xv.middleRows(first, count), needs(x), [x, first, count](Tape& t, const Matrix& g) {
    t.grad(x).middleRows(first, count) += g;
  });
}

Tape::Var Tape::dropout(Var a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  const Matrix& av = value(a);
  Matrix mask(av.rows(), av.cols());
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() >= rate ? keep : 0.0;
  Matrix out = av.cwiseProduct(mask);
  return push(std::move(out), needs(a), [a, mask = std::move(mask)](Tape& t, const Matrix& g) {
    t.grad(a) += g.cwiseProduct(mask);
  });
}

Tape::Var Tape::attention(Var q, Var k, Var v, const AttentionSpec& spec) {
  const Matrix& qv = value(q);
  const Matrix& kv = value(k);
  const Matrix& vv = value(v);
  const Eigen::Index nq = qv.rows();
  const Eigen::Index nk = kv.rows();
  const Eigen::Index d = qv.cols();
  require(kv.cols() == d && vv.cols() == d && vv.rows() == nk, "tape attention: shape mismatch");
  require(spec.n_heads > 0 && d % spec.n_heads == 0, "tape attention: heads must divide width");
  require(spec.key_mask.empty() || static_cast<Eigen::Index>(spec.key_mask.size()) == nk,
          "tape attention: key mask length mismatch");
  require(!spec.bias || (spec.bias->rows() == nq && spec.bias->cols() == nk), "tape attention: bias shape mismatch");
  if (spec.causal) require(nq == nk, "tape attention: causal attention needs square scores");

  const Eigen::Index dh = d / spec.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Matrix> probs(static_cast<std::size_t>(spec.n_heads));
  Matrix out(nq, d);
  for (int h = 0; h < spec.n_heads; ++h) {
    Matrix scores;
    scores.noalias() = qv.middleCols(h * dh, dh) * kv.middleCols(h * dh, dh).transpose();
    Matrix& p = probs[static_cast<std::size_t>(h)];
    p = Matrix::Zero(nq, nk);
    for (Eigen::Index i = 0; i < nq; ++i) {
      const Eigen::Index last = spec.causal ? i + 1 : nk;
      double peak = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < last; ++j) {
        if (!spec.key_mask.empty() && !spec.key_mask[static_cast<std::size_t>(j)]) continue;
        peak = std::max(peak, scores(i, j));
      }
      if (!std::isfinite(peak)) throw DegenerateMassError("attention row has no valid keys");
      double total = 0.0;
      for (Eigen::Index j = 0; j < last; ++j) {
        if (!spec.key_mask.empty() && !spec.key_mask[static_cast<std::size_t>(j)]) continue;
        double w = std::exp(scale * (scores(i, j) - peak));
        if (spec.bias) w *= (*spec.bias)(i, j);
        p(i, j) = w;
        total += w;
      }
      if (!(total > 0.0)) throw DegenerateMassError();
      p.row(i) /= total;
    }
    out.middleCols(h * dh, dh).noalias() = p * vv.middleCols(h * dh, dh);
  }
  return push(std::move(out), needs(q) || needs(k) || needs(v),
              [q, k, v, dh, scale, heads = spec.n_heads, probs = std::move(probs)](Tape& t, const Matrix& g) {
                const Matrix& qv = t.value(q);
                const Matrix& kv = t.value(k);
                const Matrix& vv = t.value(v);
                for (int h = 0; h < heads; ++h) {
                  const Matrix& p = probs[static_cast<std::size_t>(h)];
                  const auto g_h = g.middleCols(h * dh, dh);
                  if (t.needs(v)) t.grad(v).middleCols(h * dh, dh).noalias() += p.transpose() * g_h;
                  if (!t.needs(q) && !t.needs(k)) continue;
                  Matrix dp;
                  dp.noalias() = g_h * vv.middleCols(h * dh, dh).transpose();
                  // Softmax Jacobian at the post-bias probabilities; biasing is a
                  // log-shift of the scores, so no separate bias term appears.
                  const Vector inner = (dp.array() * p.array()).rowwise().sum();
                  Matrix ds = (p.array() * (dp.colwise() - inner).array()).matrix() * scale;
                  if (t.needs(q)) t.grad(q).middleCols(h * dh, dh).noalias() += ds * kv.middleCols(h * dh, dh);
                  if (t.needs(k)) t.grad(k).middleCols(h * dh, dh).noalias() += ds.transpose() * qv.middleCols(h * dh, dh);
                }
              });
}

Tape::Var Tape::cross_entropy(Var logits, std::span<const int> targets, int ignore_id) {
  const Matrix& lv = value(logits);
  require(static_cast<Eigen::Index>(targets.size()) == lv.rows(), "tape cross_entropy: target count mismatch");
  Matrix probs(lv.rows(), lv.cols());
  double total = 0.0;
  int counted = 0;
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    const double peak = lv.row(r).maxCoeff();
    probs.row(r) = (lv.row(r).array() - peak).exp();
    const double z = probs.row(r).sum();
    probs.row(r) /= z;
    const int target = targets[static_cast<std::size_t>(r)];
    if (target == ignore_id) continue;
    if (target < 0 || target >= lv.cols()) throw DimensionError("tape cross_entropy: target out of range");
    total += std::log(z) + peak - lv(r, target);
    ++counted;
  }
  if (counted == 0) throw DimensionError("tape cross_entropy: no scored targets");
  Matrix out(1, 1);
  out(0, 0) = total / counted;
  std::vector<int> tg(targets.begin(), targets.end());
  return push(std::move(out), needs(logits),
              [logits, probs = std::move(probs), tg = std::move(tg), ignore_id, counted](Tape& t, const Matrix& g) {
                Matrix& gl = t.grad(logits);
                const double s = g(0, 0) / counted;
                for (Eigen::Index r = 0; r < probs.rows(); ++r) {
                  const int target = tg[static_cast<std::size_t>(r)];
                  if (target == ignore_id) continue;
                  gl.row(r) += s * probs.row(r);
                  gl(r, target) -= s;
                }
              });
}

void Tape::backward(Var scalar) {
  if (!track_) throw std::logic_error("backward on a tape without gradient tracking");
  const Matrix& v = value(scalar);
  if (v.rows() != 1 || v.cols() != 1) throw DimensionError("backward expects a 1 x 1 value");
  if (!needs(scalar)) return;
  grad(scalar)(0, 0) += 1.0;
  for (int i = scalar.id; i >= 0; --i) {
    Node& node = nodes_[static_cast<std::size_t>(i)];
    if (!node.needs_grad || node.grad.size() == 0) continue;
    if (node.back) node.back(*this, node.grad);
    if (node.sink) *node.sink += node.grad;
  }
}

}  // namespace edtk
