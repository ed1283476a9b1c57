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

// Matrix-granular reverse-mode differentiation. Each op records its output
// value and a closure that pushes the output gradient to its inputs.

#ifndef EDTK_AUTOGRAD_HPP
#define EDTK_AUTOGRAD_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "edtk/rng.hpp"
#include "edtk/tensor.hpp"

namespace edtk {

class Tape {
 public:
  struct Var {
    int id = -1;
  };

  struct AttentionSpec {
    int n_heads = 1;
    bool causal = false;
    /// One byte per key; 0 excludes the key. Empty means all keys valid.
    std::span<const std::uint8_t> key_mask;
    /// Optional queries x keys multiplier applied after the softmax and
    /// renormalized per row. Must outlive the tape.
    const Matrix* bias = nullptr;
  };

  explicit Tape(bool track_gradients = true) : track_(track_gradients) {}

  Var constant(Matrix value);
  /// References `value` without copying. Gradients are added into `grad_sink`
  /// (same shape) by backward(); a null sink makes the leaf a constant.
  Var parameter(const Matrix& value, Matrix* grad_sink);

  const Matrix& value(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  /// a * b^T
  Var matmul_nt(Var a, Var b);
  Var add(Var a, Var b);
  Var add3(Var a, Var b, Var c);
  Var scale(Var a, double factor);
  /// Adds a 1 x n row to every row of `a`.
  Var add_row(Var a, Var row);
  Var gelu(Var a);
  Var layer_norm(Var x, Var gain, Var shift, double eps);
  Var gather_rows(Var table, std::span<const int> ids);
  Var take_rows(Var x, Eigen::Index first, Eigen::Index count);
  Var dropout(Var a, double rate, Rng& rng);
  /// Multi-head scaled dot-product attention; returns the concatenated heads.
  Var attention(Var q, Var k, Var v, const AttentionSpec& spec);
  /// Mean token cross-entropy over rows whose target differs from `ignore_id`.
  /// Returns a 1 x 1 value.
  Var cross_entropy(Var logits, std::span<const int> targets, int ignore_id);

  void backward(Var scalar);

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix grad;
    Matrix* sink = nullptr;
    bool needs_grad = false;
    std::function<void(Tape&, const Matrix&)> back;
  };

  Var push(Matrix value, bool needs_grad, std::function<void(Tape&, const Matrix&)> back);
  bool needs(Var v) const { return track_ && nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  Matrix& grad(Var v);

  bool track_;
  std::vector<Node> nodes_;
};

}  // namespace edtk

#endif  // EDTK_AUTOGRAD_HPP
