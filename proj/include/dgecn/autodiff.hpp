#pragma once

// Minimal reverse-mode differentiation over dense row-major tensors.
//
// A Tape records nodes in creation order; every node stores its value and a
// closure that scatters the node's gradient into its inputs. Creation order
// is a topological order, so backward() is a single reverse sweep. Operations
// are coarse (a whole linear layer, a whole edge convolution) to keep the
// tape short.

#include "dgecn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace dgecn::ad {

struct Var {
  std::size_t id = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Var constant(Tensor value);
  // Leaf bound to external storage (a model parameter). The tensor must
  // outlive the tape and stay unmodified until backward() has run.
  Var parameter(const Tensor& storage, std::size_t slot);
  Var record(Tensor value, BackwardFn backward);

  const Tensor& value(Var v) const;
  // Gradient buffer of `v`, zero-initialized on first access.
  Tensor& grad(Var v);
  bool has_grad(Var v) const { return nodes_[v.id].grad_ready; }

  std::size_t size() const noexcept { return nodes_.size(); }

  // Seeds the 1x1 root with `seed` and sweeps back to the leaves.
  void backward(Var root, double seed = 1.0);

  struct ParameterGrad {
    std::size_t slot;
    const Tensor* grad;  // nullptr when the parameter received no gradient
  };
  std::vector<ParameterGrad> parameter_grads() const;

  // Free-form identity of what was recorded; checked by callers before backward.
  std::uint64_t fingerprint = 0;

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    bool grad_ready = false;
    BackwardFn backward;
    long slot = -1;
  };
  std::vector<Node> nodes_;
  bool swept_ = false;
};

// y = x * w^T + b   with x: r x in, w: out x in, b: 1 x out
Var linear(Tape& t, Var x, Var w, Var b);
Var relu(Tape& t, Var x);
Var add(Tape& t, Var a, Var b);
Var scale(Tape& t, Var x, double c);
// [a | b] along columns; equal row counts.
Var concat_cols(Tape& t, Var a, Var b);
// Row-major flatten into a single row.
Var flatten(Tape& t, Var x);
// Column-wise max over consecutive blocks of `block_rows` rows; the gradient
// goes to the first row attaining the max.
Var segment_max(Tape& t, Var x, std::size_t block_rows);

}  // namespace dgecn::ad
