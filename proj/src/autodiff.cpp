#include "dgecn/autodiff.hpp"

#include "dgecn/error.hpp"
#include "dgecn/simd/kernels.hpp"

#include <algorithm>

namespace dgecn::ad {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, false, {}, -1});
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(const Tensor& storage, std::size_t slot) {
  nodes_.push_back(Node{{}, &storage, {}, false, {}, static_cast<long>(slot)});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, false, std::move(backward), -1});
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.external ? *n.external : n.value;
}

Tensor& Tape::grad(Var v) {
  Node& n = nodes_[v.id];
  if (!n.grad_ready) {
    const Tensor& val = value(v);
    n.grad = Tensor::Zero(val.rows(), val.cols());
    n.grad_ready = true;
  }
  return n.grad;
}

void Tape::backward(Var root, double seed) {
  if (swept_) fail(ErrorKind::TapeMismatch, "tape already consumed by a backward pass");
  if (value(root).size() != 1) fail(ErrorKind::DimensionMismatch, "backward root must be a scalar");
  swept_ = true;
  grad(root)(0, 0) += seed;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad_ready || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

std::vector<Tape::ParameterGrad> Tape::parameter_grads() const {
  std::vector<ParameterGrad> out;
  for (const Node& n : nodes_)
    if (n.slot >= 0) out.push_back({static_cast<std::size_t>(n.slot), n.grad_ready ? &n.grad : nullptr});
  return out;
}

Var linear(Tape& t, Var x, Var w, Var b) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  const Tensor& bv = t.value(b);
  if (xv.cols() != wv.cols() || bv.rows() != 1 || bv.cols() != wv.rows())
    fail(ErrorKind::DimensionMismatch, "linear: shapes do not chain");
  const auto rows = static_cast<std::size_t>(xv.rows());
  const auto in = static_cast<std::size_t>(xv.cols());
  const auto out = static_cast<std::size_t>(wv.rows());
  Tensor y(xv.rows(), wv.rows());
  simd::kernels().matmul_nt(xv.data(), wv.data(), y.data(), rows, in, out);
  y.rowwise() += bv.row(0);
  return t.record(std::move(y), [x, w, b, rows, in, out](Tape& tp, const Tensor& dy) {
    const auto& k = simd::kernels();
    const Tensor& xv = tp.value(x);
    const Tensor& wv = tp.value(w);
    Tensor& dx = tp.grad(x);
    Tensor& dw = tp.grad(w);
    Tensor& db = tp.grad(b);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g = dy.data() + r * out;
      for (std::size_t o = 0; o < out; ++o) {
        if (g[o] == 0.0) continue;
        k.axpy(g[o], wv.data() + o * in, dx.data() + r * in, in);
        k.axpy(g[o], xv.data() + r * in, dw.data() + o * in, in);
      }
      k.axpy(1.0, g, db.data(), out);
    }
  });
}

Var relu(Tape& t, Var x) {
  Tensor y = t.value(x).cwiseMax(0.0);
  return t.record(std::move(y), [x](Tape& tp, const Tensor& dy) {
    const Tensor& xv = tp.value(x);
    Tensor& dx = tp.grad(x);
    for (Eigen::Index i = 0; i < xv.size(); ++i)
      if (xv.data()[i] > 0.0) dx.data()[i] += dy.data()[i];
  });
}

Var add(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) fail(ErrorKind::DimensionMismatch, "add: shape mismatch");
  return t.record(av + bv, [a, b](Tape& tp, const Tensor& dy) {
    tp.grad(a) += dy;
    tp.grad(b) += dy;
  });
}

Var scale(Tape& t, Var x, double c) {
  return t.record(t.value(x) * c, [x, c](Tape& tp, const Tensor& dy) { tp.grad(x) += c * dy; });
}

Var concat_cols(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.rows() != bv.rows()) fail(ErrorKind::DimensionMismatch, "concat_cols: row counts differ");
  Tensor y(av.rows(), av.cols() + bv.cols());
  y << av, bv;
  const Eigen::Index ac = av.cols();
  const Eigen::Index bc = bv.cols();
  return t.record(std::move(y), [a, b, ac, bc](Tape& tp, const Tensor& dy) {
    tp.grad(a) += dy.leftCols(ac);
    tp.grad(b) += dy.rightCols(bc);
  });
}

Var flatten(Tape& t, Var x) {
  const Tensor& xv = t.value(x);
  const Eigen::Index r = xv.rows();
  const Eigen::Index c = xv.cols();
  Tensor y = Eigen::Map<const Tensor>(xv.data(), 1, xv.size());
  return t.record(std::move(y), [x, r, c](Tape& tp, const Tensor& dy) {
    tp.grad(x) += Eigen::Map<const Tensor>(dy.data(), r, c);
  });
}

Var segment_max(Tape& t, Var x, std::size_t block_rows) {
  const Tensor& xv = t.value(x);
  const auto rows = static_cast<std::size_t>(xv.rows());
  if (block_rows == 0 || rows % block_rows != 0)
    fail(ErrorKind::DimensionMismatch, "segment_max: rows not divisible by block size");
  const std::size_t blocks = rows / block_rows;
  const Eigen::Index cols = xv.cols();
  Tensor y(static_cast<Eigen::Index>(blocks), cols);
  std::vector<Eigen::Index> arg(blocks * static_cast<std::size_t>(cols));
  for (std::size_t s = 0; s < blocks; ++s)
    for (Eigen::Index c = 0; c < cols; ++c) {
      auto best_row = static_cast<Eigen::Index>(s * block_rows);
      double best = xv(best_row, c);
      for (std::size_t r = 1; r < block_rows; ++r) {
        const auto row = static_cast<Eigen::Index>(s * block_rows + r);
        if (xv(row, c) > best) {
          best = xv(row, c);
          best_row = row;
        }
      }
      y(static_cast<Eigen::Index>(s), c) = best;
      arg[s * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)] = best_row;
    }
  return t.record(std::move(y), [x, arg = std::move(arg), blocks, cols](Tape& tp, const Tensor& dy) {
    Tensor& dx = tp.grad(x);
    for (std::size_t s = 0; s < blocks; ++s)
      for (Eigen::Index c = 0; c < cols; ++c)
        dx(arg[s * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)], c) +=
            dy(static_cast<Eigen::Index>(s), c);
  });
}

}  // namespace dgecn::ad
