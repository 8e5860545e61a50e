// Copyright (c) 2026 The latperc Authors
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

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "latperc/common.hpp"

namespace latperc::nn {

/// Geometry of a downsampling convolution. Transposed convolutions reuse the
/// same record read in the opposite direction: the (h, w, in_ch) side is
/// always the larger feature map.
struct ConvGeom {
  int in_ch = 0;
  int out_ch = 0;
  int h = 0;
  int w = 0;
  int k = 0;
  int stride = 1;
  int pad = 0;

  int out_h() const { return (h + 2 * pad - k) / stride + 1; }
  int out_w() const { return (w + 2 * pad - k) / stride + 1; }
  int in_pixels() const { return h * w; }
  int out_pixels() const { return out_h() * out_w(); }
  /// Weight matrix shape: out_ch x (k * k * in_ch), column index j * in_ch + c
  /// with tap index j = dy * k + dx.
  int weight_cols() const { return k * k * in_ch; }
};

/// Patch-gather table for one convolution geometry: src[j * out_pixels + o]
/// is the input pixel feeding tap j of output pixel o, or -1 for padding.
struct ColMap {
  int taps = 0;
  int out_pixels = 0;
  std::vector<int> src;
};

/// Cached lookup keyed by (h, w, k, stride, pad). Not thread-safe; each tape
/// lives on one thread and the cache is only grown, never shrunk.
const ColMap& col_map(int h, int w, int k, int stride, int pad);

/// Reverse-mode autodiff tape over dense Eigen matrices. Nodes are created
/// in topological order by the op free functions below; backward() replays
/// the recorded closures in reverse. Values are retained; convolutions
/// re-gather their patch matrices during backward instead of storing them.
template <typename Scalar>
class Tape {
 public:
  using M = MatX<Scalar>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  int push(M value, std::function<void(Tape&)> backprop = nullptr) {
    values_.push_back(std::move(value));
    grads_.emplace_back();
    backprops_.push_back(std::move(backprop));
    return static_cast<int>(values_.size()) - 1;
  }

  const M& value(int id) const { return values_[static_cast<size_t>(id)]; }

  /// Gradient buffer, zero-initialized to the value's shape on first touch.
  M& grad(int id) {
    M& g = grads_[static_cast<size_t>(id)];
    if (g.size() == 0) {
      const M& v = values_[static_cast<size_t>(id)];
      g = M::Zero(v.rows(), v.cols());
    }
    return g;
  }
  bool grad_touched(int id) const { return grads_[static_cast<size_t>(id)].size() != 0; }

  /// Seed d(root)/d(root) = 1 and sweep the tape backwards. The root must be
  /// a scalar (1x1) node.
  void backward(int root) {
    if (value(root).size() != 1) throw ContractError("backward: root node is not scalar");
    grad(root)(0, 0) = Scalar(1);
    for (int id = root; id >= 0; --id) {
      if (!grad_touched(id)) continue;
      auto& fn = backprops_[static_cast<size_t>(id)];
      if (fn) fn(*this);
    }
  }

  int next_id() const { return static_cast<int>(values_.size()); }
  size_t size() const { return values_.size(); }

 private:
  std::vector<M> values_;
  std::vector<M> grads_;
  std::vector<std::function<void(Tape&)>> backprops_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

namespace detail {

inline void check_same_shape(Eigen::Index ar, Eigen::Index ac, Eigen::Index br, Eigen::Index bc,
                             const char* op) {
  if (ar != br || ac != bc) {
    throw ContractError(std::string(op) + ": shape mismatch (" + std::to_string(ar) + "x" +
                        std::to_string(ac) + " vs " + std::to_string(br) + "x" +
                        std::to_string(bc) + ")");
  }
}

/// Gather input patches into a column matrix: out is (taps * in_ch) x
/// (out_pixels * batch), row index j * in_ch + c.
template <typename Scalar>
void im2col(const MatX<Scalar>& x, const ColMap& map, int in_ch, int in_pixels, int batch,
            MatX<Scalar>* out) {
  const int taps = map.taps, opix = map.out_pixels;
  out->setZero(static_cast<Eigen::Index>(taps) * in_ch, static_cast<Eigen::Index>(opix) * batch);
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index xoff = static_cast<Eigen::Index>(b) * in_pixels;
    const Eigen::Index coff = static_cast<Eigen::Index>(b) * opix;
    for (int o = 0; o < opix; ++o) {
      auto col = out->col(coff + o);
      for (int j = 0; j < taps; ++j) {
        const int src = map.src[static_cast<size_t>(j) * opix + o];
        if (src >= 0) col.segment(static_cast<Eigen::Index>(j) * in_ch, in_ch) = x.col(xoff + src);
      }
    }
  }
}

/// Adjoint of im2col: scatter-add patch columns back onto the input grid.
template <typename Scalar>
void col2im_add(const MatX<Scalar>& cols, const ColMap& map, int in_ch, int in_pixels, int batch,
                MatX<Scalar>* x) {
  const int taps = map.taps, opix = map.out_pixels;
  for (int b = 0; b < batch; ++b) {
    const Eigen::Index xoff = static_cast<Eigen::Index>(b) * in_pixels;
    const Eigen::Index coff = static_cast<Eigen::Index>(b) * opix;
    for (int o = 0; o < opix; ++o) {
      auto col = cols.col(coff + o);
      for (int j = 0; j < taps; ++j) {
        const int src = map.src[static_cast<size_t>(j) * opix + o];
        if (src >= 0) x->col(xoff + src) += col.segment(static_cast<Eigen::Index>(j) * in_ch, in_ch);
      }
    }
  }
}

}  // namespace detail

/// Leaf node: an input, constant, or parameter. Gradients accumulate into
/// leaves but nothing propagates past them.
template <typename Scalar>
int leaf(Tape<Scalar>& t, MatX<Scalar> value) {
  return t.push(std::move(value));
}
template <typename Scalar, typename Derived>
int leaf(Tape<Scalar>& t, const Eigen::MatrixBase<Derived>& value) {
  return t.push(MatX<Scalar>(value));
}

template <typename Scalar>
int add(Tape<Scalar>& t, int a, int b) {
  const auto& va = t.value(a);
  const auto& vb = t.value(b);
  detail::check_same_shape(va.rows(), va.cols(), vb.rows(), vb.cols(), "add");
  const int id = t.next_id();
  return t.push(va + vb, [id, a, b](Tape<Scalar>& tp) {
    tp.grad(a) += tp.grad(id);
    tp.grad(b) += tp.grad(id);
  });
}

template <typename Scalar>
int sub(Tape<Scalar>& t, int a, int b) {
  const auto& va = t.value(a);
  const auto& vb = t.value(b);
  detail::check_same_shape(va.rows(), va.cols(), vb.rows(), vb.cols(), "sub");
  const int id = t.next_id();
  return t.push(va - vb, [id, a, b](Tape<Scalar>& tp) {
    tp.grad(a) += tp.grad(id);
    tp.grad(b) -= tp.grad(id);
  });
}

template <typename Scalar>
int mul_elem(Tape<Scalar>& t, int a, int b) {
  const auto& va = t.value(a);
  const auto& vb = t.value(b);
  detail::check_same_shape(va.rows(), va.cols(), vb.rows(), vb.cols(), "mul_elem");
  const int id = t.next_id();
  return t.push(va.cwiseProduct(vb), [id, a, b](Tape<Scalar>& tp) {
    tp.grad(a) += tp.grad(id).cwiseProduct(tp.value(b));
    tp.grad(b) += tp.grad(id).cwiseProduct(tp.value(a));
  });
}

/// y = s * x + c, elementwise with scalar coefficients.
template <typename Scalar>
int affine(Tape<Scalar>& t, int a, Scalar s, Scalar c) {
  const int id = t.next_id();
  return t.push((t.value(a).array() * s + c).matrix(),
                [id, a, s](Tape<Scalar>& tp) { tp.grad(a) += s * tp.grad(id); });
}

template <typename Scalar>
int scale(Tape<Scalar>& t, int a, Scalar s) {
  return affine(t, a, s, Scalar(0));
}

template <typename Scalar>
int exp_op(Tape<Scalar>& t, int a) {
  const int id = t.next_id();
  return t.push(t.value(a).array().exp().matrix(), [id, a](Tape<Scalar>& tp) {
    tp.grad(a) += tp.grad(id).cwiseProduct(tp.value(id));
  });
}

/// Numerically stable log(1 + exp(x)); gradient is the logistic sigmoid.
template <typename Scalar>
int softplus(Tape<Scalar>& t, int a) {
  const int id = t.next_id();
  MatX<Scalar> y = t.value(a).unaryExpr([](Scalar x) {
    const Scalar m = x > Scalar(0) ? x : Scalar(0);
    return m + std::log1p(std::exp(-std::abs(x)));
  });
  return t.push(std::move(y), [id, a](Tape<Scalar>& tp) {
    tp.grad(a) += tp.grad(id).cwiseProduct(tp.value(a).unaryExpr([](Scalar x) {
      if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
      const Scalar e = std::exp(x);
      return e / (Scalar(1) + e);
    }));
  });
}

template <typename Scalar>
int leaky_relu(Tape<Scalar>& t, int a, Scalar alpha) {
  const int id = t.next_id();
  MatX<Scalar> y = t.value(a).unaryExpr([alpha](Scalar x) { return x > Scalar(0) ? x : alpha * x; });
  return t.push(std::move(y), [id, a, alpha](Tape<Scalar>& tp) {
    tp.grad(a) += tp.grad(id).cwiseProduct(tp.value(a).unaryExpr(
        [alpha](Scalar x) { return x > Scalar(0) ? Scalar(1) : alpha; }));
  });
}

/// Clamp to [lo, hi]; gradient passes wherever the input already lies inside
/// the interval (inclusive) and is zero outside.
template <typename Scalar>
int clamp_op(Tape<Scalar>& t, int a, Scalar lo, Scalar hi) {
  const int id = t.next_id();
  MatX<Scalar> y = t.value(a).cwiseMax(lo).cwiseMin(hi);
  return t.push(std::move(y), [id, a, lo, hi](Tape<Scalar>& tp) {
    tp.grad(a) += tp.grad(id).cwiseProduct(tp.value(a).unaryExpr(
        [lo, hi](Scalar x) { return (x >= lo && x <= hi) ? Scalar(1) : Scalar(0); }));
  });
}

/// Sum of all entries, as a 1x1 node.
template <typename Scalar>
int sum_all(Tape<Scalar>& t, int a) {
  const int id = t.next_id();
  MatX<Scalar> y(1, 1);
  y(0, 0) = t.value(a).sum();
  return t.push(std::move(y),
                [id, a](Tape<Scalar>& tp) { tp.grad(a).array() += tp.grad(id)(0, 0); });
}

/// Fully connected layer y = W x + b with b broadcast over columns.
/// W: out x in, x: in x batch, b: out x 1.
template <typename Scalar>
int fc(Tape<Scalar>& t, int w, int x, int b) {
  const auto& vw = t.value(w);
  const auto& vx = t.value(x);
  const auto& vb = t.value(b);
  if (vw.cols() != vx.rows() || vb.rows() != vw.rows() || vb.cols() != 1) {
    throw ContractError("fc: W " + std::to_string(vw.rows()) + "x" + std::to_string(vw.cols()) +
                        ", x " + std::to_string(vx.rows()) + "x" + std::to_string(vx.cols()) +
                        ", b " + std::to_string(vb.rows()) + "x" + std::to_string(vb.cols()));
  }
  const int id = t.next_id();
  MatX<Scalar> y = vw * vx;
  y.colwise() += vb.col(0);
  return t.push(std::move(y), [id, w, x, b](Tape<Scalar>& tp) {
    const auto& g = tp.grad(id);
    tp.grad(w).noalias() += g * tp.value(x).transpose();
    tp.grad(x).noalias() += tp.value(w).transpose() * g;
    tp.grad(b).col(0) += g.rowwise().sum();
  });
}

/// Plain matrix product without bias.
template <typename Scalar>
int matmul(Tape<Scalar>& t, int a, int b) {
  const auto& va = t.value(a);
  const auto& vb = t.value(b);
  if (va.cols() != vb.rows()) throw ContractError("matmul: inner dimensions disagree");
  const int id = t.next_id();
  return t.push(va * vb, [id, a, b](Tape<Scalar>& tp) {
    const auto& g = tp.grad(id);
    tp.grad(a).noalias() += g * tp.value(b).transpose();
    tp.grad(b).noalias() += tp.value(a).transpose() * g;
  });
}

template <typename Scalar>
int concat_rows(Tape<Scalar>& t, int a, int b) {
  const auto& va = t.value(a);
  const auto& vb = t.value(b);
  if (va.cols() != vb.cols()) throw ContractError("concat_rows: column counts disagree");
  const int id = t.next_id();
  MatX<Scalar> y(va.rows() + vb.rows(), va.cols());
  y.topRows(va.rows()) = va;
  y.bottomRows(vb.rows()) = vb;
  const Eigen::Index ra = va.rows(), rb = vb.rows();
  return t.push(std::move(y), [id, a, b, ra, rb](Tape<Scalar>& tp) {
    tp.grad(a) += tp.grad(id).topRows(ra);
    tp.grad(b) += tp.grad(id).bottomRows(rb);
  });
}

template <typename Scalar>
int slice_rows(Tape<Scalar>& t, int a, int r0, int nrows) {
  const auto& va = t.value(a);
  if (r0 < 0 || nrows < 0 || r0 + nrows > va.rows()) throw ContractError("slice_rows: out of range");
  const int id = t.next_id();
  return t.push(va.middleRows(r0, nrows), [id, a, r0, nrows](Tape<Scalar>& tp) {
    tp.grad(a).middleRows(r0, nrows) += tp.grad(id);
  });
}

template <typename Scalar>
int slice_cols(Tape<Scalar>& t, int a, int c0, int ncols) {
  const auto& va = t.value(a);
  if (c0 < 0 || ncols < 0 || c0 + ncols > va.cols()) throw ContractError("slice_cols: out of range");
  const int id = t.next_id();
  return t.push(va.middleCols(c0, ncols), [id, a, c0, ncols](Tape<Scalar>& tp) {
    tp.grad(a).middleCols(c0, ncols) += tp.grad(id);
  });
}

template <typename Scalar>
int concat_cols(Tape<Scalar>& t, const std::vector<int>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  Eigen::Index rows = t.value(parts[0]).rows(), cols = 0;
  for (int p : parts) {
    if (t.value(p).rows() != rows) throw ContractError("concat_cols: row counts disagree");
    cols += t.value(p).cols();
  }
  const int id = t.next_id();
  MatX<Scalar> y(rows, cols);
  Eigen::Index at = 0;
  for (int p : parts) {
    y.middleCols(at, t.value(p).cols()) = t.value(p);
    at += t.value(p).cols();
  }
  return t.push(std::move(y), [id, parts](Tape<Scalar>& tp) {
    Eigen::Index at = 0;
    for (int p : parts) {
      const Eigen::Index n = tp.value(p).cols();
      tp.grad(p) += tp.grad(id).middleCols(at, n);
      at += n;
    }
  });
}

/// Batched 2D convolution via patch gathering and one GEMM. x holds `batch`
/// sample blocks of geom.in_pixels() columns each (channels x pixels layout,
/// pixel = row * width + col); the output is laid out the same way at the
/// reduced resolution.
template <typename Scalar>
int conv2d(Tape<Scalar>& t, int x, int w, int b, const ConvGeom& geom, int batch) {
  const auto& vx = t.value(x);
  const auto& vw = t.value(w);
  const auto& vb = t.value(b);
  if (vx.rows() != geom.in_ch ||
      vx.cols() != static_cast<Eigen::Index>(geom.in_pixels()) * batch) {
    throw ContractError("conv2d: input is " + std::to_string(vx.rows()) + "x" +
                        std::to_string(vx.cols()) + ", geometry wants " +
                        std::to_string(geom.in_ch) + "x" +
                        std::to_string(geom.in_pixels() * batch));
  }
  if (vw.rows() != geom.out_ch || vw.cols() != geom.weight_cols() || vb.rows() != geom.out_ch) {
    throw ContractError("conv2d: weight/bias shapes disagree with geometry");
  }
  const ColMap& map = col_map(geom.h, geom.w, geom.k, geom.stride, geom.pad);
  MatX<Scalar> cols;
  detail::im2col(vx, map, geom.in_ch, geom.in_pixels(), batch, &cols);
  const int id = t.next_id();
  MatX<Scalar> y = vw * cols;
  y.colwise() += vb.col(0);
  return t.push(std::move(y), [id, x, w, b, geom, batch](Tape<Scalar>& tp) {
    const ColMap& m = col_map(geom.h, geom.w, geom.k, geom.stride, geom.pad);
    const auto& g = tp.grad(id);
    MatX<Scalar> cols2;
    detail::im2col(tp.value(x), m, geom.in_ch, geom.in_pixels(), batch, &cols2);
    tp.grad(w).noalias() += g * cols2.transpose();
    tp.grad(b).col(0) += g.rowwise().sum();
    MatX<Scalar> dcols = tp.value(w).transpose() * g;
    detail::col2im_add(dcols, m, geom.in_ch, geom.in_pixels(), batch, &tp.grad(x));
  });
}

/// Batched transposed convolution: the exact adjoint of conv2d's linear map
/// for the same geometry. x lives on the small side (geom.out_ch channels at
/// geom.out_h x geom.out_w); the output lives on the large side.
template <typename Scalar>
int tconv2d(Tape<Scalar>& t, int x, int w, int b, const ConvGeom& geom, int batch) {
  const auto& vx = t.value(x);
  const auto& vw = t.value(w);
  const auto& vb = t.value(b);
  if (vx.rows() != geom.out_ch ||
      vx.cols() != static_cast<Eigen::Index>(geom.out_pixels()) * batch) {
    throw ContractError("tconv2d: input is " + std::to_string(vx.rows()) + "x" +
                        std::to_string(vx.cols()) + ", geometry wants " +
                        std::to_string(geom.out_ch) + "x" +
                        std::to_string(geom.out_pixels() * batch));
  }
  if (vw.rows() != geom.out_ch || vw.cols() != geom.weight_cols() || vb.rows() != geom.in_ch) {
    throw ContractError("tconv2d: weight/bias shapes disagree with geometry");
  }
  const ColMap& map = col_map(geom.h, geom.w, geom.k, geom.stride, geom.pad);
  const int id = t.next_id();
  MatX<Scalar> y =
      MatX<Scalar>::Zero(geom.in_ch, static_cast<Eigen::Index>(geom.in_pixels()) * batch);
  MatX<Scalar> cols = vw.transpose() * vx;
  detail::col2im_add(cols, map, geom.in_ch, geom.in_pixels(), batch, &y);
  y.colwise() += vb.col(0);
  return t.push(std::move(y), [id, x, w, b, geom, batch](Tape<Scalar>& tp) {
    const ColMap& m = col_map(geom.h, geom.w, geom.k, geom.stride, geom.pad);
    const auto& g = tp.grad(id);
    MatX<Scalar> gcols;
    detail::im2col(g, m, geom.in_ch, geom.in_pixels(), batch, &gcols);
    tp.grad(x).noalias() += tp.value(w) * gcols;
    tp.grad(w).noalias() += tp.value(x) * gcols.transpose();
    // Bias feeds every large-side pixel once.
    tp.grad(b).col(0) += g.rowwise().sum();
  });
}

}  // namespace latperc::nn
