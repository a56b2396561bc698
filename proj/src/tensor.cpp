#include "ratfm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "detail/gemm.hpp"

namespace ratfm {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
};

}  // namespace detail

namespace {

thread_local Tape* g_active_tape = nullptr;

void check_extents(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be >= 1, got " + to_string(shape));
  }
}

// Row-major strides.
std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

std::size_t product(const Shape& shape, std::size_t begin, std::size_t end) {
  std::size_t p = 1;
  for (std::size_t i = begin; i < end; ++i) p *= shape[i];
  return p;
}

}  // namespace

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// --- Tensor ----------------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_extents(shape);
  auto node = std::make_shared<detail::Node>();
  node->data.assign(element_count(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  check_extents(shape);
  if (values.size() != element_count(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                     to_string(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return full({1}, value, requires_grad); }

const Shape& Tensor::shape() const {
  if (!node_) throw std::logic_error("undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
  return s[axis];
}

std::size_t Tensor::size() const { return shape().empty() ? 0 : node_->data.size(); }

std::span<const double> Tensor::data() const {
  shape();
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  shape();
  return node_->data;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() requires a single-element tensor, got " + to_string(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ShapeError("index rank does not match tensor rank");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw ShapeError("index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  shape();
  node_->requires_grad = flag;
  if (!flag) node_->grad.clear();
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  shape();
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() const {
  shape();
  if (!node_->requires_grad) throw std::logic_error("tensor does not require grad");
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

void Tensor::clear_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::clone() const {
  auto node = std::make_shared<detail::Node>(*node_);
  return Tensor(std::move(node));
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

// --- Tape ------------------------------------------------------------------------------------

void Tape::record(std::function<void()> rule) { rules_.push_back(std::move(rule)); }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward requires a scalar loss");
  }
  if (!loss.requires_grad()) throw std::logic_error("loss is not connected to the tape");
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  NoGradScope no_grad;
  for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
  rules_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(const Tensor& loss) {
  if (!g_active_tape) throw std::logic_error("backward called without an active tape");
  g_active_tape->backward(loss);
}

Tensor make_result(Shape shape, std::vector<double> data, std::span<const Tensor> inputs,
                   BackwardRule rule) {
  Tape* tape = g_active_tape;
  const bool tracked =
      tape && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  Tensor out = Tensor::from(std::move(shape), std::move(data), tracked);
  if (tracked) {
    tape->record([out, rule = std::move(rule)]() {
      if (out.has_grad()) rule(out.grad());
    });
  }
  return out;
}

Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   BackwardRule rule) {
  return make_result(std::move(shape), std::move(data), std::span<const Tensor>(inputs.begin(), inputs.size()),
                     std::move(rule));
}

// --- primitives ------------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  std::size_t batch = 1, m = 0, k = 0, n = 0;
  Shape out_shape;
  if (sa.size() == 2 && sb.size() == 2) {
    m = sa[0]; k = sa[1]; n = sb[1];
    if (sb[0] != k) throw ShapeError("matmul inner extents differ: " + to_string(sa) + " x " + to_string(sb));
    out_shape = {m, n};
  } else if (sa.size() == 3 && sb.size() == 3) {
    batch = sa[0]; m = sa[1]; k = sa[2]; n = sb[2];
    if (sb[0] != batch || sb[1] != k) {
      throw ShapeError("batched matmul extents differ: " + to_string(sa) + " x " + to_string(sb));
    }
    out_shape = {batch, m, n};
  } else {
    throw ShapeError("matmul expects rank-2 or rank-3 operands, got " + to_string(sa) + " x " + to_string(sb));
  }
  std::vector<double> out(batch * m * n);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    detail::gemm(false, false, m, n, k, 1.0, pa + i * m * k, pb + i * k * n, 0.0, out.data() + i * m * n);
  }
  return make_result(std::move(out_shape), std::move(out), {a, b},
                     [a, b, batch, m, n, k](std::span<const double> g) {
                       if (a.requires_grad()) {
                         auto ga = a.mutable_grad();
                         for (std::size_t i = 0; i < batch; ++i) {
                           detail::gemm(false, true, m, k, n, 1.0, g.data() + i * m * n,
                                        b.data().data() + i * k * n, 1.0, ga.data() + i * m * k);
                         }
                       }
                       if (b.requires_grad()) {
                         auto gb = b.mutable_grad();
                         for (std::size_t i = 0; i < batch; ++i) {
                           detail::gemm(true, false, k, n, m, 1.0, a.data().data() + i * m * k,
                                        g.data() + i * m * n, 1.0, gb.data() + i * k * n);
                         }
                       }
                     });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise shapes differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
      break;
    case ElementwiseOp::sub:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
      break;
    case ElementwiseOp::mul:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
      break;
  }
  return make_result(a.shape(), std::move(out), {a, b}, [a, b, op](std::span<const double> g) {
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      if (op == ElementwiseOp::mul) {
        const auto y = b.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      if (op == ElementwiseOp::mul) {
        const auto x = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      } else if (op == ElementwiseOp::sub) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * factor;
  return make_result(x.shape(), std::move(out), {x}, [x, factor](std::span<const double> g) {
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
  });
}

Tensor relu(const Tensor& x) {
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
  return make_result(x.shape(), std::move(out), {x}, [x](std::span<const double> g) {
    auto gx = x.mutable_grad();
    const auto v = x.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (v[i] > 0.0) gx[i] += g[i];
    }
  });
}

Tensor softmax(const Tensor& x) {
  const auto& s = x.shape();
  const std::size_t cols = s.back();
  const std::size_t rows = x.size() / cols;
  const auto v = x.data();
  std::vector<double> out(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * cols;
    double* o = out.data() + r * cols;
    const double peak = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - peak);
      total += o[c];
    }
    for (std::size_t c = 0; c < cols; ++c) o[c] /= total;
  }
  auto probs = std::make_shared<std::vector<double>>(out);
  return make_result(s, std::move(out), {x}, [x, probs, rows, cols](std::span<const double> g) {
    auto gx = x.mutable_grad();
    const auto& p = *probs;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * p[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        gx[r * cols + c] += p[r * cols + c] * (g[r * cols + c] - dot);
      }
    }
  });
}

Tensor concat(std::size_t axis, std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat needs at least one part");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat parts differ in rank");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw ShapeError("concat parts differ off-axis: " + to_string(first) + " vs " + to_string(s));
      }
    }
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = product(first, 0, axis);
  const std::size_t inner = product(first, axis + 1, first.size());
  const std::size_t out_row = out_shape[axis] * inner;
  std::vector<double> out(element_count(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t row = p.dim(axis) * inner;
    const auto v = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * row, row, out.data() + o * out_row + offset);
    }
    offset += row;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(std::move(out_shape), std::move(out), parts,
                     [inputs, offsets, outer, inner, out_row, axis](std::span<const double> g) {
                       for (std::size_t i = 0; i < inputs.size(); ++i) {
                         auto& p = inputs[i];
                         if (!p.requires_grad()) continue;
                         auto gp = p.mutable_grad();
                         const std::size_t row = p.dim(axis) * inner;
                         for (std::size_t o = 0; o < outer; ++o) {
                           const double* src = g.data() + o * out_row + offsets[i];
                           double* dst = gp.data() + o * row;
                           for (std::size_t j = 0; j < row; ++j) dst[j] += src[j];
                         }
                       }
                     });
}

Tensor concat(std::size_t axis, std::initializer_list<Tensor> parts) {
  return concat(axis, std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw ShapeError("slice axis out of range");
  if (begin >= end || end > s[axis]) throw ShapeError("slice bounds out of range");
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  const std::size_t outer = product(s, 0, axis);
  const std::size_t inner = product(s, axis + 1, s.size());
  const std::size_t in_row = s[axis] * inner;
  const std::size_t out_row = (end - begin) * inner;
  std::vector<double> out(outer * out_row);
  const auto v = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(v.data() + o * in_row + begin * inner, out_row, out.data() + o * out_row);
  }
  return make_result(std::move(out_shape), std::move(out), {x},
                     [x, outer, inner, in_row, out_row, begin](std::span<const double> g) {
                       auto gx = x.mutable_grad();
                       for (std::size_t o = 0; o < outer; ++o) {
                         double* dst = gx.data() + o * in_row + begin * inner;
                         const double* src = g.data() + o * out_row;
                         for (std::size_t j = 0; j < out_row; ++j) dst[j] += src[j];
                       }
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_extents(shape);
  if (element_count(shape) != x.size()) {
    throw ShapeError("reshape " + to_string(x.shape()) + " -> " + to_string(shape) + " changes element count");
  }
  const auto v = x.data();
  return make_result(std::move(shape), std::vector<double>(v.begin(), v.end()), {x},
                     [x](std::span<const double> g) {
                       auto gx = x.mutable_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                     });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& s = x.shape();
  if (axes.size() != s.size()) throw ShapeError("permute axes must match tensor rank");
  std::vector<bool> seen(s.size(), false);
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= s.size() || seen[axes[i]]) throw ShapeError("permute axes are not a permutation");
    seen[axes[i]] = true;
    out_shape[i] = s[axes[i]];
  }
  const auto in_strides = strides_of(s);
  // Stride in the input for each output axis.
  std::vector<std::size_t> gather(s.size());
  for (std::size_t i = 0; i < axes.size(); ++i) gather[i] = in_strides[axes[i]];

  const std::size_t total = x.size();
  auto source = std::make_shared<std::vector<std::size_t>>(total);
  std::vector<std::size_t> counter(s.size(), 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    (*source)[flat] = src;
    for (std::size_t ax = s.size(); ax-- > 0;) {
      ++counter[ax];
      src += gather[ax];
      if (counter[ax] < out_shape[ax]) break;
      src -= gather[ax] * out_shape[ax];
      counter[ax] = 0;
    }
  }
  const auto v = x.data();
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = v[(*source)[i]];
  return make_result(std::move(out_shape), std::move(out), {x}, [x, source](std::span<const double> g) {
    auto gx = x.mutable_grad();
    const auto& idx = *source;
    for (std::size_t i = 0; i < g.size(); ++i) gx[idx[i]] += g[i];
  });
}

Tensor transpose(const Tensor& x) {
  const std::size_t r = x.rank();
  if (r < 2) throw ShapeError("transpose needs rank >= 2");
  std::vector<std::size_t> axes(r);
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  std::swap(axes[r - 1], axes[r - 2]);
  return permute(x, axes);
}

Tensor tile(const Tensor& x, const std::vector<std::size_t>& reps) {
  const Shape& s = x.shape();
  if (reps.size() != s.size()) throw ShapeError("tile repetitions must match tensor rank");
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (reps[i] == 0) throw ShapeError("tile repetitions must be >= 1");
    out_shape[i] = s[i] * reps[i];
  }
  const std::size_t total = element_count(out_shape);
  const auto in_strides = strides_of(s);
  auto source = std::make_shared<std::vector<std::size_t>>(total);
  std::vector<std::size_t> counter(s.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t src = 0;
    for (std::size_t ax = 0; ax < s.size(); ++ax) src += (counter[ax] % s[ax]) * in_strides[ax];
    (*source)[flat] = src;
    for (std::size_t ax = s.size(); ax-- > 0;) {
      if (++counter[ax] < out_shape[ax]) break;
      counter[ax] = 0;
    }
  }
  const auto v = x.data();
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = v[(*source)[i]];
  return make_result(std::move(out_shape), std::move(out), {x}, [x, source](std::span<const double> g) {
    auto gx = x.mutable_grad();
    const auto& idx = *source;
    for (std::size_t i = 0; i < g.size(); ++i) gx[idx[i]] += g[i];
  });
}

Tensor sum(const Tensor& x) {
  const auto v = x.data();
  double total = 0.0;
  for (double e : v) total += e;
  return make_result({1}, {total}, {x}, [x](std::span<const double> g) {
    auto gx = x.mutable_grad();
    for (auto& e : gx) e += g[0];
  });
}

}  // namespace ratfm
