#include "rulattack/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "rulattack/error.hpp"

namespace rulattack {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw Error(ErrorKind::kNodeNotOnTape,
                "node " + std::to_string(v.id_) + " is not recorded on this tape");
  }
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_owned(in);
    node.inputs.push_back(in.id_);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::vector<Tensor> Tape::gradients(Var loss, std::span<const Var> wrt) const {
  check_owned(loss);
  for (const Var& w : wrt) check_owned(w);
  if (value(loss.id_).size() != 1) {
    throw Error(ErrorKind::kShapeMismatch,
                "gradient requires a scalar loss, got " + shape_string(value(loss.id_).shape()));
  }

  std::vector<Tensor> grads(loss.id_ + 1);
  grads[loss.id_] = Tensor(value(loss.id_).shape(), 1.0);

  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (grads[id].empty() || !node.requires_grad || !node.backward) continue;
    BackwardContext ctx{node.value, grads[id], {}, {}};
    ctx.inputs.reserve(node.inputs.size());
    ctx.input_grads.reserve(node.inputs.size());
    for (std::size_t in : node.inputs) {
      ctx.inputs.push_back(&nodes_[in].value);
      if (nodes_[in].requires_grad) {
        if (grads[in].empty()) grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
        ctx.input_grads.push_back(&grads[in]);
      } else {
        ctx.input_grads.push_back(nullptr);
      }
    }
    node.backward(ctx);
  }

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.id_ < grads.size() && !grads[w.id_].empty()) {
      out.push_back(grads[w.id_]);
    } else {
      out.emplace_back(value(w.id_).shape(), 0.0);
    }
  }
  return out;
}

std::vector<Tensor> grad(const Tape& tape, Var loss, std::span<const Var> wrt) {
  return tape.gradients(loss, wrt);
}

namespace {

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
  throw Error(ErrorKind::kShapeMismatch,
              std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

Tape& same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw Error(ErrorKind::kNodeNotOnTape, "operands are recorded on different tapes");
  }
  return *a.tape();
}

Tape& tape_of(Var a) {
  if (a.tape() == nullptr) throw Error(ErrorKind::kNodeNotOnTape, "operand is not on a tape");
  return *a.tape();
}

Tensor finite(Tensor t, const char* op) {
  if (!t.all_finite()) {
    throw Error(ErrorKind::kNonFinite, std::string(op) + " produced a non-finite value");
  }
  return t;
}

template <typename F>
Var unary(Var a, const char* op, F&& f, BackwardFn backward) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return tape_of(a).record(finite(std::move(y), op), {a}, std::move(backward));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) mismatch("matmul", A.shape(), B.shape());
  const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
  Tensor C({m, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* c = &C[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = &B[p * n];
      for (std::size_t j = 0; j < n; ++j) c[j] += aip * brow[j];
    }
  }
  return tape.record(finite(std::move(C), "matmul"), {a, b}, [m, k, n](BackwardContext& ctx) {
    const Tensor& A = *ctx.inputs[0];
    const Tensor& B = *ctx.inputs[1];
    const Tensor& G = ctx.output_grad;
    if (Tensor* dA = ctx.input_grads[0]) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
          (*dA)[i * k + p] += acc;
        }
      }
    }
    if (Tensor* dB = ctx.input_grads[1]) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) (*dB)[p * n + j] += aip * G[i * n + j];
        }
      }
    }
  });
}

Var matmul_nt(Var a, Var w) {
  Tape& tape = same_tape(a, w);
  const Tensor& A = a.value();
  const Tensor& W = w.value();
  if (A.rank() != 2 || W.rank() != 2 || A.dim(1) != W.dim(1)) mismatch("matmul_nt", A.shape(), W.shape());
  const std::size_t m = A.dim(0), k = A.dim(1), n = W.dim(0);
  // Transposed copy so the inner loop runs over contiguous output columns;
  // every output element still accumulates over k in ascending order.
  std::vector<double> wt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) wt[p * n + j] = W[j * k + p];
  }
  Tensor C({m, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* c = &C[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* wrow = &wt[p * n];
      for (std::size_t j = 0; j < n; ++j) c[j] += aip * wrow[j];
    }
  }
  return tape.record(finite(std::move(C), "matmul_nt"), {a, w}, [m, k, n](BackwardContext& ctx) {
    const Tensor& A = *ctx.inputs[0];
    const Tensor& W = *ctx.inputs[1];
    const Tensor& G = ctx.output_grad;
    if (Tensor* dA = ctx.input_grads[0]) {
      for (std::size_t i = 0; i < m; ++i) {
        double* da = &(*dA)[i * k];
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          const double* wrow = &W[j * k];
          for (std::size_t p = 0; p < k; ++p) da[p] += g * wrow[p];
        }
      }
    }
    if (Tensor* dW = ctx.input_grads[1]) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* arow = &A[i * k];
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          double* dw = &(*dW)[j * k];
          for (std::size_t p = 0; p < k; ++p) dw[p] += g * arow[p];
        }
      }
    }
  });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() == B.shape()) {
    Tensor C(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] + B[i];
    return tape.record(finite(std::move(C), "add"), {a, b}, [](BackwardContext& ctx) {
      const Tensor& G = ctx.output_grad;
      for (Tensor* d : ctx.input_grads) {
        if (!d) continue;
        for (std::size_t i = 0; i < G.size(); ++i) (*d)[i] += G[i];
      }
    });
  }
  if (B.rank() != 1 || A.rank() < 1 || A.shape().back() != B.dim(0)) mismatch("add", A.shape(), B.shape());
  const std::size_t n = B.dim(0);
  const std::size_t rows = A.size() / n;
  Tensor C(A.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) C[r * n + j] = A[r * n + j] + B[j];
  }
  return tape.record(finite(std::move(C), "add"), {a, b}, [rows, n](BackwardContext& ctx) {
    const Tensor& G = ctx.output_grad;
    if (Tensor* dA = ctx.input_grads[0]) {
      for (std::size_t i = 0; i < G.size(); ++i) (*dA)[i] += G[i];
    }
    if (Tensor* dB = ctx.input_grads[1]) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) (*dB)[j] += G[r * n + j];
      }
    }
  });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) mismatch("sub", A.shape(), B.shape());
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] - B[i];
  return tape.record(finite(std::move(C), "sub"), {a, b}, [](BackwardContext& ctx) {
    const Tensor& G = ctx.output_grad;
    if (Tensor* dA = ctx.input_grads[0]) {
      for (std::size_t i = 0; i < G.size(); ++i) (*dA)[i] += G[i];
    }
    if (Tensor* dB = ctx.input_grads[1]) {
      for (std::size_t i = 0; i < G.size(); ++i) (*dB)[i] -= G[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) mismatch("mul", A.shape(), B.shape());
  Tensor C(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) C[i] = A[i] * B[i];
  return tape.record(finite(std::move(C), "mul"), {a, b}, [](BackwardContext& ctx) {
    const Tensor& G = ctx.output_grad;
    const Tensor& A = *ctx.inputs[0];
    const Tensor& B = *ctx.inputs[1];
    if (Tensor* dA = ctx.input_grads[0]) {
      for (std::size_t i = 0; i < G.size(); ++i) (*dA)[i] += G[i] * B[i];
    }
    if (Tensor* dB = ctx.input_grads[1]) {
      for (std::size_t i = 0; i < G.size(); ++i) (*dB)[i] += G[i] * A[i];
    }
  });
}

Var scale(Var a, double factor) {
  return unary(a, "scale", [factor](double x) { return factor * x; },
               [factor](BackwardContext& ctx) {
                 const Tensor& G = ctx.output_grad;
                 Tensor& d = *ctx.input_grads[0];
                 for (std::size_t i = 0; i < G.size(); ++i) d[i] += factor * G[i];
               });
}

Var one_minus(Var a) {
  return unary(a, "one_minus", [](double x) { return 1.0 - x; }, [](BackwardContext& ctx) {
    const Tensor& G = ctx.output_grad;
    Tensor& d = *ctx.input_grads[0];
    for (std::size_t i = 0; i < G.size(); ++i) d[i] -= G[i];
  });
}

Var sigmoid(Var a) {
  return unary(a, "sigmoid", stable_sigmoid, [](BackwardContext& ctx) {
    const Tensor& G = ctx.output_grad;
    const Tensor& Y = ctx.output;
    Tensor& d = *ctx.input_grads[0];
    for (std::size_t i = 0; i < G.size(); ++i) d[i] += G[i] * Y[i] * (1.0 - Y[i]);
  });
}

Var tanh(Var a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](BackwardContext& ctx) {
    const Tensor& G = ctx.output_grad;
    const Tensor& Y = ctx.output;
    Tensor& d = *ctx.input_grads[0];
    for (std::size_t i = 0; i < G.size(); ++i) d[i] += G[i] * (1.0 - Y[i] * Y[i]);
  });
}

Var relu(Var a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](BackwardContext& ctx) {
    const Tensor& G = ctx.output_grad;
    const Tensor& X = *ctx.inputs[0];
    Tensor& d = *ctx.input_grads[0];
    for (std::size_t i = 0; i < G.size(); ++i) {
      if (X[i] > 0.0) d[i] += G[i];
    }
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::kShapeMismatch, "concat of zero tensors");
  Tape& tape = tape_of(parts[0]);
  const Shape& first = parts[0].shape();
  Shape lead(first.begin(), first.end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      mismatch("concat", first, s);
    }
    widths.push_back(s.back());
    total += s.back();
  }
  const std::size_t rows = shape_size(lead);
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor C(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& X = parts[p].value();
    const std::size_t w = widths[p];
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(&X[r * w], w, &C[r * total + offset]);
    }
    offset += w;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(C), std::move(inputs), [rows, total, widths](BackwardContext& ctx) {
    const Tensor& G = ctx.output_grad;
    std::size_t offset = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      const std::size_t w = widths[p];
      if (Tensor* d = ctx.input_grads[p]) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < w; ++j) (*d)[r * w + j] += G[r * total + offset + j];
        }
      }
      offset += w;
    }
  });
}

Var concat(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat(std::span<const Var>(parts));
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& X = a.value();
  if (axis >= X.rank() || begin >= end || end > X.dim(axis)) {
    throw Error(ErrorKind::kShapeMismatch,
                "slice [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                    std::to_string(axis) + " out of range for " + shape_string(X.shape()));
  }
  const Shape& s = X.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const std::size_t width = end - begin;
  Shape out_shape = s;
  out_shape[axis] = width;
  Tensor Y(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(&X[(o * len + begin) * inner], width * inner, &Y[o * width * inner]);
  }
  return tape_of(a).record(std::move(Y), {a}, [outer, inner, len, begin, width](BackwardContext& ctx) {
    const Tensor& G = ctx.output_grad;
    Tensor& d = *ctx.input_grads[0];
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < width * inner; ++i) {
        d[(o * len + begin) * inner + i] += G[o * width * inner + i];
      }
    }
  });
}

Var timestep(Var a, std::size_t t) {
  const Shape& s = a.shape();
  if (s.size() != 3) mismatch("timestep", s, Shape{});
  return reshape(slice(a, 1, t, t + 1), Shape{s[0], s[2]});
}

Var reshape(Var a, Shape shape) {
  Tensor Y = a.value().reshaped(std::move(shape));
  return tape_of(a).record(std::move(Y), {a}, [](BackwardContext& ctx) {
    const Tensor& G = ctx.output_grad;
    Tensor& d = *ctx.input_grads[0];
    for (std::size_t i = 0; i < G.size(); ++i) d[i] += G[i];
  });
}

Var conv1d(Var input, Var kernel, Var bias, bool same_padding) {
  Tape& tape = same_tape(input, kernel);
  same_tape(input, bias);
  const Tensor& X = input.value();
  const Tensor& W = kernel.value();
  const Tensor& Bv = bias.value();
  if (X.rank() != 3 || W.rank() != 3 || W.dim(2) != X.dim(2)) mismatch("conv1d", X.shape(), W.shape());
  if (Bv.rank() != 1 || Bv.dim(0) != W.dim(0)) mismatch("conv1d", W.shape(), Bv.shape());
  const std::size_t batch = X.dim(0), len = X.dim(1), cin = X.dim(2);
  const std::size_t cout = W.dim(0), width = W.dim(1);
  if (!same_padding && width > len) mismatch("conv1d", X.shape(), W.shape());
  const std::ptrdiff_t pad = same_padding ? static_cast<std::ptrdiff_t>((width - 1) / 2) : 0;
  const std::size_t out_len = same_padding ? len : len - width + 1;

  Tensor Y({batch, out_len, cout});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < out_len; ++t) {
      for (std::size_t o = 0; o < cout; ++o) {
        double acc = 0.0;
        for (std::size_t k = 0; k < width; ++k) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - pad;
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
          const double* x = &X[(b * len + static_cast<std::size_t>(src)) * cin];
          const double* w = &W[(o * width + k) * cin];
          for (std::size_t c = 0; c < cin; ++c) acc += x[c] * w[c];
        }
        Y[(b * out_len + t) * cout + o] = acc + Bv[o];
      }
    }
  }
  return tape.record(finite(std::move(Y), "conv1d"), {input, kernel, bias},
                     [=](BackwardContext& ctx) {
    const Tensor& X = *ctx.inputs[0];
    const Tensor& W = *ctx.inputs[1];
    const Tensor& G = ctx.output_grad;
    Tensor* dX = ctx.input_grads[0];
    Tensor* dW = ctx.input_grads[1];
    Tensor* dB = ctx.input_grads[2];
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < out_len; ++t) {
        for (std::size_t o = 0; o < cout; ++o) {
          const double g = G[(b * out_len + t) * cout + o];
          if (dB) (*dB)[o] += g;
          for (std::size_t k = 0; k < width; ++k) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + k) - pad;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
            const std::size_t xoff = (b * len + static_cast<std::size_t>(src)) * cin;
            const std::size_t woff = (o * width + k) * cin;
            if (dX) {
              for (std::size_t c = 0; c < cin; ++c) (*dX)[xoff + c] += g * W[woff + c];
            }
            if (dW) {
              for (std::size_t c = 0; c < cin; ++c) (*dW)[woff + c] += g * X[xoff + c];
            }
          }
        }
      }
    }
  });
}

Var sum(Var a) {
  const Tensor& X = a.value();
  double acc = 0.0;
  for (double v : X.data()) acc += v;
  return tape_of(a).record(finite(Tensor::scalar(acc), "sum"), {a}, [](BackwardContext& ctx) {
    const double g = ctx.output_grad[0];
    Tensor& d = *ctx.input_grads[0];
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g;
  });
}

namespace {

Var squared_error(Var pred, Var target, bool mean, const char* op) {
  Tape& tape = same_tape(pred, target);
  const Tensor& P = pred.value();
  const Tensor& T = target.value();
  if (P.size() != T.size()) mismatch(op, P.shape(), T.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double r = P[i] - T[i];
    acc += r * r;
  }
  const double n = static_cast<double>(P.size());
  if (mean) acc /= n;
  const double factor = mean ? 2.0 / n : 2.0;
  return tape.record(finite(Tensor::scalar(acc), op), {pred, target}, [factor](BackwardContext& ctx) {
    const Tensor& P = *ctx.inputs[0];
    const Tensor& T = *ctx.inputs[1];
    const double g = ctx.output_grad[0];
    if (Tensor* dP = ctx.input_grads[0]) {
      for (std::size_t i = 0; i < P.size(); ++i) (*dP)[i] += g * factor * (P[i] - T[i]);
    }
    if (Tensor* dT = ctx.input_grads[1]) {
      for (std::size_t i = 0; i < P.size(); ++i) (*dT)[i] -= g * factor * (P[i] - T[i]);
    }
  });
}

}  // namespace

Var mean_squared_error(Var pred, Var target) {
  return squared_error(pred, target, true, "mean_squared_error");
}

Var sum_squared_error(Var pred, Var target) {
  return squared_error(pred, target, false, "sum_squared_error");
}

}  // namespace rulattack
