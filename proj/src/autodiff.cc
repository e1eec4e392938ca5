// Copyright 2026 The FewUser Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fewuser/autodiff.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace fewuser::ad {
namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<Node>;

[[noreturn]] void Mismatch(const char* op, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              a.ShapeString() + " vs " + b.ShapeString());
}

Var MakeResult(Matrix value, std::vector<NodePtr> inputs,
               std::function<void(Node&)> backward) {
  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs_grad = needs_grad || in->requires_grad;
  }
  Var out(std::move(value), needs_grad);
  if (needs_grad) {
    out.node()->inputs = std::move(inputs);
    out.node()->backward = std::move(backward);
  }
  return out;
}

// Gradient sink for input i, or nullptr when that input needs none.
Matrix* Sink(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  return in.requires_grad ? &in.EnsureGrad() : nullptr;
}

void AddInto(Matrix& dst, const Matrix& src, double scale = 1.0) {
  Axpy(scale, src.flat(), dst.flat());
}

}  // namespace

Matrix& Node::EnsureGrad() {
  if (grad.empty() && !value.empty()) grad = Matrix(value.rows(), value.cols());
  return grad;
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Matrix Var::grad() const {
  if (node_->grad.empty()) return Matrix(rows(), cols());
  return node_->grad;
}

void Var::ZeroGrad() {
  if (!node_->grad.empty()) node_->grad.Fill(0.0);
}

double Var::scalar() const {
  if (rows() != 1 || cols() != 1) {
    throw std::logic_error("Var::scalar on non-scalar " +
                           node_->value.ShapeString());
  }
  return node_->value(0, 0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool GradEnabled() { return g_grad_enabled; }

void Backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw std::invalid_argument("Backward: root must be a scalar");
  }
  if (!root.requires_grad()) return;

  // Post-order DFS, then walk in reverse so each node's gradient is complete
  // before it propagates.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->EnsureGrad()(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

Var Constant(Matrix value) { return Var(std::move(value), false); }

Var MatMul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) Mismatch("MatMul", a.value(), b.value());
  return MakeResult(fewuser::MatMul(a.value(), b.value()), {a.node(), b.node()},
                    [](Node& self) {
                      const Matrix& av = self.inputs[0]->value;
                      const Matrix& bv = self.inputs[1]->value;
                      if (Matrix* da = Sink(self, 0)) {
                        GemmNTAccumulate(self.grad, bv, *da);
                      }
                      if (Matrix* db = Sink(self, 1)) {
                        GemmTNAccumulate(av, self.grad, *db);
                      }
                    });
}

Var MatMulNT(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) Mismatch("MatMulNT", a.value(), b.value());
  Matrix out(a.rows(), b.rows());
  GemmNTAccumulate(a.value(), b.value(), out);
  return MakeResult(std::move(out), {a.node(), b.node()}, [](Node& self) {
    const Matrix& av = self.inputs[0]->value;
    const Matrix& bv = self.inputs[1]->value;
    if (Matrix* da = Sink(self, 0)) GemmAccumulate(self.grad, bv, *da);
    if (Matrix* db = Sink(self, 1)) GemmTNAccumulate(self.grad, av, *db);
  });
}

Var Add(const Var& a, const Var& b) {
  if (!a.value().SameShape(b.value())) Mismatch("Add", a.value(), b.value());
  Matrix out = a.value();
  AddInto(out, b.value());
  return MakeResult(std::move(out), {a.node(), b.node()}, [](Node& self) {
    if (Matrix* da = Sink(self, 0)) AddInto(*da, self.grad);
    if (Matrix* db = Sink(self, 1)) AddInto(*db, self.grad);
  });
}

Var Sub(const Var& a, const Var& b) {
  if (!a.value().SameShape(b.value())) Mismatch("Sub", a.value(), b.value());
  Matrix out = a.value();
  AddInto(out, b.value(), -1.0);
  return MakeResult(std::move(out), {a.node(), b.node()}, [](Node& self) {
    if (Matrix* da = Sink(self, 0)) AddInto(*da, self.grad);
    if (Matrix* db = Sink(self, 1)) AddInto(*db, self.grad, -1.0);
  });
}

Var Mul(const Var& a, const Var& b) {
  if (!a.value().SameShape(b.value())) Mismatch("Mul", a.value(), b.value());
  Matrix out = a.value();
  const auto bv = b.value().flat();
  auto o = out.flat();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return MakeResult(std::move(out), {a.node(), b.node()}, [](Node& self) {
    const auto g = self.grad.flat();
    const auto av = self.inputs[0]->value.flat();
    const auto bv = self.inputs[1]->value.flat();
    if (Matrix* da = Sink(self, 0)) {
      auto d = da->flat();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (Matrix* db = Sink(self, 1)) {
      auto d = db->flat();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Var Scale(const Var& a, double s) {
  Matrix out = a.value();
  for (double& x : out.flat()) x *= s;
  return MakeResult(std::move(out), {a.node()}, [s](Node& self) {
    if (Matrix* da = Sink(self, 0)) AddInto(*da, self.grad, s);
  });
}

Var AddBias(const Var& a, const Var& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    Mismatch("AddBias", a.value(), bias.value());
  }
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    Axpy(1.0, bias.value().row(0), out.row(r));
  }
  return MakeResult(std::move(out), {a.node(), bias.node()}, [](Node& self) {
    if (Matrix* da = Sink(self, 0)) AddInto(*da, self.grad);
    if (Matrix* db = Sink(self, 1)) {
      for (std::size_t r = 0; r < self.grad.rows(); ++r) {
        Axpy(1.0, self.grad.row(r), db->row(0));
      }
    }
  });
}

Var Tanh(const Var& a) {
  Matrix out = a.value();
  for (double& x : out.flat()) x = std::tanh(x);
  return MakeResult(std::move(out), {a.node()}, [](Node& self) {
    if (Matrix* da = Sink(self, 0)) {
      const auto y = self.value.flat();
      const auto g = self.grad.flat();
      auto d = da->flat();
      for (std::size_t i = 0; i < y.size(); ++i) d[i] += g[i] * (1.0 - y[i] * y[i]);
    }
  });
}

Var Sigmoid(const Var& a) {
  Matrix out = a.value();
  for (double& x : out.flat()) x = 1.0 / (1.0 + std::exp(-x));
  return MakeResult(std::move(out), {a.node()}, [](Node& self) {
    if (Matrix* da = Sink(self, 0)) {
      const auto y = self.value.flat();
      const auto g = self.grad.flat();
      auto d = da->flat();
      for (std::size_t i = 0; i < y.size(); ++i) d[i] += g[i] * y[i] * (1.0 - y[i]);
    }
  });
}

Var MulConstant(const Var& a, Matrix mask) {
  if (!mask.SameShape(a.value())) Mismatch("MulConstant", a.value(), mask);
  Matrix out = a.value();
  auto o = out.flat();
  const auto m = mask.flat();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= m[i];
  return MakeResult(std::move(out), {a.node()},
                    [mask = std::move(mask)](Node& self) {
                      if (Matrix* da = Sink(self, 0)) {
                        const auto g = self.grad.flat();
                        const auto mv = mask.flat();
                        auto d = da->flat();
                        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * mv[i];
                      }
                    });
}

Var SoftmaxRows(const Var& a) {
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double& x : row) {
      x = std::exp(x - mx);
      z += x;
    }
    for (double& x : row) x /= z;
  }
  return MakeResult(std::move(out), {a.node()}, [](Node& self) {
    if (Matrix* da = Sink(self, 0)) {
      for (std::size_t r = 0; r < self.value.rows(); ++r) {
        const auto y = self.value.row(r);
        const auto g = self.grad.row(r);
        const double inner = Dot(y, g);
        auto d = da->row(r);
        for (std::size_t j = 0; j < y.size(); ++j) d[j] += y[j] * (g[j] - inner);
      }
    }
  });
}

Var LayerNormRows(const Var& a, const Var& gain, const Var& bias, double eps) {
  const std::size_t n = a.cols();
  if (gain.rows() != 1 || gain.cols() != n || !gain.value().SameShape(bias.value())) {
    Mismatch("LayerNormRows", a.value(), gain.value());
  }
  Matrix normalized(a.rows(), n);
  std::vector<double> inv_std(a.rows());
  Matrix out(a.rows(), n);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto x = a.value().row(r);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      normalized(r, j) = (x[j] - mean) * inv_std[r];
      out(r, j) = normalized(r, j) * gain.value()(0, j) + bias.value()(0, j);
    }
  }
  return MakeResult(
      std::move(out), {a.node(), gain.node(), bias.node()},
      [normalized = std::move(normalized),
       inv_std = std::move(inv_std)](Node& self) {
        const std::size_t cols = normalized.cols();
        const Matrix& g = self.grad;
        const Matrix& gain_v = self.inputs[1]->value;
        if (Matrix* da = Sink(self, 0)) {
          std::vector<double> dxhat(cols);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            double mean_d = 0.0;
            double mean_dx = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
              dxhat[j] = g(r, j) * gain_v(0, j);
              mean_d += dxhat[j];
              mean_dx += dxhat[j] * normalized(r, j);
            }
            mean_d /= static_cast<double>(cols);
            mean_dx /= static_cast<double>(cols);
            for (std::size_t j = 0; j < cols; ++j) {
              (*da)(r, j) += inv_std[r] *
                             (dxhat[j] - mean_d - normalized(r, j) * mean_dx);
            }
          }
        }
        if (Matrix* dgain = Sink(self, 1)) {
          for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t j = 0; j < cols; ++j) {
              (*dgain)(0, j) += g(r, j) * normalized(r, j);
            }
          }
        }
        if (Matrix* dbias = Sink(self, 2)) {
          for (std::size_t r = 0; r < g.rows(); ++r) {
            Axpy(1.0, g.row(r), dbias->row(0));
          }
        }
      });
}

Var SliceRows(const Var& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) {
    throw std::out_of_range("SliceRows: rows [" + std::to_string(begin) + ", " +
                            std::to_string(begin + count) + ") of " +
                            a.value().ShapeString());
  }
  const std::size_t cols = a.cols();
  Matrix out(count, cols);
  std::copy_n(a.value().data() + begin * cols, count * cols, out.data());
  return MakeResult(std::move(out), {a.node()}, [begin](Node& self) {
    if (Matrix* da = Sink(self, 0)) {
      const std::size_t n = self.grad.size();
      Axpy(1.0, self.grad.flat(),
           da->flat().subspan(begin * self.grad.cols(), n));
    }
  });
}

Var Row(const Var& a, std::size_t i) { return SliceRows(a, i, 1); }

Var SliceCols(const Var& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols()) {
    throw std::out_of_range("SliceCols: out of range on " +
                            a.value().ShapeString());
  }
  Matrix out(a.rows(), count);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy_n(a.value().row(r).data() + begin, count, out.row(r).data());
  }
  return MakeResult(std::move(out), {a.node()}, [begin](Node& self) {
    if (Matrix* da = Sink(self, 0)) {
      for (std::size_t r = 0; r < self.grad.rows(); ++r) {
        Axpy(1.0, self.grad.row(r),
             da->row(r).subspan(begin, self.grad.cols()));
      }
    }
  });
}

Var GatherRows(const Var& table, std::span<const std::size_t> ids) {
  const std::size_t cols = table.cols();
  Matrix out(ids.size(), cols);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= table.rows()) {
      throw std::out_of_range("GatherRows: row id " + std::to_string(ids[i]) +
                              " outside table of " + std::to_string(table.rows()) +
                              " rows");
    }
    std::copy_n(table.value().row(ids[i]).data(), cols, out.row(i).data());
  }
  return MakeResult(std::move(out), {table.node()},
                    [ids = std::vector<std::size_t>(ids.begin(), ids.end())](
                        Node& self) {
                      if (Matrix* dt = Sink(self, 0)) {
                        for (std::size_t i = 0; i < ids.size(); ++i) {
                          Axpy(1.0, self.grad.row(i), dt->row(ids[i]));
                        }
                      }
                    });
}

Var ConcatRows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("ConcatRows: no parts");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  std::vector<NodePtr> inputs;
  for (const Var& p : parts) {
    if (p.cols() != cols) Mismatch("ConcatRows", parts[0].value(), p.value());
    rows += p.rows();
    inputs.push_back(p.node());
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + offset);
    offset += p.value().size();
  }
  return MakeResult(std::move(out), std::move(inputs), [](Node& self) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      const std::size_t n = self.inputs[i]->value.size();
      if (Matrix* d = Sink(self, i)) {
        Axpy(1.0, self.grad.flat().subspan(off, n), d->flat());
      }
      off += n;
    }
  });
}

Var ConcatCols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) Mismatch("ConcatCols", a.value(), b.value());
  const std::size_t ca = a.cols();
  const std::size_t cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy_n(a.value().row(r).data(), ca, out.row(r).data());
    std::copy_n(b.value().row(r).data(), cb, out.row(r).data() + ca);
  }
  return MakeResult(std::move(out), {a.node(), b.node()}, [ca, cb](Node& self) {
    for (std::size_t r = 0; r < self.grad.rows(); ++r) {
      const auto g = self.grad.row(r);
      if (Matrix* da = Sink(self, 0)) Axpy(1.0, g.subspan(0, ca), da->row(r));
      if (Matrix* db = Sink(self, 1)) Axpy(1.0, g.subspan(ca, cb), db->row(r));
    }
  });
}

Var RepeatRows(const Var& row, std::size_t count) {
  if (row.rows() != 1) {
    throw std::invalid_argument("RepeatRows: expected a row vector, got " +
                                row.value().ShapeString());
  }
  Matrix out(count, row.cols());
  for (std::size_t r = 0; r < count; ++r) {
    std::copy_n(row.value().data(), row.cols(), out.row(r).data());
  }
  return MakeResult(std::move(out), {row.node()}, [](Node& self) {
    if (Matrix* d = Sink(self, 0)) {
      for (std::size_t r = 0; r < self.grad.rows(); ++r) {
        Axpy(1.0, self.grad.row(r), d->row(0));
      }
    }
  });
}

Var MeanRows(const Var& a) {
  if (a.rows() == 0) throw std::invalid_argument("MeanRows: no rows");
  const double inv = 1.0 / static_cast<double>(a.rows());
  Matrix out(1, a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    Axpy(1.0, a.value().row(r), out.row(0));
  }
  for (double& x : out.flat()) x *= inv;
  return MakeResult(std::move(out), {a.node()}, [inv](Node& self) {
    if (Matrix* d = Sink(self, 0)) {
      for (std::size_t r = 0; r < d->rows(); ++r) {
        Axpy(inv, self.grad.row(0), d->row(r));
      }
    }
  });
}

Var Sum(const Var& a) {
  double s = 0.0;
  for (double x : a.value().flat()) s += x;
  return MakeResult(Matrix(1, 1, s), {a.node()}, [](Node& self) {
    if (Matrix* d = Sink(self, 0)) {
      const double g = self.grad(0, 0);
      for (double& x : d->flat()) x += g;
    }
  });
}

Var SoftmaxCrossEntropy(const Var& logits, std::size_t gold) {
  if (logits.rows() != 1 || gold >= logits.cols()) {
    throw std::invalid_argument("SoftmaxCrossEntropy: gold index " +
                                std::to_string(gold) + " outside " +
                                logits.value().ShapeString());
  }
  const auto z = logits.value().row(0);
  const double mx = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  return MakeResult(Matrix(1, 1, lse - z[gold]), {logits.node()},
                    [gold, lse](Node& self) {
                      if (Matrix* d = Sink(self, 0)) {
                        const double g = self.grad(0, 0);
                        const auto zv = self.inputs[0]->value.row(0);
                        auto dz = d->row(0);
                        for (std::size_t j = 0; j < zv.size(); ++j) {
                          dz[j] += g * std::exp(zv[j] - lse);
                        }
                        dz[gold] -= g;
                      }
                    });
}

}  // namespace fewuser::ad
