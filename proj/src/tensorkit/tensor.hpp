// Copyright 2026 The OmniSeg Authors.
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

// Dense double-precision tensors with define-by-run reverse-mode
// differentiation. Every differentiable op records a Node on its output;
// backward() walks the recorded graph from a scalar loss.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace omniseg::tensor {

using Shape = std::vector<int>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;

struct Storage {
  Shape shape;
  std::vector<double> data;
  // Empty until something accumulates into it.
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> producer;

  std::vector<double>& ensure_grad();
};

struct Node {
  const char* op = "";
  std::vector<std::shared_ptr<Storage>> inputs;
  // Reads out.grad and accumulates into the grads of `inputs`.
  std::function<void(Storage& out)> backward;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Storage> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool has_grad() const { return !impl_->grad.empty(); }
  // Zero-filled view when no gradient has been accumulated.
  std::vector<double> grad() const;
  void zero_grad() { impl_->grad.clear(); }
  bool is_leaf() const { return impl_->producer == nullptr; }

  // Same values, no graph history, independent storage.
  Tensor detach() const;

  const std::shared_ptr<Storage>& impl() const { return impl_; }

 private:
  std::shared_ptr<Storage> impl_;
};

// True unless a NoGradGuard is alive on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Topologically ordered record of the ops that produced a tensor.
class Graph {
 public:
  static Graph trace(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  // Op names in execution order; mostly for instrumentation in tests.
  std::vector<std::string> op_names() const;
  // Propagates root.grad through the recorded ops in reverse order,
  // visiting each node once.
  void run_backward(bool release_intermediate_grads = true) const;

 private:
  std::vector<std::shared_ptr<Storage>> order_;
};

// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every leaf that
// requires them. `loss` must hold exactly one element.
void backward(const Tensor& loss);

// Builds an op result. When gradients are enabled and some input requires
// them, `grad_fn` is attached as the producer node.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs,
                   std::function<void(Storage& out)> grad_fn);

}  // namespace omniseg::tensor
