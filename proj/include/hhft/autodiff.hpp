// Copyright 2026 The hhft-desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Reverse-mode differentiation tape.
//
// A Tape owns an append-only list of nodes. Every op appends one node holding
// its forward value and, if any parent needs a gradient, a closure that
// scatters the node's gradient into its parents. Since parents always precede
// children, a single reverse sweep over the list is a valid topological
// traversal.

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "hhft/tensor.hpp"

namespace hhft {

template <class T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  // With record=false no backward closures are kept (inference mode).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(Tensor<T> value) {
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    return Var<T>(this, last_id());
  }

  Var<T> leaf(Tensor<T> value) {
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    n.requires_grad = record_;
    return Var<T>(this, last_id());
  }

  // Borrows `value`; it must outlive the tape and stay unchanged meanwhile.
  Var<T> parameter(const Tensor<T>& value) {
    Node& n = nodes_.emplace_back();
    n.borrowed = &value;
    n.requires_grad = record_;
    return Var<T>(this, last_id());
  }

  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn fn) {
    return record(std::move(value), std::span<const Var<T>>(parents.begin(), parents.size()), std::move(fn));
  }

  Var<T> record(Tensor<T> value, std::span<const Var<T>> parents, BackwardFn fn) {
    bool needs = false;
    if (record_) {
      for (const Var<T>& p : parents) {
        if (&p.tape() != this) throw ContractError("op mixes variables from different tapes");
        needs = needs || nodes_[p.id()].requires_grad;
      }
    }
    Node& n = nodes_.emplace_back();
    n.owned = std::move(value);
    n.requires_grad = needs;
    if (needs) n.backward = std::move(fn);
    return Var<T>(this, last_id());
  }

  const Tensor<T>& value(std::uint32_t id) const {
    const Node& n = nodes_.at(id);
    return n.borrowed != nullptr ? *n.borrowed : n.owned;
  }

  bool requires_grad(std::uint32_t id) const { return nodes_.at(id).requires_grad; }

  // Gradient accumulator of a node, zero-filled on first touch.
  Tensor<T>& grad_slot(std::uint32_t id) {
    Node& n = nodes_.at(id);
    if (!n.has_grad) {
      n.grad = Tensor<T>(value(id).shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  void backward(Var<T> loss) {
    if (&loss.tape() != this) throw ContractError("backward() called with a variable from another tape");
    const Tensor<T>& v = loss.value();
    if (v.size() != 1)
      throw ContractError("backward() needs a scalar loss, got shape " + shape_str(v.shape()));
    if (!requires_grad(loss.id())) throw ContractError("backward() on a loss that does not require grad");
    grad_slot(loss.id()).fill(T(1));
    for (std::uint32_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, n.grad);
    }
  }

  // Gradient of the last backward() w.r.t. `v`; zeros if `v` was not reached.
  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_.at(v.id());
    if (n.has_grad) return n.grad;
    return Tensor<T>(value(v.id()).shape());
  }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* borrowed = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
    Tensor<T> grad;
  };

  std::uint32_t last_id() const { return static_cast<std::uint32_t>(nodes_.size() - 1); }

  bool record_;
  std::deque<Node> nodes_;
};

}  // namespace hhft
