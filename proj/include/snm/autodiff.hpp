// Define-by-run reverse-mode autodiff over dense NCHW tensors.
//
// A Graph owns every intermediate value of one forward pass. Ops execute
// eagerly and record a backward closure; backward() walks the tape in
// reverse creation order (a valid topological order by construction).
// Gradients of fanned-out nodes accumulate, so parameter sharing (the
// duplicated segmentation decoder) falls out for free.
//
// Determinism contract: every op is bit-reproducible for a fixed input,
// including under OpenMP (parallel regions write disjoint slabs; all
// reductions run in a fixed serial order).
#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

#include "snm/tensor.hpp"

namespace snm {

template <typename T>
class Graph {
 public:
  using Id = std::int32_t;

  Id leaf(const Tensor<T>& value, bool needs_grad);

  // -- structure / elementwise -------------------------------------------
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id scale(Id a, T factor);
  Id relu(Id x);
  // (N,2,H,W) complex pair -> (N,1,H,W) pointwise magnitude.
  Id magnitude(Id x);
  Id concat_channels(const std::vector<Id>& parts);
  Id softmax_channels(Id x);

  // -- network layers ------------------------------------------------------
  // x (N,IC,H,W), w (OC,IC,KH,KW) odd kernels, b (OC); stride 1, same padding.
  Id conv2d(Id x, Id w, Id b);
  // x (N,IC,H,W), w (IC,OC,2,2), b (OC); kernel 2, stride 2 upsampling.
  Id conv_transpose2d(Id x, Id w, Id b);
  Id maxpool2x2(Id x);
  // Batch statistics in training mode (updating running stats through the
  // raw pointers), stored statistics in inference mode.
  Id batchnorm(Id x, Id gamma, Id beta, T* running_mean, T* running_var, bool training,
               T momentum, T eps);

  // -- k-space -------------------------------------------------------------
  // x (N,2,H,W); per-sample measurements ys (each (H,W)); hard replacement
  // when noise_weight == inf. Linear and self-adjoint up to the offset term.
  Id data_fidelity(Id x, const std::vector<Tensor<std::complex<T>>>& ys,
                   const Tensor<std::uint8_t>& mask, double noise_weight);

  // -- reductions ------------------------------------------------------
  Id sum_sq(Id x);  // scalar
  // -sum over pixels of ln(max(p_label, eps)); labels (N,H,W) in {0..C-1}.
  Id cross_entropy_sum(Id probs, const Tensor<std::uint8_t>& labels, T eps);
  // scalar linear combination sum_i w_i * s_i of scalar nodes.
  Id lincomb(const std::vector<Id>& scalars, const std::vector<T>& weights);

  // -- access ------------------------------------------------------------
  const Shape& shape(Id id) const { return nodes_[static_cast<std::size_t>(id)].shape; }
  const std::vector<T>& val(Id id) const { return nodes_[static_cast<std::size_t>(id)].val; }
  std::vector<T>& val(Id id) { return nodes_[static_cast<std::size_t>(id)].val; }
  T scalar(Id id) const;
  // Gradient of the last backward() root w.r.t. this node (zeros if unused).
  const std::vector<T>& grad(Id id);
  bool needs_grad(Id id) const { return nodes_[static_cast<std::size_t>(id)].needs; }
  std::size_t size() const { return nodes_.size(); }

  void backward(Id root);

 private:
  struct Node {
    Shape shape;
    std::vector<T> val;
    std::vector<T> grad;  // sized lazily
    bool needs = false;
    std::function<void(Graph&)> back;  // empty for leaves / grad-free nodes
  };

  Id push(Shape shape, std::vector<T> val, bool needs);
  std::vector<T>& grad_buf(Id id);
  const Node& node(Id id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }

  std::vector<Node> nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace snm
