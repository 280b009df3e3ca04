// Training objectives: reconstruction l2, pixel-wise cross-entropy, the
// merged-ensemble segmentation loss, and the combined fine-tuning loss.
//
// Reductions: sum over pixels/channels of each image, mean over the batch,
// for both the l2 and cross-entropy losses.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "snm/autodiff.hpp"

namespace snm {

inline constexpr double kProbClamp = 1e-8;  // ln guard for cross-entropy
inline constexpr double kDefaultLambda = 0.01;

// Reported form of a loss: the scalar plus its named sub-terms.
struct LossValue {
  double scalar = 0.0;
  std::map<std::string, double> components;
};

template <typename T>
struct LossNodes {
  typename Graph<T>::Id total;
  std::vector<std::pair<std::string, typename Graph<T>::Id>> components;

  LossValue value(const Graph<T>& g) const {
    LossValue v;
    v.scalar = static_cast<double>(g.scalar(total));
    for (const auto& [name, id] : components)
      v.components[name] = static_cast<double>(g.scalar(id));
    return v;
  }
};

// (1/L) sum_i ||x_i - t_i||_2^2 over (L,C,H,W) batches.
template <typename T>
typename Graph<T>::Id mrn_loss_op(Graph<T>& g, typename Graph<T>::Id recon,
                                  typename Graph<T>::Id target) {
  const Shape& s = g.shape(recon);
  if (s.size() != 4) throw dimension_error("mrn_loss expects (L,C,H,W) batches");
  return g.scale(g.sum_sq(g.sub(recon, target)), static_cast<T>(1.0 / static_cast<double>(s[0])));
}

// -sum over pixels of ln p_label, mean over the batch.
template <typename T>
typename Graph<T>::Id msn_loss_op(Graph<T>& g, typename Graph<T>::Id probs,
                                  const Tensor<std::uint8_t>& labels) {
  const Shape& s = g.shape(probs);
  if (s.size() != 4) throw dimension_error("msn_loss expects (L,C,H,W) probability maps");
  return g.scale(g.cross_entropy_sum(probs, labels, static_cast<T>(kProbClamp)),
                 static_cast<T>(1.0 / static_cast<double>(s[0])));
}

// (1/(N+1)) (L_merged + sum_i L_block_i).
template <typename T>
LossNodes<T> omsn_loss_op(Graph<T>& g, typename Graph<T>::Id merged_probs,
                          const std::vector<typename Graph<T>::Id>& per_block_probs,
                          const Tensor<std::uint8_t>& labels) {
  if (per_block_probs.empty()) throw parameter_error("omsn_loss: empty block list");
  LossNodes<T> r;
  std::vector<typename Graph<T>::Id> terms;
  terms.push_back(msn_loss_op(g, merged_probs, labels));
  r.components.emplace_back("mmsn", terms.back());
  for (std::size_t i = 0; i < per_block_probs.size(); ++i) {
    terms.push_back(msn_loss_op(g, per_block_probs[i], labels));
    r.components.emplace_back("smsn" + std::to_string(i), terms.back());
  }
  const T w = static_cast<T>(1.0 / static_cast<double>(per_block_probs.size() + 1));
  r.total = g.lincomb(terms, std::vector<T>(terms.size(), w));
  return r;
}

// L_MRN(final reconstruction, target) + lambda * L_OMSN.
template <typename T>
LossNodes<T> segnetmri_loss_op(Graph<T>& g, typename Graph<T>::Id reconstruction,
                               typename Graph<T>::Id target, typename Graph<T>::Id merged_probs,
                               const std::vector<typename Graph<T>::Id>& per_block_probs,
                               const Tensor<std::uint8_t>& labels, double lambda) {
  if (lambda < 0.0) throw parameter_error("lambda must be nonnegative");
  LossNodes<T> r;
  const auto mrn = mrn_loss_op(g, reconstruction, target);
  const auto omsn = omsn_loss_op(g, merged_probs, per_block_probs, labels);
  r.total = g.lincomb({mrn, omsn.total}, {T(1), static_cast<T>(lambda)});
  r.components.emplace_back("mrn", mrn);
  r.components.emplace_back("omsn", omsn.total);
  return r;
}

// --- plain-tensor evaluation wrappers (no gradients) -----------------------

template <typename T>
LossValue mrn_loss(const Tensor<T>& recon_batch, const Tensor<T>& target_batch) {
  Graph<T> g;
  const auto id = mrn_loss_op(g, g.leaf(recon_batch, false), g.leaf(target_batch, false));
  LossValue v;
  v.scalar = static_cast<double>(g.scalar(id));
  return v;
}

template <typename T>
LossValue msn_loss(const Tensor<T>& pred_probs, const Tensor<std::uint8_t>& labels) {
  Graph<T> g;
  const auto id = msn_loss_op(g, g.leaf(pred_probs, false), labels);
  LossValue v;
  v.scalar = static_cast<double>(g.scalar(id));
  return v;
}

template <typename T>
LossValue omsn_loss(const Tensor<T>& merged_probs, const std::vector<Tensor<T>>& per_block_probs,
                    const Tensor<std::uint8_t>& labels) {
  Graph<T> g;
  std::vector<typename Graph<T>::Id> block_ids;
  for (const auto& b : per_block_probs) block_ids.push_back(g.leaf(b, false));
  const auto nodes = omsn_loss_op(g, g.leaf(merged_probs, false), block_ids, labels);
  return nodes.value(g);
}

template <typename T>
LossValue segnetmri_loss(const Tensor<T>& reconstruction, const Tensor<T>& target,
                         const Tensor<T>& merged_probs,
                         const std::vector<Tensor<T>>& per_block_probs,
                         const Tensor<std::uint8_t>& labels, double lambda) {
  Graph<T> g;
  std::vector<typename Graph<T>::Id> block_ids;
  for (const auto& b : per_block_probs) block_ids.push_back(g.leaf(b, false));
  const auto nodes = segnetmri_loss_op(g, g.leaf(reconstruction, false), g.leaf(target, false),
                                       g.leaf(merged_probs, false), block_ids, labels, lambda);
  return nodes.value(g);
}

}  // namespace snm
