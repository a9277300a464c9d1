#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "forge/error.hpp"

namespace forge {

template <typename Scalar>
using DpoVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr double kDefaultDpoBeta = 0.1;

/// One preference pair's noise and denoiser predictions. x_t and t are
/// opaque to the loss; they only shaped the predictions.
template <typename Scalar>
struct DpoSample {
  DpoVector<Scalar> eps;
  DpoVector<Scalar> eps_ref_w, eps_theta_w;
  DpoVector<Scalar> eps_ref_l, eps_theta_l;
  Scalar beta = Scalar(kDefaultDpoBeta);

  /// Throws InvalidArgument on length mismatch or beta <= 0, NumericalError
  /// on non-finite entries.
  void validate() const {
    const auto n = eps.size();
    if (n == 0 || eps_ref_w.size() != n || eps_theta_w.size() != n || eps_ref_l.size() != n ||
        eps_theta_l.size() != n) {
      throw InvalidArgument("dpo sample vectors must be non-empty and of equal length");
    }
    if (!(beta > Scalar(0)) || !std::isfinite(double(beta))) throw InvalidArgument("dpo beta must be positive");
    if (!eps.allFinite() || !eps_ref_w.allFinite() || !eps_theta_w.allFinite() || !eps_ref_l.allFinite() ||
        !eps_theta_l.allFinite()) {
      throw NumericalError("dpo sample has non-finite entries");
    }
  }
};

/// delta = ||eps - eps_ref||^2 - ||eps - eps_theta||^2
template <typename D1, typename D2, typename D3>
typename D1::Scalar dpo_implicit_reward(const Eigen::MatrixBase<D1>& eps, const Eigen::MatrixBase<D2>& eps_ref,
                                        const Eigen::MatrixBase<D3>& eps_theta) {
  if (eps.size() != eps_ref.size() || eps.size() != eps_theta.size()) {
    throw InvalidArgument("implicit reward needs vectors of equal length");
  }
  return (eps - eps_ref).squaredNorm() - (eps - eps_theta).squaredNorm();
}

/// log(1 + e^x) without overflow.
template <typename Scalar>
Scalar softplus(Scalar x) {
  using std::exp;
  using std::log1p;
  return x > Scalar(0) ? x + log1p(exp(-x)) : log1p(exp(x));
}

/// 1 / (1 + e^-x) without overflow.
template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
struct DpoLoss {
  Scalar loss = 0;
  Scalar z = 0;  // beta * (delta_w - delta_l)
  DpoVector<Scalar> grad_theta_w;
  DpoVector<Scalar> grad_theta_l;
};

/// loss = -log sigmoid(z) = softplus(-z), z = beta (delta_w - delta_l), with
/// gradients with respect to the trained model's predictions.
template <typename Scalar>
DpoLoss<Scalar> dpo_loss(const DpoSample<Scalar>& s) {
  s.validate();
  const Scalar dw = dpo_implicit_reward(s.eps, s.eps_ref_w, s.eps_theta_w);
  const Scalar dl = dpo_implicit_reward(s.eps, s.eps_ref_l, s.eps_theta_l);
  DpoLoss<Scalar> out;
  out.z = s.beta * (dw - dl);
  out.loss = softplus(-out.z);
  // d loss / d z = -(1 - sigmoid(z)) = -sigmoid(-z)
  const Scalar g = sigmoid(-out.z) * s.beta * Scalar(2);
  out.grad_theta_w = -g * (s.eps - s.eps_theta_w);
  out.grad_theta_l = g * (s.eps - s.eps_theta_l);
  return out;
}

/// Pairwise (tree) summation: the reduction order depends only on the count,
/// so a parallel evaluation of the terms reduces to the same bits.
template <typename Scalar>
Scalar tree_sum(std::span<const Scalar> v) {
  if (v.empty()) return Scalar(0);
  if (v.size() == 1) return v[0];
  const std::size_t half = v.size() / 2;
  return tree_sum(v.first(half)) + tree_sum(v.subspan(half));
}

template <typename Scalar>
struct DpoBatchLoss {
  Scalar mean_loss = 0;
  std::vector<Scalar> losses;
  /// Gradient of the mean loss: per-sample gradients scaled by 1/n.
  std::vector<DpoVector<Scalar>> grad_theta_w;
  std::vector<DpoVector<Scalar>> grad_theta_l;
};

template <typename Scalar>
DpoBatchLoss<Scalar> dpo_batch_loss(std::span<const DpoSample<Scalar>> samples) {
  if (samples.empty()) throw InvalidArgument("dpo batch is empty");
  DpoBatchLoss<Scalar> out;
  const Scalar inv_n = Scalar(1) / Scalar(samples.size());
  for (const auto& s : samples) {
    auto r = dpo_loss(s);
    out.losses.push_back(r.loss);
    out.grad_theta_w.push_back(r.grad_theta_w * inv_n);
    out.grad_theta_l.push_back(r.grad_theta_l * inv_n);
  }
  out.mean_loss = tree_sum<Scalar>(out.losses) * inv_n;
  return out;
}

template <typename Scalar>
DpoBatchLoss<Scalar> dpo_batch_loss(const std::vector<DpoSample<Scalar>>& samples) {
  return dpo_batch_loss<Scalar>(std::span<const DpoSample<Scalar>>(samples));
}

}  // namespace forge
