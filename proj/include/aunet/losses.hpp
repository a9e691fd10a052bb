#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "aunet/errors.hpp"

namespace aunet {

// Probabilities are clamped to [kProbClamp, 1-kProbClamp] before taking logs.
inline constexpr double kProbClamp = 1e-7;

template <class T>
struct LossReport {
  T au_loss = T(0);
  T rec_loss = T(0);
  T total = T(0);
  T lambda = T(0);
};

namespace detail {
template <class T>
T sq_l2_dist(const std::vector<T>& a, const std::vector<T>& b) {
  T s = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    T d = a[i] - b[i];
    s += d * d;
  }
  return s;
}
}  // namespace detail

// Two-hinge triplet loss on squared L2 distances:
// max(0, d(A,P)-d(A,N)+m) + max(0, d(A,P)-d(P,N)+m)
template <class T>
T triplet_loss(const std::vector<T>& a, const std::vector<T>& p,
               const std::vector<T>& n, T margin) {
  if (a.size() != p.size() || a.size() != n.size())
    throw ConfigError("triplet_loss: embedding dimension mismatch");
  T dap = detail::sq_l2_dist(a, p);
  T dan = detail::sq_l2_dist(a, n);
  T dpn = detail::sq_l2_dist(p, n);
  return std::max(T(0), dap - dan + margin) + std::max(T(0), dap - dpn + margin);
}

// Gradients w.r.t. all three embeddings; subgradient 0 at the hinge kink.
template <class T>
void triplet_loss_grad(const std::vector<T>& a, const std::vector<T>& p,
                       const std::vector<T>& n, T margin, std::vector<T>& ga,
                       std::vector<T>& gp, std::vector<T>& gn) {
  if (a.size() != p.size() || a.size() != n.size())
    throw ConfigError("triplet_loss: embedding dimension mismatch");
  const std::size_t d = a.size();
  ga.assign(d, T(0));
  gp.assign(d, T(0));
  gn.assign(d, T(0));
  T dap = detail::sq_l2_dist(a, p);
  T dan = detail::sq_l2_dist(a, n);
  T dpn = detail::sq_l2_dist(p, n);
  if (dap - dan + margin > T(0)) {
    for (std::size_t i = 0; i < d; ++i) {
      ga[i] += T(2) * ((a[i] - p[i]) - (a[i] - n[i]));
      gp[i] += T(-2) * (a[i] - p[i]);
      gn[i] += T(2) * (a[i] - n[i]);
    }
  }
  if (dap - dpn + margin > T(0)) {
    for (std::size_t i = 0; i < d; ++i) {
      ga[i] += T(2) * (a[i] - p[i]);
      gp[i] += T(2) * ((p[i] - a[i]) - (p[i] - n[i]));
      gn[i] += T(2) * (p[i] - n[i]);
    }
  }
}

// Multi-label BCE summed over AUs. labels in {0,1}; predictions in (0,1).
template <class T>
T au_loss(const std::vector<T>& labels, const std::vector<T>& probs) {
  if (labels.size() != probs.size())
    throw ConfigError("au_loss: length mismatch");
  T s = T(0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != T(0) && labels[i] != T(1))
      throw ConfigError("au_loss: label outside {0,1}");
    T q = std::clamp(probs[i], T(kProbClamp), T(1) - T(kProbClamp));
    s -= labels[i] * std::log(q) + (T(1) - labels[i]) * std::log(T(1) - q);
  }
  return s;
}

// d au_loss / d probs; zero where the clamp is active.
template <class T>
std::vector<T> au_loss_grad(const std::vector<T>& labels, const std::vector<T>& probs) {
  if (labels.size() != probs.size())
    throw ConfigError("au_loss: length mismatch");
  std::vector<T> g(labels.size(), T(0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (probs[i] < T(kProbClamp) || probs[i] > T(1) - T(kProbClamp)) continue;
    g[i] = -(labels[i] / probs[i]) + (T(1) - labels[i]) / (T(1) - probs[i]);
  }
  return g;
}

// Pixel-level half-sum-of-squares reconstruction loss.
template <class T, class Container>
T rec_loss(const Container& rec, const Container& truth) {
  if (rec.size() != truth.size()) throw ConfigError("rec_loss: shape mismatch");
  T s = T(0);
  for (std::size_t i = 0; i < rec.size(); ++i) {
    T d = rec[i] - truth[i];
    s += d * d;
  }
  return s / T(2);
}

template <class T, class Container>
std::vector<T> rec_loss_grad(const Container& rec, const Container& truth) {
  if (rec.size() != truth.size()) throw ConfigError("rec_loss: shape mismatch");
  std::vector<T> g(rec.size());
  for (std::size_t i = 0; i < rec.size(); ++i) g[i] = rec[i] - truth[i];
  return g;
}

template <class T>
LossReport<T> total_loss(T au, T rec, T lambda) {
  if (au < T(0) || rec < T(0)) throw ConfigError("total_loss: negative loss input");
  LossReport<T> r;
  r.au_loss = au;
  r.rec_loss = rec;
  r.lambda = lambda;
  r.total = au + lambda * rec;
  return r;
}

}  // namespace aunet
