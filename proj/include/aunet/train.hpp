#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "aunet/checkpoint.hpp"
#include "aunet/data.hpp"
#include "aunet/losses.hpp"
#include "aunet/model.hpp"

namespace aunet {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 10;
  double base_lr = 1e-5;
  int warmup_steps = 1000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double weight_decay = 1e-6;
  double lambda_rec = 0.001;
  double margin = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (base_lr <= 0) throw ConfigError("base_lr must be > 0");
    if (warmup_steps < 1) throw ConfigError("warmup_steps must be >= 1");
    if (adam_beta1 <= 0 || adam_beta1 >= 1 || adam_beta2 <= 0 || adam_beta2 >= 1)
      throw ConfigError("adam betas must lie in (0,1)");
    if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
    if (lambda_rec < 0) throw ConfigError("lambda_rec must be >= 0");
    if (margin < 0) throw ConfigError("margin must be >= 0");
  }
};

// Linear warmup to base_lr over `warmup` steps, then inverse-square-root decay
// anchored at the warmup step (continuous at step == warmup).
inline double lr_schedule(long step, double base_lr, long warmup) {
  if (step < 1) throw ConfigError("lr_schedule: step must be >= 1");
  if (step <= warmup) return base_lr * double(step) / double(warmup);
  return base_lr * std::pow(double(step) / double(warmup), -0.5);
}

// ---------------------------------------------------------------------------
// Adam with optional decoupled-from-nothing L2 weight decay folded into the
// gradient (PyTorch convention).
// ---------------------------------------------------------------------------
template <class T>
class Adam {
 public:
  Adam(nn::ParamList<T> params, double beta1, double beta2, double weight_decay,
       double eps = 1e-8)
      : params_(std::move(params)),
        beta1_(beta1),
        beta2_(beta2),
        wd_(weight_decay),
        eps_(eps) {
    for (auto it = params_.begin(); it != params_.end();)
      it = it->trainable ? it + 1 : params_.erase(it);
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].value->numel(), T(0));
      v_[i].assign(params_[i].value->numel(), T(0));
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value->numel();
    return n;
  }

  void step(double lr) {
    ++t_;
    const T b1 = T(beta1_), b2 = T(beta2_);
    const T bc1 = T(1.0 - std::pow(beta1_, double(t_)));
    const T bc2 = T(1.0 - std::pow(beta2_, double(t_)));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<T>& th = *params_[i].value;
      const Tensor<T>& gr = *params_[i].grad;
      for (std::size_t j = 0; j < th.numel(); ++j) {
        T g = gr.v[j] + T(wd_) * th.v[j];
        m_[i][j] = b1 * m_[i][j] + (T(1) - b1) * g;
        v_[i][j] = b2 * v_[i][j] + (T(1) - b2) * g * g;
        T mhat = m_[i][j] / bc1;
        T vhat = v_[i][j] / bc2;
        th.v[j] -= T(lr) * mhat / (std::sqrt(vhat) + T(eps_));
      }
    }
  }

 private:
  nn::ParamList<T> params_;
  double beta1_, beta2_, wd_, eps_;
  long t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

// ---------------------------------------------------------------------------
// Training log: one row per optimizer step plus per-epoch validation scores.
// No wall-clock timestamps anywhere, so logs are reproducible byte-for-byte.
// ---------------------------------------------------------------------------
struct TrainLog {
  struct Row {
    long step;
    double lr;
    double au_loss;
    double rec_loss;
    double total;
  };
  struct Val {
    int epoch;
    double avg_f1;
  };
  std::vector<Row> rows;
  std::vector<Val> vals;

  void save_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write train log '" + path + "'");
    f << "step,lr,au_loss,rec_loss,total\n";
    f.precision(17);
    for (const auto& r : rows)
      f << r.step << "," << r.lr << "," << r.au_loss << "," << r.rec_loss << ","
        << r.total << "\n";
    if (!vals.empty()) {
      f << "epoch,val_avg_f1\n";
      for (const auto& v : vals) f << v.epoch << "," << v.avg_f1 << "\n";
    }
  }
};

// Kaiming init for the whole model, then optionally overwrite the encoder from
// a pretrained encoder-only checkpoint (name-prefix match on "gee.").
template <class T>
void init_parameters(AuNet<T>& model, std::uint64_t seed,
                     const std::string& encoder_checkpoint = "") {
  model.init(seed);
  if (!encoder_checkpoint.empty()) {
    auto archive = ckpt::load(encoder_checkpoint);
    auto params = model.params();
    ckpt::load_into(archive, params, "gee.");
  }
}

// ---------------------------------------------------------------------------
// Phase 1: triplet pretraining of the encoder.
// ---------------------------------------------------------------------------
struct TripletIndex {
  int anchor, positive, negative;
};

// The record's `odd` names the negative; the remaining two are (A, P) in order.
inline TripletIndex to_triplet_index(const TripletRecord& rec, int ia, int ib, int ic) {
  switch (rec.odd) {
    case 0: return {ib, ic, ia};
    case 1: return {ia, ic, ib};
    default: return {ia, ib, ic};
  }
}

template <class T>
TrainLog pretrain_encoder(GlobalEncoder<T>& encoder, const std::vector<Tensor<T>>& pool,
                          const std::vector<TripletIndex>& triplets, const TrainConfig& cfg,
                          long max_steps = 0) {
  cfg.validate();
  if (triplets.empty()) throw DataError("pretrain: empty triplet list");
  nn::ParamList<T> params;
  encoder.params(params, "gee");
  Adam<T> opt(params, cfg.adam_beta1, cfg.adam_beta2, cfg.weight_decay);
  encoder.set_training(true);
  TrainLog log;
  const int H = encoder.cfg.image_size;
  long step = 0;
  std::vector<int> order(triplets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::stream(cfg.seed, 0xE90C0000ULL + std::uint64_t(epoch));
    shuffle_rng.shuffle(order.begin(), order.end());
    for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
      const int B = int(std::min<std::size_t>(cfg.batch_size, order.size() - off));
      // batch layout: [anchors | positives | negatives]
      Tensor<T> batch(3 * B, 3, H, H);
      for (int b = 0; b < B; ++b) {
        const TripletIndex& tr = triplets[order[off + b]];
        const int idx[3] = {tr.anchor, tr.positive, tr.negative};
        for (int leg = 0; leg < 3; ++leg) {
          const Tensor<T>& img = pool.at(idx[leg]);
          std::copy(img.v.begin(), img.v.end(),
                    batch.v.begin() + (std::size_t(leg) * B + b) * img.numel());
        }
      }
      for (auto& p : params)
        if (p.grad) p.grad->zero();
      Tensor<T> h = encoder.features(batch);
      Tensor<T> emb = encoder.embed_from_features(h);
      const int D = emb.c;
      double loss_sum = 0;
      Tensor<T> demb(3 * B, D, 1, 1);
      for (int b = 0; b < B; ++b) {
        std::vector<T> a(D), p(D), n(D);
        for (int d = 0; d < D; ++d) {
          a[d] = emb.at(b, d, 0, 0);
          p[d] = emb.at(B + b, d, 0, 0);
          n[d] = emb.at(2 * B + b, d, 0, 0);
        }
        loss_sum += double(triplet_loss(a, p, n, T(cfg.margin)));
        std::vector<T> ga, gp, gn;
        triplet_loss_grad(a, p, n, T(cfg.margin), ga, gp, gn);
        for (int d = 0; d < D; ++d) {
          demb.at(b, d, 0, 0) = ga[d] / T(B);
          demb.at(B + b, d, 0, 0) = gp[d] / T(B);
          demb.at(2 * B + b, d, 0, 0) = gn[d] / T(B);
        }
      }
      double mean_loss = loss_sum / B;
      if (!std::isfinite(mean_loss))
        throw NumericalError("pretrain: non-finite triplet loss at step " +
                             std::to_string(step + 1));
      encoder.features_backward(encoder.embed_backward(demb));
      ++step;
      double lr = lr_schedule(step, cfg.base_lr, cfg.warmup_steps);
      opt.step(lr);
      log.rows.push_back({step, lr, mean_loss, 0.0, mean_loss});
      if (max_steps > 0 && step >= max_steps) return log;
    }
  }
  return log;
}

// ---------------------------------------------------------------------------
// Phase 2: AU fine-tuning. Two optimizer instances: the main Adam covers every
// parameter except the mask extractor's; E_m gets its own Adam without weight
// decay (decaying attention logits would pull all masks toward 0.5).
// ---------------------------------------------------------------------------
template <class T>
struct FinetuneOptions {
  std::function<double(AuNet<T>&, int epoch)> validate;  // optional, eval mode
  long max_steps = 0;                                    // 0 = no cap
};

template <class T>
TrainLog finetune(AuNet<T>& model, const AuDataset<T>& dataset, const TrainConfig& cfg,
                  const FinetuneOptions<T>& options = {}) {
  cfg.validate();
  if (dataset.samples.empty()) throw DataError("finetune: empty dataset");
  if (dataset.n_aus() != model.cfg.n_aus)
    throw ConfigError("finetune: dataset has " + std::to_string(dataset.n_aus()) +
                      " AUs but the model expects " + std::to_string(model.cfg.n_aus));
  nn::ParamList<T> main_params, em_params;
  for (auto& p : model.params())
    (p.name.rfind("em.", 0) == 0 ? em_params : main_params).push_back(p);
  Adam<T> opt_main(main_params, cfg.adam_beta1, cfg.adam_beta2, cfg.weight_decay);
  Adam<T> opt_em(em_params, cfg.adam_beta1, cfg.adam_beta2, 0.0);

  const int H = model.cfg.image_size;
  const int N = model.cfg.n_aus;
  const bool use_rec = model.has_lam() && cfg.lambda_rec > 0;
  TrainLog log;
  long step = 0;
  std::vector<int> order(dataset.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    model.set_training(true);
    Rng shuffle_rng = Rng::stream(cfg.seed, 0xF17E0000ULL + std::uint64_t(epoch));
    shuffle_rng.shuffle(order.begin(), order.end());
    for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
      const int B = int(std::min<std::size_t>(cfg.batch_size, order.size() - off));
      Tensor<T> batch(B, 3, H, H);
      std::vector<std::vector<T>> labels(B);
      for (int b = 0; b < B; ++b) {
        const auto& sample = dataset.samples[order[off + b]];
        Tensor<T> img = dataset.load_image(order[off + b]);
        if (img.h != H || img.w != H)
          throw DataError("finetune: image '" + sample.frame + "' is " + img.shape_str() +
                          ", model expects " + std::to_string(H) + "x" + std::to_string(H));
        std::copy(img.v.begin(), img.v.end(), batch.v.begin() + std::size_t(b) * img.numel());
        labels[b].assign(sample.labels.begin(), sample.labels.end());
      }
      model.zero_grad();
      auto out = model.forward(batch);
      // mean BCE over the batch; gradient composed through the sigmoid
      double au_sum = 0;
      Tensor<T> dlogits(B, N, 1, 1);
      for (int b = 0; b < B; ++b) {
        std::vector<T> probs(N);
        for (int k = 0; k < N; ++k) probs[k] = out.probs.at(b, k);
        au_sum += double(au_loss(labels[b], probs));
        auto dprobs = au_loss_grad(labels[b], probs);
        for (int k = 0; k < N; ++k)
          dlogits.at(b, k) = dprobs[k] * probs[k] * (T(1) - probs[k]) / T(B);
      }
      double rec_sum = 0;
      Tensor<T> drecon;
      if (use_rec) {
        rec_sum = double(rec_loss<T>(out.recon.v, batch.v));
        drecon = Tensor<T>(B, 3, H, H);
        const T scale = T(cfg.lambda_rec) / T(B);
        for (std::size_t i = 0; i < drecon.v.size(); ++i)
          drecon.v[i] = (out.recon.v[i] - batch.v[i]) * scale;
      }
      double au_mean = au_sum / B;
      double rec_mean = rec_sum / B;
      double total = au_mean + cfg.lambda_rec * rec_mean;
      if (!std::isfinite(total))
        throw NumericalError("finetune: non-finite loss at step " + std::to_string(step + 1) +
                             " (au=" + std::to_string(au_mean) +
                             ", rec=" + std::to_string(rec_mean) + ")");
      model.backward(out, dlogits, drecon);
      ++step;
      double lr = lr_schedule(step, cfg.base_lr, cfg.warmup_steps);
      opt_main.step(lr);
      opt_em.step(lr);
      log.rows.push_back({step, lr, au_mean, rec_mean, total});
      if (options.max_steps > 0 && step >= options.max_steps) break;
    }
    if (options.validate) {
      model.set_training(false);
      log.vals.push_back({epoch, options.validate(model, epoch)});
    }
    if (options.max_steps > 0 && step >= options.max_steps) break;
  }
  model.set_training(false);
  return log;
}

// ---------------------------------------------------------------------------
// Central finite-difference check of the full-model gradients of the total
// loss. Returns the max relative error over every trainable parameter entry;
// the relative error uses an absolute floor so that noise on near-zero
// gradients does not dominate.
// ---------------------------------------------------------------------------
template <class T>
double model_gradient_check(AuNet<T>& model, const Tensor<T>& images,
                            const std::vector<std::vector<T>>& labels, double lambda,
                            double eps = 1e-4, int jobs = 1) {
  static_assert(std::is_floating_point_v<T>);
  const int B = images.n, N = model.cfg.n_aus;
  auto loss_of = [&](AuNet<T>& m) -> double {
    m.set_training(true);
    auto out = m.forward(images);
    double au_sum = 0;
    for (int b = 0; b < B; ++b) {
      std::vector<T> probs(N);
      for (int k = 0; k < N; ++k) probs[k] = out.probs.at(b, k);
      au_sum += double(au_loss(labels[b], probs));
    }
    double rec = 0;
    if (m.has_lam() && lambda > 0) rec = double(rec_loss<T>(out.recon.v, images.v));
    return au_sum / B + lambda * rec / B;
  };

  // analytic gradients
  model.set_training(true);
  model.zero_grad();
  auto out = model.forward(images);
  Tensor<T> dlogits(B, N, 1, 1);
  for (int b = 0; b < B; ++b) {
    std::vector<T> probs(N);
    for (int k = 0; k < N; ++k) probs[k] = out.probs.at(b, k);
    auto dprobs = au_loss_grad(labels[b], probs);
    for (int k = 0; k < N; ++k)
      dlogits.at(b, k) = dprobs[k] * probs[k] * (T(1) - probs[k]) / T(B);
  }
  Tensor<T> drecon;
  if (model.has_lam() && lambda > 0) {
    drecon = Tensor<T>(B, 3, model.cfg.image_size, model.cfg.image_size);
    for (std::size_t i = 0; i < drecon.v.size(); ++i)
      drecon.v[i] = (out.recon.v[i] - images.v[i]) * T(lambda) / T(B);
  }
  model.backward(out, dlogits, drecon);
  auto params = model.params();
  std::vector<std::vector<T>> analytic;
  for (auto& p : params) analytic.push_back(p.grad ? p.grad->v : std::vector<T>{});

  // numeric gradients, parallel over parameter tensors with per-thread clones
  jobs = std::max(1, jobs);
  std::vector<double> worst(jobs, 0.0);
  auto work = [&](int tid) {
    AuNet<T> clone = model;  // value semantics: deep copy
    auto cparams = clone.params();
    double w = 0;
    for (std::size_t pi = tid; pi < cparams.size(); pi += jobs) {
      if (!cparams[pi].grad) continue;
      Tensor<T>& value = *cparams[pi].value;
      for (std::size_t j = 0; j < value.numel(); ++j) {
        T keep = value.v[j];
        value.v[j] = keep + T(eps);
        double f1 = loss_of(clone);
        value.v[j] = keep - T(eps);
        double f0 = loss_of(clone);
        value.v[j] = keep;
        double numeric = (f1 - f0) / (2 * eps);
        double a = double(analytic[pi][j]);
        double rel = std::abs(numeric - a) / std::max({1e-3, std::abs(numeric), std::abs(a)});
        w = std::max(w, rel);
      }
    }
    worst[tid] = w;
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < jobs; ++t) threads.emplace_back(work, t);
    for (auto& th : threads) th.join();
  }
  double m = 0;
  for (double w : worst) m = std::max(m, w);
  return m;
}

}  // namespace aunet
