#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "aunet/nn.hpp"

namespace aunet {

enum class MaskActivation { kSigmoid, kSoftmax, kTanh, kNone };
enum class Variant { kFull, kNoMask, kNoLam, kCnnReplace };

inline const char* to_string(MaskActivation a) {
  switch (a) {
    case MaskActivation::kSigmoid: return "sigmoid";
    case MaskActivation::kSoftmax: return "softmax";
    case MaskActivation::kTanh: return "tanh";
    case MaskActivation::kNone: return "none";
  }
  return "?";
}

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoMask: return "no_mask";
    case Variant::kNoLam: return "no_lam";
    case Variant::kCnnReplace: return "cnn_replace";
  }
  return "?";
}

inline MaskActivation mask_activation_from_string(const std::string& s) {
  if (s == "sigmoid") return MaskActivation::kSigmoid;
  if (s == "softmax") return MaskActivation::kSoftmax;
  if (s == "tanh") return MaskActivation::kTanh;
  if (s == "none") return MaskActivation::kNone;
  throw ConfigError("unknown mask activation '" + s + "'");
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::kFull;
  if (s == "no_mask") return Variant::kNoMask;
  if (s == "no_lam") return Variant::kNoLam;
  if (s == "cnn_replace") return Variant::kCnnReplace;
  throw ConfigError("unknown model variant '" + s + "'");
}

struct ModelConfig {
  int image_size = 256;
  int n_aus = 12;
  int encoder_channels = 256;
  int downsample_factor = 16;
  int embed_dim = 16;
  MaskActivation mask_activation = MaskActivation::kSigmoid;
  Variant variant = Variant::kFull;

  int encoder_size() const { return image_size / downsample_factor; }
  int encoder_stages() const {
    int s = 0, d = downsample_factor;
    while (d > 1) {
      d >>= 1;
      ++s;
    }
    return s;
  }

  void validate() const {
    if (downsample_factor < 2 || (downsample_factor & (downsample_factor - 1)) != 0)
      throw ConfigError("downsample_factor must be a power of two >= 2");
    if (image_size < downsample_factor || image_size % downsample_factor != 0)
      throw ConfigError("image_size must be a positive multiple of downsample_factor");
    if (n_aus < 1) throw ConfigError("n_aus must be >= 1");
    if (embed_dim < 2) throw ConfigError("embed_dim must be >= 2");
    if (encoder_channels < 4) throw ConfigError("encoder_channels must be >= 4");
  }

  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    if (mask_activation == MaskActivation::kTanh)
      w.push_back(
          "tanh masks can go negative and break the [0,1] attention range; "
          "supported for ablation only");
    return w;
  }
};

// AU embedding width after global average pooling in each classifier.
inline constexpr int kAuEmbedDim = 256;

// Number of stride-2 blocks needed to reduce `spatial` to <= 8 (at least one),
// and the channel widths for them: the tail of {16,32,64,128,256}.
inline int classifier_block_count(int spatial) {
  if (spatial < 2)
    throw ConfigError("classifier input spatial size " + std::to_string(spatial) +
                      " too small (need >= 2)");
  int nb = 0, cur = spatial;
  while (cur > 8) {
    cur = (cur - 1) / 2 + 1;
    ++nb;
  }
  return std::max(1, nb);
}

inline std::vector<int> classifier_channels(int spatial) {
  static const std::vector<int> full = {16, 32, 64, 128, 256};
  int nb = classifier_block_count(spatial);
  std::vector<int> ch;
  for (int i = nb; i > int(full.size()); --i) ch.push_back(full.front());
  for (int i = std::max(0, int(full.size()) - nb); i < int(full.size()); ++i)
    ch.push_back(full[i]);
  return ch;
}

// ---------------------------------------------------------------------------
// Global expression encoder: stride-2 stages with residual blocks, plus the
// embedding head (GAP -> linear -> L2 normalization) used for pretraining.
// ---------------------------------------------------------------------------
template <class T>
struct GlobalEncoder {
  ModelConfig cfg;
  nn::ConvBnRelu<T> stem;
  std::vector<nn::ConvBnRelu<T>> down;
  std::vector<nn::ResidualBlock<T>> res;
  nn::GlobalAvgPool<T> gap;
  nn::Linear<T> embed_fc;
  nn::L2Normalize<T> norm;

  GlobalEncoder() = default;
  explicit GlobalEncoder(const ModelConfig& c) : cfg(c) {
    int stages = c.encoder_stages();
    int c0 = std::max(4, c.encoder_channels >> stages);
    stem = nn::ConvBnRelu<T>(3, c0, 3, 1, 1);
    int ch = c0;
    for (int i = 0; i < stages; ++i) {
      int next = std::max(4, c.encoder_channels >> (stages - 1 - i));
      if (i == stages - 1) next = c.encoder_channels;
      down.emplace_back(ch, next, 3, 2, 1);
      res.emplace_back(next);
      ch = next;
    }
    embed_fc = nn::Linear<T>(c.encoder_channels, c.embed_dim);
  }

  void init(Rng& rng) {
    stem.init(rng);
    for (auto& d : down) d.init(rng);
    for (auto& r : res) r.init(rng);
    embed_fc.init(rng);
  }
  void set_training(bool t) {
    stem.set_training(t);
    for (auto& d : down) d.set_training(t);
    for (auto& r : res) r.set_training(t);
  }
  void params(nn::ParamList<T>& out, const std::string& prefix) {
    stem.params(out, prefix + ".stem");
    for (std::size_t i = 0; i < down.size(); ++i) {
      down[i].params(out, prefix + ".down" + std::to_string(i));
      res[i].params(out, prefix + ".res" + std::to_string(i));
    }
    embed_fc.params(out, prefix + ".embed.fc");
  }

  // im -> h
  Tensor<T> features(const Tensor<T>& images) {
    if (images.c != 3 || images.h != cfg.image_size || images.w != cfg.image_size)
      throw ConfigError("encoder: expected (B,3," + std::to_string(cfg.image_size) + "," +
                        std::to_string(cfg.image_size) + ") input, got " + images.shape_str());
    Tensor<T> x = stem.forward(images);
    for (std::size_t i = 0; i < down.size(); ++i) {
      x = down[i].forward(x);
      x = res[i].forward(x);
    }
    return x;
  }

  Tensor<T> features_backward(const Tensor<T>& gh) {
    Tensor<T> g = gh;
    for (int i = int(down.size()) - 1; i >= 0; --i) {
      g = res[i].backward(g);
      g = down[i].backward(g);
    }
    return stem.backward(g);
  }

  // h -> unit-norm expression embedding
  Tensor<T> embed_from_features(const Tensor<T>& h) {
    return norm.forward(embed_fc.forward(gap.forward(h)));
  }
  Tensor<T> embed_backward(const Tensor<T>& gembed) {
    return gap.backward(embed_fc.backward(norm.backward(gembed)));
  }

  Tensor<T> embed(const Tensor<T>& images) {
    return embed_from_features(features(images));
  }
};

// ---------------------------------------------------------------------------
// Shared trunk for both extractors: log2(downsample_factor) upsampling stages,
// each preceded by one residual block (plain double-conv blocks when
// `plain` is set, for the cnn_replace variant).
// ---------------------------------------------------------------------------
template <class T>
struct ExtractorTrunk {
  bool plain = false;
  int out_ch = 0;
  std::vector<nn::ResidualBlock<T>> res;
  std::vector<nn::PlainBlock<T>> plain_blocks;
  std::vector<nn::Upsample2x<T>> up;
  std::vector<nn::ConvBnRelu<T>> post;

  ExtractorTrunk() = default;
  ExtractorTrunk(const ModelConfig& c, bool plain_) : plain(plain_) {
    int stages = c.encoder_stages();
    int ch = c.encoder_channels;
    for (int i = 0; i < stages; ++i) {
      if (plain)
        plain_blocks.emplace_back(ch);
      else
        res.emplace_back(ch);
      up.emplace_back();
      int next = std::max(8, ch >> 1);
      post.emplace_back(ch, next, 3, 1, 1);
      ch = next;
    }
    out_ch = ch;
  }

  void init(Rng& rng) {
    for (auto& r : res) r.init(rng);
    for (auto& p : plain_blocks) p.init(rng);
    for (auto& p : post) p.init(rng);
  }
  void set_training(bool t) {
    for (auto& r : res) r.set_training(t);
    for (auto& p : plain_blocks) p.set_training(t);
    for (auto& p : post) p.set_training(t);
  }
  void params(nn::ParamList<T>& out, const std::string& prefix) {
    for (std::size_t i = 0; i < up.size(); ++i) {
      if (plain)
        plain_blocks[i].params(out, prefix + ".block" + std::to_string(i));
      else
        res[i].params(out, prefix + ".block" + std::to_string(i));
      post[i].params(out, prefix + ".up" + std::to_string(i));
    }
  }

  Tensor<T> forward(const Tensor<T>& h) {
    Tensor<T> x = h;
    for (std::size_t i = 0; i < up.size(); ++i) {
      x = plain ? plain_blocks[i].forward(x) : res[i].forward(x);
      x = up[i].forward(x);
      x = post[i].forward(x);
    }
    return x;
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> g = gy;
    for (int i = int(up.size()) - 1; i >= 0; --i) {
      g = post[i].backward(g);
      g = up[i].backward(g);
      g = plain ? plain_blocks[i].backward(g) : res[i].backward(g);
    }
    return g;
  }
};

// ---------------------------------------------------------------------------
// AU feature map extractor (E_a): trunk + one 1x1 projection head per channel
// set (N AUs + background), sigmoid-activated 3-channel maps.
// Output layout: (B, 3*(N+1), H, W), channels [3k..3k+2] belong to map k.
// ---------------------------------------------------------------------------
template <class T>
struct FeatureMapExtractor {
  int n_heads = 0;
  ExtractorTrunk<T> trunk;
  std::vector<nn::Conv2d<T>> heads;
  std::vector<nn::Sigmoid<T>> acts;

  FeatureMapExtractor() = default;
  FeatureMapExtractor(const ModelConfig& c, bool plain) : n_heads(c.n_aus + 1), trunk(c, plain) {
    for (int k = 0; k < n_heads; ++k) heads.emplace_back(trunk.out_ch, 3, 1, 1, 0);
    acts.resize(n_heads);
  }

  void init(Rng& rng) {
    trunk.init(rng);
    for (auto& hd : heads) hd.init(rng);
  }
  void set_training(bool t) { trunk.set_training(t); }
  void params(nn::ParamList<T>& out, const std::string& prefix) {
    trunk.params(out, prefix);
    for (std::size_t k = 0; k < heads.size(); ++k)
      heads[k].params(out, prefix + ".head" + std::to_string(k));
  }

  Tensor<T> forward(const Tensor<T>& h) {
    Tensor<T> t = trunk.forward(h);
    Tensor<T> out(t.n, 3 * n_heads, t.h, t.w);
    for (int k = 0; k < n_heads; ++k) {
      Tensor<T> m = acts[k].forward(heads[k].forward(t));
      for (int bi = 0; bi < t.n; ++bi)
        for (int j = 0; j < 3; ++j)
          std::copy_n(&m.at(bi, j, 0, 0), std::size_t(t.h) * t.w,
                      &out.at(bi, 3 * k + j, 0, 0));
    }
    last_trunk_shape_ = {t.n, t.h, t.w};
    return out;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    auto [B, H, W] = last_trunk_shape_;
    Tensor<T> gtrunk(B, trunk.out_ch, H, W);
    for (int k = 0; k < n_heads; ++k) {
      Tensor<T> gm(B, 3, H, W);
      for (int bi = 0; bi < B; ++bi)
        for (int j = 0; j < 3; ++j)
          std::copy_n(&gy.at(bi, 3 * k + j, 0, 0), std::size_t(H) * W, &gm.at(bi, j, 0, 0));
      Tensor<T> g = heads[k].backward(acts[k].backward(gm));
      for (std::size_t i = 0; i < gtrunk.v.size(); ++i) gtrunk.v[i] += g.v[i];
    }
    return trunk.backward(gtrunk);
  }

 private:
  std::tuple<int, int, int> last_trunk_shape_{0, 0, 0};
};

// ---------------------------------------------------------------------------
// AU mask extractor (E_m): same trunk shape with single-channel heads and the
// configured activation. Output: (B, N+1, H, W).
// ---------------------------------------------------------------------------
template <class T>
struct MaskExtractor {
  int n_heads = 0;
  MaskActivation activation = MaskActivation::kSigmoid;
  ExtractorTrunk<T> trunk;
  std::vector<nn::Conv2d<T>> heads;
  nn::Sigmoid<T> sig;
  nn::TanhAct<T> tanh_act;
  nn::SoftmaxChannel<T> softmax;

  MaskExtractor() = default;
  explicit MaskExtractor(const ModelConfig& c)
      : n_heads(c.n_aus + 1), activation(c.mask_activation), trunk(c, false) {
    for (int k = 0; k < n_heads; ++k) heads.emplace_back(trunk.out_ch, 1, 1, 1, 0);
  }

  void init(Rng& rng) {
    trunk.init(rng);
    for (auto& hd : heads) hd.init(rng);
  }
  void set_training(bool t) { trunk.set_training(t); }
  void params(nn::ParamList<T>& out, const std::string& prefix) {
    trunk.params(out, prefix);
    for (std::size_t k = 0; k < heads.size(); ++k)
      heads[k].params(out, prefix + ".head" + std::to_string(k));
  }

  Tensor<T> forward(const Tensor<T>& h) {
    Tensor<T> t = trunk.forward(h);
    Tensor<T> logits(t.n, n_heads, t.h, t.w);
    for (int k = 0; k < n_heads; ++k) {
      Tensor<T> m = heads[k].forward(t);
      for (int bi = 0; bi < t.n; ++bi)
        std::copy_n(&m.at(bi, 0, 0, 0), std::size_t(t.h) * t.w, &logits.at(bi, k, 0, 0));
    }
    last_trunk_shape_ = {t.n, t.h, t.w};
    switch (activation) {
      case MaskActivation::kSigmoid: return sig.forward(logits);
      case MaskActivation::kSoftmax: return softmax.forward(logits);
      case MaskActivation::kTanh: return tanh_act.forward(logits);
      case MaskActivation::kNone: return logits;
    }
    return logits;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> glogits;
    switch (activation) {
      case MaskActivation::kSigmoid: glogits = sig.backward(gy); break;
      case MaskActivation::kSoftmax: glogits = softmax.backward(gy); break;
      case MaskActivation::kTanh: glogits = tanh_act.backward(gy); break;
      case MaskActivation::kNone: glogits = gy; break;
    }
    auto [B, H, W] = last_trunk_shape_;
    Tensor<T> gtrunk(B, trunk.out_ch, H, W);
    for (int k = 0; k < n_heads; ++k) {
      Tensor<T> gm(B, 1, H, W);
      for (int bi = 0; bi < B; ++bi)
        std::copy_n(&glogits.at(bi, k, 0, 0), std::size_t(H) * W, &gm.at(bi, 0, 0, 0));
      Tensor<T> g = heads[k].backward(gm);
      for (std::size_t i = 0; i < gtrunk.v.size(); ++i) gtrunk.v[i] += g.v[i];
    }
    return trunk.backward(gtrunk);
  }

 private:
  std::tuple<int, int, int> last_trunk_shape_{0, 0, 0};
};

// ---------------------------------------------------------------------------
// Masked features: components[k] = masks[k] (broadcast over 3 channels) * maps[k].
// Pure elementwise op, no parameters.
// ---------------------------------------------------------------------------
template <class T>
Tensor<T> apply_masks(const Tensor<T>& features, const Tensor<T>& masks) {
  if (features.c != 3 * masks.c)
    throw ConfigError("apply_masks: feature/mask channel count mismatch (" +
                      std::to_string(features.c) + " vs 3*" + std::to_string(masks.c) + ")");
  if (features.n != masks.n || features.h != masks.h || features.w != masks.w)
    throw ConfigError("apply_masks: shape mismatch " + features.shape_str() + " vs " +
                      masks.shape_str());
  Tensor<T> out(features.n, features.c, features.h, features.w);
  const std::size_t hw = std::size_t(features.h) * features.w;
  for (int bi = 0; bi < features.n; ++bi)
    for (int k = 0; k < masks.c; ++k) {
      const T* m = &masks.at(bi, k, 0, 0);
      for (int j = 0; j < 3; ++j) {
        const T* f = &features.at(bi, 3 * k + j, 0, 0);
        T* o = &out.at(bi, 3 * k + j, 0, 0);
        for (std::size_t i = 0; i < hw; ++i) o[i] = m[i] * f[i];
      }
    }
  return out;
}

template <class T>
void apply_masks_backward(const Tensor<T>& gout, const Tensor<T>& features,
                          const Tensor<T>& masks, Tensor<T>& gfeatures, Tensor<T>& gmasks) {
  gfeatures = Tensor<T>(features.n, features.c, features.h, features.w);
  gmasks = Tensor<T>(masks.n, masks.c, masks.h, masks.w);
  const std::size_t hw = std::size_t(features.h) * features.w;
  for (int bi = 0; bi < features.n; ++bi)
    for (int k = 0; k < masks.c; ++k) {
      const T* m = &masks.at(bi, k, 0, 0);
      T* gm = &gmasks.at(bi, k, 0, 0);
      for (int j = 0; j < 3; ++j) {
        const T* f = &features.at(bi, 3 * k + j, 0, 0);
        const T* go = &gout.at(bi, 3 * k + j, 0, 0);
        T* gf = &gfeatures.at(bi, 3 * k + j, 0, 0);
        for (std::size_t i = 0; i < hw; ++i) {
          gf[i] = go[i] * m[i];
          gm[i] += go[i] * f[i];
        }
      }
    }
}

// ---------------------------------------------------------------------------
// Reconstruction head D_r over the channel concatenation of all components.
// ---------------------------------------------------------------------------
template <class T>
struct Reconstructor {
  nn::Conv2d<T> conv1, conv2;
  nn::Relu<T> act;
  nn::Sigmoid<T> out_act;

  Reconstructor() = default;
  explicit Reconstructor(const ModelConfig& c)
      : conv1(3 * (c.n_aus + 1), 16, 3, 1, 1), conv2(16, 3, 3, 1, 1) {}

  void init(Rng& rng) {
    conv1.init(rng);
    conv2.init(rng);
  }
  void params(nn::ParamList<T>& out, const std::string& prefix) {
    conv1.params(out, prefix + ".conv1");
    conv2.params(out, prefix + ".conv2");
  }
  Tensor<T> forward(const Tensor<T>& components) {
    if (components.c != conv1.in_ch)
      throw ConfigError("reconstruct: expected " + std::to_string(conv1.in_ch) +
                        " channels (all components incl. background), got " +
                        std::to_string(components.c));
    return out_act.forward(conv2.forward(act.forward(conv1.forward(components))));
  }
  Tensor<T> backward(const Tensor<T>& gy) {
    return conv1.backward(act.backward(conv2.backward(out_act.backward(gy))));
  }
};

// ---------------------------------------------------------------------------
// Per-AU classifier: stride-2 conv(7)/BN/ELU blocks, GAP to the AU embedding,
// then a 1x1 projection to a single logit.
// ---------------------------------------------------------------------------
template <class T>
struct AuClassifier {
  std::vector<nn::Conv2d<T>> convs;
  std::vector<nn::BatchNorm2d<T>> bns;
  std::vector<nn::Elu<T>> acts;
  nn::GlobalAvgPool<T> gap;
  nn::Linear<T> fc;

  AuClassifier() = default;
  AuClassifier(int in_ch, int input_spatial) {
    auto ch = classifier_channels(input_spatial);
    int ic = in_ch;
    for (int oc : ch) {
      convs.emplace_back(ic, oc, 7, 2, 3);
      bns.emplace_back(oc);
      ic = oc;
    }
    acts.resize(convs.size());
    fc = nn::Linear<T>(ch.back(), 1);
  }

  void init(Rng& rng) {
    for (auto& c : convs) c.init(rng);
    fc.init(rng);
  }
  void set_training(bool t) {
    for (auto& b : bns) b.training = t;
  }
  void params(nn::ParamList<T>& out, const std::string& prefix) {
    for (std::size_t i = 0; i < convs.size(); ++i) {
      convs[i].params(out, prefix + ".block" + std::to_string(i) + ".conv");
      bns[i].params(out, prefix + ".block" + std::to_string(i) + ".bn");
    }
    fc.params(out, prefix + ".fc");
  }

  // Returns (embedding (B, 256), logit (B, 1)); probability = sigmoid(logit).
  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& component) {
    Tensor<T> x = component;
    for (std::size_t i = 0; i < convs.size(); ++i)
      x = acts[i].forward(bns[i].forward(convs[i].forward(x)));
    embedding_ = gap.forward(x);
    Tensor<T> logit = fc.forward(embedding_);
    return {embedding_, logit};
  }

  Tensor<T> backward(const Tensor<T>& glogit) {
    Tensor<T> g = gap.backward(fc.backward(glogit));
    for (int i = int(convs.size()) - 1; i >= 0; --i)
      g = convs[i].backward(bns[i].backward(acts[i].backward(g)));
    return g;
  }

  const Tensor<T>& last_embedding() const { return embedding_; }

 private:
  Tensor<T> embedding_;
};

// ---------------------------------------------------------------------------
// The full detector
// ---------------------------------------------------------------------------
template <class T>
struct ModelOutput {
  Tensor<T> h;           // (B, C, S, S)
  Tensor<T> features;    // (B, 3*(N+1), H, W); empty for no_lam
  Tensor<T> masks;       // (B, N+1, H, W); empty unless variant has E_m
  Tensor<T> components;  // classifier/reconstruction input; empty for no_lam
  Tensor<T> recon;       // (B, 3, H, W); empty for no_lam
  Tensor<T> logits;      // (B, N)
  Tensor<T> probs;       // (B, N)
  Tensor<T> embeddings;  // (B, N, 256, 1)

  bool has_masks() const { return masks.numel() > 0; }
  bool has_recon() const { return recon.numel() > 0; }
};

template <class T>
struct AuNet {
  ModelConfig cfg;
  GlobalEncoder<T> encoder;
  FeatureMapExtractor<T> feature_extractor;
  MaskExtractor<T> mask_extractor;
  Reconstructor<T> reconstructor;
  std::vector<AuClassifier<T>> classifiers;

  AuNet() = default;
  explicit AuNet(const ModelConfig& c) : cfg(c) {
    cfg.validate();
    encoder = GlobalEncoder<T>(cfg);
    const bool lam = cfg.variant != Variant::kNoLam;
    if (lam) {
      feature_extractor = FeatureMapExtractor<T>(cfg, cfg.variant == Variant::kCnnReplace);
      reconstructor = Reconstructor<T>(cfg);
      if (has_mask_extractor()) mask_extractor = MaskExtractor<T>(cfg);
    }
    for (int k = 0; k < cfg.n_aus; ++k) {
      if (lam)
        classifiers.emplace_back(3, cfg.image_size);
      else
        classifiers.emplace_back(cfg.encoder_channels, cfg.encoder_size());
    }
  }

  bool has_lam() const { return cfg.variant != Variant::kNoLam; }
  bool has_mask_extractor() const {
    return cfg.variant == Variant::kFull || cfg.variant == Variant::kCnnReplace;
  }

  void init(std::uint64_t seed) {
    Rng rng = Rng::stream(seed, 0x1417);
    encoder.init(rng);
    if (has_lam()) {
      feature_extractor.init(rng);
      if (has_mask_extractor()) mask_extractor.init(rng);
      reconstructor.init(rng);
    }
    for (auto& c : classifiers) c.init(rng);
  }

  void set_training(bool t) {
    encoder.set_training(t);
    if (has_lam()) {
      feature_extractor.set_training(t);
      if (has_mask_extractor()) mask_extractor.set_training(t);
    }
    for (auto& c : classifiers) c.set_training(t);
  }

  nn::ParamList<T> params() {
    nn::ParamList<T> out;
    encoder.params(out, "gee");
    if (has_lam()) {
      feature_extractor.params(out, "ea");
      if (has_mask_extractor()) mask_extractor.params(out, "em");
      reconstructor.params(out, "dr");
    }
    for (std::size_t k = 0; k < classifiers.size(); ++k)
      classifiers[k].params(out, "clf" + std::to_string(k));
    return out;
  }

  void zero_grad() {
    for (auto& p : params())
      if (p.grad) p.grad->zero();
  }

  ModelOutput<T> forward(const Tensor<T>& images) {
    ModelOutput<T> out;
    out.h = encoder.features(images);
    const int B = images.n, N = cfg.n_aus;
    out.logits = Tensor<T>(B, N, 1, 1);
    out.probs = Tensor<T>(B, N, 1, 1);
    out.embeddings = Tensor<T>(B, N, kAuEmbedDim, 1);
    if (has_lam()) {
      out.features = feature_extractor.forward(out.h);
      if (has_mask_extractor()) {
        out.masks = mask_extractor.forward(out.h);
        out.components = apply_masks(out.features, out.masks);
      } else {
        out.components = out.features;
      }
      out.recon = reconstructor.forward(out.components);
      for (int k = 0; k < N; ++k) {
        Tensor<T> comp(B, 3, cfg.image_size, cfg.image_size);
        for (int bi = 0; bi < B; ++bi)
          for (int j = 0; j < 3; ++j)
            std::copy_n(&out.components.at(bi, 3 * k + j, 0, 0),
                        std::size_t(cfg.image_size) * cfg.image_size,
                        &comp.at(bi, j, 0, 0));
        auto [emb, logit] = classifiers[k].forward(comp);
        for (int bi = 0; bi < B; ++bi) {
          out.logits.at(bi, k) = logit.at(bi, 0);
          out.probs.at(bi, k) = nn::sigmoid_scalar(logit.at(bi, 0));
          for (int e = 0; e < kAuEmbedDim; ++e)
            out.embeddings.at(bi, k, e, 0) = emb.at(bi, e, 0, 0);
        }
      }
    } else {
      for (int k = 0; k < N; ++k) {
        auto [emb, logit] = classifiers[k].forward(out.h);
        for (int bi = 0; bi < B; ++bi) {
          out.logits.at(bi, k) = logit.at(bi, 0);
          out.probs.at(bi, k) = nn::sigmoid_scalar(logit.at(bi, 0));
          for (int e = 0; e < kAuEmbedDim; ++e)
            out.embeddings.at(bi, k, e, 0) = emb.at(bi, e, 0, 0);
        }
      }
    }
    return out;
  }

  // Backpropagates d(loss)/d(logits) and optionally d(loss)/d(recon) through
  // the whole network, accumulating parameter gradients.
  void backward(const ModelOutput<T>& out, const Tensor<T>& glogits,
                const Tensor<T>& grecon) {
    const int B = glogits.n, N = cfg.n_aus, H = cfg.image_size;
    if (has_lam()) {
      Tensor<T> gcomponents(B, 3 * (N + 1), H, H);
      for (int k = 0; k < N; ++k) {
        Tensor<T> glogit(B, 1, 1, 1);
        for (int bi = 0; bi < B; ++bi) glogit.at(bi, 0) = glogits.at(bi, k);
        Tensor<T> gcomp = classifiers[k].backward(glogit);
        for (int bi = 0; bi < B; ++bi)
          for (int j = 0; j < 3; ++j) {
            const T* src = &gcomp.at(bi, j, 0, 0);
            T* dst = &gcomponents.at(bi, 3 * k + j, 0, 0);
            for (std::size_t i = 0; i < std::size_t(H) * H; ++i) dst[i] += src[i];
          }
      }
      if (grecon.numel() > 0) {
        Tensor<T> g = reconstructor.backward(grecon);
        for (std::size_t i = 0; i < gcomponents.v.size(); ++i) gcomponents.v[i] += g.v[i];
      }
      Tensor<T> gh;
      if (has_mask_extractor()) {
        Tensor<T> gfeatures, gmasks;
        apply_masks_backward(gcomponents, out.features, out.masks, gfeatures, gmasks);
        gh = feature_extractor.backward(gfeatures);
        Tensor<T> gh2 = mask_extractor.backward(gmasks);
        for (std::size_t i = 0; i < gh.v.size(); ++i) gh.v[i] += gh2.v[i];
      } else {
        gh = feature_extractor.backward(gcomponents);
      }
      encoder.features_backward(gh);
    } else {
      Tensor<T> gh(B, cfg.encoder_channels, cfg.encoder_size(), cfg.encoder_size());
      for (int k = 0; k < N; ++k) {
        Tensor<T> glogit(B, 1, 1, 1);
        for (int bi = 0; bi < B; ++bi) glogit.at(bi, 0) = glogits.at(bi, k);
        Tensor<T> g = classifiers[k].backward(glogit);
        for (std::size_t i = 0; i < gh.v.size(); ++i) gh.v[i] += g.v[i];
      }
      encoder.features_backward(gh);
    }
  }
};

}  // namespace aunet
