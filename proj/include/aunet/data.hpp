#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aunet/png_io.hpp"
#include "aunet/rng.hpp"
#include "aunet/tensor.hpp"

namespace aunet {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// AU-labelled dataset: disk layout
//   root/images/<subject>/<frame>.png
//   root/labels.csv   header: subject,frame,<AU name>...
//   root/triplets.csv header: img_a,img_b,img_c,odd  (paths relative to root/images)
// ---------------------------------------------------------------------------
template <class T>
struct AuDataset {
  struct Sample {
    std::string subject;
    std::string frame;
    std::string path;                  // disk-backed when non-empty
    std::shared_ptr<Tensor<T>> image;  // in-memory otherwise, (1,3,H,W)
    std::vector<int> labels;
  };

  std::vector<Sample> samples;
  std::vector<std::string> au_names;
  int image_size = 0;

  int n_aus() const { return int(au_names.size()); }

  Tensor<T> load_image(std::size_t i) const {
    const Sample& s = samples.at(i);
    if (s.image) return *s.image;
    return rgb8_to_tensor<T>(read_png_rgb8(s.path));
  }

  std::vector<std::string> subjects() const {
    std::set<std::string> set;
    for (const auto& s : samples) set.insert(s.subject);
    return {set.begin(), set.end()};
  }
};

// DISFA-style intensity binarization: 0 and 1 are absence, 2..5 presence.
inline int binarize_intensity(int v) {
  if (v < 0 || v > 5)
    throw DataError("intensity label " + std::to_string(v) + " outside 0..5");
  return v <= 1 ? 0 : 1;
}

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline int parse_int_field(const std::string& s, const std::string& context) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("malformed value '" + s + "' in " + context);
  }
}
}  // namespace detail

template <class T>
AuDataset<T> load_au_dataset(const std::string& root, bool intensity_mode) {
  fs::path rp(root);
  std::ifstream f(rp / "labels.csv");
  if (!f) throw DataError("cannot open labels file '" + (rp / "labels.csv").string() + "'");
  std::string line;
  if (!std::getline(f, line))
    throw DataError("no samples: labels file '" + (rp / "labels.csv").string() + "' is empty");
  auto header = detail::split_csv_line(line);
  if (header.size() < 3 || header[0] != "subject" || header[1] != "frame")
    throw DataError("labels header must be 'subject,frame,<AU name>...'");
  AuDataset<T> ds;
  ds.au_names.assign(header.begin() + 2, header.end());
  const std::size_t n = ds.au_names.size();
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != n + 2)
      throw DataError("labels row " + std::to_string(lineno) + " has " +
                      std::to_string(fields.size()) + " columns, expected " +
                      std::to_string(n + 2));
    typename AuDataset<T>::Sample s;
    s.subject = fields[0];
    s.frame = fields[1];
    if (s.subject.empty())
      throw DataError("labels row " + std::to_string(lineno) + ": empty subject id");
    s.path = (rp / "images" / s.subject / (s.frame + ".png")).string();
    if (!fs::exists(s.path))
      throw DataError("missing image file '" + s.path + "' (labels row " +
                      std::to_string(lineno) + ")");
    for (std::size_t i = 0; i < n; ++i) {
      int v = detail::parse_int_field(fields[i + 2],
                                      "labels row " + std::to_string(lineno));
      if (intensity_mode) {
        s.labels.push_back(binarize_intensity(v));
      } else {
        if (v != 0 && v != 1)
          throw DataError("labels row " + std::to_string(lineno) + ": value " +
                          std::to_string(v) + " is not a 0/1 occurrence label");
        s.labels.push_back(v);
      }
    }
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty())
    throw DataError("no samples in labels file '" + (rp / "labels.csv").string() + "'");
  Rgb8Image first = read_png_rgb8(ds.samples.front().path);
  ds.image_size = first.width;
  return ds;
}

// ---------------------------------------------------------------------------
// Subject-exclusive folds: seeded shuffle then round-robin test assignment,
// so fold sizes differ by at most one.
// ---------------------------------------------------------------------------
struct Fold {
  std::vector<std::string> train_subjects;
  std::vector<std::string> test_subjects;
};

inline std::vector<Fold> make_folds(std::vector<std::string> subjects, int k,
                                    std::uint64_t seed) {
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (k < 2) throw ConfigError("make_folds: k must be >= 2");
  if (int(subjects.size()) < k)
    throw ConfigError("make_folds: need at least k=" + std::to_string(k) +
                      " subjects, got " + std::to_string(subjects.size()));
  Rng rng = Rng::stream(seed, 0xF01D);
  rng.shuffle(subjects.begin(), subjects.end());
  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < subjects.size(); ++i)
    folds[i % k].test_subjects.push_back(subjects[i]);
  for (int fi = 0; fi < k; ++fi) {
    std::set<std::string> test(folds[fi].test_subjects.begin(),
                               folds[fi].test_subjects.end());
    for (const auto& s : subjects)
      if (!test.count(s)) folds[fi].train_subjects.push_back(s);
    std::sort(folds[fi].train_subjects.begin(), folds[fi].train_subjects.end());
    std::sort(folds[fi].test_subjects.begin(), folds[fi].test_subjects.end());
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Synthetic generator: a deterministic stand-in face. Every sample is
//   image = identity base pattern + sum_k intensity_k * AU template_k + noise
// clipped to [0,1]. AU templates are oriented stripe patches on pairwise
// disjoint rectangles occupying < 50% of the canvas; binary labels are
// intensity >= 0.5. The identity base pattern is a smooth field plus a few
// identity-keyed blobs placed outside the AU rectangles, so recognising AUs
// on held-out identities requires looking at the right regions.
// ---------------------------------------------------------------------------
struct SynthConfig {
  int n_aus = 4;
  int image_size = 64;
  int n_identities = 9;
  double noise_std = 0.02;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_aus < 1) throw ConfigError("synth: n_aus must be >= 1");
    if (n_identities < 1) throw ConfigError("synth: n_identities must be >= 1");
    int rows = int(std::floor(std::sqrt(double(n_aus))));
    int cols = (n_aus + rows - 1) / rows;
    if (image_size / rows / 2 < 2 || image_size / cols / 2 < 2)
      throw ConfigError("synth: image_size too small for n_aus template rectangles");
    if (noise_std < 0) throw ConfigError("synth: noise_std must be >= 0");
  }
};

struct Rect {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // half-open
  bool contains(int y, int x) const { return y >= y0 && y < y1 && x >= x0 && x < x1; }
  bool overlaps(const Rect& o) const {
    return y0 < o.y1 && o.y0 < y1 && x0 < o.x1 && o.x0 < x1;
  }
};

inline std::vector<Rect> synth_region_rects(const SynthConfig& cfg) {
  cfg.validate();
  int rows = int(std::floor(std::sqrt(double(cfg.n_aus))));
  int cols = (cfg.n_aus + rows - 1) / rows;
  std::vector<Rect> rects;
  for (int k = 0; k < cfg.n_aus; ++k) {
    int r = k / cols, c = k % cols;
    int cell_h = cfg.image_size / rows, cell_w = cfg.image_size / cols;
    Rect rect;
    rect.y0 = r * cell_h + cell_h / 4;
    rect.y1 = rect.y0 + cell_h / 2;
    rect.x0 = c * cell_w + cell_w / 4;
    rect.x1 = rect.x0 + cell_w / 2;
    rects.push_back(rect);
  }
  return rects;
}

// Binary ground-truth region maps, (N, 1, H, W).
template <class T>
Tensor<T> synth_region_maps(const SynthConfig& cfg) {
  auto rects = synth_region_rects(cfg);
  Tensor<T> maps(cfg.n_aus, 1, cfg.image_size, cfg.image_size);
  for (int k = 0; k < cfg.n_aus; ++k)
    for (int y = rects[k].y0; y < rects[k].y1; ++y)
      for (int x = rects[k].x0; x < rects[k].x1; ++x) maps.at(k, 0, y, x) = T(1);
  return maps;
}

template <class T>
struct SynthSample {
  std::string subject;
  std::string frame;
  Tensor<T> image;  // (1,3,H,W)
  std::vector<int> labels;
  std::vector<double> intensities;
};

namespace detail {

struct IdentityPattern {
  double fx = 1, fy = 1, px = 0, py = 0;
  std::vector<Rect> blobs;
  std::vector<double> blob_values;  // one amplitude pattern seed per blob
};

inline IdentityPattern identity_pattern(const SynthConfig& cfg, int identity) {
  Rng rng = Rng::stream(cfg.seed, 0x1DE0000ULL + std::uint64_t(identity));
  IdentityPattern p;
  p.fx = 1.0 + double(rng.below(3));
  p.fy = 1.0 + double(rng.below(3));
  p.px = rng.uniform();
  p.py = rng.uniform();
  auto rects = synth_region_rects(cfg);
  const int H = cfg.image_size;
  const int bs = std::max(4, H / 8);
  for (int j = 0; j < 3; ++j) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      Rect b;
      b.y0 = int(rng.below(std::uint64_t(H - bs)));
      b.x0 = int(rng.below(std::uint64_t(H - bs)));
      b.y1 = b.y0 + bs;
      b.x1 = b.x0 + bs;
      bool clash = false;
      for (const auto& r : rects)
        if (b.overlaps(r)) clash = true;
      if (!clash) {
        p.blobs.push_back(b);
        p.blob_values.push_back(rng.uniform(0.2, 0.4));
        break;
      }
    }
  }
  return p;
}

// AU template value at (y, x), zero outside the rectangle; strictly positive
// inside it so region maps are exactly the support.
inline double template_value(const Rect& r, int k, int n_aus, int y, int x) {
  if (!r.contains(y, x)) return 0.0;
  double theta = 3.14159265358979323846 * double(k) / double(std::max(1, n_aus));
  double u = std::cos(theta) * (x - r.x0) + std::sin(theta) * (y - r.y0);
  return 0.5 * (0.6 + 0.4 * std::sin(2.0 * 3.14159265358979323846 * u / 6.0));
}

template <class T>
SynthSample<T> make_sample(const SynthConfig& cfg, int identity, Rng& rng,
                           const std::vector<Rect>& rects) {
  const int H = cfg.image_size;
  SynthSample<T> s;
  s.subject = "id" + std::to_string(identity);
  s.intensities.resize(cfg.n_aus);
  for (auto& a : s.intensities) a = rng.uniform();
  for (double a : s.intensities) s.labels.push_back(a >= 0.5 ? 1 : 0);
  IdentityPattern idp = identity_pattern(cfg, identity);
  s.image = Tensor<T>(1, 3, H, H);
  std::vector<double> plane(std::size_t(H) * H);
  constexpr double kTau = 6.283185307179586476925286766559;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < H; ++x) {
      double v = 0.22 + 0.10 * std::sin(kTau * (idp.fx * x / double(H) + idp.px)) *
                            std::sin(kTau * (idp.fy * y / double(H) + idp.py));
      for (std::size_t j = 0; j < idp.blobs.size(); ++j) {
        const Rect& b = idp.blobs[j];
        if (b.contains(y, x)) {
          double checker = ((y - b.y0) / 2 + (x - b.x0) / 2) % 2 == 0 ? 1.0 : 0.45;
          v += idp.blob_values[j] * checker;
        }
      }
      for (int k = 0; k < cfg.n_aus; ++k)
        v += s.intensities[k] * template_value(rects[k], k, cfg.n_aus, y, x);
      plane[std::size_t(y) * H + x] = v;
    }
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < H; ++x) {
        double v = plane[std::size_t(y) * H + x];
        if (cfg.noise_std > 0) v += cfg.noise_std * rng.normal();
        s.image.at(0, c, y, x) = T(std::clamp(v, 0.0, 1.0));
      }
  return s;
}

}  // namespace detail

template <class T>
std::vector<SynthSample<T>> synth_generate(const SynthConfig& cfg, int n_samples) {
  cfg.validate();
  auto rects = synth_region_rects(cfg);
  std::vector<SynthSample<T>> out;
  out.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    Rng rng = Rng::stream(cfg.seed, 0x5A3E0000ULL + std::uint64_t(i));
    auto s = detail::make_sample<T>(cfg, i % cfg.n_identities, rng, rects);
    char frame[16];
    std::snprintf(frame, sizeof frame, "f%06d", i);
    s.frame = frame;
    out.push_back(std::move(s));
  }
  return out;
}

template <class T>
AuDataset<T> synth_to_dataset(const SynthConfig& cfg, std::vector<SynthSample<T>> samples) {
  AuDataset<T> ds;
  for (int k = 0; k < cfg.n_aus; ++k) ds.au_names.push_back("AU" + std::to_string(k + 1));
  ds.image_size = cfg.image_size;
  for (auto& s : samples) {
    typename AuDataset<T>::Sample d;
    d.subject = s.subject;
    d.frame = s.frame;
    d.image = std::make_shared<Tensor<T>>(std::move(s.image));
    d.labels = s.labels;
    ds.samples.push_back(std::move(d));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Triplets: three samples with random identities; the odd one (most different
// expression) is the sample absent from the closest pair of intensity vectors.
// Distance ties within 1e-9 are resampled.
// ---------------------------------------------------------------------------
struct TripletRecord {
  std::string img_a, img_b, img_c;  // refs, relative to root/images for disk sets
  int odd = 0;                      // index in {0,1,2}
};

template <class T>
struct SynthTripletSet {
  std::vector<TripletRecord> records;       // refs are indices into `images`
  std::vector<SynthSample<T>> images;       // 3 per record, in order
};

namespace detail {
inline double intensity_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}
}  // namespace detail

template <class T>
SynthTripletSet<T> synth_triplets(const SynthConfig& cfg, int n_triplets,
                                  std::uint64_t seed) {
  cfg.validate();
  auto rects = synth_region_rects(cfg);
  SynthTripletSet<T> out;
  for (int t = 0; t < n_triplets; ++t) {
    Rng rng = Rng::stream(seed, 0x7121A000ULL + std::uint64_t(t));
    bool done = false;
    for (int attempt = 0; attempt < 100 && !done; ++attempt) {
      SynthSample<T> legs[3];
      for (auto& leg : legs) {
        int identity = int(rng.below(std::uint64_t(cfg.n_identities)));
        leg = detail::make_sample<T>(cfg, identity, rng, rects);
      }
      double dab = detail::intensity_dist(legs[0].intensities, legs[1].intensities);
      double dac = detail::intensity_dist(legs[0].intensities, legs[2].intensities);
      double dbc = detail::intensity_dist(legs[1].intensities, legs[2].intensities);
      double lo = std::min({dab, dac, dbc});
      double second = std::min({std::max(dab, dac), std::max(dab, dbc), std::max(dac, dbc)});
      if (second - lo < 1e-9) continue;  // tie: resample
      TripletRecord rec;
      rec.odd = lo == dab ? 2 : (lo == dac ? 1 : 0);
      int base = int(out.images.size());
      rec.img_a = std::to_string(base);
      rec.img_b = std::to_string(base + 1);
      rec.img_c = std::to_string(base + 2);
      for (int j = 0; j < 3; ++j) {
        char frame[24];
        std::snprintf(frame, sizeof frame, "t%06d_%c", t, "abc"[j]);
        legs[j].frame = frame;
        out.images.push_back(std::move(legs[j]));
      }
      out.records.push_back(rec);
      done = true;
    }
    if (!done)
      throw DataError("synth_triplets: tie resampling exceeded 100 attempts for triplet " +
                      std::to_string(t));
  }
  return out;
}

// Disk-backed triplets (root/triplets.csv + PNGs under root/images).
template <class T>
struct TripletImages {
  std::vector<TripletRecord> records;
  std::vector<std::string> refs;  // refs[i] names images[i]
  std::vector<Tensor<T>> images;
};

template <class T>
TripletImages<T> load_triplets(const std::string& root) {
  fs::path rp(root);
  std::ifstream f(rp / "triplets.csv");
  if (!f)
    throw DataError("cannot open triplets file '" + (rp / "triplets.csv").string() + "'");
  std::string line;
  if (!std::getline(f, line))
    throw DataError("triplets file '" + (rp / "triplets.csv").string() + "' is empty");
  auto header = detail::split_csv_line(line);
  if (header != std::vector<std::string>{"img_a", "img_b", "img_c", "odd"})
    throw DataError("triplets header must be 'img_a,img_b,img_c,odd'");
  TripletImages<T> out;
  std::vector<std::string> pending;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != 4)
      throw DataError("triplets row " + std::to_string(lineno) + " needs 4 columns");
    TripletRecord rec;
    rec.img_a = fields[0];
    rec.img_b = fields[1];
    rec.img_c = fields[2];
    rec.odd = detail::parse_int_field(fields[3], "triplets row " + std::to_string(lineno));
    if (rec.odd < 0 || rec.odd > 2)
      throw DataError("triplets row " + std::to_string(lineno) + ": odd must be 0..2");
    if (rec.img_a == rec.img_b || rec.img_a == rec.img_c || rec.img_b == rec.img_c)
      throw DataError("triplets row " + std::to_string(lineno) + ": refs must be distinct");
    out.records.push_back(rec);
    pending.push_back(fields[0]);
    pending.push_back(fields[1]);
    pending.push_back(fields[2]);
  }
  if (out.records.empty()) throw DataError("no triplets in '" + root + "'");
  // Load each distinct ref once, in first-appearance order.
  for (const auto& ref : pending) {
    if (std::find(out.refs.begin(), out.refs.end(), ref) != out.refs.end()) continue;
    fs::path p = rp / "images" / ref;
    if (!fs::exists(p)) throw DataError("missing triplet image '" + p.string() + "'");
    out.refs.push_back(ref);
    out.images.push_back(rgb8_to_tensor<T>(read_png_rgb8(p.string())));
  }
  return out;
}

}  // namespace aunet
