// Loss functions against hand-computed values and independent brute-force
// reimplementations. The oracles here are written from the loss definitions
// directly and never touch the library internals.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "aunet/losses.hpp"
#include "aunet/rng.hpp"

using namespace aunet;
using Catch::Approx;

namespace oracle {

// Plain-loop reimplementations, double precision.
double triplet(const std::vector<double>& a, const std::vector<double>& p,
               const std::vector<double>& n, double m) {
  auto d2 = [](const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0;
    for (size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return s;
  };
  double t1 = d2(a, p) - d2(a, n) + m;
  double t2 = d2(a, p) - d2(p, n) + m;
  return (t1 > 0 ? t1 : 0) + (t2 > 0 ? t2 : 0);
}

double bce(const std::vector<double>& label, const std::vector<double>& prob) {
  double s = 0;
  for (size_t i = 0; i < label.size(); ++i) {
    double q = prob[i];
    if (q < 1e-7) q = 1e-7;
    if (q > 1.0 - 1e-7) q = 1.0 - 1e-7;
    s -= label[i] * std::log(q) + (1.0 - label[i]) * std::log(1.0 - q);
  }
  return s;
}

double mse_half(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return 0.5 * s;
}

}  // namespace oracle

TEST_CASE("triplet loss hand examples", "[losses]") {
  // identical anchor/positive with a distant negative: both hinges inactive
  std::vector<double> a = {0.3, -0.2}, n = {2.0, 2.0};
  CHECK(triplet_loss<double>(a, a, n, 0.5) == 0.0);

  // direct evaluation: d(A,P)=1, d(A,N)=1.21, d(P,N)=0.01, m=0.5
  std::vector<double> e_a = {0.0, 0.0}, e_p = {1.0, 0.0}, e_n = {1.1, 0.0};
  CHECK(triplet_loss<double>(e_a, e_p, e_n, 0.5) == Approx(1.78).epsilon(1e-12));

  // symmetric under swapping anchor and positive
  CHECK(triplet_loss<double>(e_p, e_a, e_n, 0.5) ==
        Approx(triplet_loss<double>(e_a, e_p, e_n, 0.5)).epsilon(1e-15));
}

TEST_CASE("triplet loss vs brute force on random inputs", "[losses]") {
  Rng rng(101);
  for (int it = 0; it < 1000; ++it) {
    size_t d = 2 + rng.below(14);
    std::vector<double> a(d), p(d), n(d);
    for (auto& x : a) x = rng.uniform(-2, 2);
    for (auto& x : p) x = rng.uniform(-2, 2);
    for (auto& x : n) x = rng.uniform(-2, 2);
    double m = rng.uniform(0, 1);
    double got = triplet_loss<double>(a, p, n, m);
    double want = oracle::triplet(a, p, n, m);
    REQUIRE(std::abs(got - want) <= 1e-12);
    REQUIRE(got >= 0.0);
  }
}

TEST_CASE("triplet loss invariant under orthogonal rotation", "[losses]") {
  Rng rng(7);
  for (int it = 0; it < 50; ++it) {
    std::vector<double> a(2), p(2), n(2);
    for (auto& x : a) x = rng.uniform(-1, 1);
    for (auto& x : p) x = rng.uniform(-1, 1);
    for (auto& x : n) x = rng.uniform(-1, 1);
    double th = rng.uniform(0, 6.28);
    auto rot = [&](const std::vector<double>& v) {
      return std::vector<double>{v[0] * std::cos(th) - v[1] * std::sin(th),
                                 v[0] * std::sin(th) + v[1] * std::cos(th)};
    };
    double base = triplet_loss<double>(a, p, n, 0.3);
    double rotated = triplet_loss<double>(rot(a), rot(p), rot(n), 0.3);
    REQUIRE(rotated == Approx(base).margin(1e-12));
  }
}

TEST_CASE("triplet loss gradient matches finite differences", "[losses]") {
  Rng rng(55);
  int checked = 0;
  while (checked < 20) {
    std::vector<double> a(4), p(4), n(4);
    for (auto& x : a) x = rng.uniform(-1, 1);
    for (auto& x : p) x = rng.uniform(-1, 1);
    for (auto& x : n) x = rng.uniform(-1, 1);
    double m = 0.4;
    // stay away from the hinge kinks
    auto d2 = [](const std::vector<double>& x, const std::vector<double>& y) {
      double s = 0;
      for (size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
      return s;
    };
    if (std::abs(d2(a, p) - d2(a, n) + m) < 0.05) continue;
    if (std::abs(d2(a, p) - d2(p, n) + m) < 0.05) continue;
    ++checked;
    std::vector<double> ga, gp, gn;
    triplet_loss_grad<double>(a, p, n, m, ga, gp, gn);
    const double eps = 1e-6;
    auto check_one = [&](std::vector<double>& v, const std::vector<double>& g) {
      for (size_t i = 0; i < v.size(); ++i) {
        double keep = v[i];
        v[i] = keep + eps;
        double f1 = triplet_loss<double>(a, p, n, m);
        v[i] = keep - eps;
        double f0 = triplet_loss<double>(a, p, n, m);
        v[i] = keep;
        double num = (f1 - f0) / (2 * eps);
        double rel = std::abs(num - g[i]) / std::max({1.0, std::abs(num), std::abs(g[i])});
        REQUIRE(rel < 1e-6);
      }
    };
    check_one(a, ga);
    check_one(p, gp);
    check_one(n, gn);
  }
}

TEST_CASE("au loss hand examples", "[losses]") {
  CHECK(au_loss<double>({1, 0}, {1.0 - 1e-7, 1e-7}) == Approx(2e-7).margin(1e-9));
  CHECK(au_loss<double>({1}, {0.5}) == Approx(0.6931471805599453).epsilon(1e-12));
  CHECK(au_loss<double>({1, 0, 1}, {0.9, 0.2, 0.8}) ==
        Approx(-(std::log(0.9) + std::log(0.8) + std::log(0.8))).epsilon(1e-12));
  CHECK(au_loss<double>({1, 0, 1}, {0.9, 0.2, 0.8}) == Approx(0.551648).margin(1e-6));
  CHECK_THROWS_AS(au_loss<double>({1, 0}, {0.5}), ConfigError);
  CHECK_THROWS_AS(au_loss<double>({0.5}, {0.5}), ConfigError);
}

TEST_CASE("au loss vs brute force on random inputs", "[losses]") {
  Rng rng(202);
  for (int it = 0; it < 1000; ++it) {
    size_t d = 1 + rng.below(12);
    std::vector<double> label(d), prob(d);
    for (auto& x : label) x = rng.below(2) ? 1.0 : 0.0;
    for (auto& x : prob) x = rng.uniform(1e-6, 1.0 - 1e-6);
    double got = au_loss<double>(label, prob);
    REQUIRE(std::abs(got - oracle::bce(label, prob)) <= 1e-12);
    REQUIRE(got >= 0.0);
  }
}

TEST_CASE("au loss minimized at the label", "[losses]") {
  // 1-D grid slice: the loss at prob=p is below the loss anywhere else
  for (double label : {0.0, 1.0}) {
    double best = 1e300;
    double best_q = -1;
    for (int i = 1; i < 200; ++i) {
      double q = i / 200.0;
      double l = au_loss<double>({label}, {q});
      if (l < best) {
        best = l;
        best_q = q;
      }
    }
    CHECK(std::abs(best_q - label) <= 1.0 / 200.0 + 1e-12);
  }
}

TEST_CASE("au loss gradient matches finite differences", "[losses]") {
  Rng rng(77);
  for (int it = 0; it < 100; ++it) {
    std::vector<double> label = {double(rng.below(2)), double(rng.below(2)), 1.0};
    std::vector<double> prob = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95),
                                rng.uniform(0.05, 0.95)};
    auto g = au_loss_grad<double>(label, prob);
    const double eps = 1e-7;
    for (size_t i = 0; i < prob.size(); ++i) {
      double keep = prob[i];
      prob[i] = keep + eps;
      double f1 = au_loss<double>(label, prob);
      prob[i] = keep - eps;
      double f0 = au_loss<double>(label, prob);
      prob[i] = keep;
      double num = (f1 - f0) / (2 * eps);
      double rel = std::abs(num - g[i]) / std::max({1.0, std::abs(num), std::abs(g[i])});
      REQUIRE(rel < 1e-6);
    }
  }
}

TEST_CASE("reconstruction loss hand examples", "[losses]") {
  std::vector<double> x = {0.25, 0.5, 0.75};
  CHECK(rec_loss<double>(x, x) == 0.0);
  CHECK(rec_loss<double>(std::vector<double>{1, 0, 0}, std::vector<double>{0, 0, 0}) ==
        Approx(0.5).epsilon(1e-15));
  // per-pixel squared diffs 1 and 4 -> 0.5*(1+4)
  CHECK(rec_loss<double>(std::vector<double>{1, 2}, std::vector<double>{0, 0}) ==
        Approx(2.5).epsilon(1e-15));
}

TEST_CASE("reconstruction loss properties and brute force", "[losses]") {
  Rng rng(303);
  for (int it = 0; it < 1000; ++it) {
    size_t d = 1 + rng.below(30);
    std::vector<double> a(d), b(d);
    for (auto& x : a) x = rng.uniform(-1, 1);
    for (auto& x : b) x = rng.uniform(-1, 1);
    double got = rec_loss<double>(a, b);
    REQUIRE(std::abs(got - oracle::mse_half(a, b)) <= 1e-12);
    REQUIRE(got == rec_loss<double>(b, a));
    // quadratic scaling
    double alpha = rng.uniform(0.1, 3.0);
    std::vector<double> sa = a, sb = b;
    for (auto& x : sa) x *= alpha;
    for (auto& x : sb) x *= alpha;
    REQUIRE(rec_loss<double>(sa, sb) == Approx(alpha * alpha * got).epsilon(1e-12));
  }
}

TEST_CASE("total loss combination", "[losses]") {
  auto r = total_loss<double>(1.0, 100.0, 0.001);
  CHECK(r.total == Approx(1.1).epsilon(1e-15));
  CHECK(total_loss<double>(0.7, 3.0, 0.0).total == 0.7);
  CHECK(total_loss<double>(0.0, 0.0, 0.001).total == 0.0);
  // exact same-precision arithmetic, no hidden averaging
  Rng rng(404);
  for (int it = 0; it < 200; ++it) {
    double au = rng.uniform(0, 5), rec = rng.uniform(0, 500), lam = rng.uniform(0, 0.1);
    auto rr = total_loss<double>(au, rec, lam);
    REQUIRE(rr.total == au + lam * rec);
  }
  CHECK_THROWS_AS(total_loss<double>(-0.1, 0.0, 0.001), ConfigError);
}
