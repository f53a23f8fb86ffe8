#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "isoface/gradcheck.hpp"
#include "isoface/loss.hpp"

using namespace isoface;

namespace {

Tensor random_vec(std::size_t n, std::uint64_t seed, double lo = -1.0,
                  double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t({n});
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

// Random orthogonal matrix by Gram-Schmidt on a random square matrix.
std::vector<Tensor> random_rotation(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  std::vector<Tensor> rows;
  for (std::size_t r = 0; r < n; ++r) {
    Tensor v({n});
    for (auto& x : v.data()) x = dist(rng);
    for (const auto& u : rows) {
      double proj = 0;
      for (std::size_t i = 0; i < n; ++i) proj += v[i] * u[i];
      for (std::size_t i = 0; i < n; ++i) v[i] -= proj * u[i];
    }
    double norm = 0;
    for (auto x : v.data()) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : v.data()) x /= norm;
    rows.push_back(v);
  }
  return rows;
}

Tensor apply_about_center(const std::vector<Tensor>& rot, const Tensor& e,
                          const Tensor& c) {
  const std::size_t n = e.size();
  Tensor out({n});
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += rot[r][i] * (e[i] - c[i]);
    out[r] = c[r] + acc;
  }
  return out;
}

HypersphereSpec make_spec(Tensor c, double rm, double rp) {
  HypersphereSpec s;
  s.center = std::move(c);
  s.r_minus = rm;
  s.r_plus = rp;
  return s;
}

}  // namespace

TEST_CASE("compute_center: trivial and oracle cases") {
  Tensor e = random_vec(5, 1);
  Tensor c1 = compute_center<double>({e});
  for (std::size_t i = 0; i < 5; ++i) CHECK(c1[i] == e[i]);

  Tensor neg = e;
  neg *= -1.0;
  Tensor c2 = compute_center<double>({e, neg});
  for (auto v : c2.data()) CHECK(std::abs(v) < 1e-15);

  std::vector<Tensor> many;
  for (int i = 0; i < 100; ++i) many.push_back(random_vec(8, 100 + i));
  Tensor mean = compute_center(many);
  for (std::size_t k = 0; k < 8; ++k) {
    double acc = 0;
    for (const auto& v : many) acc += v[k];
    CHECK(std::abs(mean[k] - acc / 100.0) < 1e-12);
  }

  CHECK_THROWS_AS(compute_center<double>({}), std::invalid_argument);
  CHECK_THROWS_AS(compute_center<double>({random_vec(3, 1), random_vec(4, 2)}),
                  std::invalid_argument);
}

TEST_CASE("anomaly_score: center, radius point, oracle") {
  Tensor c = random_vec(6, 3);
  auto spec = make_spec(c, 0.2, 1.5);
  CHECK(anomaly_score(c, spec) == 0.0);

  Tensor u({6});
  u[2] = 1.0;  // unit vector
  Tensor e = c;
  for (std::size_t i = 0; i < 6; ++i) e[i] += 1.5 * u[i];
  CHECK(anomaly_score(e, spec) == doctest::Approx(1.5).epsilon(1e-12));

  Tensor r = random_vec(6, 4);
  double acc = 0;
  for (std::size_t i = 0; i < 6; ++i) acc += (r[i] - c[i]) * (r[i] - c[i]);
  CHECK(std::abs(anomaly_score(r, spec) - std::sqrt(acc)) < 1e-12);

  CHECK_THROWS_AS(anomaly_score(random_vec(5, 5), spec), std::invalid_argument);
}

TEST_CASE("isolation_loss: hinge arithmetic") {
  const std::size_t n = 4;
  Tensor c({n});  // center at origin
  auto spec = make_spec(c, 0.2, 1.5);

  auto at_distance = [&](double d, std::uint64_t seed) {
    Tensor v = random_vec(n, seed);
    double norm = 0;
    for (auto x : v.data()) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : v.data()) x *= d / norm;
    return v;
  };

  // all hinges inactive
  std::vector<Tensor> e1 = {at_distance(0.1, 1), at_distance(2.0, 2)};
  CHECK(isolation_loss(e1, {{0}, {1}}, spec) == 0.0);

  // one natural at r_minus + 1
  std::vector<Tensor> e2 = {at_distance(1.2, 3)};
  CHECK(isolation_loss(e2, {{0}, {}}, spec) == doctest::Approx(1.0).epsilon(1e-12));

  // worked example: naturals at {0.1, 0.5}, manipulated at {0.8, 2.0}
  std::vector<Tensor> e3 = {at_distance(0.1, 4), at_distance(0.5, 5),
                            at_distance(0.8, 6), at_distance(2.0, 7)};
  CHECK(isolation_loss(e3, {{0, 1}, {2, 3}}, spec) ==
        doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(isolation_loss(e3, {{}, {}}, spec), std::invalid_argument);
  auto bad = make_spec(Tensor({n}), 1.5, 0.2);  // r_minus >= r_plus
  CHECK_THROWS_AS(isolation_loss(e1, {{0}, {1}}, bad), std::invalid_argument);
}

TEST_CASE("isolation_loss: zero iff all hinges inactive") {
  Tensor c = random_vec(4, 8);
  auto spec = make_spec(c, 0.3, 1.1);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> dist(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Tensor> es;
    BatchPartition part;
    bool expect_zero = true;
    for (int i = 0; i < 4; ++i) {
      double d = dist(rng);
      Tensor dir = random_vec(4, 1000 + trial * 10 + i);
      double norm = 0;
      for (auto x : dir.data()) norm += x * x;
      norm = std::sqrt(norm);
      Tensor e = c;
      for (std::size_t k = 0; k < 4; ++k) e[k] += d * dir[k] / norm;
      if (i % 2 == 0) {
        part.natural.push_back(es.size());
        if (d > 0.3) expect_zero = false;
      } else {
        part.manipulated.push_back(es.size());
        if (d < 1.1) expect_zero = false;
      }
      es.push_back(e);
    }
    CHECK((isolation_loss(es, part, spec) == 0.0) == expect_zero);
  }
}

TEST_CASE("exact_mean: correctly rounded and replication-stable") {
  CHECK(exact_mean({1.0, 2.0, 3.0}) == 2.0);
  CHECK(exact_mean({0.0, 0.0}) == 0.0);
  CHECK(exact_mean({5e-324}) == 5e-324);
  CHECK(exact_mean({1.0, 1e-300}) == 0.5);

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> dist(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> vals(1 + trial % 7);
    for (auto& v : vals) v = dist(rng);
    const double m = exact_mean(vals);
    // agreement with a higher-precision reference
    long double ref = 0.0L;
    for (double v : vals) ref += v;
    ref /= vals.size();
    CHECK(std::abs(double(ref) - m) <= std::abs(m) * 1e-15);
    // k-fold replication in any interleaving gives the identical double
    for (int k = 2; k <= 5; ++k) {
      std::vector<double> rep;
      for (int r = 0; r < k; ++r) rep.insert(rep.end(), vals.begin(), vals.end());
      std::shuffle(rep.begin(), rep.end(), rng);
      CHECK(exact_mean(rep) == m);
    }
  }

  CHECK_THROWS(exact_mean({}));
  CHECK_THROWS(exact_mean({-1.0}));
}

TEST_CASE("isolation_loss: replication invariance is exact") {
  Tensor c = random_vec(4, 10);
  auto spec = make_spec(c, 0.3, 1.1);
  std::vector<Tensor> es = {random_vec(4, 11), random_vec(4, 12),
                            random_vec(4, 13)};
  BatchPartition base{{0, 1}, {2}};
  double l0 = isolation_loss(es, base, spec);

  // replicate the natural partition 3x and the manipulated 2x
  std::vector<Tensor> rep;
  BatchPartition rpart;
  for (int k = 0; k < 3; ++k)
    for (std::size_t i : base.natural) {
      rpart.natural.push_back(rep.size());
      rep.push_back(es[i]);
    }
  for (int k = 0; k < 2; ++k)
    for (std::size_t i : base.manipulated) {
      rpart.manipulated.push_back(rep.size());
      rep.push_back(es[i]);
    }
  CHECK(isolation_loss(rep, rpart, spec) == l0);
}

TEST_CASE("isolation_loss: rotation invariance about the center") {
  const std::size_t n = 6;
  Tensor c = random_vec(n, 14);
  auto spec = make_spec(c, 0.3, 1.1);
  std::vector<Tensor> es;
  for (int i = 0; i < 6; ++i) es.push_back(random_vec(n, 20 + i));
  BatchPartition part{{0, 1, 2}, {3, 4, 5}};
  double l0 = isolation_loss(es, part, spec);

  auto rot = random_rotation(n, 15);
  std::vector<Tensor> rotated;
  for (const auto& e : es) rotated.push_back(apply_about_center(rot, e, c));
  CHECK(std::abs(isolation_loss(rotated, part, spec) - l0) < 1e-10);
}

TEST_CASE("isolation_loss: radial monotonicity") {
  Tensor c({4});
  auto spec = make_spec(c, 0.3, 1.1);
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> dist(0.05, 2.0);
  BatchPartition nat_only{{0}, {}}, man_only{{}, {0}};
  for (int trial = 0; trial < 100; ++trial) {
    Tensor e = random_vec(4, 300 + trial);
    // natural moved radially inward never increases L
    double d1 = isolation_loss(std::vector<Tensor>{e}, nat_only, spec);
    Tensor inward = e;
    inward *= 0.7;
    CHECK(isolation_loss(std::vector<Tensor>{inward}, nat_only, spec) <=
          d1 + 1e-15);
    // manipulated moved radially outward never increases L
    double d2 = isolation_loss(std::vector<Tensor>{e}, man_only, spec);
    Tensor outward = e;
    outward *= 1.4;
    CHECK(isolation_loss(std::vector<Tensor>{outward}, man_only, spec) <=
          d2 + 1e-15);
  }
}

TEST_CASE("isolation_loss_grad: directions, norms, finite differences") {
  Tensor c({4});
  auto spec = make_spec(c, 0.3, 1.1);

  // all inactive -> zero gradients
  Tensor nat({4});
  nat[0] = 0.1;
  Tensor man({4});
  man[1] = 2.0;
  auto g0 = isolation_loss_grad<double>({nat, man}, {{0}, {1}}, spec);
  for (const auto& g : g0)
    for (auto v : g.data()) CHECK(v == 0.0);

  // single natural beyond r_minus: unit radial gradient
  Tensor far({4});
  far[2] = 0.9;
  auto g1 = isolation_loss_grad<double>({far}, {{0}, {}}, spec);
  CHECK(g1[0][2] == doctest::Approx(1.0).epsilon(1e-12));
  double norm = 0;
  for (auto v : g1[0].data()) norm += v * v;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));

  // exact hinge boundary and center: zero by convention
  Tensor on_hinge({4});
  on_hinge[0] = 0.3;
  auto gh = isolation_loss_grad<double>({on_hinge}, {{0}, {}}, spec);
  for (auto v : gh[0].data()) CHECK(v == 0.0);
  auto gc = isolation_loss_grad<double>({Tensor({4})}, {{0}, {}}, spec);
  for (auto v : gc[0].data()) CHECK(v == 0.0);

  // random batch vs finite differences, away from kinks
  std::vector<Tensor> es;
  for (int i = 0; i < 5; ++i) es.push_back(random_vec(4, 40 + i, -2.0, 2.0));
  BatchPartition part{{0, 1, 2}, {3, 4}};
  auto grads = isolation_loss_grad(es, part, spec);
  for (std::size_t i = 0; i < es.size(); ++i) {
    const double dist_i = anomaly_score(es[i], spec);
    if (std::abs(dist_i - spec.r_minus) < 1e-3 ||
        std::abs(dist_i - spec.r_plus) < 1e-3)
      continue;  // kink
    auto f = [&](const Tensor& e) {
      auto copy = es;
      copy[i] = e;
      return isolation_loss(copy, part, spec);
    };
    CHECK(max_relative_error(grads[i], finite_diff_grad(f, es[i], 1e-6)) < 1e-4);
  }

  // per-sample gradient norm bound 1/|partition|
  for (std::size_t i : part.natural) {
    double n2 = 0;
    for (auto v : grads[i].data()) n2 += v * v;
    CHECK(std::sqrt(n2) <= 1.0 / double(part.natural.size()) + 1e-12);
  }
  for (std::size_t i : part.manipulated) {
    double n2 = 0;
    for (auto v : grads[i].data()) n2 += v * v;
    CHECK(std::sqrt(n2) <= 1.0 / double(part.manipulated.size()) + 1e-12);
  }
}

TEST_CASE("scaled radii follow the sqrt dimension rule") {
  auto [rm, rp] = scaled_radii(256);
  CHECK(rm == doctest::Approx(0.042));
  CHECK(rp == doctest::Approx(1.638));
  auto [rm2, rp2] = scaled_radii(64);
  CHECK(rm2 == doctest::Approx(0.042 * 0.5));
  CHECK(rp2 == doctest::Approx(1.638 * 0.5));
}
