#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "vskd/losses.hpp"
#include "vskd/rng.hpp"

using Catch::Approx;
using namespace vskd;

// Standalone scalar re-implementations used as oracles. Deliberately written
// with different structure (raw row pointers, std::inner_product-style loops)
// than the library so agreement is evidence, not tautology.
namespace oracle {

double logsumexp(const double* row, std::size_t k) {
  double mx = row[0];
  for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
  double z = 0.0;
  for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
  return mx + std::log(z);
}

double cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  const std::size_t m = logits.shape[0], k = logits.shape[1];
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &logits.values[i * k];
    acc += logsumexp(row, k) - row[labels[i]];
  }
  return acc / static_cast<double>(m);
}

std::vector<double> soften(const double* row, std::size_t k, double t) {
  std::vector<double> p(k);
  double mx = row[0] / t;
  for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j] / t);
  double z = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    p[j] = std::exp(row[j] / t - mx);
    z += p[j];
  }
  for (double& v : p) v /= z;
  return p;
}

double kd(const Tensor& teacher, const Tensor& student, double t) {
  const std::size_t m = teacher.shape[0], k = teacher.shape[1];
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto p = soften(&teacher.values[i * k], k, t);
    const auto q = soften(&student.values[i * k], k, t);
    for (std::size_t j = 0; j < k; ++j)
      if (p[j] > 0.0) acc += p[j] * std::log(p[j] / q[j]);
  }
  return t * t * acc / static_cast<double>(m);
}

double huber(double x, double delta) {
  return std::abs(x) <= delta ? 0.5 * x * x : delta * (std::abs(x) - 0.5 * delta);
}

double row_dist(const Tensor& f, std::size_t a, std::size_t b) {
  const std::size_t d = f.shape[1];
  double s = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    const double diff = f.at(a, c) - f.at(b, c);
    s += diff * diff;
  }
  return std::sqrt(s);
}

double distance_loss(const Tensor& tf, const Tensor& sf,
                     const dask::PairList& pairs, double delta) {
  double mu_t = 0.0, mu_s = 0.0;
  for (const auto& p : pairs) {
    mu_t += row_dist(tf, p.i, p.j);
    mu_s += row_dist(sf, p.i, p.j);
  }
  mu_t /= static_cast<double>(pairs.size());
  mu_s /= static_cast<double>(pairs.size());
  double acc = 0.0;
  for (const auto& p : pairs)
    acc += huber(row_dist(tf, p.i, p.j) / mu_t - row_dist(sf, p.i, p.j) / mu_s,
                 delta);
  return acc / static_cast<double>(pairs.size());
}

double cosine_at_vertex(const Tensor& f, std::size_t i, std::size_t j,
                        std::size_t k) {
  const std::size_t d = f.shape[1];
  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    const double a = f.at(i, c) - f.at(j, c);
    const double b = f.at(k, c) - f.at(j, c);
    dot += a * b;
    n1 += a * a;
    n2 += b * b;
  }
  return std::clamp(dot / (std::sqrt(n1) * std::sqrt(n2)), -1.0, 1.0);
}

double angle_loss(const Tensor& tf, const Tensor& sf,
                  const dask::TripletList& triplets, double delta) {
  double acc = 0.0;
  for (const auto& t : triplets)
    acc += huber(cosine_at_vertex(tf, t.i, t.j, t.k) -
                     cosine_at_vertex(sf, t.i, t.j, t.k),
                 delta);
  return acc / static_cast<double>(triplets.size());
}

double semantic_loss(const Tensor& tf, const Tensor& sp) {
  const std::size_t m = tf.shape[0], d = tf.shape[1];
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = sp.at(i, c) - tf.at(i, c);
      acc += diff * diff;
    }
  return acc / static_cast<double>(m);
}

}  // namespace oracle

namespace {

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols,
                     double lo = -1.5, double hi = 1.5) {
  Tensor t = Tensor::zeros({rows, cols});
  for (auto& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

dask::DistillBatch random_batch(std::uint64_t seed, std::size_t m = 8,
                                std::size_t k = 6, std::size_t d = 16) {
  Rng rng(seed);
  dask::DistillBatch b;
  b.teacher_logits = random_matrix(rng, m, k, -2.0, 2.0);
  b.student_logits = random_matrix(rng, m, k, -2.0, 2.0);
  b.teacher_features = random_matrix(rng, m, d);
  b.student_features = random_matrix(rng, m, d);
  b.labels.resize(m);
  for (auto& l : b.labels) l = static_cast<std::size_t>(rng.below(k));
  return b;
}

/// Random orthogonal rotation + positive scale + translation of feature rows.
Tensor similarity_transform(const Tensor& f, std::uint64_t seed) {
  Rng rng(seed);
  Tensor out = f;
  const std::size_t m = f.shape[0], d = f.shape[1];
  for (int rep = 0; rep < 12; ++rep) {
    const std::size_t p = static_cast<std::size_t>(rng.below(d));
    const std::size_t q = static_cast<std::size_t>(rng.below(d));
    if (p == q) continue;
    const double th = rng.uniform(0.0, 6.283185307179586);
    const double c = std::cos(th), s = std::sin(th);
    for (std::size_t r = 0; r < m; ++r) {
      const double xp = out.at(r, p), xq = out.at(r, q);
      out.at(r, p) = c * xp - s * xq;
      out.at(r, q) = s * xp + c * xq;
    }
  }
  const double scale = rng.uniform(0.3, 2.5);
  std::vector<double> shift(d);
  for (auto& v : shift) v = rng.uniform(-3.0, 3.0);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < d; ++c) out.at(r, c) = out.at(r, c) * scale + shift[c];
  return out;
}

dask::DaskBreakdown graph_breakdown(const dask::DistillBatch& b,
                                    const dask::DaskConfig& cfg,
                                    const dask::PairList& pairs,
                                    const dask::TripletList& triplets) {
  ad::Tape tape;
  dask::DaskGraphBatch g{tape.constant(b.teacher_logits),
                         tape.leaf(b.student_logits, true),
                         tape.constant(b.teacher_features),
                         tape.leaf(b.student_features, true),
                         std::nullopt,
                         b.labels};
  return dask::dask_total(g, cfg, pairs, triplets).breakdown;
}

}  // namespace

TEST_CASE("cross entropy matches closed forms") {
  REQUIRE(dask::cross_entropy(Tensor::zeros({3, 4}), {0, 1, 3}) ==
          Approx(std::log(4.0)).margin(1e-12));
  REQUIRE(dask::cross_entropy(Tensor({1, 4}, {30, 0, 0, 0}), {0}) < 1e-12);
  REQUIRE(dask::cross_entropy(Tensor({1, 2}, {1, 0}), {1}) ==
          Approx(std::log(1.0 + std::exp(1.0))).margin(1e-12));
  Rng rng(7);
  const Tensor logits = random_matrix(rng, 5, 3, -3.0, 3.0);
  const std::vector<std::size_t> labels{0, 2, 1, 1, 0};
  REQUIRE(dask::cross_entropy(logits, labels) ==
          Approx(oracle::cross_entropy(logits, labels)).margin(1e-12));
}

TEST_CASE("cross entropy validates labels and shapes") {
  REQUIRE_THROWS_AS(dask::cross_entropy(Tensor::zeros({2, 3}), {0, 3}),
                    InvalidInput);
  REQUIRE_THROWS_AS(dask::cross_entropy(Tensor::zeros({2, 3}), {0}),
                    InvalidInput);
}

TEST_CASE("soft targets normalize rows and match the logistic value") {
  Rng rng(11);
  const Tensor logits = random_matrix(rng, 6, 5, -4.0, 4.0);
  const Tensor probs = dask::soft_targets(logits, 3.0);
  for (std::size_t i = 0; i < 6; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 5; ++j) row += probs.at(i, j);
    REQUIRE(row == Approx(1.0).margin(1e-12));
  }
  const Tensor symmetric = dask::soft_targets(Tensor({1, 2}, {0.7, 0.7}), 2.0);
  REQUIRE(symmetric.values[0] == Approx(0.5).margin(1e-15));

  // logits [4, 0] at T = 4 collapse to softmax([1, 0]) = [sigma(1), sigma(-1)]
  const Tensor p = dask::soft_targets(Tensor({1, 2}, {4, 0}), 4.0);
  const double sigma1 = 1.0 / (1.0 + std::exp(-1.0));
  REQUIRE(p.values[0] == Approx(sigma1).margin(1e-12));
  REQUIRE(p.values[0] == Approx(0.731059).margin(1e-6));
  REQUIRE_THROWS_AS(dask::soft_targets(Tensor({1, 2}, {1, 2}), 0.0), InvalidInput);
  REQUIRE_THROWS_AS(dask::soft_targets(Tensor({1, 2}, {1, 2}), -1.0), InvalidInput);
}

TEST_CASE("kd soft loss closed form, zero at equality, non-negative") {
  const Tensor t({1, 2}, {4, 0});
  const Tensor s({1, 2}, {0, 4});
  // p = sigma(1), q = 1 - p, and log(p/q) = 1, so KL = 2p - 1.
  const double p = 1.0 / (1.0 + std::exp(-1.0));
  const double expected = 16.0 * (2.0 * p - 1.0);
  REQUIRE(dask::kd_soft_loss(t, s, 4.0) == Approx(expected).margin(1e-12));
  REQUIRE(dask::kd_soft_loss(t, s, 4.0) == Approx(7.39387).margin(1e-4));
  REQUIRE(dask::kd_soft_loss(t, t, 4.0) == Approx(0.0).margin(1e-15));

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Tensor a = random_matrix(rng, 4, 5, -5.0, 5.0);
    const Tensor b = random_matrix(rng, 4, 5, -5.0, 5.0);
    const double loss = dask::kd_soft_loss(a, b, 4.0);
    REQUIRE(loss >= 0.0);
    REQUIRE(loss == Approx(oracle::kd(a, b, 4.0)).margin(1e-12));
  }
  REQUIRE_THROWS_AS(dask::kd_soft_loss(Tensor::zeros({2, 3}), Tensor::zeros({2, 4}), 4.0),
                    InvalidInput);
  REQUIRE_THROWS_AS(dask::kd_soft_loss(t, s, 0.0), InvalidInput);
}

TEST_CASE("huber branches, evenness, continuity at the knee") {
  REQUIRE(dask::huber(0.5, 1.0) == 0.125);
  REQUIRE(dask::huber(2.0, 1.0) == 1.5);
  REQUIRE(dask::huber(-2.0, 1.0) == 1.5);
  REQUIRE(std::abs(dask::huber(1.0 + 1e-8, 1.0) - dask::huber(1.0 - 1e-8, 1.0)) <
          1e-7);
  REQUIRE_THROWS_AS(dask::huber(1.0, 0.0), InvalidInput);
}

TEST_CASE("relation sampling enumerates small populations exhaustively") {
  const auto rel = dask::sample_relations(3, 10, 10, 99);
  REQUIRE(rel.pairs == dask::PairList{{0, 1}, {0, 2}, {1, 2}});
  REQUIRE(rel.triplets == dask::TripletList{{1, 0, 2}, {0, 1, 2}, {0, 2, 1}});

  // m = 4: every vertex pairs the remaining three, 4 * C(3,2) = 12 triplets
  const auto t4 = dask::sample_triplets(4, 100, 1);
  REQUIRE(t4.size() == 12);
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  for (const auto& t : t4) {
    REQUIRE(t.i < t.k);
    REQUIRE(t.i != t.j);
    REQUIRE(t.j != t.k);
    seen.insert({t.i, t.j, t.k});
  }
  REQUIRE(seen.size() == 12);
}

TEST_CASE("relation sampling honors limits, uniqueness, determinism") {
  const auto a = dask::sample_pairs(30, 100, 42);
  const auto b = dask::sample_pairs(30, 100, 42);
  REQUIRE(a == b);
  REQUIRE(a.size() == 100);
  std::set<std::pair<std::size_t, std::size_t>> unique;
  for (const auto& p : a) {
    REQUIRE(p.i < p.j);
    REQUIRE(p.j < 30);
    unique.insert({p.i, p.j});
  }
  REQUIRE(unique.size() == 100);
  REQUIRE(dask::sample_pairs(30, 100, 43) != a);

  const auto t = dask::sample_triplets(10, 64, 5);
  REQUIRE(t.size() == 64);
  REQUIRE(t == dask::sample_triplets(10, 64, 5));
}

TEST_CASE("relation sampling validates sizes and limits") {
  REQUIRE_THROWS_AS(dask::sample_pairs(1, 4, 0), InvalidInput);
  REQUIRE_THROWS_AS(dask::sample_triplets(2, 4, 0), InvalidInput);
  REQUIRE_THROWS_AS(dask::sample_pairs(5, 0, 0), InvalidInput);
  REQUIRE_THROWS_AS(dask::sample_triplets(5, 0, 0), InvalidInput);
}

TEST_CASE("distance potentials match hand values and degenerate to zero") {
  const Tensor two({2, 2}, {0, 0, 3, 4});
  const auto single = dask::distance_potentials(two, {{0, 1}});
  REQUIRE(single.size() == 1);
  REQUIRE(single[0] == 1.0);

  const Tensor line({3, 2}, {0, 0, 1, 0, 2, 0});
  const auto pots = dask::distance_potentials(line, {{0, 1}, {1, 2}, {0, 2}});
  REQUIRE(pots[0] == Approx(0.75).margin(1e-12));
  REQUIRE(pots[1] == Approx(0.75).margin(1e-12));
  REQUIRE(pots[2] == Approx(1.5).margin(1e-12));

  const Tensor same({3, 2}, {2, 2, 2, 2, 2, 2});
  for (double p : dask::distance_potentials(same, {{0, 1}, {1, 2}, {0, 2}}))
    REQUIRE(p == 0.0);

  REQUIRE_THROWS_AS(dask::distance_potentials(Tensor::zeros({1, 2}), {{0, 1}}),
                    InvalidInput);
  REQUIRE_THROWS_AS(dask::distance_potentials(two, {{0, 0}}), InvalidInput);

  Rng rng(3);
  const Tensor f = random_matrix(rng, 9, 4);
  const auto sample = dask::sample_relations(9, 20, 20, 8);
  for (double p : dask::relational_structure(f, sample).distance_potentials)
    REQUIRE(p >= 0.0);
}

TEST_CASE("angle potentials hit right-angle, collinear, and opposite rays") {
  const Tensor right({3, 2}, {1, 0, 0, 0, 0, 1});
  REQUIRE(dask::angle_potentials(right, {{0, 1, 2}})[0] == Approx(0.0).margin(1e-12));
  const Tensor ahead({3, 2}, {2, 0, 0, 0, 1, 0});
  REQUIRE(dask::angle_potentials(ahead, {{0, 1, 2}})[0] == 1.0);
  const Tensor opposite({3, 2}, {1, 0, 0, 0, -3, 0});
  REQUIRE(dask::angle_potentials(opposite, {{0, 1, 2}})[0] == -1.0);

  // coincident vertex and endpoint: zero-length ray degenerates to 0
  const Tensor pinch({3, 2}, {0, 0, 0, 0, 1, 1});
  REQUIRE(dask::angle_potentials(pinch, {{0, 1, 2}})[0] == 0.0);

  REQUIRE_THROWS_AS(dask::angle_potentials(Tensor::zeros({2, 2}), {{0, 1, 2}}),
                    InvalidInput);
  REQUIRE_THROWS_AS(dask::angle_potentials(right, {{0, 1, 1}}), InvalidInput);
}

TEST_CASE("angle potentials always stay inside [-1, 1]") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Tensor f = random_matrix(rng, 8, 3);
    const auto triplets = dask::sample_triplets(8, 80, seed);
    for (double c : dask::angle_potentials(f, triplets)) {
      REQUIRE(c >= -1.0);
      REQUIRE(c <= 1.0);
    }
  }
  // 1-d embeddings are collinear by construction: raw cosines touch (and can
  // overshoot) +-1 before the clamp, so the bound must still hold exactly.
  // Rays far below the sample scale are degenerate and pin to exactly 0.
  Rng rng(404);
  Tensor line = Tensor::zeros({16, 1});
  for (auto& v : line.values) v = rng.uniform(-5.0, 5.0);
  std::size_t live = 0;
  const auto cosines =
      dask::angle_potentials(line, dask::sample_triplets(16, 256, 0));
  for (double c : cosines) {
    REQUIRE(std::abs(c) <= 1.0);
    if (c != 0.0) {
      REQUIRE(std::abs(c) >= 1.0 - 1e-12);
      ++live;
    }
  }
  REQUIRE(live > cosines.size() / 2);
}

TEST_CASE("distance loss: copies, uniform scaling, and similarity transforms") {
  Rng rng(17);
  const Tensor tf = random_matrix(rng, 7, 5);
  const auto pairs = dask::sample_pairs(7, 64, 2);

  REQUIRE(dask::distance_loss(tf, tf, pairs, 1.0) == 0.0);

  Tensor scaled = tf;
  for (auto& v : scaled.values) v *= 10.0;
  REQUIRE(dask::distance_loss(tf, scaled, pairs, 1.0) < 1e-12);

  const Tensor a({2, 2}, {0, 0, 3, 4});
  const Tensor b({2, 2}, {0, 0, 1, 0});
  REQUIRE(dask::distance_loss(a, b, {{0, 1}}, 1.0) == 0.0);

  const Tensor sf = random_matrix(rng, 7, 5);
  const double base = dask::distance_loss(tf, sf, pairs, 1.0);
  REQUIRE(std::abs(dask::distance_loss(similarity_transform(tf, 5), sf, pairs, 1.0) -
                   base) < 1e-9);
  REQUIRE(std::abs(dask::distance_loss(tf, similarity_transform(sf, 6), pairs, 1.0) -
                   base) < 1e-9);
  REQUIRE(base == Approx(oracle::distance_loss(tf, sf, pairs, 1.0)).margin(1e-12));
}

TEST_CASE("angle loss: copies, similarity transforms, huber knee") {
  Rng rng(23);
  const Tensor tf = random_matrix(rng, 7, 5);
  const Tensor sf = random_matrix(rng, 7, 5);
  const auto triplets = dask::sample_triplets(7, 64, 21);

  REQUIRE(dask::angle_loss(tf, tf, triplets, 1.0) == 0.0);

  const double base = dask::angle_loss(tf, sf, triplets, 1.0);
  REQUIRE(std::abs(dask::angle_loss(similarity_transform(tf, 9), sf, triplets, 1.0) -
                   base) < 1e-9);
  REQUIRE(std::abs(dask::angle_loss(tf, similarity_transform(sf, 10), triplets, 1.0) -
                   base) < 1e-9);
  REQUIRE(base == Approx(oracle::angle_loss(tf, sf, triplets, 1.0)).margin(1e-12));

  // teacher right angle (cos 0) vs student collinear (cos 1): huber(-1) = 0.5
  const Tensor right({3, 2}, {1, 0, 0, 0, 0, 1});
  const Tensor line({3, 2}, {2, 0, 0, 0, 1, 0});
  REQUIRE(dask::angle_loss(right, line, {{0, 1, 2}}, 1.0) ==
          Approx(0.5).margin(1e-12));
}

TEST_CASE("semantic loss closed forms and homogeneity") {
  const Tensor t({1, 2}, {0, 1});
  const Tensor s({1, 2}, {1, 0});
  REQUIRE(dask::semantic_loss(t, t) == 0.0);
  REQUIRE(dask::semantic_loss(t, s) == 2.0);

  Rng rng(29);
  const Tensor a = random_matrix(rng, 4, 6);
  const Tensor b = random_matrix(rng, 4, 6);
  const double once = dask::semantic_loss(a, b);
  Tensor a2 = a, b2 = b;
  for (auto& v : a2.values) v *= 2.0;
  for (auto& v : b2.values) v *= 2.0;
  REQUIRE(dask::semantic_loss(a2, b2) == Approx(4.0 * once).epsilon(1e-12));
  REQUIRE(once == Approx(oracle::semantic_loss(a, b)).margin(1e-12));
  REQUIRE_THROWS_AS(dask::semantic_loss(Tensor::zeros({2, 3}), Tensor::zeros({2, 4})),
                    InvalidInput);
}

TEST_CASE("combined loss reduces to bare cross entropy when weights vanish") {
  const auto batch = random_batch(303);
  const auto rel = dask::sample_relations(batch.size(), 64, 64, 1);
  dask::DaskConfig cfg;
  cfg.alpha = cfg.beta = cfg.gamma = 0.0;
  const auto bd = dask::dask_total(batch, cfg, rel.pairs, rel.triplets);
  REQUIRE(bd.total == dask::cross_entropy(batch.student_logits, batch.labels));
  REQUIRE(bd.kd == 0.0);
  REQUIRE(bd.distance == 0.0);
  REQUIRE(bd.angle == 0.0);
  REQUIRE(bd.semantic == 0.0);
}

TEST_CASE("combined loss vanishes for a perfectly matched confident student") {
  const std::size_t m = 6, k = 4;
  Tensor logits = Tensor::zeros({m, k});
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < m; ++i) {
    labels.push_back(i % k);
    logits.at(i, i % k) = 40.0;
  }
  Rng rng(31);
  const Tensor features = random_matrix(rng, m, 8);
  dask::DistillBatch batch{logits, logits, features, features, Tensor{}, labels};
  const auto rel = dask::sample_relations(m, 64, 64, 2);
  const auto bd = dask::dask_total(batch, dask::DaskConfig{}, rel.pairs, rel.triplets);
  REQUIRE(bd.total < 1e-9);
}

TEST_CASE("combined loss equals an independent scalar recomputation") {
  for (std::uint64_t seed : {2024ull, 77ull, 4096ull}) {
    const auto batch = random_batch(seed, 8, 6, 16);
    const auto rel = dask::sample_relations(8, 256, 256, seed);
    const dask::DaskConfig cfg;  // alpha = beta = gamma = 1, T = 4, delta = 1
    const auto bd = dask::dask_total(batch, cfg, rel.pairs, rel.triplets);

    const double ce = oracle::cross_entropy(batch.student_logits, batch.labels);
    const double kd = oracle::kd(batch.teacher_logits, batch.student_logits, 4.0);
    const double dl = oracle::distance_loss(batch.teacher_features,
                                            batch.student_features, rel.pairs, 1.0);
    const double al = oracle::angle_loss(batch.teacher_features,
                                         batch.student_features, rel.triplets, 1.0);
    const double sl = oracle::semantic_loss(batch.teacher_features,
                                            batch.student_features);
    REQUIRE(bd.cross_entropy == Approx(ce).margin(1e-12));
    REQUIRE(bd.kd == Approx(kd).margin(1e-12));
    REQUIRE(bd.distance == Approx(dl).margin(1e-12));
    REQUIRE(bd.angle == Approx(al).margin(1e-12));
    REQUIRE(bd.semantic == Approx(sl).margin(1e-12));
    REQUIRE(bd.total == Approx(ce + kd + dl + al + sl).margin(1e-12));
  }
}

TEST_CASE("breakdown reconstructs the total bitwise") {
  const auto batch = random_batch(515);
  const auto rel = dask::sample_relations(batch.size(), 64, 64, 3);
  const double weights[] = {0.0, 0.7, 1.3};
  for (double alpha : weights)
    for (double beta : weights)
      for (double gamma : weights) {
        dask::DaskConfig cfg;
        cfg.alpha = alpha;
        cfg.beta = beta;
        cfg.gamma = gamma;
        const auto bd = dask::dask_total(batch, cfg, rel.pairs, rel.triplets);
        const double rebuilt =
            ((bd.cross_entropy + alpha * bd.kd) + beta * (bd.distance + bd.angle)) +
            gamma * bd.semantic;
        REQUIRE(bd.total == rebuilt);
      }
}

TEST_CASE("ablation switches remove exactly their terms") {
  const auto batch = random_batch(616);
  const auto rel = dask::sample_relations(batch.size(), 64, 64, 4);
  const auto full = dask::dask_total(batch, dask::DaskConfig{}, rel.pairs, rel.triplets);
  REQUIRE(full.kd > 0.0);
  REQUIRE(full.distance > 0.0);
  REQUIRE(full.angle > 0.0);
  REQUIRE(full.semantic > 0.0);

  dask::DaskConfig no_distance;
  no_distance.use_distance = false;
  auto bd = dask::dask_total(batch, no_distance, rel.pairs, rel.triplets);
  REQUIRE(bd.distance == 0.0);
  REQUIRE(bd.angle == full.angle);
  REQUIRE(bd.kd == full.kd);
  REQUIRE(bd.semantic == full.semantic);

  dask::DaskConfig no_angle;
  no_angle.use_angle = false;
  bd = dask::dask_total(batch, no_angle, rel.pairs, rel.triplets);
  REQUIRE(bd.angle == 0.0);
  REQUIRE(bd.distance == full.distance);

  dask::DaskConfig no_relational;
  no_relational.beta = 0.0;
  bd = dask::dask_total(batch, no_relational, rel.pairs, rel.triplets);
  REQUIRE(bd.distance == 0.0);
  REQUIRE(bd.angle == 0.0);
  REQUIRE(bd.cross_entropy == full.cross_entropy);

  dask::DaskConfig no_semantic;
  no_semantic.gamma = 0.0;
  bd = dask::dask_total(batch, no_semantic, rel.pairs, rel.triplets);
  REQUIRE(bd.semantic == 0.0);
  REQUIRE(bd.kd == full.kd);
}

TEST_CASE("tape and plain evaluations agree bitwise") {
  const auto batch = random_batch(717);
  const auto rel = dask::sample_relations(batch.size(), 64, 64, 5);
  const dask::DaskConfig cfg;
  const auto plain = dask::dask_total(batch, cfg, rel.pairs, rel.triplets);
  const auto graph = graph_breakdown(batch, cfg, rel.pairs, rel.triplets);
  REQUIRE(plain.total == graph.total);
  REQUIRE(plain.cross_entropy == graph.cross_entropy);
  REQUIRE(plain.kd == graph.kd);
  REQUIRE(plain.distance == graph.distance);
  REQUIRE(plain.angle == graph.angle);
  REQUIRE(plain.semantic == graph.semantic);
}

TEST_CASE("combined loss backpropagates into student-side leaves") {
  const auto batch = random_batch(818);
  const auto rel = dask::sample_relations(batch.size(), 64, 64, 6);
  ad::Tape tape;
  dask::DaskGraphBatch g{tape.constant(batch.teacher_logits),
                         tape.leaf(batch.student_logits, true),
                         tape.constant(batch.teacher_features),
                         tape.leaf(batch.student_features, true),
                         std::nullopt,
                         batch.labels};
  const auto result = dask::dask_total(g, dask::DaskConfig{}, rel.pairs, rel.triplets);
  tape.backward(result.total);
  REQUIRE(tape.grad(g.student_logits).numel() == batch.student_logits.numel());
  REQUIRE(tape.grad(g.student_features).numel() == batch.student_features.numel());
  double magnitude = 0.0;
  for (double v : tape.grad(g.student_features).values) magnitude += std::abs(v);
  REQUIRE(magnitude > 0.0);
}

TEST_CASE("near-coincident feature rows keep relational gradients finite") {
  // A confident, saturating student can map same-class examples onto feature
  // rows that differ only in the last few bits. The cosine backward scales
  // with the inverse square of the ray length, so rays between such rows must
  // degenerate to constants instead of feeding the tape with overflow.
  const std::size_t m = 6, d = 4;
  dask::DistillBatch b = random_batch(909, m, 4, d);
  for (std::size_t r = 1; r < 3; ++r)
    for (std::size_t c = 0; c < d; ++c)
      b.student_features.at(r, c) =
          b.student_features.at(0, c) + static_cast<double>(r * c) * 1e-160;
  const auto rel = dask::sample_relations(m, 256, 256, 7);

  ad::Tape tape;
  dask::DaskGraphBatch g{tape.constant(b.teacher_logits),
                         tape.leaf(b.student_logits, true),
                         tape.constant(b.teacher_features),
                         tape.leaf(b.student_features, true),
                         std::nullopt,
                         b.labels};
  const auto result =
      dask::dask_total(g, dask::DaskConfig{}, rel.pairs, rel.triplets);
  REQUIRE(std::isfinite(tape.value(result.total).values[0]));
  tape.backward(result.total);
  for (double v : tape.grad(g.student_features).values)
    REQUIRE(std::isfinite(v));
  for (double v : tape.grad(g.student_logits).values)
    REQUIRE(std::isfinite(v));

  // The plain evaluation must keep agreeing bitwise on the degenerate batch.
  const auto plain =
      dask::dask_total(b, dask::DaskConfig{}, rel.pairs, rel.triplets);
  REQUIRE(plain.total == tape.value(result.total).values[0]);
}

TEST_CASE("every loss gradient matches finite differences over 10 seeds") {
  const double step = 1e-4;
  const double tol = 1e-4;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(mix_seed(seed, 0xFD));
    const std::size_t m = 6, k = 4, d = 5;
    const Tensor teacher_logits = random_matrix(rng, m, k, -2.0, 2.0);
    const Tensor student_logits = random_matrix(rng, m, k, -2.0, 2.0);
    const Tensor teacher_features = random_matrix(rng, m, d);
    const Tensor student_features = random_matrix(rng, m, d);
    std::vector<std::size_t> labels(m);
    for (auto& l : labels) l = static_cast<std::size_t>(rng.below(k));
    const auto pairs = dask::sample_pairs(m, 64, seed);
    const auto triplets = dask::sample_triplets(m, 64, seed);
    const double mu_t = dask::mean_pair_distance(teacher_features, pairs);
    const double mu_s = dask::mean_pair_distance(student_features, pairs);

    REQUIRE(ad::grad_check(
                [&](ad::Tape& t, ad::Var x) { return dask::cross_entropy(x, labels); },
                student_logits, step) < tol);
    REQUIRE(ad::grad_check(
                [&](ad::Tape& t, ad::Var x) {
                  return dask::kd_soft_loss(t.constant(teacher_logits), x, 4.0);
                },
                student_logits, step) < tol);
    REQUIRE(ad::grad_check(
                [&](ad::Tape& t, ad::Var x) {
                  return dask::kd_soft_loss(x, t.constant(student_logits), 4.0);
                },
                teacher_logits, step) < tol);
    REQUIRE(ad::grad_check(
                [&](ad::Tape& t, ad::Var x) {
                  return dask::distance_loss(t.constant(teacher_features), x, pairs,
                                             1.0, mu_t, mu_s);
                },
                student_features, step) < tol);
    REQUIRE(ad::grad_check(
                [&](ad::Tape& t, ad::Var x) {
                  return dask::distance_loss(x, t.constant(student_features), pairs,
                                             1.0, mu_t, mu_s);
                },
                teacher_features, step) < tol);
    REQUIRE(ad::grad_check(
                [&](ad::Tape& t, ad::Var x) {
                  return dask::angle_loss(t.constant(teacher_features), x, triplets, 1.0);
                },
                student_features, step) < tol);
    REQUIRE(ad::grad_check(
                [&](ad::Tape& t, ad::Var x) {
                  return dask::angle_loss(x, t.constant(student_features), triplets, 1.0);
                },
                teacher_features, step) < tol);
    REQUIRE(ad::grad_check(
                [&](ad::Tape& t, ad::Var x) {
                  return dask::semantic_loss(t.constant(teacher_features), x);
                },
                student_features, step) < tol);
    REQUIRE(ad::grad_check(
                [&](ad::Tape& t, ad::Var x) {
                  return dask::semantic_loss(x, t.constant(student_features));
                },
                teacher_features, step) < tol);

    // combined objective, one matrix varying at a time, normalizers frozen
    const dask::DaskConfig cfg;
    const dask::DaskMus mus{mu_t, mu_s};
    auto total_with = [&](ad::Tape& t, ad::Var tl, ad::Var sl, ad::Var tf, ad::Var sf) {
      return dask::dask_total(dask::DaskGraphBatch{tl, sl, tf, sf, std::nullopt, labels},
                              cfg, pairs, triplets, mus)
          .total;
    };
    REQUIRE(ad::grad_check(
                [&](ad::Tape& t, ad::Var x) {
                  return total_with(t, t.constant(teacher_logits), x,
                                    t.constant(teacher_features),
                                    t.constant(student_features));
                },
                student_logits, step) < tol);
    REQUIRE(ad::grad_check(
                [&](ad::Tape& t, ad::Var x) {
                  return total_with(t, x, t.constant(student_logits),
                                    t.constant(teacher_features),
                                    t.constant(student_features));
                },
                teacher_logits, step) < tol);
    REQUIRE(ad::grad_check(
                [&](ad::Tape& t, ad::Var x) {
                  return total_with(t, t.constant(teacher_logits),
                                    t.constant(student_logits),
                                    t.constant(teacher_features), x);
                },
                student_features, step) < tol);
    REQUIRE(ad::grad_check(
                [&](ad::Tape& t, ad::Var x) {
                  return total_with(t, t.constant(teacher_logits),
                                    t.constant(student_logits), x,
                                    t.constant(student_features));
                },
                teacher_features, step) < tol);
  }
}

TEST_CASE("projected student features feed only the semantic term") {
  Rng rng(44);
  const std::size_t m = 6;
  dask::DistillBatch batch = random_batch(909, m, 4, 10);
  batch.student_features = random_matrix(rng, m, 7);  // narrower than teacher
  batch.student_features_projected = random_matrix(rng, m, 10);
  const auto rel = dask::sample_relations(m, 64, 64, 7);
  const auto bd = dask::dask_total(batch, dask::DaskConfig{}, rel.pairs, rel.triplets);
  REQUIRE(bd.semantic == Approx(oracle::semantic_loss(
                             batch.teacher_features,
                             batch.student_features_projected))
                             .margin(1e-12));
  REQUIRE(bd.distance == Approx(oracle::distance_loss(
                             batch.teacher_features, batch.student_features,
                             rel.pairs, 1.0))
                             .margin(1e-12));

  // without a projection, mismatched widths must be rejected when gamma > 0
  dask::DistillBatch bad = batch;
  bad.student_features_projected = Tensor{};
  REQUIRE_THROWS_AS(dask::dask_total(bad, dask::DaskConfig{}, rel.pairs, rel.triplets),
                    InvalidInput);
}

TEST_CASE("batch validation rejects malformed inputs") {
  auto batch = random_batch(111, 4, 3, 5);
  batch.labels[2] = 9;
  REQUIRE_THROWS_AS(batch.validate(), InvalidInput);

  batch = random_batch(112, 4, 3, 5);
  batch.student_logits = Tensor::zeros({3, 3});
  REQUIRE_THROWS_AS(batch.validate(), InvalidInput);

  dask::DistillBatch empty;
  REQUIRE_THROWS_AS(empty.validate(), InvalidInput);

  dask::DaskConfig bad;
  bad.temperature = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), InvalidInput);
  bad = dask::DaskConfig{};
  bad.alpha = -0.1;
  REQUIRE_THROWS_AS(bad.validate(), InvalidInput);
}
