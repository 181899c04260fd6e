#pragma once

// Distillation objective: cross-entropy, temperature-scaled soft targets,
// distance- and angle-wise relational potentials under Huber penalties, a
// semantic feature term, and their weighted combination. Every loss exists in
// two forms with identical arithmetic: a tape form (ad::Var) used in training
// and a plain form (Tensor -> double) used for logging and oracle checks.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "vskd/autodiff.hpp"
#include "vskd/common.hpp"
#include "vskd/rng.hpp"
#include "vskd/tensor.hpp"

namespace vskd::dask {

/// Unordered example pair, i < j.
struct IndexPair {
  std::size_t i = 0, j = 0;
  bool operator==(const IndexPair&) const = default;
};

/// Example triplet with the angle vertex at j; i < k and all distinct.
struct IndexTriplet {
  std::size_t i = 0, j = 0, k = 0;
  bool operator==(const IndexTriplet&) const = default;
};

using PairList = std::vector<IndexPair>;
using TripletList = std::vector<IndexTriplet>;

struct RelationSample {
  PairList pairs;
  TripletList triplets;
};

/// Relational potentials of one feature set over a relation sample.
struct RelationalStructure {
  std::vector<double> distance_potentials;  // >= 0, dimensionless
  std::vector<double> angle_potentials;     // cosines in [-1, 1]
};

/// Weights and knobs of the combined objective.
struct DaskConfig {
  double alpha = 1.0;        // soft-target weight
  double beta = 1.0;         // relational weight
  double gamma = 1.0;        // semantic weight
  double temperature = 4.0;  // soft-target temperature
  double huber_delta = 1.0;
  std::size_t pair_limit = 256;
  std::size_t triplet_limit = 256;
  // Ablation switches: which relational terms beta applies to.
  bool use_distance = true;
  bool use_angle = true;

  void validate() const {
    if (alpha < 0.0 || beta < 0.0 || gamma < 0.0)
      throw InvalidInput("loss weights must be non-negative");
    if (temperature <= 0.0) throw InvalidInput("temperature must be > 0");
    if (huber_delta <= 0.0) throw InvalidInput("huber delta must be > 0");
    if (pair_limit < 1 || triplet_limit < 1)
      throw InvalidInput("relation sampling limits must be >= 1");
  }
};

/// One training batch as seen by the combined loss. student_features carries
/// the raw student embedding (any width); student_features_projected, when
/// non-empty, carries the linear projection used by the semantic term. When
/// empty, student_features doubles as the projection and must match the
/// teacher width.
struct DistillBatch {
  Tensor teacher_logits;   // m x K
  Tensor student_logits;   // m x K
  Tensor teacher_features; // m x d_T
  Tensor student_features; // m x d_S
  Tensor student_features_projected;  // m x d_T or empty
  std::vector<std::size_t> labels;    // m entries in [0, K)

  std::size_t size() const { return labels.size(); }

  void validate() const {
    const std::size_t m = labels.size();
    if (m < 1) throw InvalidInput("batch must hold at least one example");
    for (const Tensor* t : {&teacher_logits, &student_logits,
                            &teacher_features, &student_features})
      if (t->rank() != 2 || t->shape[0] != m)
        throw InvalidInput("batch matrices must be rank 2 with one row per example");
    if (!teacher_logits.same_shape(student_logits))
      throw InvalidInput("teacher and student logits must share a shape");
    const std::size_t k = teacher_logits.shape[1];
    if (k < 2) throw InvalidInput("need at least two classes");
    for (std::size_t label : labels)
      if (label >= k) throw InvalidInput("label out of range");
    if (student_features_projected.numel() != 0 &&
        (student_features_projected.rank() != 2 ||
         student_features_projected.shape[0] != m))
      throw InvalidInput("projected features must be rank 2 with one row per example");
  }
};

// ---------------------------------------------------------------------------
// Relation sampling
// ---------------------------------------------------------------------------

namespace detail {

/// Pair of rank r in the lexicographic listing of {(i, j) : i < j < m}.
inline IndexPair unrank_pair(std::size_t m, std::uint64_t r) {
  std::size_t i = 0;
  std::uint64_t row = m - 1;  // pairs whose first index is i
  while (r >= row) {
    r -= row;
    ++i;
    --row;
  }
  return {i, i + 1 + static_cast<std::size_t>(r)};
}

/// Uniform sample of `limit` distinct ranks from [0, population), sorted.
/// Exhaustive when the population fits the limit.
inline std::vector<std::uint64_t> sample_ranks(std::uint64_t population,
                                               std::uint64_t limit,
                                               std::uint64_t seed) {
  std::vector<std::uint64_t> out;
  if (population <= limit) {
    out.resize(population);
    for (std::uint64_t r = 0; r < population; ++r) out[r] = r;
    return out;
  }
  Rng rng(seed);
  std::set<std::uint64_t> chosen;
  while (chosen.size() < limit) chosen.insert(rng.below(population));
  out.assign(chosen.begin(), chosen.end());
  return out;
}

}  // namespace detail

/// Seeded uniform sample (without replacement) of unordered pairs; exhaustive
/// when there are no more than `limit` pairs.
inline PairList sample_pairs(std::size_t m, std::size_t limit,
                             std::uint64_t seed) {
  if (m < 2) throw InvalidInput("pair sampling needs at least 2 examples");
  if (limit < 1) throw InvalidInput("pair limit must be >= 1");
  const std::uint64_t population =
      static_cast<std::uint64_t>(m) * (m - 1) / 2;
  PairList pairs;
  for (std::uint64_t r :
       detail::sample_ranks(population, limit, mix_seed(seed, 1)))
    pairs.push_back(detail::unrank_pair(m, r));
  return pairs;
}

/// Seeded uniform sample of vertex-distinct triplets (i, j, k): vertex j,
/// i < k, all indices distinct. Exhaustive when the population fits.
inline TripletList sample_triplets(std::size_t m, std::size_t limit,
                                   std::uint64_t seed) {
  if (m < 3) throw InvalidInput("triplet sampling needs at least 3 examples");
  if (limit < 1) throw InvalidInput("triplet limit must be >= 1");
  const std::uint64_t per_vertex =
      static_cast<std::uint64_t>(m - 1) * (m - 2) / 2;
  const std::uint64_t population = static_cast<std::uint64_t>(m) * per_vertex;
  TripletList triplets;
  for (std::uint64_t r :
       detail::sample_ranks(population, limit, mix_seed(seed, 2))) {
    const std::size_t j = static_cast<std::size_t>(r / per_vertex);
    const IndexPair ray = detail::unrank_pair(m - 1, r % per_vertex);
    const auto skip_vertex = [j](std::size_t t) { return t < j ? t : t + 1; };
    triplets.push_back({skip_vertex(ray.i), j, skip_vertex(ray.j)});
  }
  return triplets;
}

/// Joint pair + triplet sample sharing one base seed.
inline RelationSample sample_relations(std::size_t m, std::size_t pair_limit,
                                       std::size_t triplet_limit,
                                       std::uint64_t seed) {
  return {sample_pairs(m, pair_limit, seed),
          sample_triplets(m, triplet_limit, seed)};
}

// ---------------------------------------------------------------------------
// Potentials
// ---------------------------------------------------------------------------

namespace detail {

inline void check_embeddings(const Tensor& emb, std::size_t min_rows,
                             const char* what) {
  if (emb.rank() != 2)
    throw InvalidInput(std::string(what) + ": embeddings must be rank 2");
  if (emb.shape[0] < min_rows)
    throw InvalidInput(std::string(what) + ": too few examples");
}

inline void check_pair_indices(const PairList& pairs, std::size_t m) {
  if (pairs.empty()) throw InvalidInput("empty pair list");
  for (const IndexPair& p : pairs)
    if (p.i >= m || p.j >= m || p.i == p.j)
      throw InvalidInput("pair references invalid or equal indices");
}

inline void check_triplet_indices(const TripletList& triplets, std::size_t m) {
  if (triplets.empty()) throw InvalidInput("empty triplet list");
  for (const IndexTriplet& t : triplets)
    if (t.i >= m || t.j >= m || t.k >= m || t.i == t.j || t.j == t.k ||
        t.i == t.k)
      throw InvalidInput("triplet indices must be three distinct examples");
}

/// Euclidean distance between rows a and b, accumulated in coordinate order
/// (the tape form replays the identical operation sequence).
inline double row_distance(const Tensor& emb, std::size_t a, std::size_t b) {
  const std::size_t d = emb.shape[1];
  double acc = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    const double diff = emb.values[a * d + c] - emb.values[b * d + c];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

inline std::vector<double> raw_pair_distances(const Tensor& emb,
                                              const PairList& pairs) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const IndexPair& p : pairs) out.push_back(row_distance(emb, p.i, p.j));
  return out;
}

// The cosine at a vertex is infinitely sensitive to the direction of a ray
// that is much shorter than the embedding's scale: its derivative grows with
// the inverse square of the shortest ray, so near-coincident rows would blow
// past any stable step size long before the division itself overflows. A ray
// below this fraction of the sample's mean ray length carries no usable
// direction and is treated as zero-length; the absolute floor covers samples
// whose rays have all collapsed. Because the cutoff scales with the mean, the
// classification is invariant under similarity transforms of the embedding.
inline constexpr double kDegenerateRayFraction = 0.05;
inline constexpr double kDegenerateRayFloor = 1e-8;

inline double degenerate_ray_cutoff(const std::vector<double>& ray_norms) {
  double acc = 0.0;
  for (double n : ray_norms) acc += n;
  const double mean =
      ray_norms.empty() ? 0.0 : acc / static_cast<double>(ray_norms.size());
  return std::max(kDegenerateRayFraction * mean, kDegenerateRayFloor);
}

}  // namespace detail

/// Mean of the raw pairwise distances — the normalizer mu of the distance
/// potentials. Held constant during differentiation.
inline double mean_pair_distance(const Tensor& emb, const PairList& pairs) {
  detail::check_embeddings(emb, 2, "distance potentials");
  detail::check_pair_indices(pairs, emb.shape[0]);
  double acc = 0.0;
  for (double d : detail::raw_pair_distances(emb, pairs)) acc += d;
  return acc / static_cast<double>(pairs.size());
}

/// Distance potentials: per-pair Euclidean distance divided by mu (the mean
/// distance over the same pair set unless overridden). mu = 0 degenerates to
/// all-zero potentials.
inline std::vector<double> distance_potentials(
    const Tensor& emb, const PairList& pairs,
    std::optional<double> mu_override = std::nullopt) {
  detail::check_embeddings(emb, 2, "distance potentials");
  detail::check_pair_indices(pairs, emb.shape[0]);
  const double mu = mu_override ? *mu_override : mean_pair_distance(emb, pairs);
  std::vector<double> pots = detail::raw_pair_distances(emb, pairs);
  for (double& p : pots) p = mu == 0.0 ? 0.0 : p / mu;
  return pots;
}

/// Angle potentials: cosine of the angle at vertex t_j between the rays
/// toward t_i and t_k, clamped into [-1, 1] against rounding. A degenerate
/// ray — zero-length, or numerically indistinguishable from it at the scale
/// of the sample — yields potential 0.
inline std::vector<double> angle_potentials(const Tensor& emb,
                                            const TripletList& triplets) {
  detail::check_embeddings(emb, 3, "angle potentials");
  detail::check_triplet_indices(triplets, emb.shape[0]);
  const std::size_t d = emb.shape[1];
  struct VertexRays {
    double dot, n1, n2;
  };
  std::vector<VertexRays> rays;
  rays.reserve(triplets.size());
  std::vector<double> norms;
  norms.reserve(2 * triplets.size());
  for (const IndexTriplet& t : triplets) {
    double dot = 0.0, sq1 = 0.0, sq2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double r1 = emb.values[t.i * d + c] - emb.values[t.j * d + c];
      const double r2 = emb.values[t.k * d + c] - emb.values[t.j * d + c];
      dot += r1 * r2;
      sq1 += r1 * r1;
      sq2 += r2 * r2;
    }
    rays.push_back({dot, std::sqrt(sq1), std::sqrt(sq2)});
    norms.push_back(rays.back().n1);
    norms.push_back(rays.back().n2);
  }
  const double cutoff = detail::degenerate_ray_cutoff(norms);
  std::vector<double> out;
  out.reserve(triplets.size());
  for (const VertexRays& r : rays) {
    out.push_back(r.n1 <= cutoff || r.n2 <= cutoff
                      ? 0.0
                      : std::clamp(r.dot / (r.n1 * r.n2), -1.0, 1.0));
  }
  return out;
}

/// Both potential families of one feature set over one relation sample.
inline RelationalStructure relational_structure(const Tensor& emb,
                                                const RelationSample& sample) {
  return {distance_potentials(emb, sample.pairs),
          angle_potentials(emb, sample.triplets)};
}

// ---------------------------------------------------------------------------
// Tape-form losses
// ---------------------------------------------------------------------------

namespace detail {

/// Cached per-example row slices of an embedding variable.
class RowCache {
 public:
  explicit RowCache(ad::Var emb) : emb_(emb) {}

  ad::Var row(std::size_t i) {
    auto it = rows_.find(i);
    if (it != rows_.end()) return it->second;
    ad::Var r = ad::slice_rows(emb_, i, i + 1);
    rows_.emplace(i, r);
    return r;
  }

 private:
  ad::Var emb_;
  std::map<std::size_t, ad::Var> rows_;
};

/// Difference vector and its norm for the ray from row b toward row a,
/// cached per ordered (a, b). Mirrors row_distance arithmetic exactly, so the
/// norm's tape value is bitwise equal to the plain computation. Only rays
/// that actually feed a potential may be built: sqrt is not differentiable at
/// zero, so a degenerate ray must never join the tape.
class RayCache {
 public:
  explicit RayCache(ad::Var emb) : rows_(emb) {}

  struct Ray {
    ad::Var diff;  // 1 x d
    ad::Var norm;  // scalar
  };

  const Ray& ray(std::size_t a, std::size_t b) {
    const auto key = std::make_pair(a, b);
    auto it = rays_.find(key);
    if (it != rays_.end()) return it->second;
    ad::Var diff = ad::subtract(rows_.row(a), rows_.row(b));
    ad::Var norm = ad::sqrt(ad::sum(ad::multiply(diff, diff)));
    return rays_.emplace(key, Ray{diff, norm}).first->second;
  }

 private:
  RowCache rows_;
  std::map<std::pair<std::size_t, std::size_t>, Ray> rays_;
};

}  // namespace detail

/// Tape form of distance_potentials. Falls back to the plain computation
/// (bitwise identical) when the embedding carries no gradient.
inline ad::Var distance_potentials(
    ad::Var emb, const PairList& pairs,
    std::optional<double> mu_override = std::nullopt) {
  ad::Tape& tape = *emb.tape;
  const Tensor& value = tape.value(emb);
  if (!tape.needs_grad(emb)) {
    std::vector<double> pots = distance_potentials(value, pairs, mu_override);
    const std::size_t n = pots.size();
    return tape.constant(Tensor({n}, std::move(pots)));
  }
  detail::check_embeddings(value, 2, "distance potentials");
  detail::check_pair_indices(pairs, value.shape[0]);
  const double mu =
      mu_override ? *mu_override : mean_pair_distance(value, pairs);
  if (mu == 0.0) return tape.constant(Tensor::zeros({pairs.size()}));
  // Distances computed plainly, before any node extends the tape (and could
  // invalidate `value`); they match the tape norms bitwise.
  const std::vector<double> dists = detail::raw_pair_distances(value, pairs);
  detail::RayCache rays(emb);
  std::vector<ad::Var> norms;
  norms.reserve(pairs.size());
  for (std::size_t n = 0; n < pairs.size(); ++n) {
    // A coincident pair is pinned to a constant: its norm has no usable
    // gradient, so the ray never joins the tape.
    norms.push_back(dists[n] == 0.0
                        ? tape.constant(Tensor::scalar(0.0))
                        : rays.ray(pairs[n].i, pairs[n].j).norm);
  }
  ad::Var stacked = ad::stack_scalars(norms);
  Tensor mu_fill = Tensor::zeros({pairs.size()});
  for (auto& v : mu_fill.values) v = mu;
  return ad::divide(stacked, tape.constant(std::move(mu_fill)));
}

/// Tape form of angle_potentials with the same plain fallback.
inline ad::Var angle_potentials(ad::Var emb, const TripletList& triplets) {
  ad::Tape& tape = *emb.tape;
  const Tensor& value = tape.value(emb);
  if (!tape.needs_grad(emb)) {
    std::vector<double> pots = angle_potentials(value, triplets);
    const std::size_t n = pots.size();
    return tape.constant(Tensor({n}, std::move(pots)));
  }
  detail::check_embeddings(value, 3, "angle potentials");
  detail::check_triplet_indices(triplets, value.shape[0]);
  // Ray lengths computed plainly, before any node extends the tape (and
  // could invalidate `value`); they match the tape norms bitwise.
  std::vector<double> norms;
  norms.reserve(2 * triplets.size());
  for (const IndexTriplet& t : triplets) {
    norms.push_back(detail::row_distance(value, t.i, t.j));
    norms.push_back(detail::row_distance(value, t.k, t.j));
  }
  const double cutoff = detail::degenerate_ray_cutoff(norms);
  detail::RayCache rays(emb);
  std::vector<ad::Var> cosines;
  cosines.reserve(triplets.size());
  for (std::size_t n = 0; n < triplets.size(); ++n) {
    // A degenerate ray has no usable direction and the cosine backward grows
    // with the inverse square of the ray length, so the potential is pinned
    // to a constant and the rays never join the tape.
    if (norms[2 * n] <= cutoff || norms[2 * n + 1] <= cutoff) {
      cosines.push_back(tape.constant(Tensor::scalar(0.0)));
      continue;
    }
    const IndexTriplet& t = triplets[n];
    const auto& r1 = rays.ray(t.i, t.j);
    const auto& r2 = rays.ray(t.k, t.j);
    ad::Var dot = ad::sum(ad::multiply(r1.diff, r2.diff));
    ad::Var cosine = ad::divide(dot, ad::multiply(r1.norm, r2.norm));
    cosines.push_back(ad::clamp(cosine, -1.0, 1.0));
  }
  return ad::stack_scalars(cosines);
}

/// Mean of -log softmax(logits)[label] in the log-sum-exp stabilized form.
inline ad::Var cross_entropy(ad::Var logits,
                             const std::vector<std::size_t>& labels) {
  ad::Tape& tape = *logits.tape;
  const Tensor& value = tape.value(logits);
  if (value.rank() != 2) throw InvalidInput("cross_entropy: logits must be rank 2");
  const std::size_t m = value.shape[0], k = value.shape[1];
  if (labels.size() != m)
    throw InvalidInput("cross_entropy: one label per logit row required");
  if (m == 0) throw InvalidInput("cross_entropy: empty batch");
  Tensor onehot = Tensor::zeros({m, k});
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] >= k) throw InvalidInput("cross_entropy: label out of range");
    onehot.values[i * k + labels[i]] = 1.0;
  }
  ad::Var picked =
      ad::multiply(ad::log_softmax_rows(logits), tape.constant(std::move(onehot)));
  return ad::scale(ad::sum(picked), -1.0 / static_cast<double>(m));
}

/// Row-wise softmax of logits / T.
inline ad::Var soft_targets(ad::Var logits, double temperature) {
  if (temperature <= 0.0)
    throw InvalidInput("soft_targets: temperature must be > 0");
  return ad::softmax_rows(ad::scale(logits, 1.0 / temperature));
}

/// Mean per-example KL(teacher soft targets || student soft targets), scaled
/// by T^2 so the soft-target gradient magnitude is temperature-invariant.
inline ad::Var kd_soft_loss(ad::Var teacher_logits, ad::Var student_logits,
                            double temperature) {
  ad::Tape& tape = *teacher_logits.tape;
  const Tensor& tv = tape.value(teacher_logits);
  const Tensor& sv = tape.value(student_logits);
  if (!tv.same_shape(sv) || tv.rank() != 2)
    throw InvalidInput("kd_soft_loss: logit shapes must match");
  if (temperature <= 0.0)
    throw InvalidInput("kd_soft_loss: temperature must be > 0");
  const double m = static_cast<double>(tv.shape[0]);
  const double inv_t = 1.0 / temperature;
  ad::Var p = ad::softmax_rows(ad::scale(teacher_logits, inv_t));
  ad::Var lp = ad::log_softmax_rows(ad::scale(teacher_logits, inv_t));
  ad::Var lq = ad::log_softmax_rows(ad::scale(student_logits, inv_t));
  ad::Var kl_sum = ad::sum(ad::multiply(p, ad::subtract(lp, lq)));
  return ad::scale(kl_sum, temperature * temperature / m);
}

/// Mean over pairs of the Huber gap between teacher and student distance
/// potentials. The mu overrides exist so finite-difference checks can freeze
/// the normalizers at the base point, matching the constant-mu convention.
inline ad::Var distance_loss(ad::Var teacher_features, ad::Var student_features,
                             const PairList& pairs, double delta,
                             std::optional<double> teacher_mu = std::nullopt,
                             std::optional<double> student_mu = std::nullopt) {
  ad::Var psi_t = distance_potentials(teacher_features, pairs, teacher_mu);
  ad::Var psi_s = distance_potentials(student_features, pairs, student_mu);
  return ad::mean(ad::huber_elem(ad::subtract(psi_t, psi_s), delta));
}

/// Mean over triplets of the Huber gap between teacher and student angle
/// potentials.
inline ad::Var angle_loss(ad::Var teacher_features, ad::Var student_features,
                          const TripletList& triplets, double delta) {
  ad::Var psi_t = angle_potentials(teacher_features, triplets);
  ad::Var psi_s = angle_potentials(student_features, triplets);
  return ad::mean(ad::huber_elem(ad::subtract(psi_t, psi_s), delta));
}

/// Mean over examples of the squared Euclidean gap between feature rows.
inline ad::Var semantic_loss(ad::Var teacher_features,
                             ad::Var student_features_projected) {
  ad::Tape& tape = *teacher_features.tape;
  const Tensor& tv = tape.value(teacher_features);
  const Tensor& sv = tape.value(student_features_projected);
  if (!tv.same_shape(sv) || tv.rank() != 2)
    throw InvalidInput("semantic_loss: feature widths must match");
  const double m = static_cast<double>(tv.shape[0]);
  ad::Var diff = ad::subtract(student_features_projected, teacher_features);
  return ad::scale(ad::sum(ad::multiply(diff, diff)), 1.0 / m);
}

// ---------------------------------------------------------------------------
// Plain-form losses (local tape under the hood; identical arithmetic)
// ---------------------------------------------------------------------------

/// Scalar Huber penalty.
inline double huber(double x, double delta) {
  if (delta <= 0.0) throw InvalidInput("huber: delta must be > 0");
  const double a = std::abs(x);
  return a <= delta ? 0.5 * x * x : delta * (a - 0.5 * delta);
}

inline double cross_entropy(const Tensor& logits,
                            const std::vector<std::size_t>& labels) {
  ad::Tape tape;
  return tape.value(cross_entropy(tape.constant(logits), labels)).values[0];
}

inline Tensor soft_targets(const Tensor& logits, double temperature) {
  ad::Tape tape;
  return tape.value(soft_targets(tape.constant(logits), temperature));
}

inline double kd_soft_loss(const Tensor& teacher_logits,
                           const Tensor& student_logits, double temperature) {
  ad::Tape tape;
  return tape
      .value(kd_soft_loss(tape.constant(teacher_logits),
                          tape.constant(student_logits), temperature))
      .values[0];
}

inline double distance_loss(const Tensor& teacher_features,
                            const Tensor& student_features,
                            const PairList& pairs, double delta) {
  ad::Tape tape;
  return tape
      .value(distance_loss(tape.constant(teacher_features),
                           tape.constant(student_features), pairs, delta))
      .values[0];
}

inline double angle_loss(const Tensor& teacher_features,
                         const Tensor& student_features,
                         const TripletList& triplets, double delta) {
  ad::Tape tape;
  return tape
      .value(angle_loss(tape.constant(teacher_features),
                        tape.constant(student_features), triplets, delta))
      .values[0];
}

inline double semantic_loss(const Tensor& teacher_features,
                            const Tensor& student_features_projected) {
  ad::Tape tape;
  return tape
      .value(semantic_loss(tape.constant(teacher_features),
                           tape.constant(student_features_projected)))
      .values[0];
}

// ---------------------------------------------------------------------------
// Combined objective
// ---------------------------------------------------------------------------

/// Per-term values of one combined-loss evaluation. Terms disabled by a zero
/// weight (or an ablation switch) are reported as 0 and were never computed.
/// The total always equals, bitwise:
///   ((ce + alpha*kd) + beta*(distance + angle)) + gamma*semantic
/// accumulated in exactly that order with disabled terms contributing 0.
struct DaskBreakdown {
  double total = 0.0;
  double cross_entropy = 0.0;
  double kd = 0.0;
  double distance = 0.0;
  double angle = 0.0;
  double semantic = 0.0;
};

/// Tape-facing batch: same fields as DistillBatch, as tape variables. The
/// projected features are optional exactly as in DistillBatch.
struct DaskGraphBatch {
  ad::Var teacher_logits;
  ad::Var student_logits;
  ad::Var teacher_features;
  ad::Var student_features;
  std::optional<ad::Var> student_features_projected;
  std::vector<std::size_t> labels;
};

/// Frozen distance normalizers for finite-difference checks.
struct DaskMus {
  std::optional<double> teacher;
  std::optional<double> student;
};

struct DaskResult {
  ad::Var total;
  DaskBreakdown breakdown;
};

/// The combined objective on a tape:
///   total = cross_entropy + alpha*kd + beta*(distance + angle) + gamma*semantic.
/// Zero-weight terms (and relational terms switched off for ablations) are
/// skipped entirely, so alpha = beta = gamma = 0 is bitwise plain
/// cross-entropy.
inline DaskResult dask_total(const DaskGraphBatch& batch,
                             const DaskConfig& config, const PairList& pairs,
                             const TripletList& triplets,
                             const DaskMus& mus = {}) {
  config.validate();
  ad::Tape& tape = *batch.student_logits.tape;
  const auto scalar_value = [&tape](ad::Var v) {
    return tape.value(v).values[0];
  };

  DaskBreakdown breakdown;
  ad::Var total = cross_entropy(batch.student_logits, batch.labels);
  breakdown.cross_entropy = scalar_value(total);

  if (config.alpha != 0.0) {
    ad::Var kd = kd_soft_loss(batch.teacher_logits, batch.student_logits,
                              config.temperature);
    breakdown.kd = scalar_value(kd);
    total = ad::add(total, ad::scale(kd, config.alpha));
  }

  if (config.beta != 0.0 && (config.use_distance || config.use_angle)) {
    std::optional<ad::Var> relational;
    if (config.use_distance) {
      ad::Var d = distance_loss(batch.teacher_features, batch.student_features,
                                pairs, config.huber_delta, mus.teacher,
                                mus.student);
      breakdown.distance = scalar_value(d);
      relational = d;
    }
    if (config.use_angle) {
      ad::Var a = angle_loss(batch.teacher_features, batch.student_features,
                             triplets, config.huber_delta);
      breakdown.angle = scalar_value(a);
      relational = relational ? ad::add(*relational, a) : a;
    }
    total = ad::add(total, ad::scale(*relational, config.beta));
  }

  if (config.gamma != 0.0) {
    ad::Var projected = batch.student_features_projected
                            ? *batch.student_features_projected
                            : batch.student_features;
    ad::Var s = semantic_loss(batch.teacher_features, projected);
    breakdown.semantic = scalar_value(s);
    total = ad::add(total, ad::scale(s, config.gamma));
  }

  breakdown.total = scalar_value(total);
  return {total, breakdown};
}

/// Plain form over a DistillBatch.
inline DaskBreakdown dask_total(const DistillBatch& batch,
                                const DaskConfig& config,
                                const PairList& pairs,
                                const TripletList& triplets) {
  batch.validate();
  ad::Tape tape;
  DaskGraphBatch graph{
      tape.constant(batch.teacher_logits), tape.constant(batch.student_logits),
      tape.constant(batch.teacher_features),
      tape.constant(batch.student_features), std::nullopt, batch.labels};
  if (batch.student_features_projected.numel() != 0)
    graph.student_features_projected =
        tape.constant(batch.student_features_projected);
  return dask_total(graph, config, pairs, triplets).breakdown;
}

}  // namespace vskd::dask
