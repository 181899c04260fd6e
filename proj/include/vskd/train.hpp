#pragma once

// Two-phase training protocol: the teacher learns from its own view with
// plain cross-entropy, then the student learns from its noisier view against
// the frozen teacher through the combined distillation objective. Everything
// is seeded and single-threaded, so a (dataset seed, training seed) pair
// reproduces checkpoints and metrics bit for bit.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "vskd/autodiff.hpp"
#include "vskd/common.hpp"
#include "vskd/dataset.hpp"
#include "vskd/encoding.hpp"
#include "vskd/losses.hpp"
#include "vskd/metrics.hpp"
#include "vskd/models.hpp"
#include "vskd/rng.hpp"

namespace vskd {

struct TrainConfig {
  double rate = 0.05;
  double momentum = 0.9;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  int image_side = 16;
  dask::DaskConfig dask{};
  std::uint64_t seed = 0;

  void validate() const {
    // rate 0 is allowed as the documented no-op optimizer for diagnostics.
    if (!(rate >= 0.0) || !std::isfinite(rate))
      throw InvalidInput("train config: rate must be a non-negative real");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw InvalidInput("train config: momentum must be in [0, 1)");
    if (epochs < 1) throw InvalidInput("train config: epochs must be >= 1");
    // Relational terms need pairs and triplets within a batch.
    if (batch_size < 4) throw InvalidInput("train config: batch size must be >= 4");
    if (image_side < 2) throw InvalidInput("train config: image side must be >= 2");
    dask.validate();
  }
};

namespace detail {

[[noreturn]] inline void fail_training(std::size_t epoch, const std::string& why) {
  throw TrainingFailure(static_cast<int>(epoch),
                        "training failed at epoch " + std::to_string(epoch) + ": " + why);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Windows -> flattened image rows
// ---------------------------------------------------------------------------

struct EncodedSplit {
  Tensor teacher_inputs;  // {m, 3*side*side}
  Tensor student_inputs;  // {m, 3*side*side}
  std::vector<std::size_t> labels;
};

struct EncodedDataset {
  EncodedSplit train;
  EncodedSplit test;
  std::size_t class_count = 0;
  int side = 0;
};

namespace detail {

inline void flatten_image(const GafImage& img, double* dst) {
  for (std::size_t c = 0; c < 3; ++c) {
    std::memcpy(dst, img.channels[c].data(), img.channels[c].size() * sizeof(double));
    dst += img.channels[c].size();
  }
}

}  // namespace detail

inline EncodedSplit encode_split(const std::vector<HarExample>& examples, int side) {
  const std::size_t m = examples.size();
  const std::size_t d = 3 * static_cast<std::size_t>(side) * static_cast<std::size_t>(side);
  EncodedSplit out{Tensor::zeros({m, d}), Tensor::zeros({m, d}), {}};
  out.labels.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    detail::flatten_image(encode_window(examples[i].teacher_view, side),
                          &out.teacher_inputs.values[i * d]);
    detail::flatten_image(encode_window(examples[i].student_view, side),
                          &out.student_inputs.values[i * d]);
    if (examples[i].label < 0) throw InvalidInput("encode_split: negative label");
    out.labels[i] = static_cast<std::size_t>(examples[i].label);
  }
  return out;
}

inline EncodedDataset encode_dataset(const HarDataset& data, int side) {
  EncodedDataset out{encode_split(data.train, side), encode_split(data.test, side), 0, side};
  for (const auto& split : {out.train, out.test})
    for (std::size_t label : split.labels)
      out.class_count = std::max(out.class_count, label + 1);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  double accuracy = 0.0;
  double f1 = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
};

/// Accuracy, macro F1 and the confusion matrix from predicted labels.
/// Classes absent from both predictions and truth are excluded from the
/// macro mean; a class with no true positives scores F1 = 0.
inline EvalResult eval_from_predictions(const std::vector<std::size_t>& predicted,
                                        const std::vector<std::size_t>& truth,
                                        std::size_t class_count) {
  if (truth.empty()) throw InvalidInput("evaluate: empty split");
  if (predicted.size() != truth.size())
    throw InvalidInput("evaluate: prediction/label count mismatch");
  EvalResult r;
  r.confusion.assign(class_count, std::vector<std::size_t>(class_count, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= class_count || predicted[i] >= class_count)
      throw InvalidInput("evaluate: label out of range");
    ++r.confusion[truth[i]][predicted[i]];
    if (predicted[i] == truth[i]) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());

  double f1_sum = 0.0;
  std::size_t active = 0;
  for (std::size_t c = 0; c < class_count; ++c) {
    std::size_t tp = r.confusion[c][c], fn = 0, fp = 0;
    for (std::size_t j = 0; j < class_count; ++j) {
      if (j != c) {
        fn += r.confusion[c][j];
        fp += r.confusion[j][c];
      }
    }
    if (tp + fn + fp == 0) continue;  // class absent everywhere
    ++active;
    if (tp > 0)
      f1_sum += 2.0 * static_cast<double>(tp) /
                static_cast<double>(2 * tp + fp + fn);
  }
  r.f1 = f1_sum / static_cast<double>(active);
  return r;
}

inline EvalResult evaluate(const Mlp& model, const Tensor& inputs,
                           const std::vector<std::size_t>& labels,
                           std::size_t class_count) {
  if (labels.empty()) throw InvalidInput("evaluate: empty split");
  if (inputs.rank() != 2 || inputs.shape[0] != labels.size() ||
      inputs.shape[1] != model.input_dim())
    throw InvalidInput("evaluate: input shape does not match the model");
  const PlainOutputs out = forward_plain(model, inputs);
  return eval_from_predictions(argmax_rows(out.logits), labels, class_count);
}

// ---------------------------------------------------------------------------
// SGD with momentum
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<Tensor*> param_tensors(Mlp& m) {
  std::vector<Tensor*> out;
  for (DenseLayer& l : m.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  if (m.projection) {
    out.push_back(&m.projection->weight);
    out.push_back(&m.projection->bias);
  }
  return out;
}

struct SgdState {
  std::vector<Tensor> velocity;

  explicit SgdState(Mlp& m) {
    for (const Tensor* p : param_tensors(m)) velocity.push_back(Tensor::zeros(p->shape));
  }
};

// v <- momentum*v - rate*grad; w <- w + v. Order matches bind_model/all_vars.
inline void sgd_step(Mlp& m, SgdState& opt, ad::Tape& tape, const BoundModel& bound,
                     double rate, double momentum) {
  const std::vector<Tensor*> params = param_tensors(m);
  const std::vector<ad::Var> vars = bound.all_vars();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor& g = tape.grad(vars[k]);
    Tensor& v = opt.velocity[k];
    Tensor& w = *params[k];
    for (std::size_t j = 0; j < w.numel(); ++j) {
      v.values[j] = momentum * v.values[j] - rate * g.values[j];
      w.values[j] += v.values[j];
    }
  }
}

inline Tensor gather_rows(const Tensor& src, const std::vector<std::size_t>& rows,
                          std::size_t begin, std::size_t end) {
  const std::size_t d = src.shape[1];
  Tensor out = Tensor::zeros({end - begin, d});
  for (std::size_t i = begin; i < end; ++i)
    std::memcpy(&out.values[(i - begin) * d], &src.values[rows[i] * d],
                d * sizeof(double));
  return out;
}

inline std::vector<std::size_t> gather_labels(const std::vector<std::size_t>& labels,
                                              const std::vector<std::size_t>& rows,
                                              std::size_t begin, std::size_t end) {
  std::vector<std::size_t> out(end - begin);
  for (std::size_t i = begin; i < end; ++i) out[i - begin] = labels[rows[i]];
  return out;
}

inline std::vector<std::size_t> epoch_order(std::size_t m, std::uint64_t seed,
                                            std::uint64_t stream, std::size_t epoch) {
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  Rng rng(mix_seed(seed, stream, epoch));
  rng.shuffle(order);
  return order;
}

// Trailing batches below 4 examples are dropped: the relational terms need
// at least one triplet, and both phases share the rule for comparability.
inline constexpr std::size_t kMinBatch = 4;

}  // namespace detail

// ---------------------------------------------------------------------------
// Phase 1: teacher
// ---------------------------------------------------------------------------

struct TeacherRun {
  Mlp model;
  std::vector<io::MetricRecord> curve;
};

inline TeacherRun train_teacher(const EncodedDataset& data, const TrainConfig& config) {
  config.validate();
  if (data.train.labels.empty() || data.test.labels.empty())
    throw InvalidInput("train_teacher: empty split");
  const std::size_t m = data.train.labels.size();
  const std::size_t d = data.train.teacher_inputs.shape[1];

  Rng init_rng(mix_seed(config.seed, 100));
  TeacherRun run{make_teacher(d, data.class_count, init_rng), {}};
  detail::SgdState opt(run.model);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = detail::epoch_order(m, config.seed, 102, epoch);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < m; start += config.batch_size) {
      const std::size_t stop = std::min(m, start + config.batch_size);
      if (stop - start < detail::kMinBatch) break;
      ad::Tape tape;
      const BoundModel bound = bind_model(tape, run.model, true);
      const ModelOutputs out =
          forward(tape, bound,
                  tape.constant(detail::gather_rows(data.train.teacher_inputs, order,
                                                    start, stop)));
      const ad::Var loss = dask::cross_entropy(
          out.logits, detail::gather_labels(data.train.labels, order, start, stop));
      const double value = tape.value(loss).values[0];
      if (!std::isfinite(value))
        detail::fail_training(epoch, "cross-entropy became non-finite");
      tape.backward(loss);
      detail::sgd_step(run.model, opt, tape, bound, config.rate, config.momentum);
      loss_sum += value * static_cast<double>(stop - start);
      seen += stop - start;
    }

    io::MetricRecord train_rec;
    train_rec.epoch = epoch;
    train_rec.split = "train";
    train_rec.loss_total = train_rec.loss_ce = loss_sum / static_cast<double>(seen);
    const EvalResult train_eval = evaluate(run.model, data.train.teacher_inputs,
                                           data.train.labels, data.class_count);
    train_rec.accuracy = train_eval.accuracy;
    train_rec.f1 = train_eval.f1;
    run.curve.push_back(train_rec);

    const PlainOutputs test_out = forward_plain(run.model, data.test.teacher_inputs);
    io::MetricRecord test_rec;
    test_rec.epoch = epoch;
    test_rec.split = "test";
    test_rec.loss_total = test_rec.loss_ce =
        dask::cross_entropy(test_out.logits, data.test.labels);
    const EvalResult test_eval = eval_from_predictions(
        argmax_rows(test_out.logits), data.test.labels, data.class_count);
    test_rec.accuracy = test_eval.accuracy;
    test_rec.f1 = test_eval.f1;
    run.curve.push_back(test_rec);
  }
  return run;
}

// ---------------------------------------------------------------------------
// Phase 2: student distillation
// ---------------------------------------------------------------------------

struct StudentRun {
  Mlp model;
  std::vector<io::MetricRecord> curve;
};

/// Trains a student on student-view images against the frozen teacher. With
/// alpha = beta = gamma = 0 this is exactly plain student training (the
/// distillation terms are never built). At evaluation time the student runs
/// alone on its own view.
inline StudentRun distill_student(const EncodedDataset& data, const Mlp& teacher,
                                  const TrainConfig& config) {
  config.validate();
  teacher.validate();
  if (data.train.labels.empty() || data.test.labels.empty())
    throw InvalidInput("distill_student: empty split");
  const std::size_t m = data.train.labels.size();
  const std::size_t d = data.train.student_inputs.shape[1];
  if (teacher.input_dim() != d || teacher.class_count() != data.class_count)
    throw InvalidInput("distill_student: teacher does not match the dataset");

  // The teacher is frozen, so its logits and features over the training set
  // are constants; compute them once up front.
  const PlainOutputs teacher_out = forward_plain(teacher, data.train.teacher_inputs);

  Rng init_rng(mix_seed(config.seed, 101));
  StudentRun run{make_student(d, data.class_count, teacher.feature_width(), init_rng), {}};
  detail::SgdState opt(run.model);

  const bool want_projection = config.dask.gamma != 0.0;
  const bool want_relations =
      config.dask.beta != 0.0 && (config.dask.use_distance || config.dask.use_angle);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = detail::epoch_order(m, config.seed, 103, epoch);
    double sums[6] = {0, 0, 0, 0, 0, 0};  // total, ce, kd, d, a, s
    std::size_t seen = 0, batch_index = 0;
    for (std::size_t start = 0; start < m; start += config.batch_size, ++batch_index) {
      const std::size_t stop = std::min(m, start + config.batch_size);
      const std::size_t batch_m = stop - start;
      if (batch_m < detail::kMinBatch) break;

      ad::Tape tape;
      const BoundModel bound = bind_model(tape, run.model, true);
      const ModelOutputs out = forward(
          tape, bound,
          tape.constant(detail::gather_rows(data.train.student_inputs, order, start, stop)),
          want_projection);

      dask::DaskGraphBatch batch{
          tape.constant(detail::gather_rows(teacher_out.logits, order, start, stop)),
          out.logits,
          tape.constant(detail::gather_rows(teacher_out.features, order, start, stop)),
          out.features,
          out.projected,
          detail::gather_labels(data.train.labels, order, start, stop)};

      dask::RelationSample rel;
      if (want_relations)
        rel = dask::sample_relations(batch_m, config.dask.pair_limit,
                                     config.dask.triplet_limit,
                                     mix_seed(config.seed, 104, epoch, batch_index));

      const dask::DaskResult res =
          dask::dask_total(batch, config.dask, rel.pairs, rel.triplets);
      if (!std::isfinite(res.breakdown.total))
        detail::fail_training(epoch, "distillation objective became non-finite");
      tape.backward(res.total);
      detail::sgd_step(run.model, opt, tape, bound, config.rate, config.momentum);

      const double w = static_cast<double>(batch_m);
      sums[0] += res.breakdown.total * w;
      sums[1] += res.breakdown.cross_entropy * w;
      sums[2] += res.breakdown.kd * w;
      sums[3] += res.breakdown.distance * w;
      sums[4] += res.breakdown.angle * w;
      sums[5] += res.breakdown.semantic * w;
      seen += batch_m;
    }

    io::MetricRecord train_rec;
    train_rec.epoch = epoch;
    train_rec.split = "train";
    train_rec.loss_total = sums[0] / static_cast<double>(seen);
    train_rec.loss_ce = sums[1] / static_cast<double>(seen);
    train_rec.loss_kd = sums[2] / static_cast<double>(seen);
    train_rec.loss_d = sums[3] / static_cast<double>(seen);
    train_rec.loss_a = sums[4] / static_cast<double>(seen);
    train_rec.loss_s = sums[5] / static_cast<double>(seen);
    const EvalResult train_eval = evaluate(run.model, data.train.student_inputs,
                                           data.train.labels, data.class_count);
    train_rec.accuracy = train_eval.accuracy;
    train_rec.f1 = train_eval.f1;
    run.curve.push_back(train_rec);

    const PlainOutputs test_out = forward_plain(run.model, data.test.student_inputs);
    io::MetricRecord test_rec;
    test_rec.epoch = epoch;
    test_rec.split = "test";
    test_rec.loss_total = test_rec.loss_ce =
        dask::cross_entropy(test_out.logits, data.test.labels);
    const EvalResult test_eval = eval_from_predictions(
        argmax_rows(test_out.logits), data.test.labels, data.class_count);
    test_rec.accuracy = test_eval.accuracy;
    test_rec.f1 = test_eval.f1;
    run.curve.push_back(test_rec);
  }
  return run;
}

// ---------------------------------------------------------------------------
// Ablation harness
// ---------------------------------------------------------------------------

struct AblationVariant {
  std::string name;
  dask::DaskConfig dask;
};

/// The six studied configurations: the full objective, single-term removals
/// (distance, angle, the whole relational block, semantic) and the plain
/// cross-entropy baseline.
inline std::vector<AblationVariant> ablation_variants(const dask::DaskConfig& base) {
  std::vector<AblationVariant> out;
  out.push_back({"dask", base});
  dask::DaskConfig ask = base;
  ask.use_distance = false;
  out.push_back({"ask", ask});
  dask::DaskConfig dsk = base;
  dsk.use_angle = false;
  out.push_back({"dsk", dsk});
  dask::DaskConfig sk = base;
  sk.beta = 0.0;
  out.push_back({"sk", sk});
  dask::DaskConfig dak = base;
  dak.gamma = 0.0;
  out.push_back({"dak", dak});
  dask::DaskConfig baseline = base;
  baseline.alpha = baseline.beta = baseline.gamma = 0.0;
  out.push_back({"baseline", baseline});
  return out;
}

/// Distills one student per variant, all from the same seed and against the
/// same frozen teacher, and reports test accuracy and macro F1 per variant.
inline std::vector<io::AblationRow> run_ablation(const EncodedDataset& data,
                                                 const Mlp& teacher,
                                                 const TrainConfig& base) {
  std::vector<io::AblationRow> rows;
  for (const AblationVariant& variant : ablation_variants(base.dask)) {
    TrainConfig config = base;
    config.dask = variant.dask;
    const StudentRun run = distill_student(data, teacher, config);
    const EvalResult ev = evaluate(run.model, data.test.student_inputs,
                                   data.test.labels, data.class_count);
    rows.push_back({variant.name, ev.accuracy, ev.f1});
  }
  return rows;
}

}  // namespace vskd
