// vskd command line: encode accelerometer CSVs into GAF images, train the
// teacher, distill students, evaluate checkpoints, run the loss ablation and
// verify every gradient against finite differences.
//
// Exit codes: 0 success, 2 input error, 3 artifact error, 4 training
// failure, 5 verification failure.
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vskd/checkpoint.hpp"
#include "vskd/config.hpp"
#include "vskd/csv.hpp"
#include "vskd/dataset.hpp"
#include "vskd/encoding.hpp"
#include "vskd/losses.hpp"
#include "vskd/metrics.hpp"
#include "vskd/models.hpp"
#include "vskd/png.hpp"
#include "vskd/train.hpp"

namespace {

namespace fs = std::filesystem;
namespace io = vskd::io;

// ---------------------------------------------------------------------------
// Config plumbing
// ---------------------------------------------------------------------------

/// Keys a config file may set. Anything else is treated as a typo so a
/// misspelled knob cannot silently fall back to its default. The echo-only
/// keys appear in the config echo a run writes; accepting them lets a run
/// directory's echo be fed straight back in as the next run's config.
const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      // dataset
      "classes", "window", "samples_per_class", "sample_interval",
      "teacher_noise", "student_noise",
      // optimizer and encoding
      "rate", "momentum", "epochs", "batch", "side", "seed",
      // loss weights and knobs
      "alpha", "beta", "gamma", "temperature", "huber_delta", "pair_limit",
      "triplet_limit",
      // evaluation
      "view",
      // echo-only provenance
      "command", "input", "teacher", "checkpoint", "format", "out"};
  return keys;
}

io::Config load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw vskd::InvalidInput("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  io::Config cfg = io::parse_config(buffer.str(), path);
  for (const auto& [key, value] : cfg)
    if (!known_keys().count(key))
      throw vskd::InvalidInput(path + ": unknown config key '" + key + "'");
  return cfg;
}

/// Everything a training-family run needs, resolved from defaults, the
/// config file and command-line overrides, in that order.
struct Settings {
  vskd::SyntheticHarSpec spec;
  vskd::TrainConfig train;
  std::string view = "student";
};

Settings resolve_settings(const io::Config& cfg) {
  Settings s;
  s.spec.class_count = io::get_u64(cfg, "classes", s.spec.class_count);
  s.spec.window_length = io::get_u64(cfg, "window", s.spec.window_length);
  s.spec.samples_per_class =
      io::get_u64(cfg, "samples_per_class", s.spec.samples_per_class);
  s.spec.sample_interval =
      io::get_double(cfg, "sample_interval", s.spec.sample_interval);
  s.spec.teacher_noise = io::get_double(cfg, "teacher_noise", s.spec.teacher_noise);
  s.spec.student_noise = io::get_double(cfg, "student_noise", s.spec.student_noise);

  s.train.rate = io::get_double(cfg, "rate", s.train.rate);
  s.train.momentum = io::get_double(cfg, "momentum", s.train.momentum);
  s.train.epochs = io::get_u64(cfg, "epochs", s.train.epochs);
  s.train.batch_size = io::get_u64(cfg, "batch", s.train.batch_size);
  s.train.image_side = io::get_u64(cfg, "side", s.train.image_side);

  s.train.dask.alpha = io::get_double(cfg, "alpha", s.train.dask.alpha);
  s.train.dask.beta = io::get_double(cfg, "beta", s.train.dask.beta);
  s.train.dask.gamma = io::get_double(cfg, "gamma", s.train.dask.gamma);
  s.train.dask.temperature =
      io::get_double(cfg, "temperature", s.train.dask.temperature);
  s.train.dask.huber_delta =
      io::get_double(cfg, "huber_delta", s.train.dask.huber_delta);
  s.train.dask.pair_limit = io::get_u64(cfg, "pair_limit", s.train.dask.pair_limit);
  s.train.dask.triplet_limit =
      io::get_u64(cfg, "triplet_limit", s.train.dask.triplet_limit);

  s.train.seed = io::get_u64(cfg, "seed", 0);
  s.spec.seed = s.train.seed;

  s.view = io::get_string(cfg, "view", s.view);
  if (s.view != "teacher" && s.view != "student")
    throw vskd::InvalidInput("view must be 'teacher' or 'student', got '" +
                             s.view + "'");
  return s;
}

/// The full effective configuration, echoed so a run directory alone
/// reproduces the run.
io::Config echo_settings(const Settings& s, const std::string& command) {
  io::Config c;
  c["command"] = command;
  c["classes"] = std::to_string(s.spec.class_count);
  c["window"] = std::to_string(s.spec.window_length);
  c["samples_per_class"] = std::to_string(s.spec.samples_per_class);
  c["sample_interval"] = io::format_double(s.spec.sample_interval);
  c["teacher_noise"] = io::format_double(s.spec.teacher_noise);
  c["student_noise"] = io::format_double(s.spec.student_noise);
  c["rate"] = io::format_double(s.train.rate);
  c["momentum"] = io::format_double(s.train.momentum);
  c["epochs"] = std::to_string(s.train.epochs);
  c["batch"] = std::to_string(s.train.batch_size);
  c["side"] = std::to_string(s.train.image_side);
  c["seed"] = std::to_string(s.train.seed);
  c["alpha"] = io::format_double(s.train.dask.alpha);
  c["beta"] = io::format_double(s.train.dask.beta);
  c["gamma"] = io::format_double(s.train.dask.gamma);
  c["temperature"] = io::format_double(s.train.dask.temperature);
  c["huber_delta"] = io::format_double(s.train.dask.huber_delta);
  c["pair_limit"] = std::to_string(s.train.dask.pair_limit);
  c["triplet_limit"] = std::to_string(s.train.dask.triplet_limit);
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw vskd::ArtifactError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw vskd::ArtifactError("write failed: " + path.string());
}

/// Fresh timestamped directory under `base`, suffixed on collision.
fs::path make_run_dir(const std::string& base, const std::string& command) {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const fs::path root = fs::path(base) / (command + "-" + stamp);
  fs::path dir = root;
  for (int k = 2; fs::exists(dir); ++k)
    dir = root.string() + "-" + std::to_string(k);
  fs::create_directories(dir);
  return dir;
}

std::string metrics_text(const std::vector<io::MetricRecord>& curve) {
  std::string text;
  for (const io::MetricRecord& r : curve) text += io::format_metric(r) + "\n";
  return text;
}

double final_test_accuracy(const std::vector<io::MetricRecord>& curve) {
  for (auto it = curve.rbegin(); it != curve.rend(); ++it)
    if (it->split == "test") return it->accuracy;
  return 0.0;
}

vskd::EncodedDataset build_dataset(const Settings& s) {
  return vskd::encode_dataset(vskd::generate_dataset(s.spec),
                              s.train.image_side);
}

vskd::Mlp load_model(const std::string& path) {
  return vskd::mlp_from_params(io::read_checkpoint(path));
}

// ---------------------------------------------------------------------------
// encode
// ---------------------------------------------------------------------------

int cmd_encode(const std::string& input, const std::string& out,
               std::size_t side, const std::string& format,
               std::size_t window) {
  const std::vector<io::SensorRow> rows = io::read_sensor_csv(input);
  if (rows.empty())
    throw vskd::InvalidInput(input + ": no data rows");
  const std::vector<vskd::SensorWindow> windows =
      io::segment_windows(rows, window);

  fs::create_directories(out);
  std::string manifest;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const vskd::GafImage image =
        vskd::encode_window(windows[i], static_cast<int>(side));
    std::string filename = "window_" + std::to_string(i);
    if (format == "png") {
      filename += ".png";
      const vskd::Rgb8Image raster = vskd::quantize_image(image);
      io::write_png_rgb((fs::path(out) / filename).string(), side, side,
                        raster.rgb);
    } else {
      filename += ".raw";
      std::vector<double> values;
      values.reserve(3 * side * side);
      for (const auto& channel : image.channels)
        values.insert(values.end(), channel.begin(), channel.end());
      const vskd::Tensor gaf({3, side, side}, std::move(values));
      io::write_checkpoint((fs::path(out) / filename).string(),
                           {{"gaf", gaf}});
    }
    manifest += std::to_string(i) + "," + filename + "," +
                std::to_string(windows[i].label) + "," + std::to_string(side) +
                "\n";
  }
  write_text(fs::path(out) / "manifest.csv", manifest);
  std::printf("encoded %zu windows to %s\n", windows.size(), out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train-teacher / distill / eval / ablate
// ---------------------------------------------------------------------------

int cmd_train_teacher(const Settings& s, const std::string& out) {
  const fs::path dir = make_run_dir(out, "teacher");
  const vskd::EncodedDataset data = build_dataset(s);
  const vskd::TeacherRun run = vskd::train_teacher(data, s.train);
  io::write_checkpoint((dir / "teacher.ckpt").string(),
                       vskd::named_params(run.model));
  write_text(dir / "metrics.jsonl", metrics_text(run.curve));
  write_text(dir / "config.txt",
             io::format_config(echo_settings(s, "train-teacher")));
  std::printf("run directory: %s\n", dir.string().c_str());
  std::printf("final test accuracy %s\n",
              io::format_double(final_test_accuracy(run.curve)).c_str());
  return 0;
}

int cmd_distill(const std::string& teacher_path, const Settings& s,
                const std::string& out) {
  const vskd::Mlp teacher = load_model(teacher_path);
  const fs::path dir = make_run_dir(out, "distill");
  const vskd::EncodedDataset data = build_dataset(s);
  const vskd::StudentRun run = vskd::distill_student(data, teacher, s.train);
  io::write_checkpoint((dir / "student.ckpt").string(),
                       vskd::named_params(run.model));
  write_text(dir / "metrics.jsonl", metrics_text(run.curve));
  io::Config echo = echo_settings(s, "distill");
  echo["teacher"] = teacher_path;
  write_text(dir / "config.txt", io::format_config(echo));
  std::printf("run directory: %s\n", dir.string().c_str());
  std::printf("final test accuracy %s\n",
              io::format_double(final_test_accuracy(run.curve)).c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const Settings& s,
             const std::string& out) {
  const vskd::Mlp model = load_model(checkpoint);
  const vskd::EncodedDataset data = build_dataset(s);
  const vskd::Tensor& inputs = s.view == "teacher" ? data.test.teacher_inputs
                                                   : data.test.student_inputs;
  const vskd::EvalResult result =
      vskd::evaluate(model, inputs, data.test.labels, data.class_count);

  const fs::path dir = make_run_dir(out, "eval");
  io::Config echo = echo_settings(s, "eval");
  echo["checkpoint"] = checkpoint;
  echo["view"] = s.view;
  write_text(dir / "config.txt", io::format_config(echo));
  io::Config result_cfg;
  result_cfg["accuracy"] = io::format_double(result.accuracy);
  result_cfg["f1"] = io::format_double(result.f1);
  write_text(dir / "result.txt", io::format_config(result_cfg));
  std::printf("run directory: %s\n", dir.string().c_str());
  std::printf("accuracy %s f1 %s\n", io::format_double(result.accuracy).c_str(),
              io::format_double(result.f1).c_str());
  return 0;
}

int cmd_ablate(const Settings& s, const std::string& out) {
  const fs::path dir = make_run_dir(out, "ablate");
  const vskd::EncodedDataset data = build_dataset(s);
  const vskd::TeacherRun teacher = vskd::train_teacher(data, s.train);
  io::write_checkpoint((dir / "teacher.ckpt").string(),
                       vskd::named_params(teacher.model));
  const std::vector<io::AblationRow> rows =
      vskd::run_ablation(data, teacher.model, s.train);
  const std::string table = io::format_ablation_csv(rows);
  write_text(dir / "ablation.csv", table);
  write_text(dir / "config.txt", io::format_config(echo_settings(s, "ablate")));
  std::printf("run directory: %s\n", dir.string().c_str());
  std::fputs(table.c_str(), stdout);
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

vskd::Tensor random_tensor(vskd::Rng& rng, std::vector<std::size_t> shape,
                           double scale = 1.0) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  std::vector<double> values(n);
  for (double& v : values) v = scale * rng.normal();
  return vskd::Tensor(std::move(shape), std::move(values));
}

struct OpCheck {
  std::string name;
  double max_rel = 0.0;
};

/// Finite-difference check of one forward pass: the scalar readout is a fixed
/// random weighting of every network output, differentiated in turn with
/// respect to the input and each parameter tensor.
double check_forward(const vskd::Mlp& model, const vskd::Tensor& input,
                     vskd::Rng& rng, double step) {
  const std::size_t m = input.shape[0];
  const bool with_projection = model.projection.has_value();
  const vskd::Tensor r_logits = random_tensor(rng, {m, model.class_count()});
  const vskd::Tensor r_features = random_tensor(rng, {m, model.feature_width()});
  const vskd::Tensor r_projected =
      with_projection
          ? random_tensor(rng, {m, model.projection->weight.shape[1]})
          : vskd::Tensor();

  // Parameter tensors in checkpoint order; index numel() marks the input.
  std::vector<const vskd::Tensor*> params;
  for (const vskd::DenseLayer& layer : model.layers) {
    params.push_back(&layer.weight);
    params.push_back(&layer.bias);
  }
  if (with_projection) {
    params.push_back(&model.projection->weight);
    params.push_back(&model.projection->bias);
  }

  double worst = 0.0;
  for (std::size_t target = 0; target <= params.size(); ++target) {
    const vskd::Tensor& point =
        target < params.size() ? *params[target] : input;
    auto f = [&](vskd::ad::Tape& tape, vskd::ad::Var x) {
      vskd::BoundModel bound;
      std::size_t index = 0;
      auto var_for = [&](const vskd::Tensor& tensor) {
        vskd::ad::Var v =
            index == target ? x : tape.constant(tensor);
        ++index;
        return v;
      };
      for (const vskd::DenseLayer& layer : model.layers) {
        const vskd::ad::Var w = var_for(layer.weight);
        const vskd::ad::Var b = var_for(layer.bias);
        bound.layer_vars.emplace_back(w, b);
      }
      if (with_projection) {
        const vskd::ad::Var w = var_for(model.projection->weight);
        const vskd::ad::Var b = var_for(model.projection->bias);
        bound.projection_vars.emplace(w, b);
      }
      vskd::ad::Var in = target == params.size() ? x : tape.constant(input);
      const vskd::ModelOutputs out =
          vskd::forward(tape, bound, in, with_projection);
      vskd::ad::Var scalar = vskd::ad::add(
          vskd::ad::sum(vskd::ad::multiply(out.logits, tape.constant(r_logits))),
          vskd::ad::sum(
              vskd::ad::multiply(out.features, tape.constant(r_features))));
      if (with_projection)
        scalar = vskd::ad::add(
            scalar, vskd::ad::sum(vskd::ad::multiply(
                        *out.projected, tape.constant(r_projected))));
      return scalar;
    };
    worst = std::max(worst, vskd::ad::grad_check(f, point, step));
  }
  return worst;
}

int cmd_gradcheck(std::size_t seeds, std::uint64_t base_seed, bool inject) {
  if (seeds == 0) throw vskd::InvalidInput("--seeds must be at least 1");
  if (inject) vskd::ad::testing::backward_perturbation = 1e-3;

  const double step = 1e-5;
  const double threshold = 1e-4;
  constexpr std::size_t m = 6, classes = 4, d_teacher = 5, d_student = 3;

  std::vector<OpCheck> ops = {{"cross_entropy"}, {"kd_soft_loss"},
                              {"distance_loss"}, {"angle_loss"},
                              {"semantic_loss"}, {"dask_total"},
                              {"teacher_forward"}, {"student_forward"}};
  auto record = [&](const std::string& name, double rel) {
    for (OpCheck& op : ops)
      if (op.name == name) op.max_rel = std::max(op.max_rel, rel);
  };

  for (std::size_t s = 0; s < seeds; ++s) {
    vskd::Rng rng(vskd::mix_seed(base_seed, 200, s));
    const vskd::Tensor teacher_logits = random_tensor(rng, {m, classes});
    const vskd::Tensor student_logits = random_tensor(rng, {m, classes});
    const vskd::Tensor teacher_features = random_tensor(rng, {m, d_teacher});
    const vskd::Tensor student_features = random_tensor(rng, {m, d_student});
    const vskd::Tensor projected = random_tensor(rng, {m, d_teacher});
    std::vector<std::size_t> labels(m);
    for (std::size_t i = 0; i < m; ++i) labels[i] = rng.below(classes);
    const vskd::dask::RelationSample rel = vskd::dask::sample_relations(
        m, 256, 256, vskd::mix_seed(base_seed, 201, s));
    const vskd::dask::DaskConfig cfg;  // defaults: all terms active

    record("cross_entropy",
           vskd::ad::grad_check(
               [&](vskd::ad::Tape& t, vskd::ad::Var x) {
                 return vskd::dask::cross_entropy(x, labels);
               },
               student_logits, step));
    record("kd_soft_loss",
           vskd::ad::grad_check(
               [&](vskd::ad::Tape& t, vskd::ad::Var x) {
                 return vskd::dask::kd_soft_loss(t.constant(teacher_logits), x,
                                                 cfg.temperature);
               },
               student_logits, step));
    // The distance normalizer is frozen at the base point on both sides of
    // the comparison; training treats it as a constant of the batch.
    const double frozen_mu =
        vskd::dask::mean_pair_distance(student_features, rel.pairs);
    record("distance_loss",
           vskd::ad::grad_check(
               [&](vskd::ad::Tape& t, vskd::ad::Var x) {
                 return vskd::dask::distance_loss(t.constant(teacher_features),
                                                  x, rel.pairs, cfg.huber_delta,
                                                  std::nullopt, frozen_mu);
               },
               student_features, step));
    record("angle_loss",
           vskd::ad::grad_check(
               [&](vskd::ad::Tape& t, vskd::ad::Var x) {
                 return vskd::dask::angle_loss(t.constant(teacher_features), x,
                                               rel.triplets, cfg.huber_delta);
               },
               student_features, step));
    record("semantic_loss",
           vskd::ad::grad_check(
               [&](vskd::ad::Tape& t, vskd::ad::Var x) {
                 return vskd::dask::semantic_loss(t.constant(teacher_features),
                                                  x);
               },
               projected, step));

    // The combined objective, differentiated against each student-side input.
    auto dask_with = [&](vskd::ad::Tape& t, std::optional<vskd::ad::Var> lg,
                         std::optional<vskd::ad::Var> ft,
                         std::optional<vskd::ad::Var> pj) {
      vskd::dask::DaskGraphBatch batch{
          t.constant(teacher_logits),
          lg ? *lg : t.constant(student_logits),
          t.constant(teacher_features),
          ft ? *ft : t.constant(student_features),
          pj ? *pj : t.constant(projected),
          labels};
      vskd::dask::DaskMus mus;
      mus.student = frozen_mu;
      return vskd::dask::dask_total(batch, cfg, rel.pairs, rel.triplets, mus)
          .total;
    };
    double worst = vskd::ad::grad_check(
        [&](vskd::ad::Tape& t, vskd::ad::Var x) {
          return dask_with(t, x, std::nullopt, std::nullopt);
        },
        student_logits, step);
    worst = std::max(worst, vskd::ad::grad_check(
                                [&](vskd::ad::Tape& t, vskd::ad::Var x) {
                                  return dask_with(t, std::nullopt, x,
                                                   std::nullopt);
                                },
                                student_features, step));
    worst = std::max(worst, vskd::ad::grad_check(
                                [&](vskd::ad::Tape& t, vskd::ad::Var x) {
                                  return dask_with(t, std::nullopt,
                                                   std::nullopt, x);
                                },
                                projected, step));
    record("dask_total", worst);

    // Desk-size stand-ins with the production layer structure: two hidden
    // layers, the scaled-tanh feature embedding, and the student projection.
    vskd::Mlp teacher = vskd::make_mlp(7, {5, 4}, 3, rng);
    vskd::Mlp student = vskd::make_mlp(7, {6, 3}, 3, rng);
    student.projection =
        vskd::init_layer(student.feature_width(), teacher.feature_width(),
                         std::sqrt(1.0 / student.feature_width()), rng);
    const vskd::Tensor input = random_tensor(rng, {4, 7});
    record("teacher_forward", check_forward(teacher, input, rng, step));
    record("student_forward", check_forward(student, input, rng, step));
  }

  bool ok = true;
  std::string failing;
  for (const OpCheck& op : ops) {
    const bool pass = op.max_rel < threshold;
    std::printf("%-16s max relative error %.3e  %s\n", op.name.c_str(),
                op.max_rel, pass ? "ok" : "FAIL");
    if (!pass) {
      ok = false;
      failing += (failing.empty() ? "" : ", ") + op.name;
    }
  }
  if (!ok) {
    std::fprintf(stderr, "verification failure: %s\n", failing.c_str());
    return 5;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GAF sensor encoding and relational knowledge distillation"};
  app.require_subcommand(1);

  std::string input, out = "runs", config_path, format = "png";
  std::string teacher_path, checkpoint_path;
  std::size_t side = 16, seeds = 5;
  std::uint64_t seed = 0;
  bool inject = false;

  CLI::App* enc = app.add_subcommand(
      "encode", "Encode a sensor CSV into per-window GAF images");
  enc->add_option("input", input, "CSV with header timestamp,ax,ay,az,label")
      ->required();
  enc->add_option("--out", out, "output directory")->required();
  enc->add_option("--side", side, "image side length (default 16)");
  enc->add_option("--format", format, "png or raw (default png)")
      ->check(CLI::IsMember({"png", "raw"}));
  enc->add_option("--config", config_path, "key = value config file");

  CLI::App* teach = app.add_subcommand(
      "train-teacher", "Train the teacher on teacher-view images");
  CLI::App* dist = app.add_subcommand(
      "distill", "Distill a student against a frozen teacher checkpoint");
  dist->add_option("teacher", teacher_path, "teacher checkpoint")->required();
  CLI::App* eval = app.add_subcommand(
      "eval", "Evaluate a checkpoint on the test split");
  eval->add_option("checkpoint", checkpoint_path, "model checkpoint")
      ->required();
  CLI::App* abl = app.add_subcommand(
      "ablate", "Distill every loss variant and tabulate accuracy");
  for (CLI::App* cmd : {teach, dist, eval, abl}) {
    cmd->add_option("--config", config_path, "key = value config file");
    cmd->add_option("--out", out, "base directory for run outputs");
    cmd->add_option("--seed", seed, "seed override");
  }

  CLI::App* grad = app.add_subcommand(
      "gradcheck", "Verify every loss and forward pass against finite differences");
  grad->add_option("--seeds", seeds, "number of random points per operation");
  grad->add_option("--seed", seed, "base seed");
  grad->add_flag("--inject-backward-error", inject,
                 "corrupt one backward rule to prove the checker detects it")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    Settings s;
    if (teach->parsed() || dist->parsed() || eval->parsed() || abl->parsed()) {
      CLI::App* active = teach->parsed() ? teach
                         : dist->parsed() ? dist
                         : eval->parsed() ? eval
                                          : abl;
      io::Config cfg =
          config_path.empty() ? io::Config{} : load_config(config_path);
      if (active->count("--seed")) cfg["seed"] = std::to_string(seed);
      s = resolve_settings(cfg);
    }
    if (enc->parsed()) {
      io::Config cfg =
          config_path.empty() ? io::Config{} : load_config(config_path);
      if (enc->count("--side")) cfg["side"] = std::to_string(side);
      const std::size_t window = io::get_u64(cfg, "window", 128);
      return cmd_encode(input, out, io::get_u64(cfg, "side", side), format,
                        window);
    }
    if (teach->parsed()) return cmd_train_teacher(s, out);
    if (dist->parsed()) return cmd_distill(teacher_path, s, out);
    if (eval->parsed()) return cmd_eval(checkpoint_path, s, out);
    if (abl->parsed()) return cmd_ablate(s, out);
    return cmd_gradcheck(seeds, seed, inject);
  } catch (const vskd::InvalidInput& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 2;
  } catch (const vskd::TrainingFailure& e) {
    std::fprintf(stderr, "training failure: %s\n", e.what());
    return 4;
  } catch (const vskd::ArtifactError& e) {
    std::fprintf(stderr, "artifact error: %s\n", e.what());
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 2;
  }
}
