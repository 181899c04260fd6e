// End-to-end tests of the vskd command line: every subcommand is exercised
// through a real subprocess and judged on exit codes, files written and
// stdout, never on library internals.
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vskd/checkpoint.hpp"
#include "vskd/config.hpp"
#include "vskd/csv.hpp"
#include "vskd/encoding.hpp"
#include "vskd/metrics.hpp"
#include "vskd/png.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void spit(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

/// Fresh scratch directory for one test case.
fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "vskd_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Runs the tool from inside `cwd` and captures exit code, stdout, stderr.
CliResult run_cli(const std::string& args, const fs::path& cwd) {
  const fs::path out_file = cwd / "_stdout.txt";
  const fs::path err_file = cwd / "_stderr.txt";
  const std::string command = "cd '" + cwd.string() + "' && '" + VSKD_CLI_PATH +
                              "' " + args + " > '" + out_file.string() +
                              "' 2> '" + err_file.string() + "'";
  const int status = std::system(command.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

/// The single run directory created under base/, failing if absent.
fs::path only_run_dir(const fs::path& base) {
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(base))
    if (entry.is_directory()) dirs.push_back(entry.path());
  REQUIRE(dirs.size() == 1);
  return dirs.front();
}

std::string small_config_text(std::uint64_t seed) {
  return "classes = 3\nwindow = 32\nsamples_per_class = 20\nepochs = 6\n"
         "batch = 8\nside = 8\nseed = " +
         std::to_string(seed) + "\n";
}

/// Sinusoid CSV long enough for a few windows.
std::string sine_csv(std::size_t rows, int label) {
  std::string text = "timestamp,ax,ay,az,label\n";
  for (std::size_t i = 0; i < rows; ++i) {
    const double t = 0.02 * static_cast<double>(i);
    char line[128];
    std::snprintf(line, sizeof line, "%.3f,%.6f,%.6f,%.6f,%d\n", t,
                  std::sin(2.0 * t), std::cos(3.0 * t), std::sin(5.0 * t + 1.0),
                  label);
    text += line;
  }
  return text;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream stream(text);
  std::string line;
  while (std::getline(stream, line)) lines.push_back(line);
  return lines;
}

/// Shared small training fixture: one teacher checkpoint reused by the
/// distill/eval/ablate cases.
struct TeacherFixture {
  fs::path dir = scratch_dir("teacher_fixture");
  fs::path config = dir / "run.cfg";
  fs::path checkpoint;

  TeacherFixture() {
    spit(config, small_config_text(5));
    const CliResult r =
        run_cli("train-teacher --config run.cfg --out runs", dir);
    REQUIRE(r.code == 0);
    checkpoint = only_run_dir(dir / "runs") / "teacher.ckpt";
    REQUIRE(fs::exists(checkpoint));
  }
};

const TeacherFixture& teacher_fixture() {
  static TeacherFixture fixture;
  return fixture;
}

}  // namespace

TEST_CASE("encode writes one png per window plus an ordered manifest") {
  const fs::path dir = scratch_dir("encode_png");
  spit(dir / "data.csv", sine_csv(70, 4));
  spit(dir / "enc.cfg", "window = 32\n");
  const CliResult r =
      run_cli("encode data.csv --out imgs --side 9 --config enc.cfg", dir);
  REQUIRE(r.code == 0);
  REQUIRE(r.out.find("encoded 2 windows") != std::string::npos);

  const auto manifest = lines_of(slurp(dir / "imgs" / "manifest.csv"));
  REQUIRE(manifest == std::vector<std::string>{"0,window_0.png,4,9",
                                               "1,window_1.png,4,9"});
  for (const std::string& name : {"window_0.png", "window_1.png"}) {
    const vskd::io::PngImage png =
        vskd::io::read_png_rgb((dir / "imgs" / name).string());
    REQUIRE(png.width == 9);
    REQUIRE(png.height == 9);
  }
}

TEST_CASE("raw encoding stores the full-precision tensor") {
  const fs::path dir = scratch_dir("encode_raw");
  spit(dir / "data.csv", sine_csv(32, 1));
  spit(dir / "enc.cfg", "window = 32\n");
  const CliResult r =
      run_cli("encode data.csv --out imgs --side 8 --format raw --config enc.cfg",
              dir);
  REQUIRE(r.code == 0);

  const auto params =
      vskd::io::read_checkpoint((dir / "imgs" / "window_0.raw").string());
  REQUIRE(params.size() == 1);
  REQUIRE(params[0].name == "gaf");
  REQUIRE(params[0].tensor.shape == std::vector<std::size_t>{3, 8, 8});

  // The payload is exactly what the library encoder produces for the window.
  const auto rows = vskd::io::parse_sensor_csv(sine_csv(32, 1), "data.csv");
  const auto windows = vskd::io::segment_windows(rows, 32);
  REQUIRE(windows.size() == 1);
  const vskd::GafImage image = vskd::encode_window(windows[0], 8);
  std::size_t cursor = 0;
  for (const auto& channel : image.channels)
    for (double v : channel) REQUIRE(params[0].tensor.values[cursor++] == v);
}

TEST_CASE("constant signal encodes to an all-negative-one raw tensor") {
  const fs::path dir = scratch_dir("encode_const");
  spit(dir / "data.csv",
       "timestamp,ax,ay,az,label\n0.0,2.5,2.5,2.5,0\n0.1,2.5,2.5,2.5,0\n"
       "0.2,2.5,2.5,2.5,0\n");
  spit(dir / "enc.cfg", "window = 3\n");
  const CliResult r =
      run_cli("encode data.csv --out imgs --side 3 --format raw --config enc.cfg",
              dir);
  REQUIRE(r.code == 0);
  const auto params =
      vskd::io::read_checkpoint((dir / "imgs" / "window_0.raw").string());
  for (double v : params[0].tensor.values) REQUIRE(v == -1.0);
}

TEST_CASE("png encoding round-trips within one quantization step of raw") {
  const fs::path dir = scratch_dir("encode_round");
  spit(dir / "data.csv", sine_csv(40, 2));
  spit(dir / "enc.cfg", "window = 40\n");
  REQUIRE(run_cli("encode data.csv --out p --side 8 --config enc.cfg", dir).code == 0);
  REQUIRE(run_cli("encode data.csv --out r --side 8 --format raw --config enc.cfg",
                  dir).code == 0);

  const auto raw = vskd::io::read_checkpoint((dir / "r" / "window_0.raw").string());
  const vskd::io::PngImage png =
      vskd::io::read_png_rgb((dir / "p" / "window_0.png").string());
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t pixel = 0; pixel < 64; ++pixel) {
      const double stored =
          static_cast<double>(png.rgb[pixel * 3 + c]) / 255.0 * 2.0 - 1.0;
      const double exact = raw[0].tensor.values[c * 64 + pixel];
      REQUIRE_THAT(stored, Catch::Matchers::WithinAbs(exact, 1.0 / 255.0 + 1e-12));
    }
}

TEST_CASE("encode rejects empty and malformed input without writing") {
  const fs::path dir = scratch_dir("encode_bad");

  spit(dir / "empty.csv", "timestamp,ax,ay,az,label\n");
  CliResult r = run_cli("encode empty.csv --out out1", dir);
  REQUIRE(r.code == 2);
  REQUIRE_FALSE(fs::exists(dir / "out1"));

  spit(dir / "bad.csv", "timestamp,ax,ay,az,label\n0.0,1,2,3,0\n0.1,oops,2,3,0\n");
  r = run_cli("encode bad.csv --out out2", dir);
  REQUIRE(r.code == 2);
  REQUIRE(r.err.find("line 3") != std::string::npos);
  REQUIRE_FALSE(fs::exists(dir / "out2"));

  spit(dir / "stuck.csv",
       "timestamp,ax,ay,az,label\n0.0,1,2,3,0\n0.0,1,2,3,0\n0.1,1,2,3,0\n");
  spit(dir / "enc.cfg", "window = 3\n");
  r = run_cli("encode stuck.csv --out out3 --config enc.cfg", dir);
  REQUIRE(r.code == 2);
  REQUIRE(r.err.find("window 0") != std::string::npos);
}

TEST_CASE("train-teacher writes checkpoint, metrics and a full config echo") {
  const TeacherFixture& fixture = teacher_fixture();
  const fs::path run = fixture.checkpoint.parent_path();

  const auto metric_lines = lines_of(slurp(run / "metrics.jsonl"));
  REQUIRE(metric_lines.size() == 12);  // 6 epochs, train + test each
  for (std::size_t i = 0; i < metric_lines.size(); ++i) {
    const vskd::io::MetricRecord rec =
        vskd::io::parse_metric(metric_lines[i], "metrics.jsonl");
    REQUIRE(rec.epoch == static_cast<int>(i / 2 + 1));
    REQUIRE(rec.split == (i % 2 == 0 ? "train" : "test"));
  }

  const vskd::io::Config echo =
      vskd::io::parse_config(slurp(run / "config.txt"), "config.txt");
  REQUIRE(echo.at("command") == "train-teacher");
  REQUIRE(echo.at("seed") == "5");
  REQUIRE(echo.at("classes") == "3");
  REQUIRE(echo.at("epochs") == "6");
  REQUIRE(echo.at("alpha") == "1");
  REQUIRE(echo.at("temperature") == "4");

  // Checkpoint names the dense-network parameter sequence.
  const auto params = vskd::io::read_checkpoint(fixture.checkpoint.string());
  REQUIRE(params.front().name == "layer0.weight");
  REQUIRE(params.front().tensor.shape ==
          std::vector<std::size_t>{192, 256});
}

TEST_CASE("distill then eval reproduces the final logged accuracy exactly") {
  const TeacherFixture& fixture = teacher_fixture();
  const fs::path dir = scratch_dir("distill_eval");
  spit(dir / "run.cfg", small_config_text(5));

  const CliResult distill = run_cli("distill '" + fixture.checkpoint.string() +
                                        "' --config run.cfg --out runs",
                                    dir);
  REQUIRE(distill.code == 0);
  const fs::path run = only_run_dir(dir / "runs");
  REQUIRE(fs::exists(run / "student.ckpt"));

  // Final test record of the metrics file.
  const auto metric_lines = lines_of(slurp(run / "metrics.jsonl"));
  const vskd::io::MetricRecord last =
      vskd::io::parse_metric(metric_lines.back(), "metrics.jsonl");
  REQUIRE(last.split == "test");

  // Evaluating the checkpoint with the run's own config echo must print the
  // same accuracy to the last bit.
  const CliResult eval =
      run_cli("eval '" + (run / "student.ckpt").string() + "' --config '" +
                  (run / "config.txt").string() + "' --out eval_runs",
              dir);
  REQUIRE(eval.code == 0);
  const std::string expected = "accuracy " +
                               vskd::io::format_double(last.accuracy) + " f1 " +
                               vskd::io::format_double(last.f1) + "\n";
  REQUIRE(eval.out.find(expected) != std::string::npos);
}

TEST_CASE("identical distill invocations write identical artifacts") {
  const TeacherFixture& fixture = teacher_fixture();
  const fs::path dir = scratch_dir("distill_repeat");
  spit(dir / "run.cfg", small_config_text(5));

  const std::string invocation =
      "distill '" + fixture.checkpoint.string() + "' --config run.cfg";
  REQUIRE(run_cli(invocation + " --out a", dir).code == 0);
  REQUIRE(run_cli(invocation + " --out b", dir).code == 0);
  const fs::path run_a = only_run_dir(dir / "a");
  const fs::path run_b = only_run_dir(dir / "b");
  REQUIRE(slurp(run_a / "student.ckpt") == slurp(run_b / "student.ckpt"));
  REQUIRE(slurp(run_a / "metrics.jsonl") == slurp(run_b / "metrics.jsonl"));
  REQUIRE(slurp(run_a / "config.txt") == slurp(run_b / "config.txt"));
}

TEST_CASE("seed flag overrides the config file seed") {
  const TeacherFixture& fixture = teacher_fixture();
  const fs::path dir = scratch_dir("seed_override");
  spit(dir / "run.cfg", small_config_text(5));

  const CliResult r = run_cli("distill '" + fixture.checkpoint.string() +
                                  "' --config run.cfg --seed 11 --out runs",
                              dir);
  REQUIRE(r.code == 0);
  const vskd::io::Config echo = vskd::io::parse_config(
      slurp(only_run_dir(dir / "runs") / "config.txt"), "config.txt");
  REQUIRE(echo.at("seed") == "11");
}

TEST_CASE("artifact errors exit with code 3") {
  const TeacherFixture& fixture = teacher_fixture();
  const fs::path dir = scratch_dir("artifact_errors");
  spit(dir / "run.cfg", small_config_text(5));

  // Truncated checkpoint: cut inside a record.
  const std::string whole = slurp(fixture.checkpoint);
  spit(dir / "trunc.ckpt", whole.substr(0, whole.size() / 2));
  CliResult r = run_cli("eval trunc.ckpt --config run.cfg --out runs", dir);
  REQUIRE(r.code == 3);
  REQUIRE(r.err.find("truncated") != std::string::npos);

  r = run_cli("distill nosuch.ckpt --config run.cfg --out runs", dir);
  REQUIRE(r.code == 3);

  // Valid container that does not describe a network.
  vskd::io::write_checkpoint((dir / "foreign.ckpt").string(),
                             {{"weights", vskd::Tensor({2}, {1.0, 2.0})}});
  r = run_cli("eval foreign.ckpt --config run.cfg --out runs", dir);
  REQUIRE(r.code == 3);
}

TEST_CASE("input errors exit with code 2") {
  const fs::path dir = scratch_dir("input_errors");

  CliResult r = run_cli("train-teacher --config nosuch.cfg", dir);
  REQUIRE(r.code == 2);

  spit(dir / "typo.cfg", "clases = 3\n");
  r = run_cli("train-teacher --config typo.cfg", dir);
  REQUIRE(r.code == 2);
  REQUIRE(r.err.find("clases") != std::string::npos);

  spit(dir / "badview.cfg", "view = judge\n");
  r = run_cli("train-teacher --config badview.cfg", dir);
  REQUIRE(r.code == 2);

  spit(dir / "badrate.cfg", "rate = -1\n");
  r = run_cli("train-teacher --config badrate.cfg", dir);
  REQUIRE(r.code == 2);

  r = run_cli("no-such-command", dir);
  REQUIRE(r.code == 2);

  r = run_cli("", dir);  // a subcommand is required
  REQUIRE(r.code == 2);

  r = run_cli("--help", dir);
  REQUIRE(r.code == 0);
}

TEST_CASE("ablate tabulates all six variants against one teacher") {
  const fs::path dir = scratch_dir("ablate");
  spit(dir / "run.cfg", small_config_text(5));
  const CliResult r = run_cli("ablate --config run.cfg --out runs", dir);
  REQUIRE(r.code == 0);

  const fs::path run = only_run_dir(dir / "runs");
  REQUIRE(fs::exists(run / "teacher.ckpt"));
  const auto rows =
      vskd::io::parse_ablation_csv(slurp(run / "ablation.csv"), "ablation.csv");
  REQUIRE(rows.size() == 6);
  const std::vector<std::string> expected = {"dask", "ask",      "dsk",
                                             "sk",   "dak",      "baseline"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    REQUIRE(rows[i].variant == expected[i]);
    REQUIRE(rows[i].accuracy >= 0.0);
    REQUIRE(rows[i].accuracy <= 1.0);
  }
  // The table the tool printed matches the file.
  REQUIRE(r.out.find(slurp(run / "ablation.csv")) != std::string::npos);
}

TEST_CASE("gradcheck passes clean and fails a corrupted backward rule") {
  const fs::path dir = scratch_dir("gradcheck");

  CliResult r = run_cli("gradcheck --seeds 2", dir);
  REQUIRE(r.code == 0);
  std::size_t ok_lines = 0;
  for (const std::string& line : lines_of(r.out))
    if (line.find(" ok") != std::string::npos) ++ok_lines;
  REQUIRE(ok_lines == 8);

  // Same seed, same report.
  const CliResult again = run_cli("gradcheck --seeds 2", dir);
  REQUIRE(again.out == r.out);

  r = run_cli("gradcheck --seeds 2 --inject-backward-error", dir);
  REQUIRE(r.code == 5);
  REQUIRE(r.err.find("verification failure") != std::string::npos);
  REQUIRE(r.err.find("forward") != std::string::npos);
}
