// Acceptance run: one PASS/FAIL line per criterion on stdout, progress on stderr.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ratfm/cli.hpp"
#include "ratfm/datagen.hpp"
#include "ratfm/gradcheck.hpp"
#include "ratfm/layers.hpp"
#include "ratfm/metrics.hpp"
#include "ratfm/model.hpp"
#include "ratfm/runtime.hpp"
#include "ratfm/tensor_io.hpp"
#include "ratfm/trainer.hpp"

namespace fs = std::filesystem;
using namespace ratfm;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

struct Outcome {
  bool passed = false;
  std::string detail;
};

struct Options {
  std::vector<int> criteria{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  fs::path workdir;
  std::size_t seeds = 3;
  std::size_t overfit_steps = 2000;
  std::size_t overfit_batch = 8;
  double overfit_lr = 1e-3;
  std::size_t epochs = 8;
  std::size_t steps_per_epoch = 100;
  std::size_t val_samples = 96;
  bool strict = false;
};

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

int cli(const std::vector<std::string>& args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (err_text) *err_text = err.str();
  if (code != kExitOk && !err_text) std::cerr << "  command failed (" << code << "): " << err.str();
  return code;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

class Acceptance {
 public:
  explicit Acceptance(Options o) : o_(std::move(o)) { fs::create_directories(o_.workdir); }

  Outcome run(int id) {
    switch (id) {
      case 1: return gradient_audit();
      case 2: return directional_oracle();
      case 3: return metric_oracles();
      case 4: return conservation();
      case 5: return overfit();
      case 6: return ablation_ordering();
      case 7: return toggles();
      case 8: return baseline_ordering();
      case 9: return determinism();
      case 10: return serialization();
      default: return {false, "unknown criterion"};
    }
  }

 private:
  // --- 1 -----------------------------------------------------------------------------------
  Outcome gradient_audit() {
    const auto start = Clock::now();
    const auto entries = run_gradcheck(GradcheckOptions{});
    const double elapsed = seconds_since(start);
    double worst_layer = 0.0, model = 0.0;
    std::size_t failed = 0;
    std::string failures;
    for (const auto& e : entries) {
      if (e.component == "end_to_end") {
        model = e.max_rel_error;
      } else {
        worst_layer = std::max(worst_layer, e.max_rel_error);
      }
      if (!e.passed || e.max_rel_error >= (e.component == "end_to_end" ? 1e-3 : 1e-4)) {
        ++failed;
        failures += " " + e.component;
      }
    }
    const bool ok = failed == 0 && elapsed < 120.0;
    return {ok, std::to_string(entries.size() - failed) + "/" + std::to_string(entries.size()) +
                    " components, worst layer rel err " + fmt("%.2e", worst_layer) + " (< 1e-4), end-to-end " +
                    fmt("%.2e", model) + " (< 1e-3), " + fmt("%.1f", elapsed) + " s (< 120 s)" +
                    (failures.empty() ? "" : ", failed:" + failures)};
  }

  // --- 2 -----------------------------------------------------------------------------------
  static Tensor line_filter_oracle(const Tensor& x, const std::array<Tensor, 4>& k, int radius) {
    const int h = static_cast<int>(x.dim(0)), w = static_cast<int>(x.dim(1));
    const std::size_t cin = x.dim(2), quarter = k[0].dim(2);
    const int steps[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
    std::vector<double> out(static_cast<std::size_t>(h * w) * 4 * quarter, 0.0);
    for (int d = 0; d < 4; ++d) {
      for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
          for (std::size_t o = 0; o < quarter; ++o) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
              const int rr = r + i * steps[d][0], cc = c + i * steps[d][1];
              if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
              for (std::size_t j = 0; j < cin; ++j) {
                acc += x.at({std::size_t(rr), std::size_t(cc), j}) * k[d].at({j, std::size_t(i + radius), o});
              }
            }
            out[(std::size_t(r) * w + c) * 4 * quarter + d * quarter + o] = acc;
          }
        }
      }
    }
    return Tensor::from({x.dim(0), x.dim(1), 4 * quarter}, std::move(out));
  }

  Outcome directional_oracle() {
    const auto start = Clock::now();
    Rng rng(20240601, 0);
    auto random = [&](Shape s) {
      std::vector<double> v(element_count(s));
      for (double& e : v) e = rng.uniform(-1.0, 1.0);
      return Tensor::from(std::move(s), std::move(v));
    };
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t h = 1 + rng.below(8), w = 1 + rng.below(8), cin = 1 + rng.below(4);
      const std::size_t quarter = 1 + rng.below(2), radius = rng.below(4);
      const Tensor x = random({h, w, cin});
      std::array<Tensor, 4> k;
      for (auto& kd : k) kd = random({cin, 2 * radius + 1, quarter});
      const Tensor got = mdconv1d(x, k, radius);
      const Tensor want = line_filter_oracle(x, k, int(radius));
      if (got.shape() != want.shape()) return {false, "shape mismatch at trial " + std::to_string(trial)};
      for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got.data()[i] - want.data()[i]));
    }
    const double elapsed = seconds_since(start);
    return {worst <= 1e-12 && elapsed < 10.0, "200 cases up to 8x8x4, max abs diff " + fmt("%.2e", worst) +
                                                  " (<= 1e-12), " + fmt("%.2f", elapsed) + " s (< 10 s)"};
  }

  // --- 3 -----------------------------------------------------------------------------------
  Outcome metric_oracles() {
    const std::vector<Tensor> t0{Tensor::from({1, 2, 1}, {0, 0})};
    const std::vector<Tensor> p0{Tensor::from({1, 2, 1}, {3, 4})};
    const std::vector<Tensor> ones{Tensor::full({2, 2, 1}, 1.0)};
    const std::vector<Tensor> bumped{Tensor::from({2, 2, 1}, {2, 1, 1, 1})};
    const double e_rmse = std::abs(rmse(p0, t0) - std::sqrt(12.5));
    const double e_mae = std::abs(mae(p0, t0) - 3.5);
    const double e_mape = std::abs(mape_citywide(bumped, ones) - 0.25);
    const double e_perfect = rmse(ones, ones) + mae(ones, ones) + mape_citywide(ones, ones);
    Rng rng(3, 0);
    double e_scale = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<Tensor> p, t, p10, t10;
      for (int s = 0; s < 4; ++s) {
        std::vector<double> a(32), b(32);
        for (double& v : a) v = rng.uniform(0.0, 50.0);
        for (double& v : b) v = rng.uniform(0.5, 50.0);
        p.push_back(Tensor::from({4, 4, 2}, a));
        t.push_back(Tensor::from({4, 4, 2}, b));
        p10.push_back(scale(p.back(), 10.0));
        t10.push_back(scale(t.back(), 10.0));
      }
      e_scale = std::max(e_scale, std::abs(mape_citywide(p10, t10) - mape_citywide(p, t)));
    }
    const double worst_hand = std::max({e_rmse, e_mae, e_mape, e_perfect});
    return {worst_hand <= 1e-12 && e_scale <= 1e-9,
            "hand examples max err " + fmt("%.1e", worst_hand) + " (<= 1e-12), scale invariance at a=10 max err " +
                fmt("%.1e", e_scale) + " (<= 1e-9)"};
  }

  // --- 4 -----------------------------------------------------------------------------------
  const Dataset& default_data() {
    if (!data_) {
      std::cerr << "  generating the default synthetic city\n";
      data_ = generate_dataset(DatasetConfig{});
    }
    return *data_;
  }

  Outcome conservation() {
    const Dataset& d = default_data();
    std::size_t violations = 0;
    for (const Sample& s : d.samples) {
      if (!bit_equal(s.coarse, aggregate_coarse(s.fine, d.config.scale))) ++violations;
    }
    const double r = road_flow_correlation(d);
    return {violations == 0 && r > 0.5, std::to_string(d.samples.size() - violations) + "/" +
                                            std::to_string(d.samples.size()) +
                                            " samples conserve flow exactly, road-flow correlation " +
                                            fmt("%.3f", r) + " (> 0.5)"};
  }

  // --- 5 -----------------------------------------------------------------------------------
  Outcome overfit() {
    const auto start = Clock::now();
    const Dataset& d = default_data();
    RunConfig config;
    config.learning_rate = o_.overfit_lr;
    config.batch_size = o_.overfit_batch;
    Trainer trainer(d, config);
    std::vector<std::size_t> fixed;
    const double stride = double(d.train.size()) / 16.0;
    for (std::size_t i = 0; i < 16; ++i) fixed.push_back(d.train.begin + std::size_t(std::floor(i * stride)));
    const std::size_t batches = (16 + o_.overfit_batch - 1) / o_.overfit_batch;

    double best = std::numeric_limits<double>::infinity();
    std::size_t steps = 0, reached_at = 0;
    double last_loss = 0.0;
    while (steps < o_.overfit_steps) {
      const std::size_t b = steps % batches;
      const std::vector<std::size_t> batch(fixed.begin() + b * o_.overfit_batch,
                                           fixed.begin() + std::min<std::size_t>(16, (b + 1) * o_.overfit_batch));
      last_loss = trainer.step(batch);
      ++steps;
      if (steps % 50 == 0 || steps == o_.overfit_steps) {
        const double m = trainer.evaluate_mape(fixed);
        best = std::min(best, m);
        std::cerr << "  overfit step " << steps << " training MAPE " << fmt("%.4f", m) << " batch loss " << fmt("%.4f", last_loss) << " ("
                  << fmt("%.0f", seconds_since(start)) << " s)\n";
        if (m < 0.05) {
          reached_at = steps;
          break;
        }
      }
    }
    const double elapsed = seconds_since(start);
    const bool ok = reached_at > 0 && elapsed < 600.0;
    return {ok, "Full variant on 16 fixed samples: " +
                    (reached_at ? "training MAPE < 5% after " + std::to_string(reached_at) + " steps"
                                : "best training MAPE " + fmt("%.2f%%", 100.0 * best) + " after " +
                                      std::to_string(steps) + " steps") +
                    " (<= 2000), " + fmt("%.0f", elapsed) + " s (< 600 s)"};
  }

  // --- shared training runs for 6-8 ----------------------------------------------------------
  const std::string& dataset_dir() {
    if (dataset_dir_.empty()) {
      dataset_dir_ = (o_.workdir / "city").string();
      if (cli({"generate", "--data", dataset_dir_}) != kExitOk) throw std::runtime_error("dataset generation failed");
    }
    return dataset_dir_;
  }

  // Test MAPE of one configuration and seed, trained through the command-line entry points.
  std::optional<double> test_mape(const std::string& tag, const std::vector<std::string>& flags, std::size_t seed) {
    const std::string key = tag + "/" + std::to_string(seed);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    const auto start = Clock::now();
    const fs::path ck = o_.workdir / "runs" / tag / ("seed" + std::to_string(seed));
    const fs::path out = ck / "eval";
    std::vector<std::string> train{"train",
                                   "--data",
                                   dataset_dir(),
                                   "--checkpoint",
                                   ck.string(),
                                   "--seed",
                                   std::to_string(seed),
                                   "--set",
                                   "epochs=" + std::to_string(o_.epochs),
                                   "--set",
                                   "steps_per_epoch=" + std::to_string(o_.steps_per_epoch),
                                   "--set",
                                   "val_samples=" + std::to_string(o_.val_samples)};
    train.insert(train.end(), flags.begin(), flags.end());
    std::optional<double> result;
    if (cli(train) == kExitOk) {
      std::vector<std::string> eval{"eval", "--data", dataset_dir(), "--checkpoint", ck.string(), "--out", out.string()};
      eval.insert(eval.end(), flags.begin(), flags.end());
      if (cli(eval) == kExitOk) result = KeyValues::read(out / "report.txt").get_double("all.mape");
    }
    std::cerr << "  " << key << " test MAPE " << (result ? fmt("%.4f", *result) : std::string("error")) << " ("
              << fmt("%.0f", seconds_since(start)) << " s)\n";
    cache_[key] = result;
    return result;
  }

  std::optional<std::vector<double>> across_seeds(const std::string& tag, const std::vector<std::string>& flags) {
    std::vector<double> v;
    for (std::size_t s = 1; s <= o_.seeds; ++s) {
      const auto m = test_mape(tag, flags, s);
      if (!m) return std::nullopt;
      v.push_back(*m);
    }
    return v;
  }

  std::string list(const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : ", ") + fmt("%.4f", x);
    return "[" + s + "]";
  }

  Outcome ablation_ordering() {
    const auto start = Clock::now();
    const std::vector<std::pair<std::string, std::string>> variants{
        {"short_net", "Short-Net"}, {"short_road", "Short+Road"}, {"short_long_road", "Short+Long+Road"},
        {"full", "Full"}};
    std::vector<double> medians;
    std::string detail;
    for (const auto& [tag, name] : variants) {
      const auto runs = across_seeds(tag, {"--variant", name});
      if (!runs) return {false, name + " failed to train or evaluate"};
      medians.push_back(median(*runs));
      detail += (detail.empty() ? "" : "; ") + name + " median " + fmt("%.4f", medians.back()) + " " + list(*runs);
    }
    const bool ordered = medians[0] >= medians[1] && medians[1] >= medians[2] && medians[2] >= medians[3];
    const bool gaps = medians[0] > medians[1] && medians[1] > medians[2];
    const double elapsed = seconds_since(start);
    return {ordered && gaps && elapsed < 7200.0, "test MAPE " + detail + "; non-increasing " + (ordered ? "yes" : "no") +
                                 ", first two gaps strictly positive " + (gaps ? "yes" : "no") + ", " +
                                 fmt("%.0f", elapsed) + " s (< 7200 s)"};
  }

  Outcome toggles() {
    const auto start = Clock::now();
    const auto base = across_seeds("full", {"--variant", "Full"});
    if (!base) return {false, "Full variant failed to train or evaluate"};
    const double m_base = median(*base);
    const std::vector<std::pair<std::string, std::vector<std::string>>> alternatives{
        {"square2d", {"--variant", "Full", "--road-conv", "square2d"}},
        {"common", {"--variant", "Full", "--road-weighting", "common"}},
        {"positional", {"--variant", "Full", "--query", "positional"}}};
    bool ok = true;
    std::string detail = "defaults median " + fmt("%.4f", m_base);
    for (const auto& [tag, flags] : alternatives) {
      const auto runs = across_seeds(tag, flags);
      if (!runs) return {false, tag + " failed to train or evaluate"};
      const double m = median(*runs);
      const bool better = m_base <= m;
      ok = ok && better;
      detail += "; " + tag + " median " + fmt("%.4f", m) + " " + list(*runs) + (better ? " (>= default)" : " (< default)");
    }
    return {ok, "all toggles ran; " + detail + ", " + fmt("%.0f", seconds_since(start)) + " s"};
  }

  Outcome baseline_ordering() {
    const auto start = Clock::now();
    const auto full = across_seeds("full", {"--variant", "Full"});
    if (!full) return {false, "Full variant failed to train or evaluate"};
    const fs::path out = o_.workdir / "runs" / "ha";
    if (cli({"eval", "--baseline", "ha", "--data", dataset_dir(), "--out", out.string()}) != kExitOk) {
      return {false, "HA evaluation failed"};
    }
    const double ha = KeyValues::read(out / "report.txt").get_double("all.mape");
    const double m = median(*full);
    return {ha > m, "HA test MAPE " + fmt("%.4f", ha) + " vs Full median " + fmt("%.4f", m) + " " + list(*full) + ", " +
                        fmt("%.0f", seconds_since(start)) + " s"};
  }

  // --- 9 -----------------------------------------------------------------------------------
  Outcome determinism() {
    const fs::path root = o_.workdir / "determinism";
    const std::string data = (root / "data").string();
    const std::vector<std::string> grid{"--set", "days=3", "--set", "train_days=1", "--set", "val_days=1",
                                        "--set", "test_days=1"};
    std::vector<std::string> gen{"generate", "--data", data};
    gen.insert(gen.end(), grid.begin(), grid.end());
    if (cli(gen) != kExitOk) return {false, "dataset generation failed"};
    auto train = [&](const std::string& name) {
      std::vector<std::string> a{"train", "--data", data, "--checkpoint", (root / name).string(), "--seed", "11",
                                 "--set", "epochs=2", "--set", "steps_per_epoch=10", "--set", "val_samples=16"};
      a.insert(a.end(), grid.begin(), grid.end());
      return cli(a);
    };
    if (train("a") != kExitOk || train("b") != kExitOk) return {false, "training failed"};
    std::size_t files = 0, differing = 0;
    for (const auto& entry : fs::directory_iterator(root / "a")) {
      ++files;
      if (read_text(entry.path()) != read_text(root / "b" / entry.path().filename())) ++differing;
    }
    const std::string losses = read_text(root / "a" / "losses.txt");
    const auto steps = std::count(losses.begin(), losses.end(), '\n');
    return {differing == 0 && files > 0 && steps == 20,
            std::to_string(steps) + "-step loss sequences identical: " +
                (read_text(root / "b" / "losses.txt") == losses ? "yes" : "no") + ", " +
                std::to_string(files - differing) + "/" + std::to_string(files) + " checkpoint files bit-identical"};
  }

  // --- 10 ----------------------------------------------------------------------------------
  Outcome serialization() {
    const fs::path root = o_.workdir / "serialization";
    DatasetConfig dc;
    dc.days = 3;
    dc.train_days = dc.val_days = dc.test_days = 1;
    const Dataset a = generate_dataset(dc);
    write_dataset(root / "data", a);
    const Dataset b = read_dataset(root / "data");
    bool data_ok = bit_equal(a.road, b.road) && a.samples.size() == b.samples.size();
    for (std::size_t i = 0; data_ok && i < a.samples.size(); ++i) {
      const auto ra = to_row(a.samples[i].external), rb = to_row(b.samples[i].external);
      data_ok = bit_equal(a.samples[i].fine, b.samples[i].fine) && bit_equal(a.samples[i].coarse, b.samples[i].coarse) &&
                ra == rb;
    }

    ModelConfig mc;
    RatfmModel model = build_variant(mc);
    round_state_to_storage(model);
    save_checkpoint(root / "ck", model);
    const Checkpoint loaded = load_checkpoint(root / "ck");
    bool ck_ok = true;
    const auto pa = model.parameters(), pb = loaded.model.parameters();
    ck_ok = pa.size() == pb.size();
    for (std::size_t i = 0; ck_ok && i < pa.size(); ++i) ck_ok = pa[i].name == pb[i].name && bit_equal(pa[i].tensor, pb[i].tensor);
    const auto ba = model.buffers(), bb = loaded.model.buffers();
    ck_ok = ck_ok && ba.size() == bb.size();
    for (std::size_t i = 0; ck_ok && i < ba.size(); ++i) ck_ok = bit_equal(ba[i].tensor, bb[i].tensor);

    auto corrupt = [](const fs::path& p) {
      std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(1);
      f.put('X');
    };
    corrupt(root / "data" / "fine" / "5.rtfm");
    std::string err;
    const int data_code = cli({"eval", "--baseline", "ha", "--data", (root / "data").string(), "--out",
                               (root / "out").string()},
                              &err);
    write_dataset(root / "data", a);
    const std::string data = (root / "data").string(), trained = (root / "trained").string();
    if (cli({"train", "--data", data, "--checkpoint", trained, "--set", "epochs=1", "--set", "steps_per_epoch=1",
             "--set", "val_samples=4", "--set", "days=3", "--set", "train_days=1", "--set", "val_days=1", "--set",
             "test_days=1"}) != kExitOk) {
      return {false, "training for the checkpoint corruption check failed"};
    }
    corrupt(fs::path(trained) / (pa.front().name + ".rtfm"));
    const int ck_code = cli({"eval", "--data", data, "--checkpoint", trained, "--out", (root / "out").string()}, &err);
    const bool ok = data_ok && ck_ok && data_code == kExitValidation && ck_code == kExitValidation;
    return {ok, std::string("dataset round trip bit-exact: ") + (data_ok ? "yes" : "no") +
                    ", checkpoint round trip bit-exact: " + (ck_ok ? "yes" : "no") +
                    ", corrupted magic exit codes: dataset " + std::to_string(data_code) + ", checkpoint " +
                    std::to_string(ck_code) + " (expected 2)"};
  }

  Options o_;
  std::optional<Dataset> data_;
  std::string dataset_dir_;
  std::map<std::string, std::optional<double>> cache_;
};

const char* kTitles[] = {"",
                         "gradient audit",
                         "directional convolution oracle",
                         "metric oracles",
                         "conservation and road-flow correlation",
                         "overfit 16 samples",
                         "ablation ordering",
                         "design toggles",
                         "baseline ordering",
                         "training determinism",
                         "serialization"};

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  Options o;
  o.workdir = fs::temp_directory_path() / "ratfm_acceptance";
  CLI::App app{"acceptance criteria"};
  std::string workdir = o.workdir.string();
  app.add_option("--criteria", o.criteria, "criteria to run (1-10)")->delimiter(',')->check(CLI::Range(1, 10));
  app.add_option("--workdir", workdir, "scratch directory");
  app.add_option("--seeds", o.seeds, "training seeds per configuration");
  app.add_option("--overfit-steps", o.overfit_steps, "Adam step limit for the overfit run");
  app.add_option("--overfit-batch", o.overfit_batch, "batch size for the overfit run");
  app.add_option("--overfit-lr", o.overfit_lr, "learning rate for the overfit run");
  app.add_option("--epochs", o.epochs, "epochs per comparison run");
  app.add_option("--steps-per-epoch", o.steps_per_epoch, "Adam steps per epoch in comparison runs");
  app.add_option("--val-samples", o.val_samples, "validation samples scored each epoch");
  app.add_flag("--strict", o.strict, "exit nonzero when any criterion fails");
  std::string log_path;
  app.add_option("--log", log_path, "also write the result lines to this file");
  CLI11_PARSE(app, argc, argv);
  o.workdir = workdir;

  std::ofstream log_file;
  if (!log_path.empty()) log_file.open(log_path);
  auto report = [&](const std::string& line) {
    std::cout << line << std::endl;
    if (log_file) log_file << line << std::endl;
  };

  std::size_t passed = 0;
  const std::vector<int> criteria = o.criteria;
  try {
    fs::remove_all(o.workdir);
    Acceptance acceptance(o);
    for (int id : criteria) {
      std::cerr << "criterion " << id << ": " << kTitles[id] << '\n';
      const Outcome r = acceptance.run(id);
      passed += r.passed;
      report("criterion " + std::to_string(id) + " " + (r.passed ? "PASS" : "FAIL") + " " + kTitles[id] + ": " +
             r.detail);
    }
  } catch (const std::exception& e) {
    report(std::string("acceptance run aborted: ") + e.what());
    return 1;
  }
  report(std::to_string(passed) + "/" + std::to_string(criteria.size()) + " criteria passed");
  fs::remove_all(o.workdir);
  return o.strict && passed != criteria.size() ? 1 : 0;
}
