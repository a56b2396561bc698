#include "ratfm/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>

#include "ratfm/tensor_io.hpp"

namespace ratfm {

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_lines(const std::filesystem::path& path, const std::vector<double>& values) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (double v : values) out << exact(v) << '\n';
}

// Adopts the dataset grid unless the configuration pins a different one.
void align_grid(RunConfig& config, const DatasetConfig& data) {
  auto pinned_mismatch = [&](const char* key, std::size_t want, std::size_t have) {
    if (config.explicit_keys.count(key) && want != have) {
      throw std::invalid_argument(std::string("config ") + key + "=" + std::to_string(want) +
                                  " does not match the dataset (" + std::to_string(have) + ")");
    }
  };
  pinned_mismatch("coarse_h", config.model.coarse_h, data.coarse_h);
  pinned_mismatch("coarse_w", config.model.coarse_w, data.coarse_w);
  pinned_mismatch("scale", config.model.scale, data.scale);
  config.data = data;
  config.data.seed = config.seed;
  config.model.coarse_h = data.coarse_h;
  config.model.coarse_w = data.coarse_w;
  config.model.scale = data.scale;
  config.model.intervals_per_day = data.intervals_per_day;
}

// Rejects explicit settings that disagree with the checkpoint.
void check_against_checkpoint(const RunConfig& config, const ModelConfig& ck) {
  const ModelConfig& m = config.model;
  auto check = [&](const char* key, bool same, const std::string& have) {
    if (config.explicit_keys.count(key) && !same) {
      throw std::invalid_argument(std::string("config/checkpoint mismatch on ") + key + " (checkpoint has " + have +
                                  ")");
    }
  };
  check("variant", m.variant == ck.variant, std::string(to_string(ck.variant)));
  check("channels", m.channels == ck.channels, std::to_string(ck.channels));
  check("radius", m.radius == ck.radius, std::to_string(ck.radius));
  check("scale", m.scale == ck.scale, std::to_string(ck.scale));
  check("coarse_h", m.coarse_h == ck.coarse_h, std::to_string(ck.coarse_h));
  check("coarse_w", m.coarse_w == ck.coarse_w, std::to_string(ck.coarse_w));
  check("road_conv", m.road_conv == ck.road_conv, std::string(to_string(ck.road_conv)));
  check("query", m.query == ck.query, std::string(to_string(ck.query)));
}

struct LoadedCheckpoint {
  RatfmModel model;
  KeyValues manifest;
  Tensor road_input;
  FlowScaling scaling;
};

LoadedCheckpoint load_for_inference(const RunConfig& config) {
  Checkpoint ck = load_checkpoint(config.checkpoint_dir);
  check_against_checkpoint(config, ck.model.config());
  if (config.explicit_keys.count("road_weighting") &&
      ck.manifest.get_or("road_weighting", "") != to_string(config.road_weighting)) {
    throw std::invalid_argument("config/checkpoint mismatch on road_weighting");
  }
  LoadedCheckpoint out{std::move(ck.model), std::move(ck.manifest), {}, {}};
  out.scaling = {out.manifest.get_double("normalization"), out.manifest.get_double("target_normalization")};
  const std::filesystem::path road = config.checkpoint_dir / "road_input.rtfm";
  if (out.model.config().uses_road()) out.road_input = read_rtfm(road);
  return out;
}

}  // namespace

Dataset cmd_generate(const RunConfig& config, std::ostream& log) {
  config.validate();
  Dataset data = generate_dataset(config.data);
  write_dataset(config.data_dir, data);
  log << "generated " << data.samples.size() << " samples (" << data.train.size() << " train, " << data.val.size()
      << " val, " << data.test.size() << " test) at " << config.data.fine_h() << "x" << config.data.fine_w()
      << " into " << config.data_dir.string() << '\n';
  return data;
}

TrainResult cmd_train(const RunConfig& config_in, std::ostream& log) {
  const Dataset data = read_dataset(config_in.data_dir);
  RunConfig config = config_in;
  align_grid(config, data.config);
  config.validate();

  Trainer trainer(data, config);
  log << "training " << to_string(config.model.variant) << " with " << trainer.model().parameter_count()
      << " parameters\n";
  const TrainResult result = trainer.fit();
  for (std::size_t e = 0; e < result.val_mape.size(); ++e) {
    log << "epoch " << e + 1 << " val_mape " << exact(result.val_mape[e]) << " lr " << exact(result.learning_rates[e])
        << '\n';
  }

  KeyValues extra;
  extra.set("normalization", trainer.scaling().input);
  extra.set("target_normalization", trainer.scaling().target);
  extra.set("road_weighting", std::string(to_string(config.road_weighting)));
  extra.set("lr", config.learning_rate);
  extra.set("lr_decay", config.lr_decay);
  extra.set("lr_patience", config.lr_patience);
  extra.set("lr_schedule", "plateau");
  extra.set("batch_size", config.batch_size);
  extra.set("loss_epsilon", config.loss_epsilon);
  extra.set("steps", result.steps);
  extra.set("epochs_run", result.val_mape.size());
  extra.set("best_epoch", result.best_epoch);
  extra.set("best_val_mape", result.best_val_mape);
  extra.set("data_seed", static_cast<unsigned long long>(data.config.seed));
  save_checkpoint(config.checkpoint_dir, trainer.best_model(), extra);
  write_rtfm(config.checkpoint_dir / "road_input.rtfm", trainer.road_input());
  write_lines(config.checkpoint_dir / "losses.txt", result.losses);
  write_lines(config.checkpoint_dir / "val_mape.txt", result.val_mape);
  log << "best val_mape " << exact(result.best_val_mape) << " at epoch " << result.best_epoch << ", checkpoint "
      << config.checkpoint_dir.string() << '\n';
  return result;
}

EvalReport cmd_eval(const RunConfig& config, bool use_ha, std::ostream& log) {
  const Dataset data = read_dataset(config.data_dir);
  const std::vector<std::size_t> test = indices_of(data.test);
  std::vector<Tensor> truth;
  std::vector<Timestamp> times;
  for (std::size_t i : test) {
    truth.push_back(data.samples[i].fine);
    times.push_back(data.samples[i].time);
  }
  const auto train_fine = data.fine_maps(data.train);

  std::vector<Tensor> preds;
  if (use_ha) {
    const Tensor mean = ha_baseline(train_fine);
    preds.assign(test.size(), mean);
  } else {
    LoadedCheckpoint ck = load_for_inference(config);
    const ModelConfig& m = ck.model.config();
    if (m.coarse_h != data.config.coarse_h || m.coarse_w != data.config.coarse_w || m.scale != data.config.scale) {
      throw std::invalid_argument("checkpoint grid does not match the dataset");
    }
    preds = predict(ck.model, ck.road_input, ck.scaling, data, test, config.clamp_nonneg);
  }

  const EvalReport report =
      evaluate(preds, truth, times, heavy_region_mask(train_fine), data.config.intervals_per_day);
  std::filesystem::create_directories(config.out_dir);
  KeyValues kv = report.to_keyvalues();
  kv.set("model", use_ha ? std::string("HA") : config.checkpoint_dir.string());
  kv.set("clamp_nonneg", config.clamp_nonneg);
  kv.write(config.out_dir / "report.txt");

  const Shape& one = truth.front().shape();
  const std::size_t per = element_count(one);
  std::vector<double> residuals(test.size() * per);
  std::vector<double> mean_abs(per, 0.0);
  for (std::size_t s = 0; s < test.size(); ++s) {
    const auto p = preds[s].data();
    const auto t = truth[s].data();
    for (std::size_t i = 0; i < per; ++i) {
      residuals[s * per + i] = p[i] - t[i];
      mean_abs[i] += std::abs(p[i] - t[i]) / static_cast<double>(test.size());
    }
  }
  write_rtfm(config.out_dir / "residuals.rtfm", Tensor::from({test.size(), one[0], one[1], one[2]}, std::move(residuals)));
  write_rtfm(config.out_dir / "mean_abs_residual.rtfm", Tensor::from(one, std::move(mean_abs)));
  log << kv.serialize();
  return report;
}

std::vector<GradcheckEntry> cmd_gradcheck(const GradcheckOptions& options, std::ostream& log) {
  const auto entries = run_gradcheck(options);
  for (const auto& e : entries) {
    log << std::left << std::setw(28) << e.component << (e.passed ? "PASS" : "FAIL") << "  max_rel_err "
        << std::scientific << std::setprecision(3) << e.max_rel_error << "  tol " << e.tolerance << "  coords "
        << std::defaultfloat << e.checked << '\n';
  }
  return entries;
}

Tensor cmd_infer(const RunConfig& config, const std::filesystem::path& coarse_path,
                 const std::filesystem::path& external_path, const std::filesystem::path& output_path) {
  LoadedCheckpoint ck = load_for_inference(config);
  const ModelConfig& m = ck.model.config();
  const Tensor coarse = read_rtfm(coarse_path);
  if (coarse.shape() != Shape{m.coarse_h, m.coarse_w, 2}) {
    throw ShapeError("coarse map " + to_string(coarse.shape()) + " does not match the checkpoint grid " +
                     std::to_string(m.coarse_h) + "x" + std::to_string(m.coarse_w) + "x2");
  }
  std::vector<ExternalVector> ext;
  if (!external_path.empty()) {
    const Tensor e = read_rtfm(external_path);
    if (e.size() != kExternalFeatures) throw ShapeError("external file must hold 5 values, got " + to_string(e.shape()));
    ext.push_back(from_row(e.data().data()));
    validate(ext.back(), m.intervals_per_day);
  } else if (m.uses_external()) {
    throw std::invalid_argument("variant " + std::string(to_string(m.variant)) + " needs --external");
  }
  std::vector<double> scaled(coarse.data().begin(), coarse.data().end());
  for (double& v : scaled) v /= ck.scaling.input;
  Tensor y;
  {
    NoGradScope no_grad;
    y = ck.model.forward(Tensor::from(coarse.shape(), std::move(scaled)), ext, ck.road_input, Mode::eval);
  }
  std::vector<double> out(y.data().begin(), y.data().end());
  for (double& v : out) {
    v *= ck.scaling.target;
    if (config.clamp_nonneg) v = std::max(v, 0.0);
  }
  Tensor result = Tensor::from(y.shape(), std::move(out));
  if (!output_path.empty()) write_rtfm(output_path, result);
  return result;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Road-aware fine-grained traffic flow inference"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string seed, variant, road_conv, road_weighting, query, data_dir, checkpoint_dir, out_dir;
  bool clamp = false, paper_scale = false;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value configuration file");
    cmd->add_option("--set", overrides, "extra key=value setting (repeatable)");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--variant", variant, "Short-Net | Short+Road | Short+Long+Road | Full");
    cmd->add_option("--road-conv", road_conv, "md1d | square2d");
    cmd->add_option("--road-weighting", road_weighting, "weighted | common");
    cmd->add_option("--query", query, "road | positional");
    cmd->add_option("--data", data_dir, "dataset directory");
    cmd->add_option("--checkpoint", checkpoint_dir, "checkpoint directory");
    cmd->add_option("--out", out_dir, "report directory");
    cmd->add_flag("--clamp-nonneg", clamp, "clamp negative predictions to zero");
    cmd->add_flag("--paper-scale", paper_scale, "channels 128, radius 4");
  };

  CLI::App* generate = app.add_subcommand("generate", "write a synthetic dataset");
  CLI::App* train = app.add_subcommand("train", "train a model and write its checkpoint");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint or a baseline on the test split");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit of every gradient rule");
  CLI::App* infer = app.add_subcommand("infer", "infer one fine-grained map");
  for (CLI::App* cmd : {generate, train, eval, gradcheck, infer}) add_common(cmd);

  std::string baseline;
  eval->add_option("--baseline", baseline, "evaluate a baseline instead of a checkpoint")
      ->check(CLI::IsMember({"ha"}));
  std::string inject;
  gradcheck->add_option("--inject-fault", inject, "corrupt one component's gradient rule");
  std::string coarse_path, external_path, output_path;
  infer->add_option("--coarse", coarse_path, "coarse map [Ic,Jc,2]")->required();
  infer->add_option("--external", external_path, "external factors (5 values)");
  infer->add_option("--output", output_path, "output fine map")->required();

  std::vector<std::string> storage;
  storage.push_back("ratfm");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig config;
    if (!config_path.empty()) config = load_run_config(config_path);
    if (!seed.empty()) config.set("seed", seed);
    if (!variant.empty()) config.set("variant", variant);
    if (!road_conv.empty()) config.set("road_conv", road_conv);
    if (!road_weighting.empty()) config.set("road_weighting", road_weighting);
    if (!query.empty()) config.set("query", query);
    if (!data_dir.empty()) config.set("data", data_dir);
    if (!checkpoint_dir.empty()) config.set("checkpoint", checkpoint_dir);
    if (!out_dir.empty()) config.set("out", out_dir);
    if (clamp) config.set("clamp_nonneg", "1");
    if (paper_scale) config.use_paper_scale();
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + o + "'");
      config.set(o.substr(0, eq), o.substr(eq + 1));
    }
    config.validate();

    if (generate->parsed()) {
      cmd_generate(config, out);
    } else if (train->parsed()) {
      cmd_train(config, out);
    } else if (eval->parsed()) {
      cmd_eval(config, baseline == "ha", out);
    } else if (gradcheck->parsed()) {
      GradcheckOptions options;
      options.corrupt_component = inject;
      if (config.explicit_keys.count("seed")) options.seed = config.seed;
      const auto entries = cmd_gradcheck(options, out);
      bool failed = false;
      for (const auto& e : entries) {
        if (!e.passed) {
          err << "gradient check failed for " << e.component << '\n';
          failed = true;
        }
      }
      if (failed) return kExitValidation;
    } else if (infer->parsed()) {
      cmd_infer(config, coarse_path, external_path, output_path);
      out << "wrote " << output_path << '\n';
    }
    return kExitOk;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}

}  // namespace ratfm
