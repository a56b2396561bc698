#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ratfm/config.hpp"
#include "ratfm/datagen.hpp"
#include "ratfm/gradcheck.hpp"
#include "ratfm/metrics.hpp"
#include "ratfm/trainer.hpp"

namespace ratfm {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitValidation = 2, kExitNumeric = 3 };

/// Generates the synthetic dataset into config.data_dir.
Dataset cmd_generate(const RunConfig& config, std::ostream& log);

/// Trains on config.data_dir and writes the best-validation checkpoint to
/// config.checkpoint_dir, together with road_input.rtfm, losses.txt and val_mape.txt.
TrainResult cmd_train(const RunConfig& config, std::ostream& log);

/// Evaluates a checkpoint (or the historical average when `use_ha`) on the test split
/// and writes report.txt, residuals.rtfm ([T,H,W,2]) and mean_abs_residual.rtfm to
/// config.out_dir.
EvalReport cmd_eval(const RunConfig& config, bool use_ha, std::ostream& log);

/// Runs the gradient audit and prints one line per component.
std::vector<GradcheckEntry> cmd_gradcheck(const GradcheckOptions& options, std::ostream& log);

/// Single-map inference. coarse: [Ic,Jc,2]; external: 5 raw values (weather, temperature,
/// windspeed, day_of_week, time_of_day), optional for variants without the external module.
Tensor cmd_infer(const RunConfig& config, const std::filesystem::path& coarse_path,
                 const std::filesystem::path& external_path, const std::filesystem::path& output_path);

/// Parses arguments and dispatches. Returns an ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ratfm
