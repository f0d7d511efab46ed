#pragma once

#include <iosfwd>
#include <string>

#include "pcdm/config.hpp"

namespace pcdm {

/// Each command writes into cfg.out, including <command>.resolved.cfg, and
/// prints a short summary to log. The return value is the process exit
/// code; errors are thrown (IoError for file trouble, other Errors for
/// invalid input).
int cmd_train(const ExperimentConfig& cfg, std::ostream& log);
int cmd_eval(const ExperimentConfig& cfg, std::ostream& log);
int cmd_sample(const ExperimentConfig& cfg, std::ostream& log);
int cmd_compress(const ExperimentConfig& cfg, std::ostream& log);
int cmd_decompress(const ExperimentConfig& cfg, std::ostream& log);
int cmd_ood(const ExperimentConfig& cfg, std::ostream& log);
int cmd_emd_bench(const ExperimentConfig& cfg, std::ostream& log);
int cmd_check(const ExperimentConfig& cfg, std::ostream& log);
/// Rewrites the CSV named by cfg.input as whitespace-separated columns
/// (header commented with '#') for gnuplot.
int cmd_plot_data(const ExperimentConfig& cfg, std::ostream& log);

/// Dispatch by name ("train", "eval", ..., "emd-bench", "plot-data").
int run_command(const std::string& name, const ExperimentConfig& cfg, std::ostream& log);

}  // namespace pcdm
