#pragma once

#include "mesr/config.hpp"
#include "mesr/lossfit.hpp"
#include "mesr/resonance.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace mesr {

/// Stable process exit codes.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitIo = 2, kExitNumerical = 3 };

/// Transitions at one orientation; theta is wrapped into [0, 360).
/// Below-threshold rows are dropped unless `include_all`.
std::vector<Transition> cmd_resonances(const RunConfig& cfg, double theta_deg, bool include_all = false);

/// Writes the resonance table (theta, field_mT, f_MHz, mode, site, intensity, gradient, levels, below_threshold).
void write_resonance_csv(std::ostream& os, double theta_deg, const std::vector<Transition>& rows);

/// Prints a Peak / B_m / B_f / gamma / g_c / label table.
void write_fit_table(std::ostream& os, const FitResult& fit, const std::vector<PeakModel>& seeds);

/// Entry point of the `mesr` executable. Never throws; returns an ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace mesr
