#pragma once

#include <string>

namespace sird {

// Executes one CLI command ("simulate", "fit", "forecast", "backtest",
// "evaluate") against a JSON configuration document, writing artifacts into
// the configured output directory. Throws ConfigError / DataError /
// NumericError; on failure a machine-readable error record is still written
// to <out>/summary.json when the output directory is known.
void run_command(const std::string& command, const std::string& config_json);

}  // namespace sird
