#ifndef SPINSUM_PIPELINE_HPP
#define SPINSUM_PIPELINE_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "spinsum/config.hpp"

namespace spinsum {

// Pipeline stages. Each reads only prior-stage artifacts plus the config,
// verifies their config fingerprints, and writes its own artifacts with the
// fingerprint embedded.
void cmd_segment(const ExperimentConfig& config, std::ostream& out);
void cmd_align(const ExperimentConfig& config, std::ostream& out);
void cmd_train(const ExperimentConfig& config, std::ostream& out);
void cmd_extract(const ExperimentConfig& config, const std::string& system, std::ostream& out);
void cmd_evaluate(const ExperimentConfig& config, std::ostream& out);
void cmd_report(const ExperimentConfig& config, std::ostream& out);

// Reads a segmented artifact back into chapters.
std::vector<Chapter> read_segmented(const std::string& path, const std::string& fingerprint);

// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal
// invariant violation.
int run_cli(int argc, const char* const* argv);

}  // namespace spinsum

#endif
