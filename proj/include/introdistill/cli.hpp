#pragma once

#include <string>
#include <vector>

namespace introdistill {

// Command-line entry point (pretrain / distill / attack-eval / diagnose /
// report). Returns a process exit status.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args);

}  // namespace introdistill
