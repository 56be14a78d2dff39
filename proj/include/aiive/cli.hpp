#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace aiive::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Runs the `aiive` command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Reads AIIVE_LOG (error|info|debug) and points spdlog at stderr.
void configure_logging();

struct TraceRow {
    std::size_t epoch = 0;
    double val_accuracy = 0.0;
    double val_loss = 0.0;
    double learning_rate = 0.0;
    double momentum = 0.0;
};

inline constexpr const char* kTraceHeader = "epoch,val_accuracy,val_loss,learning_rate,momentum";

std::string format_trace_row(const TraceRow& row);
// Throws IoError on an unreadable file, InvalidArgument on a malformed one.
std::vector<TraceRow> read_trace(const std::string& path);

} // namespace aiive::cli
