#pragma once

#include <string>
#include <utility>
#include <vector>

namespace resstream {

/// Structured log lines on stderr: `level=info event=<name> k=v ...`.
/// Results never go to stdout from the library; that channel belongs
/// to explicit CLI output.
using LogFields = std::vector<std::pair<std::string, std::string>>;

void log_line(const char* level, const std::string& event, const LogFields& fields = {});

inline void log_info(const std::string& event, const LogFields& fields = {}) {
    log_line("info", event, fields);
}
inline void log_warn(const std::string& event, const LogFields& fields = {}) {
    log_line("warn", event, fields);
}
inline void log_error(const std::string& event, const LogFields& fields = {}) {
    log_line("error", event, fields);
}

}  // namespace resstream
