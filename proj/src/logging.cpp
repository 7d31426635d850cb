#include "resstream/logging.hpp"

#include <chrono>
#include <cstdio>
#include <mutex>

namespace resstream {

namespace {
std::mutex g_log_mu;
}

void log_line(const char* level, const std::string& event, const LogFields& fields) {
    using namespace std::chrono;
    auto ms = duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
    std::lock_guard<std::mutex> lk(g_log_mu);
    std::fprintf(stderr, "ts=%lld level=%s event=%s", static_cast<long long>(ms), level,
                 event.c_str());
    for (const auto& [k, v] : fields) {
        bool quote = v.find(' ') != std::string::npos || v.empty();
        std::fprintf(stderr, quote ? " %s=\"%s\"" : " %s=%s", k.c_str(), v.c_str());
    }
    std::fputc('\n', stderr);
    std::fflush(stderr);
}

}  // namespace resstream
