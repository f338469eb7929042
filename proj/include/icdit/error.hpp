#pragma once

#include <stdexcept>
#include <string>

namespace icdit {

enum class errc {
    invalid_argument,
    shape_mismatch,
    non_finite,
    unknown_name,
    io_error,
    corrupt_file,
    version_mismatch,
    config_error,
    divergence,
};

// Single exception type for the whole library; the code distinguishes
// failure classes that callers (checkpoint loading, CLI) branch on.
class error : public std::runtime_error {
public:
    error(errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    errc code() const { return code_; }

private:
    errc code_;
};

inline void require(bool ok, errc code, const std::string& msg) {
    if (!ok) {
        throw error(code, msg);
    }
}

}  // namespace icdit
