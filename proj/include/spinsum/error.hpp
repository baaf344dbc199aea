#ifndef SPINSUM_ERROR_HPP
#define SPINSUM_ERROR_HPP

#include <stdexcept>
#include <string>

namespace spinsum {

// Exit-code taxonomy of the CLI: config errors -> 1, data errors -> 2,
// internal invariant violations -> 3.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class InternalError : public std::logic_error {
public:
    explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace spinsum

#endif
