#pragma once

#include <stdexcept>
#include <string>

namespace gaitcast {

// Every failure raised by the library carries a short machine-readable
// category so the CLI can report it on a single line.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& message) : Error("parse", message) {}
};

struct DataError : Error {
    explicit DataError(const std::string& message) : Error("data", message) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

struct TrainingError : Error {
    explicit TrainingError(const std::string& message) : Error("training", message) {}
};

struct IoError : Error {
    explicit IoError(const std::string& message) : Error("io", message) {}
};

}  // namespace gaitcast
