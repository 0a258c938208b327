#pragma once

#include <stdexcept>
#include <string>

namespace recdesk {

// Error hierarchy shared by all modules. Every error carries a
// human-readable message naming the offending field or resource.

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

struct StorageError : std::runtime_error {
    explicit StorageError(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct InsufficientData : std::runtime_error {
    explicit InsufficientData(const std::string& what) : std::runtime_error(what) {}
};

struct EpisodeOver : std::runtime_error {
    explicit EpisodeOver(const std::string& what) : std::runtime_error(what) {}
};

struct MissingArtifacts : std::runtime_error {
    explicit MissingArtifacts(const std::string& what) : std::runtime_error(what) {}
};

} // namespace recdesk
