#pragma once

#include <stdexcept>
#include <string>

namespace bam {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed input document. `path` is a JSON-pointer-like location.
class SchemaError : public Error {
public:
    SchemaError(std::string path, const std::string& what)
        : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class UnknownId : public Error {
public:
    explicit UnknownId(std::string id, const std::string& what = "unknown id")
        : Error(what + " '" + id + "'"), id_(std::move(id)) {}

    const std::string& id() const noexcept { return id_; }

private:
    std::string id_;
};

class NotPolytree : public Error {
public:
    using Error::Error;
};

class ContradictoryEvidence : public Error {
public:
    using Error::Error;
};

// The evidence set has zero probability under the model.
class ImpossibleEvidence : public Error {
public:
    explicit ImpossibleEvidence(std::string batSource = {})
        : Error(batSource.empty() ? std::string("impossible evidence")
                                  : "impossible evidence in BAT of source '" + batSource + "'"),
          batSource_(std::move(batSource)) {}

    const std::string& bat_source() const noexcept { return batSource_; }

private:
    std::string batSource_;
};

} // namespace bam
