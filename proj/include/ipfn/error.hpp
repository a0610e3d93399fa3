#ifndef IPFN_ERROR_HPP
#define IPFN_ERROR_HPP

#include <stdexcept>
#include <string>

namespace ipfn {

// Exit codes used by the command-line front end.
enum class ExitCode : int { ok = 0, config = 2, io = 3, numeric = 4 };

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what, ExitCode::config) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what, ExitCode::io) {}
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what) : Error(what, ExitCode::io) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(what, ExitCode::numeric) {}
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(what, ExitCode::config) {}
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

}  // namespace detail

}  // namespace ipfn

#endif
